"""Block-and-patch mesh tokenization.

A canonical mesh becomes a flat token stream in three steps:

1. Each vertex coordinate is quantized to one of ``levels`` bins, then split
   per axis into a coarse block index and a fine offset index
   (``bin = block * offsets_per_axis + offset``). The three block indices
   pack row-major (x slowest) into one block id, the three offsets likewise
   into one offset id, so every vertex costs exactly two tokens.
2. Faces are grouped into patches around shared center vertices: repeatedly
   pick the vertex with the most uncovered incident faces (ties go to the
   lowest index) and claim all of them. Within a patch the faces are chained
   into runs; consecutive faces in a run share an edge with the center, so
   each face after the first costs only its newly added peripheral vertices.
3. Each patch is emitted as a start control token, the center vertex pair,
   then the peripheral pairs of its runs.

Token id layout, in order: the open-patch start control (0), block ids
(1..blocks^3), offset ids (blocks^3+1..blocks^3+offsets^3), then three more
controls: closed-patch start, fan break, and quad marker. The extra controls
exist because the flat stream must be invertible:

* a closed-patch start says the single run of triangles wraps around, so the
  face from the last peripheral back to the first is implied at no token cost;
* a fan break separates runs of faces that do not share an edge at the center;
* a quad marker flags the following face as a quad (three peripherals instead
  of two, two added instead of one).

A patch uses the closed form only when all its faces form one all-triangle
cycle around the center. Cycles that contain quads, or coexist with other
runs, are broken open by repeating the wrap vertex, which costs one pair.
A vertex that no face references is emitted as a patch with zero peripherals
so decoding reproduces the canonical mesh exactly.

Spans: ``patch_spans`` carves the token list into one span per patch, and
``face_spans`` into one span per face in decode order. The first face of a
patch owns the patch's control, center, and opening peripherals; the implied
wrap face of a closed patch owns an empty span at the patch's end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    DecodeError,
    DomainError,
    FramingError,
    ParseError,
    PreconditionError,
)
from .mesh import Mesh, QuantGrid, canonicalize, dequantize, meshes_equal, quantize, sort_key_yzx

__all__ = [
    "BPTConfig",
    "TokenSequence",
    "PatchRun",
    "PatchToken",
    "build_patches",
    "encode",
    "decode",
    "parse_patches",
    "compression_ratio",
    "truncate_window",
    "write_token_records",
    "read_token_records",
]


@dataclass(frozen=True)
class BPTConfig:
    """Codec parameters. ``blocks_per_axis * offsets_per_axis`` must equal ``levels``."""

    levels: int = 1024
    blocks_per_axis: int = 16
    offsets_per_axis: int = 64

    def __post_init__(self):
        if self.blocks_per_axis < 1 or self.offsets_per_axis < 1:
            raise DomainError("blocks_per_axis and offsets_per_axis must be >= 1")
        if self.blocks_per_axis * self.offsets_per_axis != self.levels:
            raise DomainError(
                f"blocks_per_axis * offsets_per_axis must equal levels: "
                f"{self.blocks_per_axis} * {self.offsets_per_axis} != {self.levels}"
            )

    # token id layout -------------------------------------------------------

    @property
    def patch_start(self) -> int:
        return 0

    @property
    def n_block_ids(self) -> int:
        return self.blocks_per_axis**3

    @property
    def n_offset_ids(self) -> int:
        return self.offsets_per_axis**3

    @property
    def patch_start_closed(self) -> int:
        return 1 + self.n_block_ids + self.n_offset_ids

    @property
    def fan_break(self) -> int:
        return self.patch_start_closed + 1

    @property
    def quad_mark(self) -> int:
        return self.patch_start_closed + 2

    @property
    def vocab_size(self) -> int:
        return self.patch_start_closed + 3

    def grid(self) -> QuantGrid:
        return QuantGrid(lo=-1.0, hi=1.0, levels=self.levels)

    # vertex <-> token pair -------------------------------------------------

    def block_token(self, bins) -> int:
        b = self.blocks_per_axis
        o = self.offsets_per_axis
        bx, by, bz = (int(v) // o for v in bins)
        return 1 + (bx * b + by) * b + bz

    def offset_token(self, bins) -> int:
        o = self.offsets_per_axis
        ox, oy, oz = (int(v) % o for v in bins)
        return 1 + self.n_block_ids + (ox * o + oy) * o + oz

    def is_block_token(self, t: int) -> bool:
        return 1 <= t <= self.n_block_ids

    def is_offset_token(self, t: int) -> bool:
        return self.n_block_ids < t <= self.n_block_ids + self.n_offset_ids

    def pair_to_bins(self, block_tok: int, offset_tok: int) -> tuple:
        b = self.blocks_per_axis
        o = self.offsets_per_axis
        bid = block_tok - 1
        oid = offset_tok - 1 - self.n_block_ids
        bx, by, bz = bid // (b * b), (bid // b) % b, bid % b
        ox, oy, oz = oid // (o * o), (oid // o) % o, oid % o
        return (bx * o + ox, by * o + oy, bz * o + oz)


@dataclass
class TokenSequence:
    """A token stream plus the spans that carve it into patches and faces."""

    tokens: tuple
    patch_spans: tuple
    face_spans: tuple
    vocab_size: int

    def __post_init__(self):
        self.tokens = tuple(int(t) for t in self.tokens)
        self.patch_spans = tuple((int(s), int(e)) for s, e in self.patch_spans)
        self.face_spans = tuple((int(s), int(e)) for s, e in self.face_spans)
        n = len(self.tokens)
        for t in self.tokens:
            if t < 0 or t >= self.vocab_size:
                raise FramingError(f"token {t} outside vocabulary of {self.vocab_size}")
        _check_cover("patch_spans", self.patch_spans, n, allow_empty=False)
        covered = _check_prefix_cover("face_spans", self.face_spans)
        if covered != n:
            # the remainder must be whole trailing patches (zero-face patches
            # that encode unreferenced vertices)
            boundaries = {s for s, _ in self.patch_spans}
            if covered not in boundaries:
                raise DomainError(
                    f"face_spans cover {covered} of {n} tokens and do not end "
                    f"on a patch boundary"
                )

    @property
    def patch_count(self) -> int:
        return len(self.patch_spans)

    @property
    def face_count(self) -> int:
        return len(self.face_spans)

    def __len__(self):
        return len(self.tokens)


def _check_cover(name, spans, n, allow_empty=False):
    pos = 0
    for s, e in spans:
        if s != pos or e < s or (e == s and not allow_empty):
            raise DomainError(f"{name} must cover the token list contiguously, got {spans}")
        pos = e
    if pos != n:
        raise DomainError(f"{name} cover {pos} of {n} tokens")


def _check_prefix_cover(name, spans):
    """Contiguous spans from 0; empty spans allowed. Returns the covered end."""
    pos = 0
    for s, e in spans:
        if s != pos or e < s:
            raise DomainError(f"{name} must cover the token list contiguously, got {spans}")
        pos = e
    return pos


def patch_of_face(seq: TokenSequence, face_index: int) -> int:
    """Index of the patch whose span contains the face's span.

    An empty face span sitting on a patch boundary belongs to the earlier
    patch (it is the implied wrap face of a closed patch).
    """
    s, e = seq.face_spans[face_index]
    for pi, (ps, pe) in enumerate(seq.patch_spans):
        if s >= ps and e <= pe:
            return pi
    raise DomainError(f"face {face_index} span {s, e} not inside any patch span")


# ---------------------------------------------------------------------------
# Patch construction


@dataclass(frozen=True)
class PatchRun:
    """One chained sequence of faces inside a patch.

    ``chain`` holds quantized peripheral triples in walk order; ``arities``
    holds the peripheral count of each face (2 for a triangle, 3 for a quad).
    A closed run wraps from the last chain entry back to the first and is
    always all-triangle.
    """

    chain: tuple
    arities: tuple
    closed: bool = False

    def faces(self, center):
        out = []
        s = 0
        for k, arity in enumerate(self.arities):
            last = self.closed and k == len(self.arities) - 1
            if last:
                verts = self.chain[s:] + (self.chain[0],)
            else:
                verts = self.chain[s : s + arity]
            out.append((center,) + tuple(verts))
            s += arity - 1
        return out


@dataclass(frozen=True)
class PatchToken:
    """A patch: one center vertex plus the peripheral runs around it."""

    center: tuple
    runs: tuple = ()

    @property
    def peripherals(self) -> tuple:
        out = []
        for run in self.runs:
            out.extend(run.chain)
        return tuple(out)

    def faces(self):
        out = []
        for run in self.runs:
            out.extend(run.faces(self.center))
        return out


def _rotate_to(face, v):
    i = face.index(v)
    return face[i:] + face[:i]


def build_patches(mesh: Mesh, cfg: BPTConfig | None = None):
    """Greedy patch cover of a canonical mesh.

    Returns the patch list in emission order. Every face lands in exactly one
    patch; unreferenced vertices come last as zero-run patches.
    """
    if cfg is None:
        cfg = BPTConfig()
    bins = quantize(mesh.vertices, cfg.grid())
    bin_of = [tuple(int(v) for v in row) for row in bins]

    incident = [[] for _ in range(mesh.vertex_count)]
    for fi, face in enumerate(mesh.faces):
        for v in face:
            incident[v].append(fi)
    uncovered_count = np.array([len(l) for l in incident], dtype=np.int64)
    covered = np.zeros(mesh.face_count, dtype=bool)

    patches = []
    remaining = mesh.face_count
    while remaining:
        center = -1
        best = 0
        for v in range(mesh.vertex_count):
            if uncovered_count[v] > best:
                best = int(uncovered_count[v])
                center = v
        face_ids = [fi for fi in incident[center] if not covered[fi]]
        records = []
        for fi in face_ids:
            rot = _rotate_to(mesh.faces[fi], center)
            records.append((rot[1:], fi))
            covered[fi] = True
            for v in mesh.faces[fi]:
                uncovered_count[v] -= 1
        remaining -= len(face_ids)
        runs = _chain_runs(records)
        runs = _normalize_runs(runs)
        patches.append(
            PatchToken(
                center=bin_of[center],
                runs=tuple(
                    PatchRun(
                        chain=tuple(bin_of[v] for v in chain),
                        arities=tuple(arities),
                        closed=closed,
                    )
                    for chain, arities, closed in runs
                ),
            )
        )

    referenced = set()
    for face in mesh.faces:
        referenced.update(face)
    for v in range(mesh.vertex_count):
        if v not in referenced:
            patches.append(PatchToken(center=bin_of[v], runs=()))
    return patches


def _chain_runs(records):
    """Chain face records (peripherals, face_id) into runs sharing center edges.

    Returns [(vertex_chain, arities, closed)] with vertex indices still in
    mesh numbering. Deterministic: starts prefer the lowest first-peripheral,
    successors the lowest face id.
    """
    unused = list(records)
    runs = []
    while unused:
        last_counts = {}
        for peris, _ in unused:
            last_counts[peris[-1]] = last_counts.get(peris[-1], 0) + 1
        starts = [
            r
            for r in unused
            if last_counts.get(r[0][0], 0) - (1 if r[0][-1] == r[0][0] else 0) == 0
        ]
        pool = starts if starts else unused
        first = min(pool, key=lambda r: (r[0][0], r[1]))
        unused.remove(first)
        run = [first]
        while True:
            tail = run[-1][0][-1]
            nexts = [r for r in unused if r[0][0] == tail]
            if not nexts:
                break
            nxt = min(nexts, key=lambda r: r[1])
            unused.remove(nxt)
            run.append(nxt)
        chain = list(run[0][0])
        arities = [len(run[0][0])]
        for peris, _ in run[1:]:
            chain.extend(peris[1:])
            arities.append(len(peris))
        closed = len(run) >= 2 and run[-1][0][-1] == run[0][0][0]
        if closed:
            # drop the repeated wrap vertex; faces() reconstructs it
            chain = chain[:-1]
        runs.append((chain, arities, closed))
    return runs


def _normalize_runs(runs):
    """Apply the closed-form eligibility rule and deterministic run order."""
    eligible = (
        len(runs) == 1
        and runs[0][2]
        and all(a == 2 for a in runs[0][1])
        and len(runs[0][0]) >= 2
    )
    out = []
    for chain, arities, closed in runs:
        if closed and not eligible:
            # break the cycle: emit the wrap vertex explicitly as an open run
            chain = chain + [chain[0]]
            closed = False
        out.append((chain, arities, closed))
    out.sort(key=lambda r: (r[0][0], r[0]))
    return out


# ---------------------------------------------------------------------------
# Encoding


def _vertex_pair(cfg, bins):
    return (cfg.block_token(bins), cfg.offset_token(bins))


def encode(mesh: Mesh, cfg: BPTConfig | None = None) -> TokenSequence:
    """Tokenize a canonical mesh. Raises PreconditionError if not canonical."""
    if cfg is None:
        cfg = BPTConfig()
    import warnings as _warnings

    with _warnings.catch_warnings():
        _warnings.simplefilter("ignore")
        if not meshes_equal(mesh, canonicalize(mesh, cfg.grid())):
            raise PreconditionError("encode requires a canonical mesh")

    tokens = []
    patch_spans = []
    face_spans = []
    for patch in build_patches(mesh, cfg):
        p_start = len(tokens)
        closed_patch = any(run.closed for run in patch.runs)
        tokens.append(cfg.patch_start_closed if closed_patch else cfg.patch_start)
        tokens.extend(_vertex_pair(cfg, patch.center))
        face_mark = p_start
        for ri, run in enumerate(patch.runs):
            if ri > 0:
                tokens.append(cfg.fan_break)
            s = 0
            for k, arity in enumerate(run.arities):
                if run.closed and k == len(run.arities) - 1:
                    # implied wrap face: no tokens of its own
                    face_spans.append((face_mark, len(tokens)))
                    face_mark = len(tokens)
                    continue
                if arity == 3:
                    tokens.append(cfg.quad_mark)
                added = run.chain[s : s + arity] if k == 0 else run.chain[s + 1 : s + arity]
                for bins in added:
                    tokens.extend(_vertex_pair(cfg, bins))
                s += arity - 1
                face_spans.append((face_mark, len(tokens)))
                face_mark = len(tokens)
        patch_spans.append((p_start, len(tokens)))
    return TokenSequence(
        tokens=tuple(tokens),
        patch_spans=tuple(patch_spans),
        face_spans=tuple(face_spans),
        vocab_size=cfg.vocab_size,
    )


# ---------------------------------------------------------------------------
# Decoding


def _read_pair(tokens, i, cfg):
    if i + 1 >= len(tokens):
        raise DecodeError("stream ends inside a vertex pair", token_index=i)
    bt, ot = tokens[i], tokens[i + 1]
    if not cfg.is_block_token(bt):
        raise DecodeError(f"expected block token, got {bt}", token_index=i)
    if not cfg.is_offset_token(ot):
        raise DecodeError(f"expected offset token, got {ot}", token_index=i + 1)
    return cfg.pair_to_bins(bt, ot), i + 2


def _parse_patch(tokens, i, cfg):
    closed = tokens[i] == cfg.patch_start_closed
    i += 1
    center, i = _read_pair(tokens, i, cfg)
    runs = []
    boundary = (cfg.patch_start, cfg.patch_start_closed)

    while i < len(tokens) and tokens[i] not in boundary:
        if tokens[i] == cfg.fan_break:
            if not runs:
                raise DecodeError("fan break before any run", token_index=i)
            i += 1
        chain = []
        arities = []
        first = True
        while i < len(tokens) and tokens[i] not in boundary and tokens[i] != cfg.fan_break:
            quad = False
            if tokens[i] == cfg.quad_mark:
                if closed:
                    raise DecodeError("quad marker inside a closed patch", token_index=i)
                quad = True
                i += 1
                if i >= len(tokens) or tokens[i] in boundary or tokens[i] == cfg.fan_break:
                    raise DecodeError("dangling quad marker", token_index=i - 1)
            need = (3 if quad else 2) if first else (2 if quad else 1)
            if closed:
                need = 1 if not first else 2
            for _ in range(need):
                bins, i = _read_pair(tokens, i, cfg)
                chain.append(bins)
            arities.append(3 if quad else 2)
            first = False
        if not chain:
            raise DecodeError("empty run", token_index=i - 1)
        if closed:
            if len(chain) < 2:
                raise DecodeError("closed patch needs at least 2 peripherals", token_index=i - 1)
            arities = [2] * len(chain)
        runs.append(PatchRun(chain=tuple(chain), arities=tuple(arities), closed=closed))
        if closed:
            break

    if closed and i < len(tokens) and tokens[i] not in boundary:
        raise DecodeError("closed patch must contain exactly one run", token_index=i)
    return PatchToken(center=center, runs=tuple(runs)), i


def parse_patches(seq, cfg: BPTConfig | None = None):
    """Parse a token stream back into its PatchToken list (emission order)."""
    if cfg is None:
        cfg = BPTConfig()
    tokens = tuple(seq.tokens) if isinstance(seq, TokenSequence) else tuple(seq)
    if not tokens:
        return []
    if tokens[0] not in (cfg.patch_start, cfg.patch_start_closed):
        raise DecodeError("stream must begin with a patch start", token_index=0)
    patches = []
    i = 0
    while i < len(tokens):
        patch, i = _parse_patch(tokens, i, cfg)
        patches.append(patch)
    return patches


def decode(seq, cfg: BPTConfig | None = None) -> Mesh:
    """Rebuild the canonical mesh from a token stream."""
    if cfg is None:
        cfg = BPTConfig()
    patches = parse_patches(seq, cfg)
    if not patches:
        return Mesh(np.zeros((0, 3)), ())

    bin_faces = []
    all_bins = []
    for patch in patches:
        all_bins.append(patch.center)
        for run in patch.runs:
            all_bins.extend(run.chain)
        bin_faces.extend(patch.faces())

    uniq = sorted(set(all_bins), key=sort_key_yzx)
    index = {b: i for i, b in enumerate(uniq)}
    faces = []
    for bf in bin_faces:
        mapped = tuple(index[b] for b in bf)
        if len(set(mapped)) != len(mapped):
            raise DecodeError("decoded face repeats a vertex")
        rot = int(np.argmin(mapped))
        faces.append(mapped[rot:] + mapped[:rot])
    faces.sort()
    grid = cfg.grid()
    verts = dequantize(np.asarray(uniq, dtype=np.int64).reshape(-1, 3), grid)
    return Mesh(verts, tuple(faces))


# ---------------------------------------------------------------------------
# Windows and ratios


def compression_ratio(seq: TokenSequence) -> Fraction:
    """Triangle-equivalent faces times nine over token count, exact."""
    quad_marks = sum(1 for t in seq.tokens if t == seq.vocab_size - 1)
    tri_equivalent = seq.face_count + quad_marks
    if len(seq) == 0:
        raise DomainError("empty sequence has no compression ratio")
    return Fraction(9 * tri_equivalent, len(seq))


def truncate_window(seq: TokenSequence, max_faces: int, start_face: int = 0) -> TokenSequence:
    """Token window covering ``max_faces`` faces from ``start_face`` on.

    The window opens at the patch-start token of the patch containing
    ``start_face``, so it always decodes; faces of that patch that precede
    ``start_face`` ride along as prefix context. A closed patch whose implied
    wrap face falls outside the window is downgraded to an open patch in the
    returned copy.
    """
    if max_faces < 1:
        raise DomainError(f"max_faces must be >= 1, got {max_faces}")
    if start_face < 0 or start_face >= seq.face_count:
        raise DomainError(f"start_face {start_face} out of range 0..{seq.face_count - 1}")
    cfg_closed = seq.vocab_size - 3
    cfg_open = 0
    end_face = min(start_face + max_faces, seq.face_count)

    first_patch = patch_of_face(seq, start_face)
    first_face = next(
        fi for fi in range(seq.face_count) if patch_of_face(seq, fi) == first_patch
    )
    tok_start = seq.patch_spans[first_patch][0]
    tok_end = seq.face_spans[end_face - 1][1]

    tokens = list(seq.tokens[tok_start:tok_end])
    patch_spans = []
    for ps, pe in seq.patch_spans:
        s, e = max(ps, tok_start), min(pe, tok_end)
        if s < e:
            patch_spans.append((s - tok_start, e - tok_start))
    face_spans = [
        (s - tok_start, e - tok_start)
        for s, e in seq.face_spans[first_face:end_face]
    ]

    # downgrade closed patches whose wrap face is not part of the window
    for pi, (ps, pe) in enumerate(seq.patch_spans):
        if ps >= tok_start and ps < tok_end and seq.tokens[ps] == cfg_closed:
            last_face = max(
                fi for fi in range(seq.face_count) if patch_of_face(seq, fi) == pi
            )
            if last_face >= end_face:
                tokens[ps - tok_start] = cfg_open
    return TokenSequence(
        tokens=tuple(tokens),
        patch_spans=tuple(patch_spans),
        face_spans=tuple(face_spans),
        vocab_size=seq.vocab_size,
    )


# ---------------------------------------------------------------------------
# JSONL wire format


def write_token_records(records, path) -> None:
    """Write (id, TokenSequence) pairs as JSON lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for rid, seq in records:
            fh.write(
                json.dumps(
                    {
                        "id": str(rid),
                        "vocab": seq.vocab_size,
                        "tokens": list(seq.tokens),
                        "patch_spans": [list(s) for s in seq.patch_spans],
                        "face_spans": [list(s) for s in seq.face_spans],
                    }
                )
                + "\n"
            )


def read_token_records(path):
    """Read JSON lines back as (id, TokenSequence) pairs."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"bad JSON: {e}", line=lineno, path=path) from None
            try:
                seq = TokenSequence(
                    tokens=rec["tokens"],
                    patch_spans=rec["patch_spans"],
                    face_spans=rec["face_spans"],
                    vocab_size=rec["vocab"],
                )
            except KeyError as e:
                raise ParseError(f"missing field {e}", line=lineno, path=path) from None
            out.append((rec["id"], seq))
    return out
