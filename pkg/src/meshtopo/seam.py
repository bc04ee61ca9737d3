"""Seam segments as token sequences, and structural point sampling.

A seam is a set of straight segments between mesh surface points. Segments
are stored with a canonical endpoint order (the head is the endpoint with
the lower y-z-x sort key) and serialized as six quantized coordinates each,
head xyz then tail xyz, so a sequence of N segments is exactly 6N tokens.

Structural sampling draws a fixed budget of points from a mesh: one pool of
points sitting on vertices and one pool strictly inside edges, each pool
hitting its budget exactly through largest-remainder allocation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FramingError, ParseError
from .mesh import Mesh, QuantGrid, build_edge_topology, dequantize, quantize, sort_key_yzx

__all__ = [
    "SeamSegment",
    "SeamSequence",
    "RATIO_RANGE",
    "order_seams",
    "encode_seam",
    "decode_seam",
    "seam_ratio",
    "ratio_in_range",
    "StructuralSample",
    "sample_structural",
    "write_seam_records",
    "read_seam_records",
    "save_seam_txt",
    "load_seam_txt",
]

RATIO_RANGE = (0.1, 0.35)


@dataclass(frozen=True)
class SeamSegment:
    """One seam segment with endpoints in canonical head/tail order."""

    head: tuple
    tail: tuple

    def __post_init__(self):
        head = tuple(float(c) for c in self.head)
        tail = tuple(float(c) for c in self.tail)
        if len(head) != 3 or len(tail) != 3:
            raise DomainError("seam endpoints must be 3d points")
        if sort_key_yzx(tail) < sort_key_yzx(head):
            head, tail = tail, head
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail", tail)

    def length(self) -> float:
        a = np.asarray(self.head)
        b = np.asarray(self.tail)
        return float(np.linalg.norm(b - a))


@dataclass(frozen=True)
class SeamSequence:
    segments: tuple

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        for seg in self.segments:
            if not isinstance(seg, SeamSegment):
                raise DomainError(f"expected SeamSegment, got {type(seg).__name__}")

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __getitem__(self, i):
        return self.segments[i]


def order_seams(segments) -> SeamSequence:
    """Canonical ordering: by head sort key, then tail sort key."""
    segs = [s if isinstance(s, SeamSegment) else SeamSegment(*s) for s in segments]
    segs.sort(key=lambda s: (sort_key_yzx(s.head), sort_key_yzx(s.tail)))
    return SeamSequence(tuple(segs))


def encode_seam(seq, grid: QuantGrid | None = None) -> list:
    """Six tokens per segment: quantized head x,y,z then tail x,y,z."""
    grid = grid or QuantGrid()
    if isinstance(seq, SeamSequence):
        segments = seq.segments
    else:
        segments = order_seams(seq).segments
    tokens = []
    for seg in segments:
        pts = np.array([seg.head, seg.tail])
        bins = quantize(pts, grid)
        tokens.extend(int(b) for b in bins.ravel())
    return tokens


def decode_seam(tokens, grid: QuantGrid | None = None) -> SeamSequence:
    grid = grid or QuantGrid()
    tokens = [int(t) for t in tokens]
    if len(tokens) % 6 != 0:
        raise FramingError(
            f"seam stream of {len(tokens)} tokens is not a multiple of 6"
        )
    for t in tokens:
        if t < 0 or t >= grid.levels:
            raise DomainError(f"seam token {t} outside 0..{grid.levels - 1}")
    segs = []
    for i in range(0, len(tokens), 6):
        bins = np.array(tokens[i : i + 6], dtype=np.int64).reshape(2, 3)
        pts = dequantize(bins, grid)
        segs.append(SeamSegment(tuple(pts[0]), tuple(pts[1])))
    return SeamSequence(tuple(segs))


def seam_ratio(n_segments: int, n_vertices: int) -> float:
    """Seam density: segment count over mesh vertex count."""
    if n_vertices <= 0:
        raise DomainError(f"vertex count must be positive, got {n_vertices}")
    if n_segments < 0:
        raise DomainError(f"segment count must be >= 0, got {n_segments}")
    return n_segments / n_vertices


def ratio_in_range(ratio: float) -> bool:
    """Whether a seam density falls in the plausible band, bounds included."""
    lo, hi = RATIO_RANGE
    return lo <= ratio <= hi


# ---------------------------------------------------------------------------
# Structural sampling


@dataclass(frozen=True)
class StructuralSample:
    vertex_points: np.ndarray
    edge_points: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return np.vstack([self.vertex_points, self.edge_points])


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to weights, summing exactly to total."""
    if total == 0 or len(weights) == 0:
        return np.zeros(len(weights), dtype=np.int64)
    w = np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        w = np.ones_like(w)
    ideal = w / w.sum() * total
    base = np.floor(ideal).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        # most underfunded first; stable sort keeps lower indices on ties
        order = np.argsort(-(ideal - base), kind="stable")
        base[order[:short]] += 1
    return base


def _edge_allocation(lengths: np.ndarray, total: int) -> np.ndarray:
    """Per-edge point counts: proportional with a floor of one where feasible."""
    n = len(lengths)
    if n == 0 or total == 0:
        return np.zeros(n, dtype=np.int64)
    if n > total:
        # cannot give every edge a point; plain proportional allocation
        return _largest_remainder(lengths, total)
    return 1 + _largest_remainder(lengths, total - n)


def sample_structural(
    mesh: Mesh, n_vertex_points: int = 30720, n_edge_points: int = 30720
) -> StructuralSample:
    """Deterministic surface probe points: one budget on vertices, one on edges.

    Vertex points repeat vertices round-robin (lower indices absorb the
    remainder). Edge points sit strictly inside each edge at the fractions
    (i+1)/(K+1). A mesh without edges folds the edge budget into the vertex
    pool so the combined total is unchanged.
    """
    if mesh.vertex_count == 0:
        raise DomainError("cannot sample an empty mesh")
    if n_vertex_points < 0 or n_edge_points < 0:
        raise DomainError("point budgets must be >= 0")

    topo = build_edge_topology(mesh) if mesh.face_count else None
    n_edges = len(topo.edges) if topo is not None else 0
    vertex_budget = n_vertex_points if n_edges else n_vertex_points + n_edge_points

    nv = mesh.vertex_count
    base, rem = divmod(vertex_budget, nv)
    counts = np.full(nv, base, dtype=np.int64)
    counts[:rem] += 1
    vertex_points = np.repeat(mesh.vertices, counts, axis=0)

    if n_edges:
        a = mesh.vertices[topo.edges[:, 0]]
        b = mesh.vertices[topo.edges[:, 1]]
        lengths = np.linalg.norm(b - a, axis=1)
        alloc = _edge_allocation(lengths, n_edge_points)
        chunks = []
        for e in range(n_edges):
            k = int(alloc[e])
            if k == 0:
                continue
            t = (np.arange(1, k + 1, dtype=np.float64) / (k + 1))[:, None]
            chunks.append(a[e] + t * (b[e] - a[e]))
        edge_points = np.vstack(chunks) if chunks else np.zeros((0, 3))
    else:
        edge_points = np.zeros((0, 3))
    return StructuralSample(vertex_points=vertex_points, edge_points=edge_points)


# ---------------------------------------------------------------------------
# Wire formats


def write_seam_records(records, path) -> None:
    """records: iterable of (id, tokens). One JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec_id, tokens in records:
            fh.write(json.dumps({"id": rec_id, "tokens": [int(t) for t in tokens]}))
            fh.write("\n")


def read_seam_records(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                out.append((doc["id"], [int(t) for t in doc["tokens"]]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad seam record: {e}", line=lineno, path=path) from None
    return out


def save_seam_txt(seq: SeamSequence, path) -> None:
    """Plain text, one segment per line: head x y z, tail x y z."""
    with open(path, "w", encoding="utf-8") as fh:
        for seg in seq:
            vals = [*seg.head, *seg.tail]
            fh.write(" ".join(repr(float(v)) for v in vals))
            fh.write("\n")


def load_seam_txt(path) -> SeamSequence:
    segs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise ParseError(
                    f"expected 6 coordinates, got {len(parts)}", line=lineno, path=path
                )
            try:
                vals = [float(p) for p in parts]
            except ValueError as e:
                raise ParseError(str(e), line=lineno, path=path) from None
            segs.append(SeamSegment(tuple(vals[:3]), tuple(vals[3:])))
    return SeamSequence(tuple(segs))
