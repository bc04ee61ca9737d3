"""Preference data construction: dominance ranking and quality masks.

Given several candidate meshes for the same conditioning input, a candidate
wins a preference pair only when it is strictly better on all three quality
metrics at once (lower boundary ratio, higher topology score, lower Hausdorff
distance). Ties or split verdicts produce no pair, so the training signal
never rests on an arbitrary tie-break.

The quality mask marks, token by token, which patches of a sequence look like
clean quad regions. A patch earns a 1 when its quad share reaches
``tau_quad`` and the mean per-face shape score reaches ``tau_topo``; the bit
is broadcast across the patch's whole token span.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .bpt import BPTConfig, TokenSequence, parse_patches
from .errors import ConsistencyError, DomainError, FramingError, ParseError
from .mesh import Mesh, dequantize, meshes_equal
from .metrics import QualityReport

__all__ = [
    "CandidateSet",
    "PreferenceTriplet",
    "TrainingTriplet",
    "MaskConfig",
    "MaskVector",
    "dominates",
    "build_triplets",
    "face_shape_score",
    "mask_phi",
    "write_training_triplets",
    "read_training_triplets",
]


@dataclass
class CandidateSet:
    """Candidate meshes generated for one conditioning input."""

    cond_id: str
    entries: tuple  # of (mesh_id, QualityReport)

    def __post_init__(self):
        ids = [mid for mid, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise DomainError(f"duplicate mesh ids in candidate set {self.cond_id!r}")
        self.entries = tuple((str(mid), rep) for mid, rep in self.entries)


@dataclass(frozen=True)
class PreferenceTriplet:
    """One ranked pair: the winner strictly dominates the loser."""

    cond_id: str
    winner_id: str
    loser_id: str


def dominates(a: QualityReport, b: QualityReport) -> bool:
    """True when ``a`` is strictly better than ``b`` on every metric."""
    return a.ber < b.ber and a.ts > b.ts and a.hd < b.hd


def build_triplets(candidates: CandidateSet) -> list:
    """All strictly dominating ordered pairs, sorted by (winner id, loser id)."""
    out = []
    for win_id, win_rep in candidates.entries:
        for lose_id, lose_rep in candidates.entries:
            if win_id == lose_id:
                continue
            if dominates(win_rep, lose_rep):
                out.append(
                    PreferenceTriplet(
                        cond_id=candidates.cond_id,
                        winner_id=win_id,
                        loser_id=lose_id,
                    )
                )
    out.sort(key=lambda t: (t.winner_id, t.loser_id))
    return out


# ---------------------------------------------------------------------------
# Quality masks


@dataclass(frozen=True)
class MaskConfig:
    tau_quad: float = 0.8
    tau_topo: float = 0.5

    def __post_init__(self):
        for name, v in (("tau_quad", self.tau_quad), ("tau_topo", self.tau_topo)):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class MaskVector:
    """Per-token 0/1 bits aligned with one TokenSequence."""

    bits: tuple

    def __post_init__(self):
        self.bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in self.bits):
            raise DomainError("mask bits must be 0 or 1")

    def __len__(self):
        return len(self.bits)

    def complement(self) -> "MaskVector":
        return MaskVector(tuple(1 - b for b in self.bits))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.float64)


def _corner_angles(pts):
    # interior angle at every corner of a polygon, degrees
    n = len(pts)
    out = []
    for i in range(n):
        a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
        u = a - b
        v = c - b
        nu = np.linalg.norm(u)
        nv = np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            return None
        cosang = float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))
        out.append(math.degrees(math.acos(cosang)))
    return out


def face_shape_score(pts: np.ndarray) -> float:
    """Shape quality of one face given its corner positions.

    Quads score 1.0 when every corner angle stays within 45 degrees of a
    right angle, 0.5 otherwise. Triangles score their compactness
    ``4*sqrt(3)*area / sum(edge^2)``, which is 1 for an equilateral triangle
    and falls toward 0 for slivers.
    """
    pts = np.asarray(pts, dtype=np.float64)
    if len(pts) == 4:
        angles = _corner_angles(pts)
        if angles is None:
            return 0.5
        return 1.0 if all(45.0 <= a <= 135.0 for a in angles) else 0.5
    a, b, c = pts
    area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
    denom = (
        np.dot(b - a, b - a) + np.dot(c - b, c - b) + np.dot(a - c, a - c)
    )
    if denom == 0.0:
        return 0.0
    return float(min(1.0, 4.0 * math.sqrt(3.0) * area / denom))


def mask_phi(
    seq: TokenSequence,
    mesh: Mesh | None = None,
    cfg: MaskConfig | None = None,
    bpt_cfg: BPTConfig | None = None,
) -> MaskVector:
    """Per-token quality mask: 1 over patches that look like clean quad regions.

    When ``mesh`` is given it must be the canonical mesh the tokens encode;
    a mismatch raises ConsistencyError.
    """
    if cfg is None:
        cfg = MaskConfig()
    if bpt_cfg is None:
        bpt_cfg = BPTConfig()
    if mesh is not None:
        from .bpt import decode

        if not meshes_equal(decode(seq, bpt_cfg), mesh):
            raise ConsistencyError("token sequence does not encode the given mesh")

    patches = parse_patches(seq, bpt_cfg)
    if len(patches) != seq.patch_count:
        raise ConsistencyError(
            f"patch spans disagree with the stream: {seq.patch_count} spans, "
            f"{len(patches)} parsed patches"
        )
    grid = bpt_cfg.grid()
    bits = [0] * len(seq)
    for patch, (s, e) in zip(patches, seq.patch_spans):
        faces = patch.faces()
        if not faces:
            bit = 0  # a patch with no faces asserts nothing
        else:
            quads = sum(1 for f in faces if len(f) == 4)
            quad_ratio = quads / len(faces)
            scores = []
            for f in faces:
                pts = dequantize(np.asarray(f, dtype=np.int64), grid)
                scores.append(face_shape_score(pts))
            bit = int(quad_ratio >= cfg.tau_quad and float(np.mean(scores)) >= cfg.tau_topo)
        for i in range(s, e):
            bits[i] = bit
    return MaskVector(tuple(bits))


# ---------------------------------------------------------------------------
# Training triplet wire format


@dataclass
class TrainingTriplet:
    """A preference pair with token streams and masks embedded."""

    cond: str
    win_tokens: tuple
    win_mask: MaskVector
    lose_tokens: tuple
    lose_mask: MaskVector

    def __post_init__(self):
        self.win_tokens = tuple(int(t) for t in self.win_tokens)
        self.lose_tokens = tuple(int(t) for t in self.lose_tokens)
        if len(self.win_mask) != len(self.win_tokens):
            raise FramingError(
                f"winner mask length {len(self.win_mask)} != tokens {len(self.win_tokens)}"
            )
        if len(self.lose_mask) != len(self.lose_tokens):
            raise FramingError(
                f"loser mask length {len(self.lose_mask)} != tokens {len(self.lose_tokens)}"
            )


def write_training_triplets(triplets, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {
                        "cond": t.cond,
                        "win": {"tokens": list(t.win_tokens), "mask": list(t.win_mask.bits)},
                        "lose": {"tokens": list(t.lose_tokens), "mask": list(t.lose_mask.bits)},
                    }
                )
                + "\n"
            )


def read_training_triplets(path) -> list:
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
                out.append(
                    TrainingTriplet(
                        cond=str(rec["cond"]),
                        win_tokens=rec["win"]["tokens"],
                        win_mask=MaskVector(rec["win"]["mask"]),
                        lose_tokens=rec["lose"]["tokens"],
                        lose_mask=MaskVector(rec["lose"]["mask"]),
                    )
                )
            except KeyError as e:
                raise ParseError(f"missing field {e}", line=lineno, path=path) from None
    return out
