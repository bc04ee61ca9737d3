"""From metric reports to ranked training pairs and quality masks."""

import numpy as np

from meshtopo.bpt import encode
from meshtopo.mesh import Mesh, canonicalize
from meshtopo.metrics import QualityReport
from meshtopo.preference import (
    CandidateSet,
    MaskConfig,
    build_triplets,
    mask_phi,
)

# Pretend three generators produced candidates for the same conditioning
# input and we already measured them. Lower ber and hd are better, higher
# ts is better. A pair enters training only when the winner is strictly
# better on all three at once.
reports = [
    QualityReport(id="crisp", ber=0.00, ts=0.90, hd=0.01),
    QualityReport(id="decent", ber=0.10, ts=0.60, hd=0.05),
    QualityReport(id="torn", ber=0.45, ts=0.20, hd=0.30),
    QualityReport(id="confused", ber=0.05, ts=0.10, hd=0.02),  # mixed signals
]
candidates = CandidateSet(cond_id="scan-007", entries=tuple((r.id, r) for r in reports))

triplets = build_triplets(candidates)
print("ranked pairs:")
for t in triplets:
    print(f"  {t.winner_id} beats {t.loser_id}")

# "confused" is better than "torn" on ber and hd but not ts, so that pair
# is skipped rather than guessed at.
names = {(t.winner_id, t.loser_id) for t in triplets}
print("confused vs torn included:", ("confused", "torn") in names)

# Masks mark tokens whose patch looks like a clean quad region: mostly
# quad faces with near-square corner angles. A quad sheared to a 30 degree
# parallelogram only earns the fallback shape score, so under a stricter
# threshold its whole patch masks to zero while the square keeps its ones.
square = Mesh(
    np.array(
        [[0.0, 0.0, 0.0], [0.8, 0.0, 0.0], [0.8, 0.8, 0.0], [0.0, 0.8, 0.0]]
    ),
    ((0, 1, 2, 3),),
)
sheared = Mesh(
    np.array(
        [[0.0, 0.0, 0.0], [0.48, 0.0, 0.0], [0.75, 0.156, 0.0], [0.27, 0.156, 0.0]]
    ),
    ((0, 1, 2, 3),),
)
cfg = MaskConfig(tau_topo=0.75)
for label, mesh in (("square", square), ("sheared", sheared)):
    mesh = canonicalize(mesh)
    seq = encode(mesh)
    mask = mask_phi(seq, mesh, cfg)
    print(f"{label}: {len(seq)} tokens, mask = {list(mask.bits)}")
