"""Score candidate meshes against a reference point cloud."""

import numpy as np

from meshtopo.mesh import Mesh, sample_surface
from meshtopo.metrics import (
    boundary_edge_ratio,
    hausdorff_distance,
    topology_score,
)

tetra = Mesh(
    np.array(
        [
            [0.0, 0.0, 0.0],
            [0.8, 0.0, 0.0],
            [0.4, 0.7, 0.0],
            [0.4, 0.25, 0.7],
        ]
    ),
    ((0, 2, 1), (0, 1, 3), (1, 2, 3), (0, 3, 2)),
    name="tetra",
)

# The same shape with one face deleted: an open boundary appears.
holed = Mesh(tetra.vertices, tetra.faces[:3], name="holed")

# A flat quad sheet nowhere near the tetrahedron.
sheet = Mesh(
    np.array(
        [
            [2.0, 2.0, 0.0],
            [2.6, 2.0, 0.0],
            [2.6, 2.6, 0.0],
            [2.0, 2.6, 0.0],
        ]
    ),
    ((0, 1, 2, 3),),
    name="sheet",
)

# Reference geometry is a point cloud sampled from the tetrahedron, so the
# tetrahedron wins on boundary and distance. Topology is geometry-blind: it
# rewards regular vertex valences, which the little quad sheet happens to have.
cloud = sample_surface(tetra, 2000, seed=0)

print(f"{'mesh':8s} {'boundary':>8s} {'topology':>8s} {'distance':>8s}")
for mesh in (tetra, holed, sheet):
    ber = boundary_edge_ratio(mesh)
    ts = topology_score(mesh)
    hd = hausdorff_distance(mesh, cloud, samples=2000, seed=0)
    print(f"{mesh.name:8s} {ber:8.3f} {ts:8.3f} {hd:8.3f}")

# boundary: fraction of edges used by only one face (0 for a watertight mesh)
# topology: valence regularity blended with boundary cleanliness, higher is better
# distance: symmetric worst-case surface distance to the reference cloud
