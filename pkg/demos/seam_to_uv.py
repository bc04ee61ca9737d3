"""Cut a cylinder open along a seam and flatten it into one UV chart."""

import numpy as np

from meshtopo.mesh import Mesh, surface_area
from meshtopo.seam import SeamSegment, encode_seam, order_seams, seam_ratio
from meshtopo.uv import (
    cut_mesh,
    extract_charts,
    face_distortion,
    flatten_chart,
    geodesic_connect,
    snap_to_mesh,
)

# An open-ended tube: 12 columns, 4 rings of quads split into triangles.
n_around, n_rows = 12, 4
radius, height = 0.7, 1.8
verts = []
for j in range(n_rows + 1):
    z = -height / 2 + height * j / n_rows
    for i in range(n_around):
        a = 2.0 * np.pi * i / n_around
        verts.append([radius * np.cos(a), radius * np.sin(a), z])
faces = []
for j in range(n_rows):
    for i in range(n_around):
        a = j * n_around + i
        b = j * n_around + (i + 1) % n_around
        c = a + n_around
        d = b + n_around
        faces.extend([(a, b, d), (a, d, c)])
mesh = Mesh(np.array(verts), tuple(faces), name="tube")

charts = extract_charts(mesh)
print("uncut: charts", len(charts), "euler", charts[0].euler_characteristic,
      "disk:", charts[0].is_disk)

# The seam runs straight down one side, bottom rim to top rim. Its
# endpoints are given as raw positions and snapped to mesh vertices.
seam = order_seams([SeamSegment(tuple(verts[0]), tuple(verts[n_rows * n_around]))])
tokens = encode_seam(seam)
ratio = seam_ratio(len(seam), mesh.vertex_count)
print(f"seam: {len(seam)} segment, {len(tokens)} tokens, ratio {ratio:.4f}")

head = int(snap_to_mesh(mesh, seam[0].head)[0])
tail = int(snap_to_mesh(mesh, seam[0].tail)[0])
path = geodesic_connect(mesh, head, tail)
print("cut path:", path)

cut, report = cut_mesh(mesh, path)
print("cut edges:", len(report.cut_edges), "duplicated vertices:", len(report.duplicates))
print(f"area preserved: {abs(surface_area(cut) - surface_area(mesh)):.2e}")

(chart,) = extract_charts(cut)
print("after cut: euler", chart.euler_characteristic,
      "loops", len(chart.boundary_loops), "disk:", chart.is_disk)

# Boundary pinned to a circle, interior solved by mean-value weights.
result = flatten_chart(chart)
dist = face_distortion(chart.mesh, result.uv)
print("flipped faces:", len(result.flipped_faces))
print(f"distortion: mean {np.mean(dist):.3f}, worst {np.max(dist):.3f}")
