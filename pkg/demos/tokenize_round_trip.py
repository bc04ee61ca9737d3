"""Turn a small mesh into tokens and back, and look at the compression."""

import numpy as np

from meshtopo.bpt import compression_ratio, decode, encode, parse_patches
from meshtopo.mesh import Mesh, canonicalize, meshes_equal

# A closed fan: five triangles around a hub, rim closed into a cycle.
# After canonicalization this encodes as a single closed patch.
n = 5
verts = [[0.0, 0.0, 0.0]]
for i in range(n):
    a = 2.0 * np.pi * i / n
    verts.append([0.8 * np.cos(a), 0.8 * np.sin(a), 0.1])
faces = tuple((0, 1 + i, 1 + (i + 1) % n) for i in range(n))
mesh = canonicalize(Mesh(np.array(verts), faces, name="fan"))
print("vertices:", mesh.vertex_count, "faces:", mesh.face_count)

seq = encode(mesh)
print("tokens:", list(seq.tokens))
print("token count:", len(seq.tokens))

# Raw xyz storage would spend 3 numbers per corner, 9 per triangle.
ratio = compression_ratio(seq)
print(f"compression: {ratio.numerator}/{ratio.denominator} = {float(ratio):.3f}")

# The sequence splits back into patches, each a fan around one center vertex.
for span, patch in zip(seq.patch_spans, parse_patches(seq)):
    closed = any(run.closed for run in patch.runs)
    print("patch over tokens", span, "faces:", len(patch.faces()), "closed:", closed)

back = decode(seq)
print("round trip exact:", meshes_equal(mesh, back))
