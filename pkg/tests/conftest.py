import math
import warnings

import numpy as np
import pytest

from meshtopo.errors import DegenerateFaceWarning
from meshtopo.mesh import Mesh, canonicalize


def make_tetrahedron():
    verts = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
        ]
    )
    faces = ((0, 1, 2), (0, 3, 1), (0, 2, 3), (1, 3, 2))
    return Mesh(verts, faces, name="tetrahedron")


def make_single_triangle():
    verts = np.array([[0.0, 0.0, 0.0], [0.8, 0.0, 0.0], [0.0, 0.8, 0.0]])
    return Mesh(verts, ((0, 1, 2),), name="triangle")


def make_two_triangles():
    # two triangles sharing one edge
    verts = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.8, 0.0, 0.0],
            [0.0, 0.8, 0.0],
            [0.8, 0.8, 0.0],
        ]
    )
    return Mesh(verts, ((0, 1, 2), (1, 3, 2)), name="two-triangles")


def make_closed_fan(n=5, radius=0.8):
    # hub surrounded by a full ring of n triangles
    verts = [[0.0, 0.0, 0.0]]
    for k in range(n):
        t = 2.0 * math.pi * k / n
        verts.append([radius * math.cos(t), radius * math.sin(t), 0.0])
    faces = tuple((0, 1 + k, 1 + (k + 1) % n) for k in range(n))
    return Mesh(np.array(verts), faces, name=f"closed-fan-{n}")


def make_open_fan(n_faces=5, radius=0.8):
    # hub with n_faces triangles spanning slightly more than a half turn
    verts = [[0.0, 0.0, 0.0]]
    span = 1.4 * math.pi
    for k in range(n_faces + 1):
        t = span * k / n_faces
        verts.append([radius * math.cos(t), radius * math.sin(t), 0.0])
    faces = tuple((0, 1 + k, 2 + k) for k in range(n_faces))
    return Mesh(np.array(verts), faces, name=f"open-fan-{n_faces}")


def make_hex_disk(radius=0.8):
    # six triangles around one interior vertex of degree 6
    verts = [[0.0, 0.0, 0.0]]
    for k in range(6):
        t = 2.0 * math.pi * k / 6
        verts.append([radius * math.cos(t), radius * math.sin(t), 0.0])
    faces = tuple((0, 1 + k, 1 + (k + 1) % 6) for k in range(6))
    return Mesh(np.array(verts), faces, name="hex-disk")


def make_quad_grid(nx=4, ny=4, extent=0.9):
    # planar grid of nx*ny quad cells in the z=0 plane
    xs = np.linspace(-extent, extent, nx + 1)
    ys = np.linspace(-extent, extent, ny + 1)
    verts = [[x, y, 0.0] for y in ys for x in xs]
    faces = []
    w = nx + 1
    for j in range(ny):
        for i in range(nx):
            a = j * w + i
            faces.append((a, a + 1, a + w + 1, a + w))
    return Mesh(np.array(verts), tuple(faces), name=f"quad-grid-{nx}x{ny}")


def make_cube():
    verts = 0.8 * np.array(
        [
            [-1.0, -1.0, -1.0],
            [1.0, -1.0, -1.0],
            [1.0, 1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, -1.0, 1.0],
            [1.0, 1.0, 1.0],
            [-1.0, 1.0, 1.0],
        ]
    )
    faces = (
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    )
    return Mesh(verts, faces, name="cube")


def make_cylinder(n_around=12, n_rows=4, radius=0.7, height=1.8):
    # open triangulated tube: two boundary rims, no caps
    verts = []
    for j in range(n_rows + 1):
        y = -height / 2.0 + height * j / n_rows
        for i in range(n_around):
            t = 2.0 * math.pi * i / n_around
            verts.append([radius * math.cos(t), y, radius * math.sin(t)])
    faces = []
    for j in range(n_rows):
        for i in range(n_around):
            a = j * n_around + i
            b = j * n_around + (i + 1) % n_around
            c = a + n_around
            d = b + n_around
            faces.append((a, b, d))
            faces.append((a, d, c))
    return Mesh(np.array(verts), tuple(faces), name="cylinder")


def random_mesh(rng, max_vertices=20, max_faces=30, quads=True):
    """Random raw mesh in [-0.95, 0.95]^3; faces have distinct indices."""
    nv = int(rng.integers(4, max_vertices + 1))
    verts = rng.uniform(-0.95, 0.95, size=(nv, 3))
    nf = int(rng.integers(1, max_faces + 1))
    faces = []
    for _ in range(nf):
        k = 4 if (quads and rng.random() < 0.3) else 3
        if nv < k:
            k = 3
        idx = rng.choice(nv, size=k, replace=False)
        faces.append(tuple(int(i) for i in idx))
    return Mesh(verts, tuple(faces))


def random_canonical_mesh(rng, **kw):
    """Random mesh already in canonical form (degenerate faces silently gone)."""
    m = random_mesh(rng, **kw)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFaceWarning)
        c = canonicalize(m)
    return c


@pytest.fixture
def tetrahedron():
    return make_tetrahedron()


@pytest.fixture
def single_triangle():
    return make_single_triangle()


@pytest.fixture
def two_triangles():
    return make_two_triangles()


@pytest.fixture
def closed_fan():
    return make_closed_fan()


@pytest.fixture
def open_fan():
    return make_open_fan()


@pytest.fixture
def quad_grid():
    return make_quad_grid()


@pytest.fixture
def cube():
    return make_cube()


@pytest.fixture
def cylinder():
    return make_cylinder()
