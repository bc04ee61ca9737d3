"""Core mesh types and geometry operations.

Meshes are plain vertex/face containers: float64 vertex positions and
triangle or quad faces stored as index tuples. Everything here is pure --
operations return new objects and never mutate their inputs.

Coordinate convention: meshes live in the axis-aligned cube [-1, 1]^3 after
normalize_unit_cube. Quantization maps each coordinate to one of ``levels``
uniform bins over [lo, hi] with round-half-up, so bin boundaries are stable
across platforms.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateFaceWarning,
    DegenerateGeometryError,
    DomainError,
    IndexRangeError,
    ParseError,
    UnsupportedFaceError,
)

__all__ = [
    "Mesh",
    "PointCloud",
    "QuantGrid",
    "EdgeTopology",
    "load_obj",
    "save_obj",
    "load_xyz",
    "save_xyz",
    "normalize_unit_cube",
    "quantize",
    "dequantize",
    "sort_key_yzx",
    "canonicalize",
    "build_edge_topology",
    "triangulate",
    "sample_surface",
    "meshes_equal",
]


@dataclass
class QuantGrid:
    """Uniform quantization grid over a closed interval, shared by all axes."""

    lo: float = -1.0
    hi: float = 1.0
    levels: int = 1024

    def __post_init__(self):
        if self.levels < 2:
            raise DomainError(f"levels must be >= 2, got {self.levels}")
        if not self.hi > self.lo:
            raise DomainError(f"need hi > lo, got [{self.lo}, {self.hi}]")


@dataclass
class Mesh:
    """Indexed face set. Faces are tuples of 3 or 4 distinct vertex indices."""

    vertices: np.ndarray
    faces: tuple = ()
    name: str = ""

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        n = len(self.vertices)
        clean = []
        for fi, face in enumerate(self.faces):
            face = tuple(int(i) for i in face)
            if len(face) not in (3, 4):
                raise UnsupportedFaceError(
                    f"face {fi} has {len(face)} vertices; only 3 or 4 supported"
                )
            if len(set(face)) != len(face):
                raise DomainError(f"face {fi} repeats a vertex index: {face}")
            for i in face:
                if i < 0 or i >= n:
                    raise IndexRangeError(
                        f"face {fi} references vertex {i}, mesh has {n}"
                    )
            clean.append(face)
        self.faces = tuple(clean)

    @property
    def vertex_count(self) -> int:
        return len(self.vertices)

    @property
    def face_count(self) -> int:
        return len(self.faces)


@dataclass
class PointCloud:
    """Unordered 3D point set."""

    points: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


def meshes_equal(a: Mesh, b: Mesh) -> bool:
    """Exact equality of vertex arrays and face tuples (names ignored)."""
    return (
        a.vertices.shape == b.vertices.shape
        and np.array_equal(a.vertices, b.vertices)
        and a.faces == b.faces
    )


# ---------------------------------------------------------------------------
# OBJ / XYZ serialization


def _parse_face_token(tok: str, n_vertices: int, path, lineno: int) -> int:
    # accept v, v/vt, v//vn, v/vt/vn; only the vertex index is kept
    head = tok.split("/")[0]
    try:
        idx = int(head)
    except ValueError:
        raise ParseError(f"bad face index {tok!r}", line=lineno, path=path) from None
    if idx < 1 or idx > n_vertices:
        raise IndexRangeError(
            f"face index {idx} out of range 1..{n_vertices}", line=lineno, path=path
        )
    return idx - 1


def load_obj(path) -> Mesh:
    """Read a Wavefront OBJ file (v and f records, triangles and quads)."""
    vertices = []
    raw_faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            key = parts[0]
            if key == "v":
                if len(parts) < 4:
                    raise ParseError("vertex record needs 3 coordinates", line=lineno, path=path)
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError:
                    raise ParseError(f"bad vertex coordinate in {line!r}", line=lineno, path=path) from None
            elif key == "f":
                if len(parts) - 1 < 3 or len(parts) - 1 > 4:
                    raise UnsupportedFaceError(
                        f"face with {len(parts) - 1} vertices; only 3 or 4 supported",
                        line=lineno,
                        path=path,
                    )
                raw_faces.append((lineno, parts[1:]))
            else:
                # vt/vn/o/s/usemtl and friends carry no information we keep
                continue
    n = len(vertices)
    faces = []
    for lineno, toks in raw_faces:
        faces.append(tuple(_parse_face_token(t, n, path, lineno) for t in toks))
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    return Mesh(verts, tuple(faces), name=str(path))


def save_obj(mesh: Mesh, path, uv: np.ndarray | None = None) -> None:
    """Write a mesh as OBJ. With ``uv`` (one row per vertex) also emits vt records."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {mesh.vertex_count} vertices, {mesh.face_count} faces\n")
        for v in mesh.vertices:
            fh.write(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}\n")
        if uv is not None:
            uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
            if len(uv) != mesh.vertex_count:
                raise DomainError(
                    f"uv rows ({len(uv)}) must match vertex count ({mesh.vertex_count})"
                )
            for t in uv:
                fh.write(f"vt {float(t[0])!r} {float(t[1])!r}\n")
            for face in mesh.faces:
                fh.write("f " + " ".join(f"{i + 1}/{i + 1}" for i in face) + "\n")
        else:
            for face in mesh.faces:
                fh.write("f " + " ".join(str(i + 1) for i in face) + "\n")


def load_xyz(path) -> PointCloud:
    """Read a plain point cloud: one ``x y z`` triple per line."""
    pts = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ParseError("point record needs 3 coordinates", line=lineno, path=path)
            try:
                pts.append([float(x) for x in parts[:3]])
            except ValueError:
                raise ParseError(f"bad coordinate in {line!r}", line=lineno, path=path) from None
    return PointCloud(np.asarray(pts, dtype=np.float64).reshape(-1, 3), name=str(path))


def save_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in cloud.points:
            fh.write(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")


# ---------------------------------------------------------------------------
# Normalization and quantization


def normalize_unit_cube(mesh: Mesh) -> Mesh:
    """Center the bounding box at the origin and scale the longest axis to [-1, 1]."""
    if mesh.vertex_count == 0:
        raise DegenerateGeometryError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0.0:
        raise DegenerateGeometryError("mesh has zero extent on every axis")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) * (2.0 / extent)
    return Mesh(verts, mesh.faces, name=mesh.name)


def quantize(values, grid: QuantGrid) -> np.ndarray:
    """Map coordinates in [lo, hi] to integer bins 0..levels-1, round half up."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size and (arr.min() < grid.lo or arr.max() > grid.hi):
        raise DomainError(
            f"coordinates outside [{grid.lo}, {grid.hi}]: "
            f"range [{arr.min()}, {arr.max()}]"
        )
    t = (arr - grid.lo) / (grid.hi - grid.lo) * (grid.levels - 1)
    # round half up, not banker's rounding
    return np.floor(t + 0.5).astype(np.int64)


def dequantize(bins, grid: QuantGrid) -> np.ndarray:
    """Map integer bins back to the coordinate at the bin's center of rounding."""
    arr = np.asarray(bins)
    if arr.size and (arr.min() < 0 or arr.max() >= grid.levels):
        raise DomainError(f"bin outside 0..{grid.levels - 1}: range [{arr.min()}, {arr.max()}]")
    return grid.lo + arr.astype(np.float64) / (grid.levels - 1) * (grid.hi - grid.lo)


def sort_key_yzx(vertex):
    """Ordering key used everywhere vertices are sorted: y first, then z, then x."""
    return (vertex[1], vertex[2], vertex[0])


def canonicalize(mesh: Mesh, grid: QuantGrid | None = None) -> Mesh:
    """Bring a mesh to its unique canonical form on the quantization grid.

    Vertices are quantized, sorted by (y, z, x), and merged when they land in
    the same bin. Faces are reindexed, rotated to start at their lowest vertex
    index (orientation preserved), and sorted. Faces left with fewer than 3
    distinct vertices are dropped; a quad with one collapsed corner becomes a
    triangle. The result's vertex coordinates are the dequantized bin values,
    so canonicalize is idempotent.
    """
    if grid is None:
        grid = QuantGrid()
    bins = quantize(mesh.vertices, grid)
    # lexsort uses the last key as primary: y, then z, then x
    order = np.lexsort((bins[:, 0], bins[:, 2], bins[:, 1]))
    remap = {}
    unique_bins = []
    old_to_new = np.empty(len(bins), dtype=np.int64)
    for old in order:
        key = tuple(bins[old])
        if key not in remap:
            remap[key] = len(unique_bins)
            unique_bins.append(key)
        old_to_new[old] = remap[key]

    faces = []
    dropped = 0
    for face in mesh.faces:
        mapped = tuple(int(old_to_new[i]) for i in face)
        distinct = []
        for i in mapped:
            if i not in distinct:
                distinct.append(i)
        if len(distinct) < 3:
            dropped += 1
            continue
        if len(mapped) == 4 and len(distinct) == 3:
            # collapsed corner: adjacent duplicates reduce the quad to a triangle,
            # non-adjacent duplicates make a zero-width bowtie and are dropped
            if mapped[0] == mapped[2] or mapped[1] == mapped[3]:
                dropped += 1
                continue
            mapped = tuple(distinct)
        rot = int(np.argmin(mapped))
        faces.append(mapped[rot:] + mapped[:rot])
    if dropped:
        warnings.warn(
            f"canonicalize dropped {dropped} degenerate face(s)",
            DegenerateFaceWarning,
            stacklevel=2,
        )
    faces.sort()
    verts = dequantize(np.asarray(unique_bins, dtype=np.int64).reshape(-1, 3), grid)
    return Mesh(verts, tuple(faces), name=mesh.name)


# ---------------------------------------------------------------------------
# Edge topology


@dataclass
class EdgeTopology:
    """Undirected edge table with per-edge face incidence counts."""

    edges: np.ndarray            # (m, 2) vertex index pairs, low index first
    incidence: np.ndarray        # (m,) number of faces using each edge
    boundary: np.ndarray         # (m,) bool, incidence == 1
    vertex_degree: np.ndarray    # (n,) incident edge count per vertex
    edge_index: dict = field(repr=False, default_factory=dict)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def row(self, a: int, b: int) -> int | None:
        """Row index for undirected edge (a, b), or None if absent."""
        return self.edge_index.get((a, b) if a < b else (b, a))


def face_edges(face):
    """Cyclic undirected edges of a face, low vertex index first."""
    k = len(face)
    out = []
    for i in range(k):
        a, b = face[i], face[(i + 1) % k]
        out.append((a, b) if a < b else (b, a))
    return out


def build_edge_topology(mesh: Mesh) -> EdgeTopology:
    counts = {}
    for face in mesh.faces:
        for e in face_edges(face):
            counts[e] = counts.get(e, 0) + 1
    keys = sorted(counts)
    edges = np.asarray(keys, dtype=np.int64).reshape(-1, 2)
    incidence = np.asarray([counts[k] for k in keys], dtype=np.int64)
    degree = np.zeros(mesh.vertex_count, dtype=np.int64)
    for a, b in keys:
        degree[a] += 1
        degree[b] += 1
    return EdgeTopology(
        edges=edges,
        incidence=incidence,
        boundary=incidence == 1,
        vertex_degree=degree,
        edge_index={k: i for i, k in enumerate(keys)},
    )


# ---------------------------------------------------------------------------
# Sampling


def triangulate(mesh: Mesh):
    """Split quads along the 0-2 diagonal.

    Returns (triangles, origin) where ``origin[t]`` is the source face index
    of triangle ``t``.
    """
    tris = []
    origin = []
    for fi, face in enumerate(mesh.faces):
        if len(face) == 3:
            tris.append(face)
            origin.append(fi)
        else:
            a, b, c, d = face
            tris.append((a, b, c))
            tris.append((a, c, d))
            origin.extend((fi, fi))
    return (
        np.asarray(tris, dtype=np.int64).reshape(-1, 3),
        np.asarray(origin, dtype=np.int64),
    )


def triangle_areas(vertices: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a = vertices[tris[:, 0]]
    b = vertices[tris[:, 1]]
    c = vertices[tris[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def surface_area(mesh: Mesh) -> float:
    tris, _ = triangulate(mesh)
    if len(tris) == 0:
        return 0.0
    return float(triangle_areas(mesh.vertices, tris).sum())


def sample_surface(mesh: Mesh, n: int, seed: int) -> PointCloud:
    """Draw ``n`` points uniformly by area from the mesh surface.

    Quads are split 0-2 first; faces are then chosen with probability
    proportional to area and points placed by uniform barycentric sampling.
    Deterministic for a fixed seed.
    """
    if n < 0:
        raise DomainError(f"sample count must be >= 0, got {n}")
    tris, _ = triangulate(mesh)
    if len(tris) == 0:
        raise DegenerateGeometryError("mesh has no faces to sample")
    areas = triangle_areas(mesh.vertices, tris)
    total = float(areas.sum())
    if total <= 0.0:
        raise DegenerateGeometryError("mesh surface area is zero")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(tris), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    flip = u + v > 1.0
    u[flip] = 1.0 - u[flip]
    v[flip] = 1.0 - v[flip]
    a = mesh.vertices[tris[chosen, 0]]
    b = mesh.vertices[tris[chosen, 1]]
    c = mesh.vertices[tris[chosen, 2]]
    pts = a + u[:, None] * (b - a) + v[:, None] * (c - a)
    return PointCloud(pts, name=mesh.name)
