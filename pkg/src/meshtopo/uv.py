"""Cutting meshes along vertex paths and flattening the resulting charts.

The pipeline: snap seam endpoints to mesh vertices, connect them with
shortest edge paths, cut the mesh open along those paths, split it into
edge-connected charts, and flatten each disk chart to the plane with mean
value weights against a circular boundary.

Cutting duplicates vertices per wedge: at each vertex of the cut, the
incident faces are grouped by connectivity through non-cut edges, the group
containing the lowest face index keeps the original vertex, and every other
group gets a fresh copy. A consequence worth knowing: a cut only takes
effect where it actually separates a vertex star, so a path that starts and
ends in the interior (a slit) is a no-op; effective paths run boundary to
boundary or close into loops.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import (
    DegenerateGeometryError,
    DomainError,
    InvalidPathError,
    NoPathError,
    NumericError,
    TopologyError,
)
from .mesh import Mesh, build_edge_topology, face_edges, triangulate

__all__ = [
    "snap_to_mesh",
    "geodesic_connect",
    "CutReport",
    "cut_mesh",
    "Chart",
    "extract_charts",
    "FlattenResult",
    "flatten_chart",
    "face_distortion",
]


def snap_to_mesh(mesh: Mesh, points) -> np.ndarray:
    """Index of the nearest mesh vertex for each query point (ties: lowest)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if mesh.vertex_count == 0:
        raise DomainError("cannot snap to a mesh with no vertices")
    out = np.empty(len(pts), dtype=np.int64)
    # chunk the distance matrix to keep memory flat on large inputs
    chunk = max(1, 1_000_000 // max(1, mesh.vertex_count))
    for lo in range(0, len(pts), chunk):
        block = pts[lo : lo + chunk]
        d2 = ((block[:, None, :] - mesh.vertices[None, :, :]) ** 2).sum(axis=2)
        out[lo : lo + len(block)] = np.argmin(d2, axis=1)
    return out


def geodesic_connect(mesh: Mesh, src: int, dst: int) -> list:
    """Shortest vertex path along mesh edges, Euclidean edge weights.

    Distance ties resolve toward the lower predecessor index, so the path is
    deterministic. Raises NoPathError when src and dst sit in different
    edge-connected components.
    """
    nv = mesh.vertex_count
    for v in (src, dst):
        if not 0 <= v < nv:
            raise DomainError(f"vertex {v} out of range 0..{nv - 1}")
    if src == dst:
        return [src]
    topo = build_edge_topology(mesh)
    neighbors = [[] for _ in range(nv)]
    for a, b in topo.edges:
        w = float(np.linalg.norm(mesh.vertices[a] - mesh.vertices[b]))
        neighbors[a].append((int(b), w))
        neighbors[b].append((int(a), w))

    dist = np.full(nv, np.inf)
    pred = np.full(nv, -1, dtype=np.int64)
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = np.zeros(nv, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dst:
            break
        for v, w in neighbors[u]:
            if done[v]:
                continue
            nd = d + w
            if nd < dist[v] or (nd == dist[v] and pred[v] != -1 and u < pred[v]):
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    if not np.isfinite(dist[dst]):
        raise NoPathError(f"no edge path from vertex {src} to {dst}")
    path = [dst]
    while path[-1] != src:
        path.append(int(pred[path[-1]]))
    path.reverse()
    return path


# ---------------------------------------------------------------------------
# Cutting


@dataclass(frozen=True)
class CutReport:
    cut_edges: tuple  # interior path edges actually cut, as sorted pairs
    skipped_edges: tuple  # path edges already on the boundary
    duplicates: tuple  # (original vertex, new vertex) in creation order


def _edge_face_lists(mesh: Mesh, topo) -> list:
    """Face indices sharing each edge row of the topology."""
    out = [[] for _ in range(len(topo.edges))]
    for fi, face in enumerate(mesh.faces):
        for key in face_edges(face):
            out[topo.edge_index[key]].append(fi)
    return out


def cut_mesh(mesh: Mesh, path) -> tuple:
    """Open the mesh along a vertex path; returns (cut mesh, report).

    Every consecutive pair in the path must be a mesh edge. Interior edges
    of the path are cut (each becomes two boundary edges); edges already on
    the boundary are left alone and reported as skipped. The face count
    never changes.
    """
    path = [int(v) for v in path]
    if len(path) < 2:
        raise InvalidPathError(f"path needs at least 2 vertices, got {len(path)}")
    nv = mesh.vertex_count
    for v in path:
        if not 0 <= v < nv:
            raise InvalidPathError(f"path vertex {v} out of range 0..{nv - 1}")

    topo = build_edge_topology(mesh)
    edge_faces = _edge_face_lists(mesh, topo)
    cut = set()
    skipped = []
    seen_steps = set()
    for a, b in zip(path, path[1:]):
        if a == b:
            raise InvalidPathError(f"path repeats vertex {a} in consecutive steps")
        key = (min(a, b), max(a, b))
        row = topo.edge_index.get(key)
        if row is None:
            raise InvalidPathError(f"path step {a}-{b} is not a mesh edge")
        if key in seen_steps:
            continue
        seen_steps.add(key)
        if int(topo.incidence[row]) >= 2:
            cut.add(key)
        else:
            skipped.append(key)

    vertex_faces = {}
    for fi, face in enumerate(mesh.faces):
        for v in face:
            vertex_faces.setdefault(v, []).append(fi)

    new_faces = [list(f) for f in mesh.faces]
    extra_rows = []
    duplicates = []
    next_id = nv

    for v in sorted({u for e in cut for u in e}):
        inc = vertex_faces.get(v, [])
        if not inc:
            continue
        # group v's faces by connectivity through non-cut edges at v
        adj = {f: set() for f in inc}
        for f in inc:
            for key in face_edges(mesh.faces[f]):
                if v not in key or key in cut:
                    continue
                for g in edge_faces[topo.edge_index[key]]:
                    if g != f and g in adj:
                        adj[f].add(g)
        wedges = []
        unvisited = set(inc)
        for start in sorted(inc):
            if start not in unvisited:
                continue
            comp = []
            stack = [start]
            unvisited.discard(start)
            while stack:
                f = stack.pop()
                comp.append(f)
                for g in adj[f]:
                    if g in unvisited:
                        unvisited.discard(g)
                        stack.append(g)
            wedges.append(sorted(comp))
        wedges.sort(key=lambda c: c[0])
        for comp in wedges[1:]:
            new_v = next_id
            next_id += 1
            extra_rows.append(mesh.vertices[v].copy())
            duplicates.append((v, new_v))
            for f in comp:
                new_faces[f] = [new_v if x == v else x for x in new_faces[f]]

    if extra_rows:
        verts = np.vstack([mesh.vertices, np.array(extra_rows)])
    else:
        verts = mesh.vertices.copy()
    out = Mesh(verts, tuple(tuple(f) for f in new_faces), name=mesh.name)
    report = CutReport(
        cut_edges=tuple(sorted(cut)),
        skipped_edges=tuple(skipped),
        duplicates=tuple(duplicates),
    )
    return out, report


# ---------------------------------------------------------------------------
# Charts


@dataclass(frozen=True)
class Chart:
    """One edge-connected piece of a mesh, with local vertex numbering."""

    mesh: Mesh
    face_ids: tuple  # original face indices
    vertex_ids: tuple  # original vertex index per local vertex
    boundary_loops: tuple  # tuples of local vertex indices

    @property
    def euler_characteristic(self) -> int:
        topo = build_edge_topology(self.mesh)
        return self.mesh.vertex_count - len(topo.edges) + self.mesh.face_count

    @property
    def is_disk(self) -> bool:
        return self.euler_characteristic == 1 and len(self.boundary_loops) == 1


def _boundary_loops(mesh: Mesh) -> tuple:
    """Walk boundary edges into closed loops, following face orientation."""
    topo = build_edge_topology(mesh)
    directed = {}
    for face in mesh.faces:
        k = len(face)
        for i in range(k):
            a, b = face[i], face[(i + 1) % k]
            key = (a, b) if a < b else (b, a)
            if topo.boundary[topo.edge_index[key]]:
                directed.setdefault(a, []).append(b)
    for heads in directed.values():
        heads.sort()
    loops = []
    used = set()
    for start in sorted(directed):
        for first in directed[start]:
            if (start, first) in used:
                continue
            loop = [start]
            cur, nxt = start, first
            while True:
                used.add((cur, nxt))
                if nxt == start:
                    break
                loop.append(nxt)
                cur = nxt
                choices = [h for h in directed.get(cur, []) if (cur, h) not in used]
                if not choices:
                    raise TopologyError(
                        f"boundary walk stuck at vertex {cur}; inconsistent orientation"
                    )
                nxt = choices[0]
            loops.append(tuple(loop))
    return tuple(loops)


def extract_charts(mesh: Mesh) -> list:
    """Split into edge-connected face components, ordered by lowest face id."""
    if mesh.face_count == 0:
        return []
    topo = build_edge_topology(mesh)
    parent = list(range(mesh.face_count))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for faces in _edge_face_lists(mesh, topo):
        for other in faces[1:]:
            ra, rb = find(faces[0]), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

    groups = {}
    for fi in range(mesh.face_count):
        groups.setdefault(find(fi), []).append(fi)

    charts = []
    for root in sorted(groups):
        face_ids = tuple(groups[root])
        vids = sorted({v for fi in face_ids for v in mesh.faces[fi]})
        local = {v: i for i, v in enumerate(vids)}
        sub_faces = tuple(
            tuple(local[v] for v in mesh.faces[fi]) for fi in face_ids
        )
        sub = Mesh(mesh.vertices[vids], sub_faces, name=mesh.name)
        charts.append(
            Chart(
                mesh=sub,
                face_ids=face_ids,
                vertex_ids=tuple(vids),
                boundary_loops=_boundary_loops(sub),
            )
        )
    return charts


# ---------------------------------------------------------------------------
# Flattening


@dataclass(frozen=True)
class FlattenResult:
    chart: Chart
    uv: np.ndarray  # (n, 2) per local vertex
    flipped_faces: tuple  # local face indices with non-positive uv area


def _corner_angle(p, a, b):
    u = a - p
    v = b - p
    cross = np.linalg.norm(np.cross(u, v))
    dot = float(np.dot(u, v))
    return math.atan2(cross, dot)


def flatten_chart(chart: Chart) -> FlattenResult:
    """Map a disk chart to the plane: circular boundary, mean value interior.

    The boundary loop goes to a circle of matching circumference by arc
    length; interior vertices solve the mean value Laplacian. With the
    convex boundary this yields a flip-free embedding for well-shaped
    charts; flipped faces, if any, are reported.
    """
    if not chart.is_disk:
        raise TopologyError(
            f"chart is not a disk (chi={chart.euler_characteristic}, "
            f"{len(chart.boundary_loops)} boundary loops)"
        )
    mesh = chart.mesh
    n = mesh.vertex_count
    pts = mesh.vertices
    loop = list(chart.boundary_loops[0])
    # deterministic start: rotate so the loop begins at its lowest vertex
    k = loop.index(min(loop))
    loop = loop[k:] + loop[:k]

    seg = np.array(
        [np.linalg.norm(pts[loop[(i + 1) % len(loop)]] - pts[loop[i]]) for i in range(len(loop))]
    )
    total = float(seg.sum())
    if total <= 0.0:
        raise DegenerateGeometryError("boundary loop has zero length")
    radius = total / (2.0 * math.pi)
    cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    angles = 2.0 * math.pi * cum / total

    uv = np.zeros((n, 2))
    boundary = set(loop)
    uv[loop, 0] = radius * np.cos(angles)
    uv[loop, 1] = radius * np.sin(angles)

    interior = [v for v in range(n) if v not in boundary]
    if interior:
        tris, _ = triangulate(mesh)
        weights = {}
        for tri in tris:
            for c in range(3):
                i, a, b = tri[c], tri[(c + 1) % 3], tri[(c + 2) % 3]
                theta = _corner_angle(pts[i], pts[a], pts[b])
                t = math.tan(theta / 2.0)
                for j in (a, b):
                    weights[(i, j)] = weights.get((i, j), 0.0) + t
        wdiv = {}
        for (i, j), w in weights.items():
            d = float(np.linalg.norm(pts[i] - pts[j]))
            if d <= 0.0:
                raise DegenerateGeometryError(
                    f"zero-length edge {i}-{j} in chart"
                )
            wdiv[(i, j)] = w / d

        idx = {v: r for r, v in enumerate(interior)}
        rows, cols, vals = [], [], []
        rhs = np.zeros((len(interior), 2))
        diag = np.zeros(len(interior))
        for (i, j), w in wdiv.items():
            if i not in idx:
                continue
            r = idx[i]
            diag[r] += w
            if j in idx:
                rows.append(r)
                cols.append(idx[j])
                vals.append(-w)
            else:
                rhs[r] += w * uv[j]
        rows.extend(range(len(interior)))
        cols.extend(range(len(interior)))
        vals.extend(diag)
        mat = scipy.sparse.csc_matrix(
            (vals, (rows, cols)), shape=(len(interior), len(interior))
        )
        solve = scipy.sparse.linalg.factorized(mat)
        sol = np.column_stack([solve(rhs[:, 0]), solve(rhs[:, 1])])
        if not np.all(np.isfinite(sol)):
            raise NumericError("non-finite values", where="uv solve")
        uv[interior] = sol

    flipped = []
    for fi, face in enumerate(mesh.faces):
        for c in range(1, len(face) - 1):
            a, b, d = uv[face[0]], uv[face[c]], uv[face[c + 1]]
            area2 = (b[0] - a[0]) * (d[1] - a[1]) - (b[1] - a[1]) * (d[0] - a[0])
            if area2 <= 0.0:
                flipped.append(fi)
                break
    return FlattenResult(chart=chart, uv=uv, flipped_faces=tuple(flipped))


# ---------------------------------------------------------------------------
# Distortion


def _triangle_energy(p0, p1, p2, q0, q1, q2) -> float:
    """Conformal stretch of the map from a 3d triangle to its uv image."""
    e1 = p1 - p0
    e2 = p2 - p0
    len1 = np.linalg.norm(e1)
    normal = np.cross(e1, e2)
    nlen = np.linalg.norm(normal)
    if len1 <= 0.0 or nlen <= 0.0:
        return math.inf
    ax1 = e1 / len1
    ax2 = np.cross(normal / nlen, ax1)
    # 2d edge matrix in the triangle's own frame
    p_mat = np.array(
        [[len1, float(np.dot(e2, ax1))], [0.0, float(np.dot(e2, ax2))]]
    )
    q_mat = np.column_stack([q1 - q0, q2 - q0])
    try:
        jac = q_mat @ np.linalg.inv(p_mat)
    except np.linalg.LinAlgError:
        return math.inf
    sig = np.linalg.svd(jac, compute_uv=False)
    if sig[1] <= 1e-300:
        return math.inf
    return float(sig[0] / sig[1] + sig[1] / sig[0] - 2.0)


def face_distortion(mesh: Mesh, uv) -> np.ndarray:
    """Per-face conformal distortion of a uv assignment; 0 means angle-true.

    Quads average their two triangles. Degenerate geometry (zero-area faces
    in 3d or in uv) yields inf for that face.
    """
    uv = np.asarray(uv, dtype=np.float64)
    if uv.shape != (mesh.vertex_count, 2):
        raise DomainError(
            f"uv must have shape ({mesh.vertex_count}, 2), got {uv.shape}"
        )
    tris, origin = triangulate(mesh)
    energies = np.zeros(mesh.face_count)
    counts = np.zeros(mesh.face_count)
    for tri, fi in zip(tris, origin):
        e = _triangle_energy(
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
            uv[tri[0]],
            uv[tri[1]],
            uv[tri[2]],
        )
        energies[fi] += e
        counts[fi] += 1
    with np.errstate(invalid="ignore"):
        out = energies / counts
    out[~np.isfinite(energies)] = math.inf
    return out
