"""Mesh quality metrics: boundary edge ratio, topology score, Hausdorff distance.

The three numbers summarize how watertight a mesh is, how close its
connectivity is to a regular quad/triangle grid, and how far its surface
strays from a reference point cloud. They drive the preference ranking in
:mod:`meshtopo.preference`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DomainError, MeshTopoError, MetricError, ParseError
from .mesh import EdgeTopology, Mesh, PointCloud, build_edge_topology, sample_surface

__all__ = [
    "QualityReport",
    "boundary_edge_ratio",
    "topology_score",
    "hausdorff_points",
    "hausdorff_distance",
    "evaluate",
    "write_report",
    "read_reports",
]

DEFAULT_SAMPLES = 10000


@dataclass
class QualityReport:
    """Bundle of the three metrics for one mesh."""

    id: str
    ber: float
    ts: float
    hd: float


def boundary_edge_ratio(mesh: Mesh, topo: EdgeTopology | None = None) -> float:
    """Fraction of edges used by exactly one face. 0 for a closed mesh."""
    if topo is None:
        topo = build_edge_topology(mesh)
    if topo.edge_count == 0:
        raise DomainError("mesh has no edges")
    return float(topo.boundary.sum()) / topo.edge_count


def topology_score(mesh: Mesh, topo: EdgeTopology | None = None) -> float:
    """Structure score in [0, 1]: half quad share, half valence regularity.

    The regularity half is the fraction of interior vertices sitting at their
    target degree: 4 when the vertex touches a quad, 6 otherwise. Interior
    means incident to edges but to no boundary edge. A mesh without boundary
    edges has no boundary frame to measure the interior against, so the
    regularity half is vacuously 1; the same applies when every vertex lies
    on the boundary.
    """
    if mesh.face_count == 0:
        raise DomainError("mesh has no faces")
    if topo is None:
        topo = build_edge_topology(mesh)
    quad_ratio = sum(1 for f in mesh.faces if len(f) == 4) / mesh.face_count

    on_boundary = np.zeros(mesh.vertex_count, dtype=bool)
    for (a, b), is_b in zip(topo.edges, topo.boundary):
        if is_b:
            on_boundary[a] = True
            on_boundary[b] = True

    has_quad = np.zeros(mesh.vertex_count, dtype=bool)
    for f in mesh.faces:
        if len(f) == 4:
            for v in f:
                has_quad[v] = True

    if not topo.boundary.any():
        regularity = 1.0
    else:
        interior = [
            v
            for v in range(mesh.vertex_count)
            if topo.vertex_degree[v] > 0 and not on_boundary[v]
        ]
        if not interior:
            regularity = 1.0
        else:
            target = np.where(has_quad[interior], 4, 6)
            regularity = float(
                np.mean(topo.vertex_degree[interior] == target)
            )
    return 0.5 * quad_ratio + 0.5 * regularity


def hausdorff_points(a: np.ndarray, b: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two point sets."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if len(a) == 0 or len(b) == 0:
        raise DomainError("Hausdorff distance needs non-empty point sets")
    d_ab = cKDTree(b).query(a)[0].max()
    d_ba = cKDTree(a).query(b)[0].max()
    return float(max(d_ab, d_ba))


def hausdorff_distance(
    mesh: Mesh,
    cloud: PointCloud,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> float:
    """Symmetric Hausdorff distance between a sampled surface and a cloud."""
    if samples < 1:
        raise DomainError(f"need at least 1 sample, got {samples}")
    surf = sample_surface(mesh, samples, seed)
    return hausdorff_points(surf.points, cloud.points)


def evaluate(
    mesh: Mesh,
    cloud: PointCloud,
    mesh_id: str = "",
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
) -> QualityReport:
    """All three metrics at once; failures are tagged with the metric name."""
    topo = build_edge_topology(mesh)
    values = {}
    for name, fn in (
        ("ber", lambda: boundary_edge_ratio(mesh, topo)),
        ("ts", lambda: topology_score(mesh, topo)),
        ("hd", lambda: hausdorff_distance(mesh, cloud, samples, seed)),
    ):
        try:
            values[name] = fn()
        except MeshTopoError as e:
            raise MetricError(str(e), metric=name) from e
    return QualityReport(id=mesh_id, ber=values["ber"], ts=values["ts"], hd=values["hd"])


def write_report(report: QualityReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(report_to_json(report) + "\n")


def report_to_json(report: QualityReport) -> str:
    return json.dumps(
        {"id": report.id, "ber": report.ber, "ts": report.ts, "hd": report.hd}
    )


def read_reports(path) -> list:
    """Read one report per line (a single-report file is one line)."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(
                    QualityReport(
                        id=str(rec["id"]),
                        ber=float(rec["ber"]),
                        ts=float(rec["ts"]),
                        hd=float(rec["hd"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise ParseError(f"bad report record: {e}", line=lineno, path=path) from None
    return out
