"""Mesh tokenization, topology metrics, preference data, and seam-driven UV tools."""

from .mesh import (
    EdgeTopology,
    Mesh,
    PointCloud,
    QuantGrid,
    build_edge_topology,
    canonicalize,
    dequantize,
    load_obj,
    load_xyz,
    normalize_unit_cube,
    quantize,
    sample_surface,
    save_obj,
    save_xyz,
    sort_key_yzx,
)

__version__ = "0.1.0"
