import math

import numpy as np
import pytest

from meshtopo.errors import (
    DegenerateFaceWarning,
    DegenerateGeometryError,
    DomainError,
    IndexRangeError,
    ParseError,
    UnsupportedFaceError,
)
from meshtopo.mesh import (
    Mesh,
    PointCloud,
    QuantGrid,
    build_edge_topology,
    canonicalize,
    dequantize,
    load_obj,
    load_xyz,
    meshes_equal,
    normalize_unit_cube,
    quantize,
    sample_surface,
    save_obj,
    save_xyz,
    sort_key_yzx,
    triangulate,
)
from conftest import make_cube, random_mesh


class TestQuantize:
    def test_center_rounds_half_up(self):
        grid = QuantGrid()
        assert quantize(0.0, grid) == 512

    def test_extremes(self):
        grid = QuantGrid()
        assert quantize(-1.0, grid) == 0
        assert quantize(1.0, grid) == 1023

    def test_round_trip_error_bound(self):
        grid = QuantGrid()
        rng = np.random.default_rng(7)
        c = rng.uniform(-1.0, 1.0, size=5000)
        back = dequantize(quantize(c, grid), grid)
        bound = (grid.hi - grid.lo) / (2 * (grid.levels - 1))
        assert np.max(np.abs(back - c)) <= bound + 1e-12

    def test_out_of_range_rejected(self):
        grid = QuantGrid()
        with pytest.raises(DomainError):
            quantize(1.5, grid)
        with pytest.raises(DomainError):
            dequantize(1024, grid)

    def test_bad_grid(self):
        with pytest.raises(DomainError):
            QuantGrid(levels=1)
        with pytest.raises(DomainError):
            QuantGrid(lo=1.0, hi=-1.0)

    def test_lattice_values_stable(self):
        # dequantized values land back in the same bin
        grid = QuantGrid()
        bins = np.arange(grid.levels)
        assert np.array_equal(quantize(dequantize(bins, grid), grid), bins)


class TestCanonicalize:
    def test_yzx_vertex_order(self):
        verts = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])
        m = Mesh(verts, ((0, 1, 2),))
        c = canonicalize(m)
        keys = [sort_key_yzx(v) for v in c.vertices]
        assert keys == sorted(keys)
        # expected order: (0,0,0), (1,0,0), (0,0,1)
        grid = QuantGrid()
        bins = quantize(c.vertices, grid)
        assert list(bins[0]) == [512, 512, 512]
        assert list(bins[1]) == [1023, 512, 512]
        assert list(bins[2]) == [512, 512, 1023]

    def test_nearby_vertices_merge(self):
        verts = np.array(
            [[0.0, 0.0, 0.0], [1e-6, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.5, 0.0]]
        )
        m = Mesh(verts, ((0, 2, 3), (1, 2, 3)))
        c = canonicalize(m)
        assert c.vertex_count == 3
        # both faces now reference the merged vertex
        assert len(c.faces) == 2
        assert c.faces[0] == c.faces[1]

    def test_face_rotation_starts_at_lowest_index(self):
        verts = np.array([[0.0, 0.1, 0.0], [0.5, 0.2, 0.0], [0.2, 0.7, 0.0]])
        m = Mesh(verts, ((2, 0, 1),))
        c = canonicalize(m)
        assert all(f[0] == min(f) for f in c.faces)

    def test_orientation_preserved_under_rotation(self):
        verts = np.array([[0.0, 0.1, 0.0], [0.5, 0.2, 0.0], [0.2, 0.7, 0.0]])
        a = canonicalize(Mesh(verts, ((2, 0, 1),)))
        b = canonicalize(Mesh(verts, ((0, 1, 2),)))
        assert a.faces == b.faces

    def test_degenerate_face_dropped_with_warning(self):
        verts = np.array([[0.0, 0.0, 0.0], [5e-7, 0.0, 0.0], [0.5, 0.5, 0.0]])
        m = Mesh(verts, ((0, 1, 2),))
        with pytest.warns(DegenerateFaceWarning):
            c = canonicalize(m)
        assert c.face_count == 0

    def test_quad_with_collapsed_corner_becomes_triangle(self):
        verts = np.array(
            [[0.0, 0.0, 0.0], [0.5, 0.0, 0.0], [0.5, 0.5, 0.0], [0.5 + 1e-7, 0.5, 0.0]]
        )
        m = Mesh(verts, ((0, 1, 2, 3),))
        c = canonicalize(m)
        assert c.face_count == 1
        assert len(c.faces[0]) == 3

    def test_idempotent(self):
        import warnings

        rng = np.random.default_rng(3)
        for _ in range(20):
            m = random_mesh(rng)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateFaceWarning)
                c1 = canonicalize(m)
                c2 = canonicalize(c1)
            assert meshes_equal(c1, c2)

    def test_vertex_permutation_invariance(self):
        import warnings

        rng = np.random.default_rng(11)
        for _ in range(20):
            m = random_mesh(rng)
            perm = rng.permutation(m.vertex_count)
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            shuffled = Mesh(
                m.vertices[perm],
                tuple(tuple(int(inv[i]) for i in f) for f in m.faces),
            )
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateFaceWarning)
                assert meshes_equal(canonicalize(m), canonicalize(shuffled))

    def test_faces_sorted(self, tetrahedron):
        c = canonicalize(tetrahedron)
        assert list(c.faces) == sorted(c.faces)


class TestNormalize:
    def test_longest_axis_spans_unit(self):
        rng = np.random.default_rng(0)
        verts = rng.uniform(-5.0, 3.0, size=(30, 3)) * np.array([1.0, 0.3, 0.2])
        m = Mesh(verts, ((0, 1, 2),))
        out = normalize_unit_cube(m)
        lo = out.vertices.min(axis=0)
        hi = out.vertices.max(axis=0)
        assert math.isclose((hi - lo).max(), 2.0, abs_tol=1e-12)
        assert np.all(hi <= 1.0 + 1e-12) and np.all(lo >= -1.0 - 1e-12)

    def test_zero_extent_rejected(self):
        m = Mesh(np.zeros((3, 3)), ((0, 1, 2),))
        with pytest.raises(DegenerateGeometryError):
            normalize_unit_cube(m)


class TestObjIO:
    def test_cube_round_trip(self, tmp_path):
        cube = make_cube()
        path = tmp_path / "cube.obj"
        save_obj(cube, path)
        back = load_obj(path)
        assert back.vertex_count == 8
        assert back.face_count == 6
        assert meshes_equal(cube, back)

    def test_pentagon_rejected(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 2 2 0\nf 1 2 3 4 5\n")
        with pytest.raises(UnsupportedFaceError):
            load_obj(path)

    def test_out_of_range_index(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        with pytest.raises(IndexRangeError) as ei:
            load_obj(path)
        assert ei.value.line == 4

    def test_bad_coordinate_reports_line(self, tmp_path):
        path = tmp_path / "bad.obj"
        path.write_text("# header\nv 0 zero 0\n")
        with pytest.raises(ParseError) as ei:
            load_obj(path)
        assert ei.value.line == 2

    def test_comments_and_unknown_records_ignored(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text(
            "# comment\nvn 0 0 1\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        )
        m = load_obj(path)
        assert m.face_count == 1

    def test_slash_face_records(self, tmp_path):
        path = tmp_path / "m.obj"
        path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3//3\n")
        m = load_obj(path)
        assert m.faces == ((0, 1, 2),)


class TestXyzIO:
    def test_round_trip(self, tmp_path):
        pts = np.array([[0.0, 0.5, -0.25], [1.0 / 3.0, 2.0, -7.125]])
        path = tmp_path / "c.xyz"
        save_xyz(PointCloud(pts), path)
        back = load_xyz(path)
        assert np.array_equal(back.points, pts)

    def test_short_record(self, tmp_path):
        path = tmp_path / "c.xyz"
        path.write_text("0 0 0\n1 2\n")
        with pytest.raises(ParseError) as ei:
            load_xyz(path)
        assert ei.value.line == 2


class TestEdgeTopology:
    def test_tetrahedron_closed(self, tetrahedron):
        topo = build_edge_topology(tetrahedron)
        assert topo.edge_count == 6
        assert np.all(topo.incidence == 2)
        assert not topo.boundary.any()
        assert np.all(topo.vertex_degree == 3)

    def test_two_triangles(self, two_triangles):
        topo = build_edge_topology(two_triangles)
        assert topo.edge_count == 5
        shared = topo.row(1, 2)
        assert topo.incidence[shared] == 2
        assert int(topo.boundary.sum()) == 4

    def test_quad_grid_interior_degree(self, quad_grid):
        topo = build_edge_topology(quad_grid)
        # interior vertices of a quad grid touch 4 edges
        inner = [j * 5 + i for j in range(1, 4) for i in range(1, 4)]
        assert np.all(topo.vertex_degree[inner] == 4)


class TestSampling:
    def test_quad_split_on_short_diagonal_named_0_2(self, cube):
        tris, origin = triangulate(cube)
        assert len(tris) == 12
        assert list(origin) == [0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]
        a, b, c, d = cube.faces[0]
        assert tuple(tris[0]) == (a, b, c)
        assert tuple(tris[1]) == (a, c, d)

    def test_triangle_mean_near_centroid(self):
        m = Mesh(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            ((0, 1, 2),),
        )
        cloud = sample_surface(m, 10000, seed=0)
        centroid = np.array([1.0 / 3.0, 1.0 / 3.0, 0.0])
        assert np.linalg.norm(cloud.points.mean(axis=0) - centroid) < 0.02

    def test_samples_on_surface(self):
        m = Mesh(
            np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
            ((0, 1, 2),),
        )
        cloud = sample_surface(m, 500, seed=1)
        assert np.allclose(cloud.points[:, 2], 0.0)
        s = cloud.points[:, 0] + cloud.points[:, 1]
        assert np.all(s <= 1.0 + 1e-12)
        assert np.all(cloud.points[:, :2] >= -1e-12)

    def test_deterministic_under_seed(self, tetrahedron):
        a = sample_surface(tetrahedron, 100, seed=42)
        b = sample_surface(tetrahedron, 100, seed=42)
        c = sample_surface(tetrahedron, 100, seed=43)
        assert np.array_equal(a.points, b.points)
        assert not np.array_equal(a.points, c.points)

    def test_no_faces_rejected(self):
        m = Mesh(np.zeros((3, 3)), ())
        with pytest.raises(DegenerateGeometryError):
            sample_surface(m, 10, seed=0)


class TestMeshValidation:
    def test_repeated_index_rejected(self):
        with pytest.raises(DomainError):
            Mesh(np.zeros((3, 3)), ((0, 1, 1),))

    def test_out_of_range_rejected(self):
        with pytest.raises(IndexRangeError):
            Mesh(np.zeros((3, 3)), ((0, 1, 5),))

    def test_pentagon_rejected(self):
        with pytest.raises(UnsupportedFaceError):
            Mesh(np.zeros((5, 3)), ((0, 1, 2, 3, 4),))
