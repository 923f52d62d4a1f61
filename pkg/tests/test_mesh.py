import itertools

import numpy as np
import pytest

from avatarfit.errors import AllFacesDegenerate, DimensionMismatch
from avatarfit.mesh import (
    SurfaceIndex,
    TriMesh,
    build_vertex_graph,
    closest_points_on_triangles,
    face_areas,
    geodesic_distances,
    hop_neighborhood,
    nearest_point_on_surface,
    sample_surface,
)
from avatarfit.synth import icosphere

from conftest import random_mesh, unit_path_graph


def brute_force_closest(mesh, query):
    tris = mesh.vertices[mesh.faces]
    q = np.broadcast_to(query, (len(tris), 3))
    pts = closest_points_on_triangles(tris, np.ascontiguousarray(q))
    d = np.linalg.norm(pts - query, axis=1)
    i = int(np.argmin(d))
    return pts[i], i, d[i]


class TestTriMesh:
    def test_rejects_out_of_range_face(self):
        with pytest.raises(DimensionMismatch):
            TriMesh(vertices=[[0, 0, 0], [1, 0, 0]], faces=[[0, 1, 2]])

    def test_rejects_fully_degenerate_face(self):
        with pytest.raises(DimensionMismatch):
            TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]], faces=[[1, 1, 1]])

    def test_uv_faces_must_match_faces(self):
        with pytest.raises(DimensionMismatch):
            TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0]], faces=[[0, 1, 2]],
                    uv_coords=[[0, 0], [1, 0], [0, 1]], uv_faces=[[0, 1, 2], [0, 1, 2]])


class TestVertexGraph:
    def test_single_triangle(self, single_triangle):
        g = build_vertex_graph(single_triangle)
        n_edges = sum(len(a) for a in g.adjacency) // 2
        assert n_edges == 3
        assert all(len(a) == 2 for a in g.adjacency)

    def test_two_triangles_share_edge(self, two_triangles):
        g = build_vertex_graph(two_triangles)
        assert sum(len(a) for a in g.adjacency) // 2 == 5

    def test_strip_edge_lengths(self):
        # unit-spaced strip of triangles along x
        v = [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0], [0.5, 10, 0], [1.5, 10, 0], [2.5, 10, 0]]
        f = [[0, 1, 4], [1, 5, 4], [1, 2, 5], [2, 6, 5], [2, 3, 6]]
        g = build_vertex_graph(TriMesh(vertices=v, faces=f))
        base_lengths = [l for i in (0, 1, 2) for nbr, l in zip(g.adjacency[i], g.edge_lengths[i])
                        if nbr in (i - 1, i + 1) and nbr <= 3]
        assert base_lengths and np.allclose(base_lengths, 1.0, atol=1e-12)

    def test_symmetry(self, sphere_mesh):
        g = build_vertex_graph(sphere_mesh)
        for i in range(g.n_vertices):
            for j in g.adjacency[i]:
                assert i in g.adjacency[j]


class TestGeodesic:
    def test_source_is_zero(self, path5):
        assert geodesic_distances(path5, 2)[2] == 0.0

    def test_unit_path(self):
        g = unit_path_graph(4)
        assert geodesic_distances(g, 0) == {0: 0.0, 1: 1.0, 2: 2.0, 3: 3.0}

    def test_cutoff_omits(self, path5):
        d = geodesic_distances(path5, 0, cutoff=2.0)
        assert set(d) == {0, 1, 2}

    def test_antipodal_at_least_euclidean(self, sphere_mesh):
        g = build_vertex_graph(sphere_mesh)
        v = sphere_mesh.vertices
        src = 0
        anti = int(np.argmax(np.linalg.norm(v - v[src], axis=1)))
        d = geodesic_distances(g, src)
        assert d[anti] >= np.linalg.norm(v[anti] - v[src])

    def test_matches_brute_force_bellman_ford(self):
        mesh = random_mesh(16, seed=3)
        g = build_vertex_graph(mesh)
        n = g.n_vertices
        # brute force: repeated edge relaxation
        dist = np.full(n, np.inf)
        dist[0] = 0.0
        edges = [(i, int(j), float(l)) for i in range(n)
                 for j, l in zip(g.adjacency[i], g.edge_lengths[i])]
        for _ in range(n):
            for a, b, l in edges:
                if dist[a] + l < dist[b]:
                    dist[b] = dist[a] + l
        got = geodesic_distances(g, 0)
        for i in range(n):
            assert got[i] == pytest.approx(dist[i], abs=1e-12)

    def test_triangle_inequality(self, sphere_mesh):
        g = build_vertex_graph(sphere_mesh)
        rng = np.random.default_rng(0)
        nodes = rng.integers(0, g.n_vertices, size=6)
        dists = {int(s): geodesic_distances(g, int(s)) for s in nodes}
        for a, b, c in itertools.permutations(map(int, nodes[:4]), 3):
            assert dists[a][c] <= dists[a][b] + dists[b][c] + 1e-9


class TestHopNeighborhood:
    def test_path_interior(self, path5):
        assert hop_neighborhood(path5, 2, 1) == {1, 2, 3}

    def test_path_end(self, path5):
        assert hop_neighborhood(path5, 0, 2) == {0, 1, 2}

    def test_diameter_reaches_all(self, sphere_mesh):
        g = build_vertex_graph(sphere_mesh)
        assert hop_neighborhood(g, 5, g.n_vertices) == set(range(g.n_vertices))

    def test_monotone_in_k(self, sphere_mesh):
        g = build_vertex_graph(sphere_mesh)
        for k in range(1, 5):
            assert hop_neighborhood(g, 17, k) <= hop_neighborhood(g, 17, k + 1)


class TestSampleSurface:
    def test_single_triangle_inside(self, single_triangle):
        s = sample_surface(single_triangle, 1, seed=0)
        assert s.face_ids[0] == 0
        assert np.all(s.barycentrics >= 0)
        assert s.barycentrics.sum() == pytest.approx(1.0, abs=1e-9)

    def test_deterministic(self, sphere_mesh):
        a = sample_surface(sphere_mesh, 100, seed=42)
        b = sample_surface(sphere_mesh, 100, seed=42)
        assert np.array_equal(a.points, b.points)
        assert np.array_equal(a.face_ids, b.face_ids)

    def test_area_ratio_split(self):
        # areas 4.5 and 0.5 -> 9:1
        mesh = TriMesh(
            vertices=[[0, 0, 0], [3, 0, 0], [0, 3, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]],
            faces=[[0, 1, 2], [3, 4, 5]],
        )
        areas = face_areas(mesh)
        assert areas[0] / areas[1] == pytest.approx(9.0)
        n = 100_000
        s = sample_surface(mesh, n, seed=7)
        count0 = int(np.sum(s.face_ids == 0))
        p = 0.9
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(count0 - n * p) < 3 * sigma

    def test_barycentric_reconstruction(self, sphere_mesh):
        s = sample_surface(sphere_mesh, 500, seed=1)
        tri = sphere_mesh.vertices[sphere_mesh.faces[s.face_ids]]
        rebuilt = np.einsum("nk,nkd->nd", s.barycentrics, tri)
        assert np.abs(rebuilt - s.points).max() < 1e-9

    def test_degenerate_mesh_raises(self):
        mesh = TriMesh(vertices=[[0, 0, 0], [1, 0, 0], [2, 0, 0]], faces=[[0, 1, 2]])
        with pytest.raises(AllFacesDegenerate):
            sample_surface(mesh, 10, seed=0)


class TestNearestPoint:
    def test_query_on_vertex(self, sphere_mesh):
        q = sphere_mesh.vertices[10]
        point, _, d = nearest_point_on_surface(sphere_mesh, q)
        assert d == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(point, q, atol=1e-12)

    def test_orthogonal_projection(self):
        mesh = TriMesh(vertices=[[-1, -1, 0], [2, -1, 0], [-1, 2, 0]], faces=[[0, 1, 2]])
        point, fid, d = nearest_point_on_surface(mesh, (0, 0, 1))
        assert fid == 0
        assert d == pytest.approx(1.0, abs=1e-12)
        assert np.allclose(point, (0, 0, 0), atol=1e-12)

    def test_matches_brute_force(self):
        mesh = random_mesh(30, seed=11)
        rng = np.random.default_rng(5)
        queries = rng.normal(size=(100, 3)) * 1.5
        idx = SurfaceIndex(mesh)
        pts, ids, d = idx.query(queries)
        for qi in range(len(queries)):
            _, _, d_bf = brute_force_closest(mesh, queries[qi])
            assert d[qi] == pytest.approx(d_bf, abs=1e-9)

    def test_distance_bounded_by_vertices(self, sphere_mesh):
        rng = np.random.default_rng(2)
        for q in rng.normal(size=(20, 3)):
            _, _, d = nearest_point_on_surface(sphere_mesh, q)
            vert_d = np.linalg.norm(sphere_mesh.vertices - q, axis=1).min()
            assert d <= vert_d + 1e-12

    def test_sphere_distance_analytic(self):
        mesh = icosphere(subdivisions=3, radius=1.0)
        _, _, d = nearest_point_on_surface(mesh, (2.0, 0.0, 0.0))
        assert d == pytest.approx(1.0, abs=5e-3)  # discretization slack
