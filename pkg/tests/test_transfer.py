import numpy as np
import pytest

from avatarfit.errors import EmptyResult, NonSimpleBoundary
from avatarfit.mesh import TriMesh
from avatarfit.synth import SynthPreset, grid_patch, icosphere, make_model
from avatarfit.transfer import (
    TransferSpec,
    boundary_loops,
    build_correspondence,
    delete_vertices,
    fill_boundary_loops,
    flatten_region,
    transfer_coefficients,
    transfer_model,
)

from conftest import random_mesh


def edge_census(mesh):
    counts = {}
    for f in mesh.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


class TestDeleteVertices:
    def test_empty_deletion_is_identity(self, sphere_mesh):
        out, idx_map = delete_vertices(sphere_mesh, [])
        assert np.array_equal(out.vertices, sphere_mesh.vertices)
        assert np.array_equal(out.faces, sphere_mesh.faces)
        assert np.array_equal(idx_map, np.arange(sphere_mesh.n_vertices))

    def test_disjoint_triangles(self):
        mesh = TriMesh(
            vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 0, 0], [6, 0, 0], [5, 1, 0]],
            faces=[[0, 1, 2], [3, 4, 5]])
        out, idx_map = delete_vertices(mesh, [1])
        assert out.n_vertices == 5
        assert out.n_faces == 1
        assert idx_map[1] == -1
        survivors = idx_map[idx_map >= 0]
        assert np.array_equal(np.sort(survivors), np.arange(5))

    def test_no_face_references_deleted(self):
        mesh = random_mesh(40, seed=2)
        rng = np.random.default_rng(0)
        dels = rng.choice(mesh.n_vertices, size=8, replace=False)
        out, idx_map = delete_vertices(mesh, dels)
        # exhaustive scan: every output face maps back to surviving vertices
        back = np.nonzero(idx_map >= 0)[0]
        for f in out.faces:
            for v in f:
                assert idx_map[back[v]] == v
                assert back[v] not in dels

    def test_all_deleted_raises(self, single_triangle):
        with pytest.raises(EmptyResult):
            delete_vertices(single_triangle, [0, 1, 2])


class TestFillBoundaryLoops:
    def test_closed_mesh_unchanged(self, sphere_mesh):
        out = fill_boundary_loops(sphere_mesh)
        assert np.array_equal(out.faces, sphere_mesh.faces)

    def test_square_hole_two_triangles(self):
        # open box without a lid: 4-cycle boundary
        mesh = TriMesh(
            vertices=[[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0.5, 0.5, -1]],
            faces=[[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
        assert len(boundary_loops(mesh)) == 1
        out = fill_boundary_loops(mesh)
        assert out.n_faces == mesh.n_faces + 2
        assert set(edge_census(out).values()) == {2}

    @pytest.mark.parametrize("sub", [1, 2])
    def test_vertex_star_hole_euler(self, sub):
        sphere = icosphere(subdivisions=sub, radius=1.0)
        holed, _ = delete_vertices(sphere, [7])
        loops = boundary_loops(holed)
        assert len(loops) == 1
        n_gon = len(loops[0])
        out = fill_boundary_loops(holed)
        assert out.n_faces == holed.n_faces + (n_gon - 2)
        census = edge_census(out)
        assert set(census.values()) == {2}
        assert out.n_vertices - len(census) + out.n_faces == 2  # sphere topology

    def test_orientation_consistent(self):
        sphere = icosphere(subdivisions=1, radius=1.0)
        holed, _ = delete_vertices(sphere, [3])
        out = fill_boundary_loops(holed)
        # consistent orientation: each undirected edge appears once per direction
        directed = set()
        for f in out.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                assert (a, b) not in directed
                directed.add((a, b))

    def test_non_simple_boundary_raises(self):
        bowtie = TriMesh(
            vertices=[[0, 0, 0], [1, 0, 0], [0, 1, 0], [-1, 0, 0], [0, -1, 0]],
            faces=[[0, 1, 2], [0, 3, 4]])
        with pytest.raises(NonSimpleBoundary):
            fill_boundary_loops(bowtie)

    def test_nonconvex_hole_filled_closed(self):
        # L-shaped (non-convex) hole in a plane, walled to give 2 faces per inner edge
        outer = [[-2, -2, 0], [4, -2, 0], [4, 4, 0], [-2, 4, 0]]
        hole = [[0, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0], [1, 2, 0], [0, 2, 0]]
        verts = np.array(outer + hole, dtype=float)
        faces = [
            [0, 1, 4], [1, 5, 4], [1, 6, 5], [1, 2, 6], [2, 7, 6], [2, 8, 7],
            [2, 3, 8], [3, 9, 8], [3, 4, 9], [3, 0, 4],
        ]
        mesh = TriMesh(vertices=verts, faces=faces)
        loops = boundary_loops(mesh)
        inner = [l for l in loops if set(l) == {4, 5, 6, 7, 8, 9}]
        assert inner
        out = fill_boundary_loops(mesh)
        # inner hexagon contributes 4 triangles, outer quad 2
        assert out.n_faces == mesh.n_faces + 4 + 2
        assert set(edge_census(out).values()) == {2}


class TestFlattenRegion:
    def test_zero_iterations_unchanged(self, sphere_mesh):
        out = flatten_region(sphere_mesh, range(10), iterations=0, step=0.5)
        assert np.array_equal(out.vertices, sphere_mesh.vertices)

    @staticmethod
    def grid_interior(n):
        return [i for i in range(n * n) if i // n not in (0, n - 1) and i % n not in (0, n - 1)]

    def test_flat_regular_patch_fixed_point(self):
        mesh = grid_patch(7, 7, spacing=0.1)
        out = flatten_region(mesh, self.grid_interior(7), iterations=10, step=0.5)
        assert np.abs(out.vertices - mesh.vertices).max() < 1e-9

    def test_bumpy_patch_flattens(self):
        n = 9
        mesh = grid_patch(n, n, spacing=0.1)
        rng = np.random.default_rng(4)
        v = mesh.vertices.copy()
        region = self.grid_interior(n)
        v[region, 2] += rng.normal(scale=0.02, size=len(region))
        bumpy = mesh.with_vertices(v)

        def plane_residual(m):
            pts = m.vertices - m.vertices.mean(axis=0)
            _, s, _ = np.linalg.svd(pts, full_matrices=False)
            return s[-1]

        out = flatten_region(bumpy, region, iterations=50, step=0.5)
        assert plane_residual(out) < plane_residual(bumpy)
        # everything outside the region interior stays fixed
        fixed = sorted(set(range(n * n)) - set(self.grid_interior(n)) |
                       {i for i in region
                        if i // n in (1, n - 2) or i % n in (1, n - 2)})
        assert np.array_equal(out.vertices[fixed], bumpy.vertices[fixed])


class TestCorrespondence:
    def test_identity(self):
        pts = np.random.default_rng(0).normal(size=(30, 3))
        corr = build_correspondence(pts, pts)
        assert np.array_equal(corr.lite_to_source, np.arange(30))
        assert np.array_equal(corr.source_to_lite, np.arange(30))

    def test_even_subset(self):
        pts = np.random.default_rng(1).normal(size=(40, 3))
        corr = build_correspondence(pts, pts[::2])
        assert np.array_equal(corr.lite_to_source, np.arange(0, 40, 2))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        src = rng.normal(size=(50, 3))
        lite = rng.normal(size=(23, 3))
        corr = build_correspondence(src, lite)
        for i, p in enumerate(lite):
            want = int(np.argmin(np.linalg.norm(src - p, axis=1)))
            assert corr.lite_to_source[i] == want
        for i, p in enumerate(src):
            want = int(np.argmin(np.linalg.norm(lite - p, axis=1)))
            assert corr.source_to_lite[i] == want

    def test_tie_breaks_lowest_index(self):
        src = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        lite = np.array([[1.0, 0, 0]])
        corr = build_correspondence(src, lite)
        assert corr.lite_to_source[0] == 1


class TestTransferCoefficients:
    def test_identity_transfer_exact(self, biped_model):
        mesh = TriMesh(vertices=biped_model.template, faces=biped_model.faces)
        corr = build_correspondence(biped_model.template, mesh.vertices)
        out = transfer_coefficients(biped_model, mesh, corr)
        assert np.array_equal(out.shape_dirs, biped_model.shape_dirs)
        assert np.array_equal(out.pose_dirs, biped_model.pose_dirs)
        assert np.array_equal(out.joint_regressor, biped_model.joint_regressor)
        assert np.abs(out.skin_weights - biped_model.skin_weights).max() < 1e-12

    def test_toy_aggregation(self):
        from avatarfit.bodymodel import ParametricModel
        from avatarfit.transfer import VertexCorrespondence

        src = ParametricModel(
            template=[[0, 0, 0], [0.1, 0, 0], [1, 0, 0], [1.1, 0, 0]],
            faces=[[0, 1, 2], [1, 3, 2]],
            shape_dirs=np.zeros((4, 3, 0)), expr_dirs=np.zeros((4, 3, 0)),
            pose_dirs=np.zeros((4, 3, 0)),
            joint_regressor=np.array([[0.25, 0.25, 0.25, 0.25]]),
            skin_weights=np.ones((4, 1)), parents=[-1])
        lite = TriMesh(vertices=[[0.05, 0, 0], [1.05, 0, 0], [0.5, 1, 0]],
                       faces=[[0, 1, 2]])
        corr = VertexCorrespondence(
            lite_to_source=np.array([0, 2, 2]),
            source_to_lite=np.array([0, 0, 1, 1]))
        out = transfer_coefficients(src, lite, corr)
        assert np.allclose(out.joint_regressor, [[0.5, 0.5, 0.0]])

    def test_row_sums_preserved_on_random_deletion(self, biped_model):
        from avatarfit.synth import sparse_delete_ids

        mesh = TriMesh(vertices=biped_model.template, faces=biped_model.faces)
        dels = sparse_delete_ids(mesh, 60, seed=8)
        lite = transfer_model(biped_model, [TransferSpec(delete_ids=dels)])
        before = biped_model.joint_regressor.sum(axis=1)
        after = lite.joint_regressor.sum(axis=1)
        assert np.abs(before - after).max() < 1e-9
        assert np.abs(lite.skin_weights.sum(axis=1) - 1.0).max() < 1e-6
        assert lite.skin_weights.min() >= 0.0 and lite.skin_weights.max() <= 1.0

    def test_joint_drift_bounded(self, biped_model):
        from avatarfit.bodymodel import regress_joints
        from avatarfit.synth import sparse_delete_ids

        mesh = TriMesh(vertices=biped_model.template, faces=biped_model.faces)
        dels = sparse_delete_ids(mesh, 100, seed=3)
        lite = transfer_model(biped_model, [TransferSpec(delete_ids=dels)])
        corr = build_correspondence(biped_model.template, lite.template)
        max_nn = max(
            np.linalg.norm(biped_model.template - lite.template[corr.source_to_lite], axis=1).max(),
            np.linalg.norm(lite.template - biped_model.template[corr.lite_to_source], axis=1).max())
        j_src = regress_joints(biped_model, biped_model.template)
        j_lite = regress_joints(lite, lite.template)
        assert np.linalg.norm(j_lite - j_src, axis=1).max() <= max_nn + 1e-12

    def test_pipeline_deterministic(self, biped_model):
        from avatarfit.synth import sparse_delete_ids

        mesh = TriMesh(vertices=biped_model.template, faces=biped_model.faces)
        spec = TransferSpec(delete_ids=sparse_delete_ids(mesh, 30, seed=1),
                            flatten_regions=[list(range(200, 260))],
                            flatten_iterations=5, flatten_step=0.5)
        a = transfer_model(biped_model, [spec])
        b = transfer_model(biped_model, [spec])
        assert np.array_equal(a.template, b.template)
        assert np.array_equal(a.joint_regressor, b.joint_regressor)
        assert np.array_equal(a.skin_weights, b.skin_weights)

    def test_vertex_count_only_changes_at_deletion(self, sphere_model):
        mesh = TriMesh(vertices=sphere_model.template, faces=sphere_model.faces)
        out, _ = delete_vertices(mesh, [0, 1])
        n_after_delete = out.n_vertices
        filled = fill_boundary_loops(out)
        assert filled.n_vertices == n_after_delete
        flat = flatten_region(filled, range(20), iterations=3, step=0.3)
        assert flat.n_vertices == n_after_delete
