"""Derive a fit-friendly reduced model from a source parametric model.

Pipeline per round: delete problem-region vertices, re-triangulate the hole
boundaries, smooth designated regions flat. Afterwards every coefficient
matrix is carried over to the surviving topology: per-row nearest-neighbor
copies for the blend/skinning matrices, and reverse-nearest aggregation for
the joint regressor so no regression mass is lost.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .bodymodel import ParametricModel
from .errors import DimensionMismatch, EmptyResult, NonSimpleBoundary
from .mesh import TriMesh, build_vertex_graph


@dataclass(frozen=True)
class TransferSpec:
    """One round of vertex deletion, hole filling and region flattening.

    delete_ids index the mesh the round is applied to; flatten_regions index the
    surviving (re-indexed) vertices after deletion and hole filling.
    """

    delete_ids: Sequence[int] = ()
    flatten_regions: List[Sequence[int]] = field(default_factory=list)
    flatten_iterations: int = 0
    flatten_step: float = 0.5

    def __post_init__(self):
        if not (0.0 < self.flatten_step <= 1.0):
            raise ValueError("flatten_step must be in (0, 1]")
        if self.flatten_iterations < 0:
            raise ValueError("flatten_iterations must be >= 0")


@dataclass(frozen=True)
class VertexCorrespondence:
    lite_to_source: np.ndarray  # per lite vertex: nearest source vertex
    source_to_lite: np.ndarray  # per source vertex: nearest lite vertex


def delete_vertices(mesh: TriMesh, delete_ids) -> Tuple[TriMesh, np.ndarray]:
    """Drop the given vertices and every face touching them.

    Survivors keep their relative order. Returns (mesh, old_to_new) where
    old_to_new[i] is the new index of vertex i, or -1 if deleted.
    """
    delete_ids = np.asarray(sorted(set(int(i) for i in delete_ids)), dtype=np.int64)
    if delete_ids.size and (delete_ids[0] < 0 or delete_ids[-1] >= mesh.n_vertices):
        raise DimensionMismatch("delete id out of range")
    keep = np.ones(mesh.n_vertices, dtype=bool)
    keep[delete_ids] = False
    if not keep.any():
        raise EmptyResult("all vertices deleted")
    old_to_new = np.full(mesh.n_vertices, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(int(keep.sum()))
    face_ok = keep[mesh.faces].all(axis=1)
    new_faces = old_to_new[mesh.faces[face_ok]]
    uv_faces = mesh.uv_faces[face_ok] if mesh.uv_faces is not None else None
    out = TriMesh(vertices=mesh.vertices[keep], faces=new_faces,
                  uv_coords=mesh.uv_coords, uv_faces=uv_faces,
                  texture_path=mesh.texture_path)
    return out, old_to_new


def boundary_loops(mesh: TriMesh) -> List[List[int]]:
    """Closed cycles of boundary vertices, traversed along directed boundary edges.

    A boundary edge belongs to exactly one face; its direction is the one it has
    in that face, so loops inherit the mesh orientation.
    """
    count = {}
    direction = {}
    for f in mesh.faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            count[key] = count.get(key, 0) + 1
            direction[key] = (int(a), int(b))
    nxt = {}
    for key, c in count.items():
        if c == 1:
            a, b = direction[key]
            if a in nxt:
                raise NonSimpleBoundary(f"vertex {a} lies on more than one boundary edge pair")
            nxt[a] = b
    loops = []
    visited = set()
    for start in sorted(nxt):
        if start in visited:
            continue
        loop = [start]
        visited.add(start)
        cur = nxt[start]
        while cur != start:
            if cur in visited or cur not in nxt:
                raise NonSimpleBoundary(f"boundary walk through vertex {cur} does not close")
            loop.append(cur)
            visited.add(cur)
            cur = nxt[cur]
        loops.append(loop)
    return loops


def _loop_plane_coords(points: np.ndarray) -> np.ndarray:
    """2D coordinates of loop points in their best-fit plane."""
    center = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - center)
    return (points - center) @ vt[:2].T


def _is_convex(poly2d: np.ndarray) -> bool:
    n = len(poly2d)
    sign = 0
    for i in range(n):
        a, b, c = poly2d[i], poly2d[(i + 1) % n], poly2d[(i + 2) % n]
        cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
        if abs(cross) < 1e-14:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return True


def _ear_clip(indices: List[int], poly2d: np.ndarray) -> List[Tuple[int, int, int]]:
    """Triangulate a simple polygon; returns triangles in polygon orientation."""
    n = len(indices)
    area2 = sum(poly2d[i][0] * poly2d[(i + 1) % n][1] - poly2d[(i + 1) % n][0] * poly2d[i][1]
                for i in range(n))
    order = list(range(n))
    if area2 < 0:
        order.reverse()
    tris = []
    guard = 0
    while len(order) > 3 and guard < 4 * n * n:
        guard += 1
        m = len(order)
        clipped = False
        for k in range(m):
            i0, i1, i2 = order[(k - 1) % m], order[k], order[(k + 1) % m]
            a, b, c = poly2d[i0], poly2d[i1], poly2d[i2]
            cross = (b[0] - a[0]) * (c[1] - b[1]) - (b[1] - a[1]) * (c[0] - b[0])
            if cross <= 1e-14:
                continue  # reflex or collinear corner
            ear_ok = True
            for j in order:
                if j in (i0, i1, i2):
                    continue
                p = poly2d[j]
                # barycentric point-in-triangle
                d = ((b[1] - c[1]) * (a[0] - c[0]) + (c[0] - b[0]) * (a[1] - c[1]))
                if abs(d) < 1e-30:
                    continue
                l1 = ((b[1] - c[1]) * (p[0] - c[0]) + (c[0] - b[0]) * (p[1] - c[1])) / d
                l2 = ((c[1] - a[1]) * (p[0] - c[0]) + (a[0] - c[0]) * (p[1] - c[1])) / d
                l3 = 1 - l1 - l2
                if l1 >= -1e-12 and l2 >= -1e-12 and l3 >= -1e-12:
                    ear_ok = False
                    break
            if ear_ok:
                tris.append((indices[i0], indices[i1], indices[i2]))
                order.pop(k)
                clipped = True
                break
        if not clipped:
            return []  # give up; caller falls back to a fan
    if len(order) == 3:
        tris.append((indices[order[0]], indices[order[1]], indices[order[2]]))
    if area2 < 0:
        tris = [(c, b, a) for a, b, c in tris]
    return tris


def fill_boundary_loops(mesh: TriMesh) -> TriMesh:
    """Triangulate every boundary loop, leaving existing vertices and faces untouched.

    Convex (in-plane) loops get a fan from the vertex closest to the loop centroid;
    other loops are ear-clipped in their best-fit plane. New faces are wound to
    match the surrounding orientation; with UVs present they receive a degenerate
    UV triple.
    """
    loops = boundary_loops(mesh)
    if not loops:
        return mesh
    new_faces = []
    for loop in loops:
        pts = mesh.vertices[loop]
        if len(loop) == 3:
            tris = [(loop[2], loop[1], loop[0])]
        else:
            poly2d = _loop_plane_coords(pts)
            rev_idx = loop[::-1]
            rev2d = poly2d[::-1]
            tris = []
            if not _is_convex(poly2d):
                tris = _ear_clip(rev_idx, rev2d)
            if not tris:
                centroid = pts.mean(axis=0)
                apex = int(np.argmin(np.linalg.norm(pts - centroid, axis=1)))
                m = len(loop)
                for j in range(m):
                    j1 = (j + 1) % m
                    if j == apex or j1 == apex:
                        continue
                    tris.append((loop[apex], loop[j1], loop[j]))
        new_faces.extend(tris)
    faces = np.concatenate([mesh.faces, np.asarray(new_faces, dtype=np.int64)])
    uv_coords, uv_faces = mesh.uv_coords, mesh.uv_faces
    if uv_faces is not None:
        uv_coords = np.concatenate([uv_coords, [[0.0, 0.0]]])
        degenerate = np.full((len(new_faces), 3), len(uv_coords) - 1, dtype=np.int64)
        uv_faces = np.concatenate([uv_faces, degenerate])
    return TriMesh(vertices=mesh.vertices, faces=faces, uv_coords=uv_coords,
                   uv_faces=uv_faces, texture_path=mesh.texture_path)


def flatten_region(mesh: TriMesh, region, iterations: int, step: float) -> TriMesh:
    """Umbrella Laplacian smoothing restricted to the interior of a vertex region.

    Interior means every graph neighbor is also in the region; region-boundary
    vertices stay fixed. Each iteration moves interior vertices by
    step * (neighbor mean - vertex).
    """
    region = np.asarray(sorted(set(int(i) for i in region)), dtype=np.int64)
    if region.size and (region[0] < 0 or region[-1] >= mesh.n_vertices):
        raise DimensionMismatch("region vertex out of range")
    if iterations == 0 or region.size == 0:
        return mesh
    graph = build_vertex_graph(mesh)
    in_region = np.zeros(mesh.n_vertices, dtype=bool)
    in_region[region] = True
    interior = [int(v) for v in region
                if len(graph.adjacency[v]) > 0 and in_region[graph.adjacency[v]].all()]
    if not interior:
        return mesh
    nbrs = [graph.adjacency[v] for v in interior]
    verts = mesh.vertices.copy()
    for _ in range(iterations):
        means = np.stack([verts[nb].mean(axis=0) for nb in nbrs])
        verts[interior] += step * (means - verts[interior])
    return mesh.with_vertices(verts)


def _nearest_lowest_index(tree: cKDTree, points_src: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Exact nearest neighbors with ties broken by the lowest index."""
    d, idx = tree.query(queries)
    ball = tree.query_ball_point(queries, r=d * (1 + 1e-12) + 1e-300)
    out = idx.copy()
    for i, cand in enumerate(ball):
        if len(cand) <= 1:
            continue
        cand = sorted(cand)
        dc = np.linalg.norm(points_src[cand] - queries[i], axis=1)
        best = dc.min()
        for j, dj in zip(cand, dc):
            if dj <= best + 1e-15:
                out[i] = j
                break
    return out.astype(np.int64)


def build_correspondence(source_template: np.ndarray, lite_template: np.ndarray) -> VertexCorrespondence:
    """Exact Euclidean nearest neighbors in both directions."""
    src = np.asarray(source_template, dtype=np.float64).reshape(-1, 3)
    lite = np.asarray(lite_template, dtype=np.float64).reshape(-1, 3)
    if len(src) == 0 or len(lite) == 0:
        raise DimensionMismatch("templates must be non-empty")
    src_tree = cKDTree(src)
    lite_tree = cKDTree(lite)
    return VertexCorrespondence(
        lite_to_source=_nearest_lowest_index(src_tree, src, lite),
        source_to_lite=_nearest_lowest_index(lite_tree, lite, src),
    )


def transfer_coefficients(source: ParametricModel, lite_mesh: TriMesh,
                          corr: VertexCorrespondence) -> ParametricModel:
    """Carry every coefficient matrix of the source model onto the lite topology.

    Shape/expression/pose directions and skinning weights copy the row of each
    lite vertex's nearest source vertex; the joint regressor sums the columns of
    all source vertices mapping to each lite vertex, so per-joint row sums are
    conserved. Skinning rows are renormalized against float drift.
    """
    n_lite = lite_mesh.n_vertices
    if corr.lite_to_source.shape != (n_lite,) or corr.source_to_lite.shape != (source.num_vertices,):
        raise DimensionMismatch("correspondence does not match source/lite sizes")
    rows = corr.lite_to_source
    weights = source.skin_weights[rows]
    sums = weights.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise DimensionMismatch("transferred skin weight row sums to zero")
    weights = weights / sums
    regressor = np.zeros((source.num_joints, n_lite))
    np.add.at(regressor.T, corr.source_to_lite, source.joint_regressor.T)
    return ParametricModel(
        template=lite_mesh.vertices,
        faces=lite_mesh.faces,
        shape_dirs=source.shape_dirs[rows],
        expr_dirs=source.expr_dirs[rows],
        pose_dirs=source.pose_dirs[rows],
        joint_regressor=regressor,
        skin_weights=weights,
        parents=source.parents,
        name=source.name + "_lite",
        uv_coords=lite_mesh.uv_coords,
        uv_faces=lite_mesh.uv_faces,
    )


def transfer_model(source: ParametricModel, specs: List[TransferSpec]) -> ParametricModel:
    """Run delete/fill/flatten rounds on the source template, then transfer coefficients."""
    mesh = TriMesh(vertices=source.template, faces=source.faces,
                   uv_coords=source.uv_coords, uv_faces=source.uv_faces)
    for spec in specs:
        mesh, _ = delete_vertices(mesh, spec.delete_ids)
        mesh = fill_boundary_loops(mesh)
        for region in spec.flatten_regions:
            mesh = flatten_region(mesh, region, spec.flatten_iterations, spec.flatten_step)
    corr = build_correspondence(source.template, mesh.vertices)
    return transfer_coefficients(source, mesh, corr)
