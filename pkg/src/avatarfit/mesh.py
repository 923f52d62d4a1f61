"""Indexed triangle meshes, adjacency graphs, surface sampling and nearest-point queries.

Everything here is immutable after construction; all queries are read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra
from scipy.spatial import cKDTree

from .errors import AllFacesDegenerate, DimensionMismatch


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh with optional UVs and texture reference.

    vertices: (N, 3) float64, meters. faces: (F, 3) int indices into vertices.
    uv_coords: optional (U, 2) in [0,1]^2; uv_faces: optional (F, 3) indices into uv_coords.
    """

    vertices: np.ndarray
    faces: np.ndarray
    uv_coords: Optional[np.ndarray] = None
    uv_faces: Optional[np.ndarray] = None
    texture_path: Optional[str] = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        f = np.ascontiguousarray(np.asarray(self.faces, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise DimensionMismatch(f"vertices must be (N, 3), got {v.shape}")
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise DimensionMismatch(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise DimensionMismatch("face index out of range")
        if f.size and np.any((f[:, 0] == f[:, 1]) & (f[:, 1] == f[:, 2])):
            raise DimensionMismatch("degenerate face: three identical vertex indices")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.uv_coords is not None:
            uv = np.ascontiguousarray(np.asarray(self.uv_coords, dtype=np.float64))
            if uv.ndim != 2 or uv.shape[1] != 2:
                raise DimensionMismatch(f"uv_coords must be (U, 2), got {uv.shape}")
            object.__setattr__(self, "uv_coords", uv)
        if self.uv_faces is not None:
            if self.uv_coords is None:
                raise DimensionMismatch("uv_faces given without uv_coords")
            uf = np.ascontiguousarray(np.asarray(self.uv_faces, dtype=np.int64))
            if uf.shape != f.shape:
                raise DimensionMismatch("uv_faces must match faces count")
            if uf.size and (uf.min() < 0 or uf.max() >= len(self.uv_coords)):
                raise DimensionMismatch("uv face index out of range")
            object.__setattr__(self, "uv_faces", uf)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray) -> "TriMesh":
        """Same topology/UVs, new vertex positions."""
        return TriMesh(vertices, self.faces, self.uv_coords, self.uv_faces, self.texture_path)


def face_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def face_normals(mesh: TriMesh) -> np.ndarray:
    """Unit face normals; zero vector for degenerate faces."""
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    n = np.cross(b - a, c - a)
    norm = np.linalg.norm(n, axis=1, keepdims=True)
    return n / np.where(norm > 0, norm, 1.0)


def vertex_normals(mesh: TriMesh) -> np.ndarray:
    """Area-weighted unit vertex normals."""
    v = mesh.vertices
    a, b, c = v[mesh.faces[:, 0]], v[mesh.faces[:, 1]], v[mesh.faces[:, 2]]
    fn = np.cross(b - a, c - a)  # magnitude = 2 * area
    out = np.zeros_like(v)
    for k in range(3):
        np.add.at(out, mesh.faces[:, k], fn)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return out / np.where(norm > 0, norm, 1.0)


@dataclass(frozen=True)
class VertexGraph:
    """Undirected vertex adjacency of a mesh with Euclidean edge lengths."""

    adjacency: list  # per-vertex int arrays of neighbor ids
    edge_lengths: list  # per-vertex float arrays parallel to adjacency
    n_vertices: int
    _csr: csr_matrix = field(repr=False, compare=False, default=None)

    def neighbors(self, v: int) -> np.ndarray:
        return self.adjacency[v]

    def dijkstra(self, sources, cutoff=None, unweighted=False, min_only=False):
        """Shortest-path distances from source vertex/vertices over the edge graph."""
        limit = np.inf if cutoff is None else cutoff
        return _csgraph_dijkstra(
            self._csr, directed=False, indices=sources, limit=limit,
            unweighted=unweighted, min_only=min_only, return_predecessors=min_only,
        )


def _graph_from_unique_edges(n: int, e: np.ndarray, lengths: np.ndarray) -> VertexGraph:
    both = np.concatenate([e, e[:, ::-1]], axis=0) if len(e) else e.reshape(0, 2)
    both_len = np.concatenate([lengths, lengths])
    order = np.lexsort((both[:, 1], both[:, 0])) if len(both) else np.zeros(0, dtype=int)
    both, both_len = both[order], both_len[order]
    starts = np.searchsorted(both[:, 0], np.arange(n + 1)) if len(both) else np.zeros(n + 1, dtype=int)
    adjacency = [both[starts[i]:starts[i + 1], 1] for i in range(n)]
    edge_lengths = [both_len[starts[i]:starts[i + 1]] for i in range(n)]
    csr = csr_matrix((both_len, (both[:, 0], both[:, 1])), shape=(n, n))
    return VertexGraph(adjacency=adjacency, edge_lengths=edge_lengths, n_vertices=n, _csr=csr)


def vertex_graph_from_edges(n_vertices: int, edges, lengths) -> VertexGraph:
    """Build a VertexGraph directly from an undirected edge list."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    lengths = np.asarray(lengths, dtype=np.float64).reshape(-1)
    if np.any(lengths <= 0):
        raise DimensionMismatch("edge lengths must be positive")
    return _graph_from_unique_edges(n_vertices, np.sort(e, axis=1), lengths)


def build_vertex_graph(mesh: TriMesh) -> VertexGraph:
    """One undirected edge per unique mesh edge; length = Euclidean endpoint distance."""
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]], axis=0)
    e = np.sort(e, axis=1)
    e = e[e[:, 0] != e[:, 1]]  # drop collapsed edges of partially degenerate faces
    e = np.unique(e, axis=0) if len(e) else e.reshape(0, 2)
    n = mesh.n_vertices
    lengths = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1) if len(e) else np.zeros(0)
    return _graph_from_unique_edges(n, e, lengths)


def geodesic_distances(graph: VertexGraph, source: int, cutoff: Optional[float] = None) -> dict:
    """Dijkstra shortest-path distances along mesh edges from one source vertex.

    Returns {vertex: distance} with unreachable or beyond-cutoff vertices omitted.
    """
    d = graph.dijkstra(source, cutoff=cutoff)
    reach = np.isfinite(d)
    return {int(i): float(d[i]) for i in np.nonzero(reach)[0]}


def hop_neighborhood(graph: VertexGraph, source: int, k: int) -> set:
    """Vertices reachable from source in <= k edge hops, source included."""
    seen = {int(source)}
    frontier = [int(source)]
    for _ in range(k):
        nxt = []
        for v in frontier:
            for u in graph.adjacency[v]:
                u = int(u)
                if u not in seen:
                    seen.add(u)
                    nxt.append(u)
        if not nxt:
            break
        frontier = nxt
    return seen


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray        # (n, 3)
    face_ids: np.ndarray      # (n,)
    barycentrics: np.ndarray  # (n, 3), non-negative, rows sum to 1


def sample_surface(mesh: TriMesh, n: int, seed: int) -> SurfaceSamples:
    """Draw n points area-uniformly on the mesh surface; deterministic per seed."""
    areas = face_areas(mesh)
    total = areas.sum()
    if total <= 0.0:
        raise AllFacesDegenerate("mesh has zero total surface area")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(areas) / total
    face_ids = np.searchsorted(cdf, rng.random(n))
    face_ids = np.minimum(face_ids, len(areas) - 1)
    u, w = rng.random(n), rng.random(n)
    flip = u + w > 1.0
    u[flip], w[flip] = 1.0 - u[flip], 1.0 - w[flip]
    bary = np.stack([1.0 - u - w, u, w], axis=1)
    tri = mesh.vertices[mesh.faces[face_ids]]
    points = np.einsum("nk,nkd->nd", bary, tri)
    return SurfaceSamples(points=points, face_ids=face_ids, barycentrics=bary)


def closest_points_on_triangles(triangles: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Closest point in each triangle to each query, one pair per row.

    triangles: (M, 3, 3); queries: (M, 3). Implements the region-classification
    method of ClosestPtPointTriangle (Ericson, Real-Time Collision Detection).
    """
    tol = np.finfo(np.float64).tiny
    a, b, c = triangles[:, 0, :], triangles[:, 1, :], triangles[:, 2, :]
    result = np.zeros_like(queries)
    remain = np.ones(len(queries), dtype=bool)

    ab, ac, ap = b - a, c - a, queries - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    is_a = (d1 < tol) & (d2 < tol)
    result[is_a] = a[is_a]
    remain &= ~is_a

    bp = queries - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    is_b = (d3 > -tol) & (d4 <= d3) & remain
    result[is_b] = b[is_b]
    remain &= ~is_b

    vc = d1 * d4 - d3 * d2
    is_ab = (vc < tol) & (d1 > -tol) & (d3 < tol) & remain
    if np.any(is_ab):
        v = (d1[is_ab] / (d1[is_ab] - d3[is_ab]))[:, None]
        result[is_ab] = a[is_ab] + v * ab[is_ab]
        remain &= ~is_ab

    cp = queries - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    is_c = (d6 > -tol) & (d5 <= d6) & remain
    result[is_c] = c[is_c]
    remain &= ~is_c

    vb = d5 * d2 - d1 * d6
    is_ac = (vb < tol) & (d2 > -tol) & (d6 < tol) & remain
    if np.any(is_ac):
        w = (d2[is_ac] / (d2[is_ac] - d6[is_ac]))[:, None]
        result[is_ac] = a[is_ac] + w * ac[is_ac]
        remain &= ~is_ac

    va = d3 * d6 - d5 * d4
    is_bc = (va < tol) & ((d4 - d3) > -tol) & ((d5 - d6) > -tol) & remain
    if np.any(is_bc):
        d43 = d4[is_bc] - d3[is_bc]
        w = (d43 / (d43 + d5[is_bc] - d6[is_bc]))[:, None]
        result[is_bc] = b[is_bc] + w * (c[is_bc] - b[is_bc])
        remain &= ~is_bc

    if np.any(remain):
        denom = va[remain] + vb[remain] + vc[remain]
        denom = np.where(np.abs(denom) < tol, 1.0, denom)
        v = (vb[remain] / denom)[:, None]
        w = (vc[remain] / denom)[:, None]
        result[remain] = a[remain] + ab[remain] * v + ac[remain] * w
    return result


class SurfaceIndex:
    """Exact accelerated nearest-point-on-surface queries against one mesh.

    A KD-tree over face centroids proposes candidates; an exact point-to-triangle
    pass over every face whose bounding sphere can beat the current best keeps
    results identical to a brute-force scan.
    """

    def __init__(self, mesh: TriMesh):
        if mesh.n_faces == 0:
            raise AllFacesDegenerate("mesh has no faces")
        self.mesh = mesh
        self.triangles = mesh.vertices[mesh.faces]
        self.centroids = self.triangles.mean(axis=1)
        self.radii = np.linalg.norm(self.triangles - self.centroids[:, None, :], axis=2).max(axis=1)
        self.max_radius = float(self.radii.max())
        self.tree = cKDTree(self.centroids)
        self._face_normals = None

    def face_normal(self, ids):
        if self._face_normals is None:
            self._face_normals = face_normals(self.mesh)
        return self._face_normals[ids]

    def query(self, queries: np.ndarray):
        """Exact closest surface points for a batch of queries.

        Returns (points (Q,3), face_ids (Q,), distances (Q,)).
        """
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        k = min(8, len(self.centroids))
        _, cand = self.tree.query(q, k=k)
        cand = cand.reshape(len(q), k)
        flat_pts = closest_points_on_triangles(
            self.triangles[cand.ravel()], np.repeat(q, k, axis=0))
        d_ub = np.linalg.norm(flat_pts - np.repeat(q, k, axis=0), axis=1).reshape(len(q), k).min(axis=1)

        # every face that could beat d_ub has centroid within d_ub + max_radius
        radius = d_ub + self.max_radius + 1e-12
        lists = self.tree.query_ball_point(q, r=radius)
        counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(q))
        flat = np.fromiter((i for l in lists for i in sorted(l)), dtype=np.int64, count=int(counts.sum()))
        rep_q = np.repeat(q, counts, axis=0)
        pts = closest_points_on_triangles(self.triangles[flat], rep_q)
        d = np.linalg.norm(pts - rep_q, axis=1)

        offsets = np.concatenate([[0], np.cumsum(counts)])
        best_pts = np.empty_like(q)
        best_ids = np.empty(len(q), dtype=np.int64)
        best_d = np.empty(len(q))
        for i in range(len(q)):
            s, e = offsets[i], offsets[i + 1]
            j = s + int(np.argmin(d[s:e]))
            best_pts[i], best_ids[i], best_d[i] = pts[j], flat[j], d[j]
        return best_pts, best_ids, best_d


def nearest_point_on_surface(mesh: TriMesh, query) -> tuple:
    """Exact closest point on the mesh surface to a single query point.

    Returns (point, face_id, distance); identical to a brute-force scan of all faces.
    """
    idx = SurfaceIndex(mesh)
    pts, ids, d = idx.query(np.asarray(query, dtype=np.float64).reshape(1, 3))
    return pts[0], int(ids[0]), float(d[0])
