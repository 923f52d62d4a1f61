"""Two-stage non-rigid registration of a posed body model onto a scan.

Stage 1 warps the posed mesh with an embedded deformation graph: sparse nodes
sampled on the template by connectivity, compact-support geodesic weights, and
per-node affine transforms solved by damped Gauss-Newton against nearest-point
correspondences with soft orthogonality and node-to-node smoothness penalties.
Stage 2 solves one sparse linear system for per-vertex shifts regularized by
the umbrella Laplacian of the Stage-1 mesh.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix, diags
from scipy.sparse.linalg import splu

from .bodymodel import BodyParams, ParametricModel, lbs_forward, lbs_inverse, pose_feature, shaped_template
from .errors import (
    Diverged,
    IsolatedVertex,
    NoCorrespondences,
    SingularSystem,
)
from .mesh import SurfaceIndex, TriMesh, VertexGraph, build_vertex_graph, hop_neighborhood, vertex_normals


@dataclass(frozen=True)
class Stage1Config:
    max_gauss_newton_iters: int = 20
    data_weight: float = 1.0
    rigidity_weight: float = 10.0
    smooth_weight: float = 1.0
    correspondence_max_dist: float = 0.05   # meters
    normal_angle_max: float = 60.0          # degrees
    point_to_plane: bool = False


@dataclass(frozen=True)
class Stage2Config:
    laplacian_weight: float = 1.0
    correspondence_max_dist: float = 0.05
    normal_angle_max: float = 60.0


@dataclass(frozen=True)
class FitConfig:
    k: int = 2
    alpha: float = 1.5
    seed: int = 0
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)

    def __post_init__(self):
        if self.alpha <= 0 or self.k < 1:
            raise ValueError("alpha must be > 0 and k >= 1")
        s1 = self.stage1
        if min(s1.data_weight, s1.rigidity_weight, s1.smooth_weight) < 0 \
                or self.stage2.laplacian_weight < 0:
            raise ValueError("energy weights must be >= 0")


@dataclass(frozen=True)
class NodeTransform:
    rotation: np.ndarray     # (3, 3), near-orthonormal after a converged solve
    translation: np.ndarray  # (3,)


@dataclass(frozen=True)
class DeformationGraph:
    """Embedded nodes with compact-support vertex weights and smoothness edges."""

    node_vertex_ids: np.ndarray   # (M,) template vertex indices
    node_positions: np.ndarray    # (M, 3) current node anchors g_i
    base_radii: np.ndarray        # (M,)
    smooth_edges: np.ndarray      # (E, 2) node index pairs, i < j
    weight_rows: np.ndarray       # COO: vertex index per entry, row-sorted
    weight_nodes: np.ndarray      # COO: node index per entry
    weight_values: np.ndarray     # COO: normalized weight per entry
    n_vertices: int
    rescued_vertices: np.ndarray  # vertices attached to their hop-nearest node

    @property
    def n_nodes(self) -> int:
        return len(self.node_vertex_ids)

    def vertex_weight_lists(self) -> List[List[Tuple[int, float]]]:
        out = [[] for _ in range(self.n_vertices)]
        for v, i, w in zip(self.weight_rows, self.weight_nodes, self.weight_values):
            out[int(v)].append((int(i), float(w)))
        return out

    def with_node_positions(self, positions: np.ndarray) -> "DeformationGraph":
        positions = np.asarray(positions, dtype=np.float64).reshape(self.n_nodes, 3)
        return replace(self, node_positions=positions)

    def warp(self, vertices: np.ndarray, rotations: np.ndarray,
             translations: np.ndarray) -> np.ndarray:
        """Blend per-node affine transforms: sum_i w_i (R_i (v - g_i) + g_i + t_i)."""
        g = self.node_positions[self.weight_nodes]
        q = vertices[self.weight_rows] - g
        moved = np.einsum("mij,mj->mi", rotations[self.weight_nodes], q) \
            + g + translations[self.weight_nodes]
        out = np.zeros_like(vertices)
        np.add.at(out, self.weight_rows, self.weight_values[:, None] * moved)
        return out


def sample_nodes(graph: VertexGraph, k: int, seed: int) -> np.ndarray:
    """Poisson-disk style node selection by hop distance.

    Draw a random candidate, emit it, remove its k-hop neighborhood, repeat until
    no candidates remain. Guarantees pairwise hop distance >= k+1 between nodes
    and every vertex within k hops of some node.
    """
    rng = np.random.default_rng(seed)
    alive = np.ones(graph.n_vertices, dtype=bool)
    nodes = []
    remaining = graph.n_vertices
    while remaining:
        candidates = np.flatnonzero(alive)
        v = int(candidates[rng.integers(len(candidates))])
        nodes.append(v)
        for u in hop_neighborhood(graph, v, k):
            if alive[u]:
                alive[u] = False
                remaining -= 1
    return np.asarray(sorted(nodes), dtype=np.int64)


def base_radius(graph: VertexGraph, node_id: int, k: int) -> float:
    """Mean geodesic distance from the node to its k-hop neighborhood (itself excluded)."""
    hood = hop_neighborhood(graph, node_id, k) - {int(node_id)}
    if not hood:
        raise IsolatedVertex(f"vertex {node_id} has no neighbors within {k} hops")
    dist = graph.dijkstra(int(node_id))
    return float(np.mean([dist[u] for u in sorted(hood)]))


def node_weight(d, r, alpha: float):
    """Compact-support falloff: max(0, (1 - d^2/(alpha r)^2))^3."""
    d = np.asarray(d, dtype=np.float64)
    cutoff = alpha * r
    return np.maximum(0.0, 1.0 - (d * d) / (cutoff * cutoff)) ** 3


def build_graph(template_mesh: TriMesh, config: FitConfig) -> DeformationGraph:
    """Sample nodes, compute base radii, assemble normalized vertex weights and
    smoothness edges (pairs closer than twice the larger base radius)."""
    graph = build_vertex_graph(template_mesh)
    node_ids = sample_nodes(graph, config.k, config.seed)
    m = len(node_ids)
    radii = np.array([base_radius(graph, int(v), config.k) for v in node_ids]) \
        if graph.n_vertices > 1 else np.array([0.0])
    if graph.n_vertices == 1:
        radii = np.array([1.0])  # degenerate single-vertex mesh

    reach = max(config.alpha, 2.0)
    n = graph.n_vertices
    rows_v, rows_n, rows_w = [], [], []
    node_dists = []  # per node: dict of reachable vertices within its cutoff
    chunk = 256
    for c0 in range(0, m, chunk):
        ids = node_ids[c0:c0 + chunk]
        cutoffs = reach * radii[c0:c0 + chunk]
        dmat = graph.dijkstra(ids, cutoff=float(cutoffs.max()))
        dmat = np.atleast_2d(dmat)
        for li, ni in enumerate(range(c0, min(c0 + chunk, m))):
            d = dmat[li]
            within = np.flatnonzero(d <= cutoffs[ni - c0])
            node_dists.append({int(u): float(d[u]) for u in within})
            w = node_weight(d[within], radii[ni], config.alpha)
            nz = w > 0.0
            rows_v.append(within[nz])
            rows_n.append(np.full(int(nz.sum()), ni, dtype=np.int64))
            rows_w.append(w[nz])

    wv = np.concatenate(rows_v) if rows_v else np.zeros(0, dtype=np.int64)
    wn = np.concatenate(rows_n) if rows_n else np.zeros(0, dtype=np.int64)
    ww = np.concatenate(rows_w) if rows_w else np.zeros(0)

    totals = np.zeros(n)
    np.add.at(totals, wv, ww)
    uncovered = np.flatnonzero(totals == 0.0)
    if len(uncovered):
        # attach each uncovered vertex to its hop-nearest node with weight 1
        _, _, sources = graph.dijkstra(node_ids, unweighted=True, min_only=True)
        src_node = np.searchsorted(node_ids, sources[uncovered])
        wv = np.concatenate([wv, uncovered])
        wn = np.concatenate([wn, src_node])
        ww = np.concatenate([ww, np.ones(len(uncovered))])
        totals[uncovered] = 1.0

    order = np.lexsort((wn, wv))
    wv, wn, ww = wv[order], wn[order], ww[order]
    ww = ww / totals[wv]

    edges = []
    for i in range(m):
        di = node_dists[i]
        for j in range(i + 1, m):
            gj = int(node_ids[j])
            d_ij = di.get(gj, np.inf)
            d_ji = node_dists[j].get(int(node_ids[i]), np.inf)
            d = min(d_ij, d_ji)
            if d < 2.0 * max(radii[i], radii[j]):
                edges.append((i, j))
    smooth_edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)

    return DeformationGraph(
        node_vertex_ids=node_ids,
        node_positions=template_mesh.vertices[node_ids],
        base_radii=radii,
        smooth_edges=smooth_edges,
        weight_rows=wv, weight_nodes=wn, weight_values=ww,
        n_vertices=n,
        rescued_vertices=uncovered,
    )


# ---------------------------------------------------------------------------
# Stage 1: Gauss-Newton over per-node affine transforms


class _Stage1System:
    """Residuals and sparse Jacobian of the embedded-deformation energy.

    Unknowns per node: 9 rotation entries (row-major) then 3 translations.
    The smoothness term is evaluated in both edge directions.
    """

    def __init__(self, source_vertices: np.ndarray, graph: DeformationGraph,
                 cfg: Stage1Config):
        self.p = source_vertices
        self.graph = graph
        self.cfg = cfg
        self.m = graph.n_nodes
        self.sqrt_wd = np.sqrt(cfg.data_weight)
        self.sqrt_wr = np.sqrt(cfg.rigidity_weight)
        self.sqrt_ws = np.sqrt(cfg.smooth_weight)

    def warp(self, rot, trans):
        return self.graph.warp(self.p, rot, trans)

    def residuals(self, rot, trans, mask, targets, normals=None):
        g = self.graph
        parts = []
        warped = self.warp(rot, trans)
        diff = warped[mask] - targets
        if self.cfg.point_to_plane and normals is not None:
            parts.append(self.sqrt_wd * np.einsum("ij,ij->i", diff, normals))
        else:
            parts.append(self.sqrt_wd * diff.ravel())
        ortho = np.einsum("mji,mjk->mik", rot, rot) - np.eye(3)
        parts.append(self.sqrt_wr * ortho.reshape(-1))
        if len(g.smooth_edges):
            gi = g.node_positions[g.smooth_edges[:, 0]]
            gj = g.node_positions[g.smooth_edges[:, 1]]
            ti = trans[g.smooth_edges[:, 0]]
            tj = trans[g.smooth_edges[:, 1]]
            ri = rot[g.smooth_edges[:, 0]]
            rj = rot[g.smooth_edges[:, 1]]
            fwd = np.einsum("eij,ej->ei", ri, gj - gi) + gi + ti - gj - tj
            bwd = np.einsum("eij,ej->ei", rj, gi - gj) + gj + tj - gi - ti
            parts.append(self.sqrt_ws * fwd.ravel())
            parts.append(self.sqrt_ws * bwd.ravel())
        return np.concatenate(parts)

    def jacobian(self, rot, mask, normals=None):
        g = self.graph
        m = self.m
        rows, cols, vals = [], [], []
        keep = mask[g.weight_rows]
        wv = g.weight_rows[keep]
        wn = g.weight_nodes[keep]
        ww = g.weight_values[keep]
        row_of_vertex = np.cumsum(mask) - 1  # masked vertex -> dense row block
        q = self.p[wv] - g.node_positions[wn]

        p2p = self.cfg.point_to_plane and normals is not None
        if p2p:
            nrm = normals[row_of_vertex[wv]]
            base = row_of_vertex[wv]
            for a in range(3):       # component of the warp
                for b in range(3):   # rotation column
                    rows.append(base)
                    cols.append(12 * wn + 3 * a + b)
                    vals.append(self.sqrt_wd * ww * nrm[:, a] * q[:, b])
                rows.append(base)
                cols.append(12 * wn + 9 + a)
                vals.append(self.sqrt_wd * ww * nrm[:, a])
            n_data_rows = int(mask.sum())
        else:
            base = 3 * row_of_vertex[wv]
            for a in range(3):
                for b in range(3):
                    rows.append(base + a)
                    cols.append(12 * wn + 3 * a + b)
                    vals.append(self.sqrt_wd * ww * q[:, b])
                rows.append(base + a)
                cols.append(12 * wn + 9 + a)
                vals.append(self.sqrt_wd * ww)
            n_data_rows = 3 * int(mask.sum())

        # rigidity: d(R^T R - I)[a,b] / dR[c,d] = delta_da R[c,b] + delta_db R[c,a]
        node_idx = np.arange(m)
        for a in range(3):
            for b in range(3):
                r = n_data_rows + 9 * node_idx + 3 * a + b
                for c in range(3):
                    rows.append(r)
                    cols.append(12 * node_idx + 3 * c + a)
                    vals.append(self.sqrt_wr * rot[:, c, b])
                    rows.append(r)
                    cols.append(12 * node_idx + 3 * c + b)
                    vals.append(self.sqrt_wr * rot[:, c, a])
        n_rig_rows = 9 * m

        n_smooth_rows = 0
        if len(g.smooth_edges):
            e_i = g.smooth_edges[:, 0]
            e_j = g.smooth_edges[:, 1]
            base = n_data_rows + n_rig_rows
            ne = len(g.smooth_edges)
            for direction, (src, dst) in enumerate(((e_i, e_j), (e_j, e_i))):
                e_vec = g.node_positions[dst] - g.node_positions[src]
                row0 = base + 3 * ne * direction + 3 * np.arange(ne)
                for a in range(3):
                    for b in range(3):
                        rows.append(row0 + a)
                        cols.append(12 * src + 3 * a + b)
                        vals.append(self.sqrt_ws * e_vec[:, b])
                    rows.append(row0 + a)
                    cols.append(12 * src + 9 + a)
                    vals.append(np.full(ne, self.sqrt_ws))
                    rows.append(row0 + a)
                    cols.append(12 * dst + 9 + a)
                    vals.append(np.full(ne, -self.sqrt_ws))
            n_smooth_rows = 6 * ne

        n_rows = n_data_rows + n_rig_rows + n_smooth_rows
        rows = np.concatenate([np.asarray(r).ravel() for r in rows])
        cols = np.concatenate([np.asarray(c).ravel() for c in cols])
        vals = np.concatenate([np.asarray(v, dtype=np.float64).ravel() for v in vals])
        return coo_matrix((vals, (rows, cols)), shape=(n_rows, 12 * m)).tocsr()


def _prune_correspondences(warped_mesh: TriMesh, scan_index: SurfaceIndex,
                           max_dist: float, normal_angle_max: float):
    """Nearest scan points for every vertex plus the accept mask."""
    pts, fids, dist = scan_index.query(warped_mesh.vertices)
    mask = dist <= max_dist
    if normal_angle_max < 180.0:
        vn = vertex_normals(warped_mesh)
        sn = scan_index.face_normal(fids)
        cos = np.einsum("ij,ij->i", vn, sn)
        mask &= cos >= np.cos(np.deg2rad(normal_angle_max))
    return pts, fids, dist, mask


def solve_stage1(posed_mesh: TriMesh, graph: DeformationGraph, scan: TriMesh,
                 config: FitConfig):
    """Damped Gauss-Newton on the embedded-deformation energy with per-iteration
    correspondence refresh. Returns (warped mesh, node transforms, report)."""
    cfg = config.stage1
    sys_ = _Stage1System(posed_mesh.vertices, graph, cfg)
    scan_index = SurfaceIndex(scan)
    m = graph.n_nodes
    rot = np.tile(np.eye(3), (m, 1, 1))
    trans = np.zeros((m, 3))
    lam = 1e-6
    trace = []
    converged = False
    for it in range(cfg.max_gauss_newton_iters):
        warped_mesh = posed_mesh.with_vertices(sys_.warp(rot, trans))
        pts, fids, _, mask = _prune_correspondences(
            warped_mesh, scan_index, cfg.correspondence_max_dist, cfg.normal_angle_max)
        if not mask.any():
            raise NoCorrespondences("every correspondence was pruned")
        targets = pts[mask]
        normals = scan_index.face_normal(fids[mask]) if cfg.point_to_plane else None

        r = sys_.residuals(rot, trans, mask, targets, normals)
        energy = float(r @ r)
        jac = sys_.jacobian(rot, mask, normals)
        h = (jac.T @ jac).tocsc()
        gvec = jac.T @ r
        diag = h.diagonal()
        floor = max(diag.max(), 1.0) * 1e-14
        scaling = np.maximum(diag, floor)

        accepted = False
        for retry in range(4):  # first try plus 3 damped retries
            h_damped = (h + diags(lam * scaling)).tocsc()
            try:
                delta = splu(h_damped).solve(-gvec)
            except RuntimeError:
                lam *= 10.0
                continue
            rot_new = (rot.reshape(m, 9) + delta.reshape(m, 12)[:, :9]).reshape(m, 3, 3)
            trans_new = trans + delta.reshape(m, 12)[:, 9:]
            r_new = sys_.residuals(rot_new, trans_new, mask, targets, normals)
            e_new = float(r_new @ r_new)
            if e_new <= energy * (1.0 + 1e-12):
                rot, trans = rot_new, trans_new
                lam = max(lam / 3.0, 1e-9)
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            if energy < 1e-18 or float(np.abs(gvec).max()) < 1e-12:
                converged = True
                trace.append({"iter": it, "energy_before": energy, "energy_after": energy,
                              "n_correspondences": int(mask.sum()), "damping": lam})
                break
            raise Diverged(f"energy increased for 3 consecutive damped retries at iteration {it}")

        trace.append({"iter": it, "energy_before": energy, "energy_after": e_new,
                      "n_correspondences": int(mask.sum()), "damping": lam})
        if energy - e_new <= 1e-12 * max(energy, 1e-30) or e_new < 1e-20:
            converged = True
            break

    warped_mesh = posed_mesh.with_vertices(sys_.warp(rot, trans))
    ortho = np.einsum("mji,mjk->mik", rot, rot) - np.eye(3)
    rigidity = np.linalg.norm(ortho.reshape(m, 9), axis=1)
    transforms = [NodeTransform(rotation=rot[i].copy(), translation=trans[i].copy())
                  for i in range(m)]
    report = {
        "converged": bool(converged),
        "iterations": len(trace),
        "energy_trace": trace,
        "final_energy": trace[-1]["energy_after"] if trace else None,
        "max_rigidity_residual": float(rigidity.max()) if m else 0.0,
        "n_nodes": m,
        "n_smooth_edges": int(len(graph.smooth_edges)),
    }
    return warped_mesh, transforms, report


# ---------------------------------------------------------------------------
# Stage 2: Laplacian-regularized vertex shifts


def umbrella_laplacian(mesh: TriMesh) -> csr_matrix:
    """Row-normalized graph Laplacian: L v = v - mean(neighbors)."""
    graph = build_vertex_graph(mesh)
    rows, cols, vals = [], [], []
    for v in range(graph.n_vertices):
        nbrs = graph.adjacency[v]
        if len(nbrs) == 0:
            continue
        rows.append(np.full(len(nbrs) + 1, v))
        cols.append(np.concatenate([[v], nbrs]))
        vals.append(np.concatenate([[1.0], np.full(len(nbrs), -1.0 / len(nbrs))]))
    if not rows:
        return csr_matrix((mesh.n_vertices, mesh.n_vertices))
    return coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()


def solve_stage2(stage1_mesh: TriMesh, scan: TriMesh, config: FitConfig):
    """Linear least squares for per-vertex shifts d minimizing
    sum_v m_v ||v + d_v - c_v||^2 + lambda ||L d||^2. Returns (mesh, report)."""
    cfg = config.stage2
    scan_index = SurfaceIndex(scan)
    pts, _, dist, mask = _prune_correspondences(
        stage1_mesh, scan_index, cfg.correspondence_max_dist, cfg.normal_angle_max)
    lam = cfg.laplacian_weight
    n = stage1_mesh.n_vertices
    if lam == 0.0 and not mask.all():
        raise SingularSystem(
            f"lambda = 0 leaves {int((~mask).sum())} unmatched vertices unconstrained")
    rhs = np.where(mask[:, None], pts - stage1_mesh.vertices, 0.0)
    if lam == 0.0:
        d = rhs
        residual = 0.0
    else:
        lap = umbrella_laplacian(stage1_mesh)
        a_mat = (csr_matrix((mask.astype(np.float64), (np.arange(n), np.arange(n))),
                            shape=(n, n)) + lam * (lap.T @ lap)).tocsc()
        try:
            lu = splu(a_mat)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        d = np.stack([lu.solve(rhs[:, c]) for c in range(3)], axis=1)
        num = np.linalg.norm(a_mat @ d - rhs)
        residual = float(num / max(np.linalg.norm(rhs), 1e-30))
        if residual > 1e-8:
            raise SingularSystem(f"normal-equation residual {residual:.3e} exceeds 1e-8")
    fitted = stage1_mesh.with_vertices(stage1_mesh.vertices + d)
    report = {
        "n_matched": int(mask.sum()),
        "n_pruned": int((~mask).sum()),
        "laplacian_weight": lam,
        "normal_eq_residual": residual,
        "mean_correspondence_dist": float(dist[mask].mean()) if mask.any() else None,
        "mean_shift": float(np.linalg.norm(d, axis=1).mean()),
    }
    return fitted, report


# ---------------------------------------------------------------------------
# full pipeline


@dataclass(frozen=True)
class FitResult:
    fitted: TriMesh
    stage1_mesh: TriMesh
    posed: TriMesh
    displacement: np.ndarray  # recovered T-pose displacement field
    transforms: List[NodeTransform]
    report: dict


def fit(model: ParametricModel, params: BodyParams, scan: TriMesh,
        config: Optional[FitConfig] = None) -> FitResult:
    """Pose the model, warp it onto the scan (Stage 1), solve vertex shifts
    (Stage 2), and recover the T-pose displacement field by inverse skinning."""
    config = config or FitConfig()
    posed = lbs_forward(model, params.without_displacement())
    posed_mesh = TriMesh(vertices=posed.vertices, faces=model.faces,
                         uv_coords=model.uv_coords, uv_faces=model.uv_faces)
    template_mesh = TriMesh(vertices=model.template, faces=model.faces)
    graph = build_graph(template_mesh, config)
    graph = graph.with_node_positions(posed.vertices[graph.node_vertex_ids])
    stage1_mesh, transforms, report1 = solve_stage1(posed_mesh, graph, scan, config)
    fitted, report2 = solve_stage2(stage1_mesh, scan, config)

    rest = lbs_inverse(model, fitted.vertices, params)
    t_p_no_d = shaped_template(model, params.beta, params.psi)
    if model.num_joints > 1 and model.pose_dirs.shape[2]:
        t_p_no_d = t_p_no_d + model.pose_dirs @ pose_feature(params.theta)
    displacement = rest - t_p_no_d

    report = {
        "stage1": report1,
        "stage2": report2,
        "graph": {
            "n_nodes": graph.n_nodes,
            "n_smooth_edges": int(len(graph.smooth_edges)),
            "n_rescued_vertices": int(len(graph.rescued_vertices)),
        },
    }
    return FitResult(fitted=fitted, stage1_mesh=stage1_mesh, posed=posed_mesh,
                     displacement=displacement, transforms=transforms, report=report)
