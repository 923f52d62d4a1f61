"""Multi-view 3D keypoint estimation: pinhole projection, DLT, and adaptive RANSAC.

Convention: x_cam = R @ x_world + t, projection P = K @ [R | t], pixel = P x / depth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .errors import (
    AvatarFitError,
    BehindCamera,
    DegenerateGeometry,
    DimensionMismatch,
    InsufficientViews,
    NoConsensus,
)


@dataclass(frozen=True)
class Camera:
    id: str
    K: np.ndarray
    R: np.ndarray
    t: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        if K.shape != (3, 3) or R.shape != (3, 3) or t.shape != (3,):
            raise DimensionMismatch("camera K must be 3x3, R 3x3, t a 3-vector")
        if abs(K[1, 0]) > 1e-12 or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12 \
                or K[0, 0] <= 0 or K[1, 1] <= 0 or abs(K[2, 2] - 1.0) > 1e-9:
            raise AvatarFitError(f"camera {self.id}: K must be upper-triangular with positive diagonal")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-9:
            raise AvatarFitError(f"camera {self.id}: R is not orthonormal")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @property
    def P(self) -> np.ndarray:
        """3x4 projection matrix K [R | t]."""
        return self.K @ np.concatenate([self.R, self.t[:, None]], axis=1)


@dataclass(frozen=True)
class CameraSet:
    cameras: List[Camera]

    def __post_init__(self):
        ids = [c.id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise AvatarFitError("camera ids must be unique")

    def __len__(self):
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, i):
        return self.cameras[i]

    def by_id(self, cam_id: str) -> Camera:
        for c in self.cameras:
            if c.id == cam_id:
                return c
        raise KeyError(cam_id)

    @property
    def ids(self) -> List[str]:
        return [c.id for c in self.cameras]


@dataclass
class Frame2D:
    frame: int
    views: Dict[str, np.ndarray]  # camera id -> (J, 3) rows of [x_px, y_px, conf]


@dataclass
class Keypoints2D:
    frames: List[Frame2D]

    @property
    def num_joints(self) -> int:
        for fr in self.frames:
            for obs in fr.views.values():
                return obs.shape[0]
        return 0


@dataclass
class Frame3D:
    frame: int
    points: np.ndarray                  # (J, 3), nan rows for invalid joints
    inliers: List[Optional[List[str]]]  # per joint inlier camera ids, None if invalid
    errors_px: np.ndarray               # (J,) mean reprojection error, nan if invalid
    reprojections: Dict[str, np.ndarray] = field(default_factory=dict)  # id -> (J, 2)


@dataclass
class Keypoints3D:
    frames: List[Frame3D]


@dataclass(frozen=True)
class RansacParams:
    tau: float = 8.0          # reprojection threshold, px
    p: float = 0.99           # RANSAC confidence
    v: int = 2                # views per minimal sample
    max_iters_init: int = 10000
    min_error_init: float = 1000.0
    conf_min: float = 0.3     # 2D confidence gate on candidate views
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise AvatarFitError("RANSAC confidence p must be in (0, 1)")
        if self.v < 2:
            raise AvatarFitError("sample view count v must be >= 2")
        if self.tau <= 0:
            raise AvatarFitError("reprojection threshold tau must be positive")


def project(P: np.ndarray, X) -> np.ndarray:
    """Perspective projection of a world point; raises BehindCamera for depth <= 0."""
    X = np.asarray(X, dtype=np.float64).reshape(3)
    h = P @ np.append(X, 1.0)
    if h[2] <= 0.0:
        raise BehindCamera(f"point has non-positive depth {h[2]:.6g}")
    return h[:2] / h[2]


def project_points(P: np.ndarray, X: np.ndarray):
    """Batch projection. Returns (pixels (M,2), depths (M,)); no behind-camera check."""
    X = np.asarray(X, dtype=np.float64).reshape(-1, 3)
    h = X @ P[:, :3].T + P[:, 3]
    depth = h[:, 2]
    safe = np.where(depth != 0.0, depth, 1.0)
    return h[:, :2] / safe[:, None], depth


def triangulate_dlt(observations) -> np.ndarray:
    """Homogeneous DLT from >= 2 (P, (x, y)) observations.

    Stacks rows (x P3 - P1, y P3 - P2), unit-normalizes them, and takes the right
    singular vector of the smallest singular value. Exact for noiseless data.
    """
    if len(observations) < 2:
        raise DegenerateGeometry("need at least 2 observations")
    rows = []
    for P, xy in observations:
        x, y = float(xy[0]), float(xy[1])
        rows.append(x * P[2] - P[0])
        rows.append(y * P[2] - P[1])
    A = np.asarray(rows)
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    A = A / np.where(norms > 0, norms, 1.0)
    _, s, vt = np.linalg.svd(A)
    # rank < 3 (coincident views) leaves a whole family of solutions
    if s[-2] <= 1e-12 * max(s[0], 1.0) or s[-1] / s[-2] > 0.99:
        raise DegenerateGeometry(
            f"ambiguous triangulation: smallest singular values {s[-1]:.3e}, {s[-2]:.3e}")
    h = vt[-1]
    if abs(h[3]) < 1e-12 * np.linalg.norm(h[:3]):
        raise DegenerateGeometry("triangulated point at infinity")
    return h[:3] / h[3]


def adaptive_iterations(p: float, inlier_ratio: float, v: int) -> int:
    """ceil(log(1-p) / log(1 - ratio^v)); a full consensus clamps to 1."""
    if inlier_ratio >= 1.0:
        return 1
    denom = math.log1p(-inlier_ratio ** v)
    return max(1, math.ceil(math.log1p(-p) / denom))


def _reprojection_distances(point: np.ndarray, proj_mats: np.ndarray, obs_xy: np.ndarray) -> np.ndarray:
    """Euclidean pixel distance of one 3D point per view; inf behind the camera."""
    h = proj_mats @ np.append(point, 1.0)
    depth = h[:, 2]
    safe = np.where(depth > 0, depth, 1.0)
    px = h[:, :2] / safe[:, None]
    d = np.linalg.norm(px - obs_xy, axis=1)
    return np.where(depth > 0, d, np.inf)


def ransac_triangulate_joint(obs2d: np.ndarray, cameras: CameraSet,
                             params: RansacParams, rng=None):
    """Robust single-joint triangulation with adaptive iteration count.

    obs2d rows [x, y, conf] aligned with the camera order. Views below the
    confidence gate are not candidates. Repeatedly samples v candidate views,
    triangulates, collects views reprojecting within tau, re-triangulates over
    the consensus when it exceeds 3 views, and keeps the estimate with the
    lowest mean inlier reprojection error, shrinking the iteration budget from
    the observed inlier ratio. Returns (point, inlier camera ids, mean error px).
    """
    obs2d = np.asarray(obs2d, dtype=np.float64).reshape(len(cameras), 3)
    if rng is None:
        rng = np.random.default_rng(params.seed)
    conf_ok = (obs2d[:, 2] >= params.conf_min) & np.all(np.isfinite(obs2d[:, :2]), axis=1)
    candidates = np.nonzero(conf_ok)[0]
    if len(candidates) < params.v:
        raise InsufficientViews(
            f"{len(candidates)} confident views, need at least {params.v}")
    proj = np.stack([cameras[int(i)].P for i in candidates])
    xy = obs2d[candidates, :2]
    n_cand = len(candidates)

    budget = params.max_iters_init
    best_err = params.min_error_init
    best = None
    i = 0
    while i <= budget:
        pick = rng.choice(n_cand, size=params.v, replace=False)
        try:
            point = triangulate_dlt([(proj[j], xy[j]) for j in pick])
        except DegenerateGeometry:
            i += 1
            continue
        dist = _reprojection_distances(point, proj, xy)
        consensus = np.nonzero(dist < params.tau)[0]
        if len(consensus) > 3:
            try:
                refined = triangulate_dlt([(proj[j], xy[j]) for j in consensus])
            except DegenerateGeometry:
                i += 1
                continue
            mean_err = float(_reprojection_distances(refined, proj, xy)[consensus].mean())
            if mean_err < best_err:
                best_err = mean_err
                best = (refined, consensus)
                budget = adaptive_iterations(params.p, len(consensus) / n_cand, params.v)
        i += 1
    if best is None:
        raise NoConsensus("no sample ever reached more than 3 consensus views")

    # report a self-consistent inlier set for the returned point
    point, consensus = best
    dist = _reprojection_distances(point, proj, xy)
    final = np.nonzero(dist < params.tau)[0]
    if len(final) <= 3:
        final = consensus
    inlier_ids = [cameras[int(candidates[j])].id for j in final]
    return point, inlier_ids, float(dist[final].mean())


def triangulate_sequence(k2d: Keypoints2D, cameras: CameraSet,
                         params: RansacParams) -> Keypoints3D:
    """Per-frame, per-joint RANSAC triangulation; failed joints become flagged nulls.

    RNG streams are derived from (seed, frame, joint) so serial and parallel
    runs produce identical output.
    """
    out = []
    for fr in k2d.frames:
        out.append(triangulate_frame(fr, cameras, params))
    return Keypoints3D(frames=out)


def triangulate_frame(fr: Frame2D, cameras: CameraSet, params: RansacParams) -> Frame3D:
    cam_ids = cameras.ids
    present = [cid for cid in cam_ids if cid in fr.views]
    if not present:
        return Frame3D(frame=fr.frame, points=np.zeros((0, 3)), inliers=[],
                       errors_px=np.zeros(0), reprojections={})
    n_joints = fr.views[present[0]].shape[0]
    sub_cams = CameraSet([cameras.by_id(cid) for cid in present])
    points = np.full((n_joints, 3), np.nan)
    inliers: List[Optional[List[str]]] = [None] * n_joints
    errors = np.full(n_joints, np.nan)
    for j in range(n_joints):
        obs = np.stack([fr.views[cid][j] for cid in present])
        rng = np.random.default_rng(np.random.SeedSequence((params.seed, fr.frame, j)))
        try:
            pt, ids, err = ransac_triangulate_joint(obs, sub_cams, params, rng=rng)
        except (InsufficientViews, NoConsensus):
            continue
        points[j], inliers[j], errors[j] = pt, ids, err
    repro = {}
    for cid in present:
        px, depth = project_points(cameras.by_id(cid).P, np.nan_to_num(points))
        px[~np.isfinite(points[:, 0]) | (depth <= 0)] = np.nan
        repro[cid] = px
    return Frame3D(frame=fr.frame, points=points, inliers=inliers,
                   errors_px=errors, reprojections=repro)
