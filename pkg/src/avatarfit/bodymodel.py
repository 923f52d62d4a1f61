"""Parametric body model: blend shapes, joint regression, forward and inverse skinning.

A model poses as  M(beta, theta, psi[, D]) = W(T_P, J(beta), theta, weights)  where
T_P = template + shape blend + expression blend + pose blend + displacement, joints
are regressed from the shaped template, and W blends per-joint rigid transforms.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AvatarFitError, DimensionMismatch, SingularBlend


class InvalidModel(AvatarFitError):
    """A model violates a structural invariant (weights, tree, shapes)."""


ROOT_PARENT = -1


def _toposort(parents: np.ndarray) -> np.ndarray:
    k = len(parents)
    if k == 0 or parents[0] != ROOT_PARENT:
        raise InvalidModel("joint 0 must be the root (parent sentinel -1)")
    children = {i: [] for i in range(k)}
    for j in range(1, k):
        p = int(parents[j])
        if p < 0 or p >= k or p == j:
            raise InvalidModel(f"joint {j} has invalid parent {p}")
        children[p].append(j)
    order, stack = [], [0]
    while stack:
        j = stack.pop()
        order.append(j)
        stack.extend(reversed(children[j]))
    if len(order) != k:
        raise InvalidModel("kinematic tree has a cycle or unreachable joint")
    return np.asarray(order, dtype=np.int64)


@dataclass(frozen=True)
class ParametricModel:
    """Template geometry plus all blend/regression/skinning coefficients.

    Shapes (N vertices, K joints, B shape dims, E expression dims):
      template (N,3), faces (F,3), shape_dirs (N,3,B), expr_dirs (N,3,E),
      pose_dirs (N,3,9*(K-1)), joint_regressor (K,N), skin_weights (N,K),
      parents (K,) with parents[0] == -1.
    """

    template: np.ndarray
    faces: np.ndarray
    shape_dirs: np.ndarray
    expr_dirs: np.ndarray
    pose_dirs: np.ndarray
    joint_regressor: np.ndarray
    skin_weights: np.ndarray
    parents: np.ndarray
    name: str = "model"
    uv_coords: Optional[np.ndarray] = None
    uv_faces: Optional[np.ndarray] = None
    _topo_order: np.ndarray = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        as_f = lambda x: np.ascontiguousarray(np.asarray(x, dtype=np.float64))
        object.__setattr__(self, "template", as_f(self.template))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64).reshape(-1, 3))
        object.__setattr__(self, "shape_dirs", as_f(self.shape_dirs))
        object.__setattr__(self, "expr_dirs", as_f(self.expr_dirs))
        object.__setattr__(self, "pose_dirs", as_f(self.pose_dirs))
        object.__setattr__(self, "joint_regressor", as_f(self.joint_regressor))
        object.__setattr__(self, "skin_weights", as_f(self.skin_weights))
        object.__setattr__(self, "parents", np.asarray(self.parents, dtype=np.int64).reshape(-1))
        n = self.num_vertices
        k = self.num_joints
        if self.template.ndim != 2 or self.template.shape[1] != 3:
            raise DimensionMismatch(f"template must be (N, 3), got {self.template.shape}")
        for nm, mat, cols in (
            ("shape_dirs", self.shape_dirs, None),
            ("expr_dirs", self.expr_dirs, None),
            ("pose_dirs", self.pose_dirs, 9 * (k - 1)),
        ):
            if mat.ndim != 3 or mat.shape[0] != n or mat.shape[1] != 3:
                raise DimensionMismatch(f"{nm} must be (N, 3, *), got {mat.shape}")
            if cols is not None and mat.shape[2] != cols:
                raise DimensionMismatch(f"{nm} must have {cols} basis columns, got {mat.shape[2]}")
        if self.joint_regressor.shape != (k, n):
            raise DimensionMismatch(
                f"joint_regressor must be (K, N) = ({k}, {n}), got {self.joint_regressor.shape}")
        if self.skin_weights.shape != (n, k):
            raise DimensionMismatch(
                f"skin_weights must be (N, K) = ({n}, {k}), got {self.skin_weights.shape}")
        w = self.skin_weights
        if np.any(w < -1e-9) or np.any(w > 1.0 + 1e-9):
            raise InvalidModel("skin weights must lie in [0, 1]")
        sums = w.sum(axis=1)
        bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
        if len(bad):
            raise InvalidModel(
                f"skin weight row {bad[0]} sums to {sums[bad[0]]:.8f}, expected 1 +- 1e-6")
        object.__setattr__(self, "_topo_order", _toposort(self.parents))

    @property
    def num_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def num_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def shape_dim(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def expr_dim(self) -> int:
        return self.expr_dirs.shape[2]


@dataclass(frozen=True)
class BodyParams:
    """Axis-angle pose (root row = global orientation), shape, expression, optional displacement."""

    theta: np.ndarray
    beta: np.ndarray
    psi: np.ndarray
    displacement: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "theta", np.asarray(self.theta, dtype=np.float64).reshape(-1, 3))
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "psi", np.asarray(self.psi, dtype=np.float64).reshape(-1))
        if self.displacement is not None:
            d = np.asarray(self.displacement, dtype=np.float64)
            if d.ndim != 2 or d.shape[1] != 3:
                raise DimensionMismatch(f"displacement must be (N, 3), got {d.shape}")
            object.__setattr__(self, "displacement", d)

    @classmethod
    def zeros(cls, model: ParametricModel) -> "BodyParams":
        return cls(theta=np.zeros((model.num_joints, 3)),
                   beta=np.zeros(model.shape_dim),
                   psi=np.zeros(model.expr_dim))

    def without_displacement(self) -> "BodyParams":
        return BodyParams(self.theta, self.beta, self.psi)


@dataclass(frozen=True)
class PosedResult:
    vertices: np.ndarray          # (N, 3)
    joints_rest: np.ndarray       # (K, 3)
    joint_rotations: np.ndarray   # (K, 3, 3) world skinning rotations
    joint_translations: np.ndarray  # (K, 3) world skinning translations


def rodrigues(axis_angle) -> np.ndarray:
    """Axis-angle (3-vector) to rotation matrix; zero vector maps to identity."""
    return rodrigues_batch(np.asarray(axis_angle, dtype=np.float64).reshape(1, 3))[0]


def rodrigues_batch(axis_angles: np.ndarray) -> np.ndarray:
    aa = np.asarray(axis_angles, dtype=np.float64).reshape(-1, 3)
    angle = np.linalg.norm(aa, axis=1)
    safe = np.where(angle > 0, angle, 1.0)
    axis = aa / safe[:, None]
    x, y, z = axis[:, 0], axis[:, 1], axis[:, 2]
    zero = np.zeros_like(x)
    kmat = np.stack([zero, -z, y, z, zero, -x, -y, x, zero], axis=1).reshape(-1, 3, 3)
    s, c = np.sin(angle), np.cos(angle)
    eye = np.broadcast_to(np.eye(3), kmat.shape)
    rot = eye + s[:, None, None] * kmat + (1.0 - c)[:, None, None] * (kmat @ kmat)
    rot[angle == 0] = np.eye(3)
    return rot


def _check_param_dims(model: ParametricModel, params: BodyParams):
    if params.theta.shape != (model.num_joints, 3):
        raise DimensionMismatch(
            f"theta must be ({model.num_joints}, 3), got {params.theta.shape}")
    if params.beta.shape != (model.shape_dim,):
        raise DimensionMismatch(f"beta must have {model.shape_dim} entries, got {params.beta.shape}")
    if params.psi.shape != (model.expr_dim,):
        raise DimensionMismatch(f"psi must have {model.expr_dim} entries, got {params.psi.shape}")
    if params.displacement is not None and params.displacement.shape != (model.num_vertices, 3):
        raise DimensionMismatch(
            f"displacement must be ({model.num_vertices}, 3), got {params.displacement.shape}")


def shaped_template(model: ParametricModel, beta, psi) -> np.ndarray:
    """Template plus shape and expression blend offsets."""
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    psi = np.asarray(psi, dtype=np.float64).reshape(-1)
    if beta.shape != (model.shape_dim,) or psi.shape != (model.expr_dim,):
        raise DimensionMismatch("beta/psi dims do not match model")
    out = model.template.copy()
    if model.shape_dim:
        out += model.shape_dirs @ beta
    if model.expr_dim:
        out += model.expr_dirs @ psi
    return out


def pose_feature(theta) -> np.ndarray:
    """Flattened (R(theta_k) - I) for all non-root joints, row-major per joint."""
    theta = np.asarray(theta, dtype=np.float64).reshape(-1, 3)
    rots = rodrigues_batch(theta[1:])
    return (rots - np.eye(3)).reshape(-1)


def regress_joints(model: ParametricModel, shaped_vertices: np.ndarray) -> np.ndarray:
    shaped_vertices = np.asarray(shaped_vertices, dtype=np.float64)
    if shaped_vertices.shape != (model.num_vertices, 3):
        raise DimensionMismatch(
            f"expected ({model.num_vertices}, 3) vertices, got {shaped_vertices.shape}")
    return model.joint_regressor @ shaped_vertices


def _skinning_transforms(model: ParametricModel, theta: np.ndarray, joints_rest: np.ndarray):
    """World rotations/translations per joint mapping rest-frame points to posed space."""
    k = model.num_joints
    local = rodrigues_batch(theta)
    world_r = np.empty((k, 3, 3))
    world_t = np.empty((k, 3))
    for j in model._topo_order:
        p = model.parents[j]
        if p == ROOT_PARENT:
            world_r[j] = local[j]
            world_t[j] = joints_rest[j]
        else:
            world_r[j] = world_r[p] @ local[j]
            world_t[j] = world_r[p] @ (joints_rest[j] - joints_rest[p]) + world_t[p]
    # fold in the rest-joint offset: G_j x = R_j (x - j_rest) + t_j
    skin_t = world_t - np.einsum("kij,kj->ki", world_r, joints_rest)
    return world_r, skin_t


def lbs_forward(model: ParametricModel, params: BodyParams) -> PosedResult:
    """Pose the model: blend shapes, pose blend, optional displacement, then skinning."""
    _check_param_dims(model, params)
    shape_only = model.template + (model.shape_dirs @ params.beta if model.shape_dim else 0.0)
    t_p = shape_only + (model.expr_dirs @ params.psi if model.expr_dim else 0.0)
    if model.num_joints > 1 and model.pose_dirs.shape[2]:
        t_p = t_p + model.pose_dirs @ pose_feature(params.theta)
    if params.displacement is not None:
        t_p = t_p + params.displacement
    joints_rest = regress_joints(model, shape_only)
    rot, trans = _skinning_transforms(model, params.theta, joints_rest)
    w = model.skin_weights
    blend_r = np.einsum("nk,kij->nij", w, rot)
    blend_t = w @ trans
    vertices = np.einsum("nij,nj->ni", blend_r, t_p) + blend_t
    return PosedResult(vertices=vertices, joints_rest=joints_rest,
                       joint_rotations=rot, joint_translations=trans)


def lbs_inverse(model: ParametricModel, posed_vertices: np.ndarray,
                params: BodyParams) -> np.ndarray:
    """Undo skinning: recover the displaced rest-pose positions from posed vertices.

    params must be the same theta/beta/psi used to pose; any displacement field on
    them is ignored (the returned vertices carry it).
    """
    params = params.without_displacement()
    _check_param_dims(model, params)
    posed_vertices = np.asarray(posed_vertices, dtype=np.float64)
    if posed_vertices.shape != (model.num_vertices, 3):
        raise DimensionMismatch(
            f"expected ({model.num_vertices}, 3) vertices, got {posed_vertices.shape}")
    shape_only = model.template + (model.shape_dirs @ params.beta if model.shape_dim else 0.0)
    joints_rest = regress_joints(model, shape_only)
    rot, trans = _skinning_transforms(model, params.theta, joints_rest)
    w = model.skin_weights
    blend_r = np.einsum("nk,kij->nij", w, rot)
    blend_t = w @ trans
    cond = np.linalg.cond(blend_r)
    worst = int(np.argmax(cond))
    if not np.isfinite(cond[worst]) or cond[worst] > 1e12:
        raise SingularBlend(
            f"vertex {worst} has blended transform condition number {cond[worst]:.3e}")
    return np.linalg.solve(blend_r, (posed_vertices - blend_t)[..., None])[..., 0]
