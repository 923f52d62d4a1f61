"""Seeded synthetic ground truth: procedural meshes, articulated toy models,
scans with a known displacement field, and camera rigs with noisy keypoints.

Everything here is deterministic under its seed and passes the invariants of
the types it fabricates, so the rest of the package can be verified end to end
without any captured data.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .bodymodel import BodyParams, ParametricModel, lbs_forward
from .mesh import TriMesh, vertex_normals
from .triangulation import Camera, CameraSet, Frame2D, Keypoints2D


# ---------------------------------------------------------------------------
# procedural primitives

def icosphere(subdivisions: int = 3, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron projected onto a sphere."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = list(verts)
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                m /= np.linalg.norm(m)
                cache[key] = len(verts)
                verts.append(m)
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    v = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return TriMesh(vertices=v, faces=np.asarray(faces, dtype=np.int64))


def capsule(radius: float, length: float, n_theta: int = 24, n_cap: int = 6,
            n_cyl: int = 8, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Closed capsule along +y: cylinder of the given length with hemispherical caps."""
    cx, cy, cz = center
    half = length / 2.0
    theta = np.linspace(0.0, 2.0 * np.pi, n_theta, endpoint=False)
    rings = []  # (y, ring_radius)
    for i in range(1, n_cap + 1):
        a = (np.pi / 2.0) * i / n_cap
        rings.append((-half - radius * np.cos(a), radius * np.sin(a)))
    for j in range(1, n_cyl):
        rings.append((-half + length * j / n_cyl, radius))
    for i in range(n_cap, 0, -1):
        a = (np.pi / 2.0) * i / n_cap
        rings.append((half + radius * np.cos(a), radius * np.sin(a)))

    verts = [np.array([0.0, -half - radius, 0.0])]
    for y, r in rings:
        ring = np.stack([r * np.cos(theta), np.full(n_theta, y), r * np.sin(theta)], axis=1)
        verts.append(ring)
    verts.append(np.array([0.0, half + radius, 0.0]))
    v = np.concatenate([verts[0][None], *verts[1:-1], verts[-1][None]], axis=0)
    v += np.array([cx, cy, cz])

    faces = []
    first = 1  # ring 0 starts after the bottom pole
    for k in range(n_theta):
        faces.append((0, first + k, first + (k + 1) % n_theta))
    for ridx in range(len(rings) - 1):
        a0, b0 = first + ridx * n_theta, first + (ridx + 1) * n_theta
        for k in range(n_theta):
            k1 = (k + 1) % n_theta
            faces.append((a0 + k, b0 + k, b0 + k1))
            faces.append((a0 + k, b0 + k1, a0 + k1))
    top = len(v) - 1
    last = first + (len(rings) - 1) * n_theta
    for k in range(n_theta):
        faces.append((top, last + (k + 1) % n_theta, last + k))
    return TriMesh(vertices=v, faces=np.asarray(faces, dtype=np.int64))


def grid_patch(nx: int, ny: int, spacing: float = 1.0) -> TriMesh:
    """Flat regular grid in the z=0 plane, triangulated with a consistent diagonal."""
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    v = np.stack([xs.ravel() * spacing, ys.ravel() * spacing, np.zeros(nx * ny)], axis=1)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            faces.append((a, b, b + 1))
            faces.append((a, b + 1, a + 1))
    return TriMesh(vertices=v, faces=np.asarray(faces, dtype=np.int64))


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


# ---------------------------------------------------------------------------
# presets

@dataclass(frozen=True)
class DisplacementSpec:
    amplitude: float = 0.01   # target RMS of the per-vertex offset norms, meters
    frequency: float = 2.0    # spatial frequency of the field, cycles per meter
    seed: int = 7
    scan_subdivisions: int = 0  # midpoint-subdivide the scan this many times


@dataclass(frozen=True)
class RigSpec:
    n_cameras: int = 8
    radius: float = 3.0
    width: int = 4096
    height: int = 3000
    focal: float = 3600.0
    n_joints: int = 17
    n_frames: int = 1


@dataclass(frozen=True)
class NoiseSpec:
    pixel_sigma: float = 0.0
    outlier_fraction: float = 0.0
    outlier_magnitude: float = 100.0


@dataclass(frozen=True)
class SynthPreset:
    kind: str = "capsule_biped"   # capsule_biped | cylinder_chain | sphere
    resolution: int = 1
    n_joints: int = 3             # cylinder_chain only
    seed: int = 0
    displacement: DisplacementSpec = field(default_factory=DisplacementSpec)
    rig: RigSpec = field(default_factory=RigSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.kind not in ("capsule_biped", "cylinder_chain", "sphere"):
            raise ValueError(f"unknown preset kind {self.kind!r}")
        if self.displacement.amplitude < 0:
            raise ValueError("displacement amplitude must be >= 0")
        if self.rig.n_cameras < 2:
            raise ValueError("need at least 2 cameras")
        if not (0.0 <= self.noise.outlier_fraction < 1.0):
            raise ValueError("outlier fraction must be in [0, 1)")


def named_preset(name: str) -> SynthPreset:
    if name == "sphere":
        return SynthPreset(kind="sphere")
    if name == "cylinder_chain":
        return SynthPreset(kind="cylinder_chain")
    if name == "capsule_biped":
        return SynthPreset(kind="capsule_biped",
                           noise=NoiseSpec(pixel_sigma=1.0, outlier_fraction=0.0))
    raise ValueError(f"unknown preset {name!r}")


# ---------------------------------------------------------------------------
# articulated toy models

def _chain_weights(y: np.ndarray, joint_ys: np.ndarray, blend: float) -> np.ndarray:
    """Smooth partition of unity along the axis for a chain of joints.

    Each vertex blends between the two joints bracketing its axial coordinate,
    so rows are exactly (1 - f, f) and sum to 1 by construction.
    """
    k = len(joint_ys)
    w = np.zeros((len(y), k))
    if k == 1:
        w[:, 0] = 1.0
        return w
    seg = np.clip(np.searchsorted(joint_ys, y) - 1, 0, k - 2)
    lo = joint_ys[seg + 1] - blend / 2.0
    f = _smoothstep((y - lo) / blend)
    rows = np.arange(len(y))
    w[rows, seg] = 1.0 - f
    w[rows, seg + 1] = f
    return w


def _gaussian_regressor_row(verts: np.ndarray, target: np.ndarray,
                            mask: Optional[np.ndarray] = None, sigma: float = 0.05) -> np.ndarray:
    d2 = np.sum((verts - target) ** 2, axis=1)
    row = np.exp(-d2 / (2.0 * sigma * sigma))
    if mask is not None:
        row = row * mask
    s = row.sum()
    if s <= 0:  # fall back to the single nearest vertex
        row = np.zeros(len(verts))
        cand = np.where(mask, d2, np.inf) if mask is not None else d2
        row[int(np.argmin(cand))] = 1.0
        return row
    return row / s


def _zero_dirs(n: int, dims: int) -> np.ndarray:
    return np.zeros((n, 3, dims))


def _smooth_random_dirs(verts: np.ndarray, dims: int, amplitude: float, seed: int) -> np.ndarray:
    """Band-limited random blend-shape directions (for models that want nonzero bases)."""
    rng = np.random.default_rng(seed)
    out = np.zeros((len(verts), 3, dims))
    for d in range(dims):
        for axis in range(3):
            waves = np.zeros(len(verts))
            for _ in range(3):
                k = rng.normal(size=3)
                k = k / np.linalg.norm(k) * rng.uniform(1.0, 3.0)
                waves += rng.normal() * np.sin(verts @ k + rng.uniform(0, 2 * np.pi))
            out[:, axis, d] = waves
    rms = np.sqrt(np.mean(out ** 2)) if dims else 1.0
    if rms > 0:
        out *= amplitude / rms
    return out


def make_model(preset: SynthPreset) -> ParametricModel:
    """Small articulated model with smooth skinning and a valid parent tree."""
    if preset.kind == "sphere":
        mesh = icosphere(subdivisions=max(2, preset.resolution + 2), radius=0.5)
        n = mesh.n_vertices
        reg = np.full((1, n), 1.0 / n)
        return ParametricModel(
            template=mesh.vertices, faces=mesh.faces,
            shape_dirs=_smooth_random_dirs(mesh.vertices, 2, 0.02, preset.seed + 1),
            expr_dirs=_zero_dirs(n, 1), pose_dirs=_zero_dirs(n, 0),
            joint_regressor=reg, skin_weights=np.ones((n, 1)),
            parents=np.array([-1]), name="sphere")

    if preset.kind == "cylinder_chain":
        k = max(2, preset.n_joints)
        length = 0.3 * k
        mesh = capsule(radius=0.1, length=length, n_theta=20 + 4 * preset.resolution,
                       n_cap=4 + preset.resolution, n_cyl=6 * k,
                       center=(0.0, length / 2.0, 0.0))
        y = mesh.vertices[:, 1]
        joint_ys = np.linspace(0.0, length * (k - 1) / k, k)
        weights = _chain_weights(y, joint_ys, blend=0.18)
        reg = np.stack([
            _gaussian_regressor_row(mesh.vertices, np.array([0.0, jy, 0.0]))
            for jy in joint_ys])
        n = mesh.n_vertices
        return ParametricModel(
            template=mesh.vertices, faces=mesh.faces,
            shape_dirs=_smooth_random_dirs(mesh.vertices, 2, 0.02, preset.seed + 1),
            expr_dirs=_zero_dirs(n, 1), pose_dirs=_zero_dirs(n, 9 * (k - 1)),
            joint_regressor=reg, skin_weights=weights,
            parents=np.array([-1] + list(range(k - 1))), name="cylinder_chain")

    # capsule_biped: torso plus two legs, 6 joints. Inter-part clearances stay
    # above the default 5 cm correspondence radius so nearest-surface matching
    # cannot jump between components during fitting.
    res = preset.resolution
    torso = capsule(radius=0.13, length=0.50, n_theta=24 + 6 * res, n_cap=5 + res,
                    n_cyl=9 + 2 * res, center=(0.0, 0.42, 0.0))
    leg_kw = dict(radius=0.08, length=0.55, n_theta=20 + 4 * res, n_cap=4 + res,
                  n_cyl=14 + 4 * res)
    lleg = capsule(center=(0.17, -0.40, 0.0), **leg_kw)
    rleg = capsule(center=(-0.17, -0.40, 0.0), **leg_kw)

    verts = np.concatenate([torso.vertices, lleg.vertices, rleg.vertices])
    faces = np.concatenate([
        torso.faces,
        lleg.faces + torso.n_vertices,
        rleg.faces + torso.n_vertices + lleg.n_vertices,
    ])
    n = len(verts)
    nt, nl = torso.n_vertices, lleg.n_vertices

    # joints: 0 root (pelvis), 1 chest, 2/3 left hip/knee, 4/5 right hip/knee
    parents = np.array([-1, 0, 0, 2, 0, 4])
    joint_pos = np.array([
        [0.0, 0.12, 0.0], [0.0, 0.60, 0.0],
        [0.17, -0.18, 0.0], [0.17, -0.48, 0.0],
        [-0.17, -0.18, 0.0], [-0.17, -0.48, 0.0],
    ])
    weights = np.zeros((n, 6))
    ys = verts[:, 1]
    torso_w = _chain_weights(ys[:nt], np.array([0.12, 0.60]), blend=0.22)
    weights[:nt, 0] = torso_w[:, 0]
    weights[:nt, 1] = torso_w[:, 1]
    for sl, hip, knee in ((slice(nt, nt + nl), 2, 3), (slice(nt + nl, None), 4, 5)):
        leg_w = _chain_weights(-ys[sl], np.array([0.18, 0.48]), blend=0.16)
        weights[sl, hip] = leg_w[:, 0]
        weights[sl, knee] = leg_w[:, 1]

    comp = np.zeros(n)
    comp[nt:nt + nl] = 1
    comp[nt + nl:] = 2
    joint_comp = [0, 0, 1, 1, 2, 2]
    reg = np.stack([
        _gaussian_regressor_row(verts, joint_pos[j], mask=(comp == joint_comp[j]).astype(float))
        for j in range(6)])
    return ParametricModel(
        template=verts, faces=faces,
        shape_dirs=_smooth_random_dirs(verts, 2, 0.015, preset.seed + 1),
        expr_dirs=_zero_dirs(n, 1), pose_dirs=_zero_dirs(n, 9 * 5),
        joint_regressor=reg, skin_weights=weights,
        parents=parents, name="capsule_biped")


def default_pose(model: ParametricModel, kind: str) -> BodyParams:
    """A mild articulated pose suitable for fitting experiments."""
    theta = np.zeros((model.num_joints, 3))
    if kind == "capsule_biped" and model.num_joints >= 6:
        theta[1] = (0.08, 0.0, 0.0)
        theta[2] = (0.20, 0.0, 0.06)
        theta[3] = (-0.30, 0.0, 0.0)
        theta[4] = (-0.15, 0.0, -0.06)
        theta[5] = (0.25, 0.0, 0.0)
    elif kind == "cylinder_chain":
        for j in range(1, model.num_joints):
            theta[j] = (0.25 if j % 2 else -0.2, 0.0, 0.1)
    return BodyParams(theta=theta, beta=np.zeros(model.shape_dim),
                      psi=np.zeros(model.expr_dim))


def sparse_delete_ids(mesh: TriMesh, n: int, seed: int, min_hops: int = 3) -> np.ndarray:
    """Random vertex ids pairwise at least min_hops apart.

    Deleting such a set leaves one simple boundary loop per vertex, which keeps
    hole filling well-posed.
    """
    from .mesh import build_vertex_graph, hop_neighborhood

    graph = build_vertex_graph(mesh)
    rng = np.random.default_rng(seed)
    candidates = set(range(mesh.n_vertices))
    picked = []
    while candidates and len(picked) < n:
        v = int(sorted(candidates)[rng.integers(len(candidates))])
        picked.append(v)
        candidates -= hop_neighborhood(graph, v, min_hops - 1)
    return np.asarray(sorted(picked), dtype=np.int64)


# ---------------------------------------------------------------------------
# scans with known displacement

def band_limited_field(points: np.ndarray, frequency: float, seed: int,
                       n_waves: int = 6, equal_amplitudes: bool = False) -> np.ndarray:
    """Smooth scalar field: a sum of random plane waves with |k| <= 2*pi*frequency.

    equal_amplitudes gives every wave the same weight, which bounds the field's
    slope at sigma * |k_max| instead of leaving it to amplitude luck.
    """
    rng = np.random.default_rng(seed)
    out = np.zeros(len(points))
    for _ in range(n_waves):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        k = direction * 2.0 * np.pi * frequency * rng.uniform(0.3, 1.0)
        amp = (1.0 if rng.normal() >= 0 else -1.0) if equal_amplitudes else rng.normal()
        out += amp * np.sin(points @ k + rng.uniform(0.0, 2.0 * np.pi))
    return out


def gaussian_curvature(mesh: TriMesh) -> np.ndarray:
    """Discrete Gaussian curvature: angle defect over one third of the incident area."""
    v = mesh.vertices
    f = mesh.faces
    defect = np.full(mesh.n_vertices, 2.0 * np.pi)
    area3 = np.zeros(mesh.n_vertices)
    tri = v[f]
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    for corner in range(3):
        a = tri[:, corner]
        b = tri[:, (corner + 1) % 3]
        c = tri[:, (corner + 2) % 3]
        e1 = b - a
        e2 = c - a
        cosang = np.einsum("ij,ij->i", e1, e2) / (
            np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1) + 1e-300)
        np.add.at(defect, f[:, corner], -np.arccos(np.clip(cosang, -1.0, 1.0)))
        np.add.at(area3, f[:, corner], areas / 3.0)
    return defect / np.where(area3 > 0, area3, 1.0)


def subdivide_midpoint(vertices: np.ndarray, faces: np.ndarray,
                       attributes: Optional[np.ndarray] = None):
    """One round of 1-to-4 midpoint subdivision; original vertices keep their ids.

    attributes, if given, are averaged onto edge midpoints (e.g. skinning weights).
    Returns (vertices, faces[, attributes]).
    """
    verts = list(np.asarray(vertices, dtype=np.float64))
    attrs = list(np.asarray(attributes, dtype=np.float64)) if attributes is not None else None
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = len(verts)
            verts.append(0.5 * (verts[a] + verts[b]))
            if attrs is not None:
                attrs.append(0.5 * (attrs[a] + attrs[b]))
        return cache[key]

    new_faces = []
    for a, b, c in np.asarray(faces, dtype=np.int64):
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
    out = (np.asarray(verts), np.asarray(new_faces, dtype=np.int64))
    if attrs is not None:
        out = out + (np.asarray(attrs),)
    return out


CURVATURE_ATTENUATION = 30.0  # 1/m^2; cloth-like fields taper on doubly-curved regions


def _curvature_attenuation(mesh: TriMesh, smoothing_iters: int = 40) -> np.ndarray:
    from .mesh import build_vertex_graph

    curv = np.abs(gaussian_curvature(mesh))
    atten = 1.0 / (1.0 + curv / CURVATURE_ATTENUATION)
    graph = build_vertex_graph(mesh)
    for _ in range(smoothing_iters):
        means = np.array([atten[nb].mean() if len(nb) else atten[i]
                          for i, nb in enumerate(graph.adjacency)])
        atten = np.minimum(atten + 0.5 * (means - atten), atten)  # widen, never re-grow
    return atten


def _displacement_field(points: np.ndarray, normals: np.ndarray, attenuation: np.ndarray,
                        spec: DisplacementSpec, norm=None):
    """Band-limited normal displacement, attenuated where |Gaussian curvature| is
    high (cloth drapes over shafts, stays tight on strongly curved extremities)
    and softly saturated so peak offsets stay near the RMS scale.

    norm carries (raw_rms, scale) so the same field can be re-evaluated at a
    different tessellation bit-consistently at shared points.
    """
    s = band_limited_field(points, spec.frequency, spec.seed,
                           n_waves=3, equal_amplitudes=True) * attenuation
    if norm is None:
        raw_rms = float(np.sqrt(np.mean(s * s)))
        if raw_rms > 0:
            sat = np.tanh(0.8 * s / raw_rms) / 0.8
            scale = spec.amplitude / float(np.sqrt(np.mean(sat * sat)))
        else:
            sat, scale = s, 0.0
        norm = (raw_rms, scale)
    else:
        raw_rms, scale = norm
        sat = np.tanh(0.8 * s / raw_rms) / 0.8 if raw_rms > 0 else s
    return normals * (sat * scale)[:, None], norm


def make_scan(model: ParametricModel, params: BodyParams,
              spec: DisplacementSpec) -> Tuple[TriMesh, np.ndarray]:
    """Pose the model with a band-limited normal displacement; return (scan, true_D).

    With scan_subdivisions > 0 the scan carries the same displaced surface at a
    finer tessellation (original vertices included), mimicking a dense capture;
    true_D is always reported at model-vertex resolution.
    """
    template_mesh = TriMesh(vertices=model.template, faces=model.faces)
    atten = _curvature_attenuation(template_mesh)
    if spec.amplitude > 0:
        true_d, norm = _displacement_field(model.template, vertex_normals(template_mesh),
                                           atten, spec)
    else:
        true_d, norm = np.zeros_like(model.template), (1.0, 0.0)
    if spec.scan_subdivisions <= 0:
        posed = lbs_forward(model, BodyParams(params.theta, params.beta, params.psi, true_d))
        return TriMesh(vertices=posed.vertices, faces=model.faces), true_d

    # attenuation interpolates with the mesh so the scan passes exactly through
    # the displaced model vertices
    verts, faces = model.template, model.faces
    attrs = np.concatenate([model.skin_weights, atten[:, None]], axis=1)
    for _ in range(spec.scan_subdivisions):
        verts, faces, attrs = subdivide_midpoint(verts, faces, attrs)
    weights, atten_sub = attrs[:, :-1], attrs[:, -1]
    sub_mesh = TriMesh(vertices=verts, faces=faces)
    if spec.amplitude > 0:
        d_sub, _ = _displacement_field(verts, vertex_normals(sub_mesh), atten_sub,
                                       spec, norm=norm)
    else:
        d_sub = np.zeros_like(verts)
    # skin the subdivided surface with the original joint transforms
    posed = lbs_forward(model, params.without_displacement())
    rot, trans = posed.joint_rotations, posed.joint_translations
    blend_r = np.einsum("nk,kij->nij", weights, rot)
    blend_t = weights @ trans
    posed_sub = np.einsum("nij,nj->ni", blend_r, verts + d_sub) + blend_t
    return TriMesh(vertices=posed_sub, faces=faces), true_d


# ---------------------------------------------------------------------------
# camera rigs and keypoints

@dataclass
class RigData:
    cameras: CameraSet
    gt_joints: np.ndarray        # (F, J, 3)
    keypoints2d: Keypoints2D
    outlier_mask: np.ndarray     # (F, J, n_cams) bool: observation was corrupted


def _look_at(eye: np.ndarray, center: np.ndarray, up=(0.0, 1.0, 0.0)):
    z = center - eye
    z = z / np.linalg.norm(z)
    x = np.cross(np.asarray(up, dtype=np.float64), z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    rot = np.stack([x, y, z])
    return rot, -rot @ eye


def make_rig(preset: SynthPreset) -> RigData:
    """Circle of inward-looking cameras with projected, perturbed joint observations."""
    rig, noise = preset.rig, preset.noise
    rng = np.random.default_rng(preset.seed)
    center = np.array([0.0, 0.0, 0.0])
    k_mat = np.array([
        [rig.focal, 0.0, rig.width / 2.0],
        [0.0, rig.focal, rig.height / 2.0],
        [0.0, 0.0, 1.0],
    ])
    cams = []
    for i in range(rig.n_cameras):
        ang = 2.0 * np.pi * i / rig.n_cameras
        eye = np.array([rig.radius * np.cos(ang),
                        0.45 * np.sin(2.399963 * i),
                        rig.radius * np.sin(ang)])
        rot, t = _look_at(eye, center)
        cams.append(Camera(id=f"cam{i:02d}", K=k_mat, R=rot, t=t,
                           width=rig.width, height=rig.height))
    cameras = CameraSet(cams)

    base = np.stack([
        rng.uniform(-0.4, 0.4, rig.n_joints),
        rng.uniform(-0.8, 0.8, rig.n_joints),
        rng.uniform(-0.4, 0.4, rig.n_joints),
    ], axis=1)
    frames_gt = []
    for f in range(rig.n_frames):
        phase = 2.0 * np.pi * f / max(rig.n_frames, 1)
        offset = np.array([0.25 * np.sin(phase), 0.0, 0.25 * np.cos(phase)])
        sway = 0.05 * np.sin(phase + np.linspace(0, 2 * np.pi, rig.n_joints, endpoint=False))
        gt = base + offset + np.stack([sway, np.zeros_like(sway), np.zeros_like(sway)], axis=1)
        frames_gt.append(gt)
    gt_joints = np.stack(frames_gt)

    n_out = int(round(noise.outlier_fraction * rig.n_cameras))
    outlier_mask = np.zeros((rig.n_frames, rig.n_joints, rig.n_cameras), dtype=bool)
    frames = []
    for f in range(rig.n_frames):
        views: Dict[str, np.ndarray] = {c.id: np.zeros((rig.n_joints, 3)) for c in cameras}
        for j in range(rig.n_joints):
            corrupt = rng.choice(rig.n_cameras, size=n_out, replace=False) if n_out else []
            for ci, cam in enumerate(cameras):
                h = cam.P @ np.append(gt_joints[f, j], 1.0)
                px = h[:2] / h[2]
                if noise.pixel_sigma > 0:
                    px = px + rng.normal(scale=noise.pixel_sigma, size=2)
                if ci in corrupt:
                    direction = rng.normal(size=2)
                    direction /= np.linalg.norm(direction)
                    px = px + direction * noise.outlier_magnitude * rng.uniform(0.9, 1.1)
                    outlier_mask[f, j, ci] = True
                views[cam.id][j] = (px[0], px[1], rng.uniform(0.5, 1.0))
        frames.append(Frame2D(frame=f, views=views))
    return RigData(cameras=cameras, gt_joints=gt_joints,
                   keypoints2d=Keypoints2D(frames=frames), outlier_mask=outlier_mask)
