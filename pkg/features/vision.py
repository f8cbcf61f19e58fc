"""
Feature field, camera geometry, M-step visibility, and per-feature
information matrices.

Cameras look along their +z axis. A frame is a (step, robot) pair inside the
horizon; the state index of frame (k, i) is 3 * (k * N + i).
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from app.config import COND_LIMIT
from features import matkit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Feature:
    feature_id: int
    position: NDArray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"feature {self.feature_id} has non-finite coordinates")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class CameraRig:
    rotation: NDArray = field(default_factory=lambda: np.eye(3))
    offset: NDArray = field(default_factory=lambda: np.zeros(3))
    sigma: float = 0.05
    fov_half_angle: float = np.deg2rad(60.0)
    max_range: float = 40.0

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        if r.shape != (3, 3) or np.max(np.abs(r.T @ r - np.eye(3))) > 1e-10 or np.linalg.det(r) < 0:
            raise ValueError("camera mounting rotation must be a proper orthonormal matrix")
        if not self.sigma > 0:
            raise ValueError("pixel noise sigma must be > 0")
        if not 0 < self.fov_half_angle < np.pi:
            raise ValueError("field-of-view half angle must be in (0, pi)")
        if not self.max_range > 0:
            raise ValueError("max range must be > 0")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "offset", np.asarray(self.offset, dtype=float).reshape(3))


@dataclass(frozen=True)
class Pose:
    position: NDArray
    rotation: NDArray


class Observation(NamedTuple):
    bearing: NDArray
    z: NDArray


def skew(u) -> NDArray:
    """Cross-product matrix: skew(u) @ v == np.cross(u, v)."""
    x, y, z = np.asarray(u, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def euler_zyx(angles) -> NDArray:
    """R = R_z(gamma) R_y(beta) R_x(alpha) for angles (alpha, beta, gamma)."""
    a, b, g = np.asarray(angles, dtype=float).reshape(3)
    return Rotation.from_euler("ZYX", [g, b, a]).as_matrix()


def camera_frame_points(points, pose: Pose, rig: CameraRig) -> NDArray:
    """Rows (R R_c)^T (y - (x + R x_c)) for every point y."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    r_wc = pose.rotation @ rig.rotation
    center = np.asarray(pose.position, dtype=float) + pose.rotation @ rig.offset
    return (points - center) @ r_wc


def in_view(v, rig: CameraRig) -> NDArray:
    v = np.atleast_2d(v)
    rng = np.linalg.norm(v, axis=1)
    return (rng > 0) & (rng <= rig.max_range) & (v[:, 2] >= rng * np.cos(rig.fov_half_angle))


def observe(feature: Feature, pose: Pose, rig: CameraRig, rng=None) -> Observation | None:
    """Bearing and vision measurement of one feature; None when out of view.

    rng=None gives the noiseless measurement.
    """
    v = camera_frame_points(feature.position, pose, rig)[0]
    if not in_view(v, rig)[0]:
        return None
    u = v / np.linalg.norm(v)
    z = skew(u).T @ rig.rotation.T @ rig.offset
    if rng is not None:
        z = z + rig.sigma * np.random.default_rng(rng).standard_normal(3)
    return Observation(u, z)


@dataclass(frozen=True)
class FeatureInfo:
    """Information a feature carries about x_{t:t+M}, stored on its support.

    rows[j] is U_j (R R_c)^T for frame j; the frame's measurement model is
    z_j = rows[j] (x_{k,i} - y_f) + eta_j with eta_j ~ N(0, sigma_j^2 I).
    """

    feature_id: int
    dim: int
    support: NDArray
    info_block: NDArray
    triangulated: bool
    frames: tuple[tuple[int, int], ...] = ()
    rows: NDArray = field(default_factory=lambda: np.zeros((0, 3, 3)))
    sigmas: NDArray = field(default_factory=lambda: np.zeros(0))
    num_robots: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def info(self) -> NDArray:
        dense = np.zeros((self.dim, self.dim))
        if self.support.size:
            dense[np.ix_(self.support, self.support)] = self.info_block
        return dense

    def _weighted(self) -> tuple[NDArray, NDArray]:
        w = self.rows / self.sigmas[:, None, None]
        return matkit.block_diag(list(w)), -w.reshape(-1, 3)

    @property
    def F(self) -> NDArray:
        """Stacked (unweighted) F over the full state."""
        f = np.zeros((3 * self.n_frames, self.dim))
        for j in range(self.n_frames):
            f[3 * j:3 * j + 3, self.support[3 * j:3 * j + 3]] = self.rows[j]
        return f

    @property
    def E(self) -> NDArray:
        return -self.rows.reshape(-1, 3)

    def factor(self) -> NDArray:
        """G on the support with info_block = G^T G."""
        w, v = np.linalg.eigh(matkit.symmetrize(self.info_block))
        keep = w > 1e-12 * max(w[-1], 0.0) if w.size else w > 0
        return np.sqrt(w[keep])[:, None] * v[:, keep].T

    def information_vector(self, z) -> NDArray:
        """Landmark-marginalized b^f on the support for stacked measurements z."""
        if not self.triangulated:
            raise matkit.NotTriangulatedError()
        z = np.asarray(z, dtype=float).reshape(-1, 3) / self.sigmas[:, None]
        f, e = self._weighted()
        zt = z.reshape(-1)
        fz, ez = f.T @ zt, e.T @ zt
        return fz - f.T @ e @ np.linalg.solve(e.T @ e, ez)

    def information_vector_dense(self, z) -> NDArray:
        b = np.zeros(self.dim)
        b[self.support] = self.information_vector(z)
        return b

    def frame_measurement(self, j: int, robot_position, feature_position, rng=None) -> NDArray:
        z = self.rows[j] @ (np.asarray(robot_position, dtype=float) - np.asarray(feature_position, dtype=float))
        if rng is not None:
            z = z + self.sigmas[j] * np.random.default_rng(rng).standard_normal(3)
        return z

    def measure(self, x_stack, feature_position, rng=None) -> NDArray:
        """Stacked z = F x + E y_f + eta over every frame."""
        x_stack = np.asarray(x_stack, dtype=float)
        gen = None if rng is None else np.random.default_rng(rng)
        out = []
        for j in range(self.n_frames):
            s = self.support[3 * j:3 * j + 3]
            out.append(self.frame_measurement(j, x_stack[s], feature_position, gen))
        return np.concatenate(out) if out else np.zeros(0)

    def truncated(self, last_step: int, cond_limit: float = COND_LIMIT) -> "FeatureInfo":
        """Information from the frames observed up to and including last_step."""
        keep = [j for j, (k, _) in enumerate(self.frames) if k <= last_step]
        if len(keep) == self.n_frames:
            return self
        return _assemble(self.feature_id, [self.frames[j] for j in keep], self.rows[keep],
                         self.sigmas[keep], self.dim, self.num_robots, cond_limit)

    @classmethod
    def from_matrix(cls, feature_id: int, matrix) -> "FeatureInfo":
        """Wrap an arbitrary PSD contribution (synthetic instances, tests)."""
        matrix = matkit.symmetrize(matrix)
        support = np.flatnonzero(np.any(matrix != 0, axis=0) | np.any(matrix != 0, axis=1))
        return cls(feature_id, matrix.shape[0], support, matrix[np.ix_(support, support)], True)


def _assemble(feature_id, frames, rows, sigmas, dim, num_robots, cond_limit) -> FeatureInfo:
    frames = tuple((int(k), int(i)) for k, i in frames)
    rows = np.asarray(rows, dtype=float).reshape(-1, 3, 3)
    sigmas = np.asarray(sigmas, dtype=float).reshape(-1)
    support = np.array([3 * (k * num_robots + i) + c for k, i in frames for c in range(3)], dtype=int)
    if not frames:
        return FeatureInfo(feature_id, dim, support, np.zeros((0, 0)), False, frames, rows, sigmas, num_robots)

    w = rows / sigmas[:, None, None]
    f = matkit.block_diag(list(w))
    e = -w.reshape(-1, 3)
    fe = np.hstack([f, e])
    omega = fe.T @ fe
    try:
        block = matkit.schur_marginalize(omega, 3 * len(frames), cond_limit)
        ok = True
    except matkit.NotTriangulatedError:
        block = np.zeros((support.size, support.size))
        ok = False
    return FeatureInfo(feature_id, dim, support, block, ok, frames, rows, sigmas, num_robots)


def feature_info(feature: Feature, horizon_poses, rigs, num_robots: int, horizon: int,
                 cond_limit: float = COND_LIMIT) -> FeatureInfo:
    """Stack every visible frame of one feature and marginalize its position out."""
    dim = 3 * num_robots * (horizon + 1)
    frames, rows, sigmas = [], [], []
    for k in range(horizon + 1):
        for i in range(num_robots):
            pose, rig = horizon_poses[k][i], rigs[i]
            obs = observe(feature, pose, rig)
            if obs is None:
                continue
            frames.append((k, i))
            rows.append(skew(obs.bearing) @ (pose.rotation @ rig.rotation).T)
            sigmas.append(rig.sigma)
    return _assemble(feature.feature_id, frames, rows, sigmas, dim, num_robots, cond_limit)


def candidate_infos(features, horizon_poses, rigs, num_robots: int, horizon: int,
                    cond_limit: float = COND_LIMIT, first_step: int = 0) -> list[FeatureInfo]:
    """Vectorized visibility over the whole field; returns triangulated features only.

    Frames before first_step are left out.
    """
    if not features:
        return []
    dim = 3 * num_robots * (horizon + 1)
    points = np.stack([f.position for f in features])
    hits: dict[int, list] = {}
    for k in range(first_step, horizon + 1):
        for i in range(num_robots):
            pose, rig = horizon_poses[k][i], rigs[i]
            v = camera_frame_points(points, pose, rig)
            r_wc_t = (pose.rotation @ rig.rotation).T
            for idx in np.flatnonzero(in_view(v, rig)):
                u = v[idx] / np.linalg.norm(v[idx])
                hits.setdefault(idx, []).append(((k, i), skew(u) @ r_wc_t, rig.sigma))

    infos = []
    for idx in sorted(hits):
        frames, rows, sigmas = zip(*hits[idx])
        info = _assemble(features[idx].feature_id, frames, rows, sigmas, dim, num_robots, cond_limit)
        if info.triangulated:
            infos.append(info)
    logger.debug("visible features: %d, triangulated: %d", len(hits), len(infos))
    return infos


def generate_features(bounds, count: int, rng=None) -> list[Feature]:
    lo, hi = (np.asarray(b, dtype=float).reshape(3) for b in bounds)
    if np.any(hi <= lo):
        raise ValueError(f"degenerate feature box: {lo} .. {hi}")
    if count < 0:
        raise ValueError("feature count must be >= 0")
    pts = np.random.default_rng(rng).uniform(lo, hi, size=(count, 3))
    return [Feature(i, p) for i, p in enumerate(pts)]


VIEW_DEPTH = (0.2, 0.9)
VIEW_CONE_SHRINK = 0.9


def generate_view_features(poses, rigs, count: int, rng=None) -> list[Feature]:
    """Features scattered inside the view cones of the given camera poses.

    Each feature picks one (pose, rig) pair uniformly, a direction uniform on
    the spherical cap within VIEW_CONE_SHRINK of the half angle, and a depth
    uniform in VIEW_DEPTH times the rig's range.
    """
    poses, rigs = list(poses), list(rigs)
    if len(poses) != len(rigs):
        raise ValueError(f"{len(poses)} poses but {len(rigs)} rigs")
    if count < 0:
        raise ValueError("feature count must be >= 0")
    if count and not poses:
        raise ValueError("no camera poses to place features around")
    gen = np.random.default_rng(rng)
    pick = gen.integers(0, len(poses), size=count)
    u = gen.uniform(size=(count, 3))

    points = np.empty((count, 3))
    for n, j in enumerate(pick):
        pose, rig = poses[j], rigs[j]
        cos_cap = np.cos(VIEW_CONE_SHRINK * rig.fov_half_angle)
        cos_t = 1.0 - u[n, 0] * (1.0 - cos_cap)
        sin_t = np.sqrt(max(0.0, 1.0 - cos_t ** 2))
        phi = 2 * np.pi * u[n, 1]
        depth = rig.max_range * (VIEW_DEPTH[0] + u[n, 2] * (VIEW_DEPTH[1] - VIEW_DEPTH[0]))
        v = depth * np.array([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
        center = np.asarray(pose.position, dtype=float) + pose.rotation @ rig.offset
        points[n] = center + pose.rotation @ rig.rotation @ v
    return [Feature(i, p) for i, p in enumerate(points)]


def load_features_csv(path: str | Path) -> list[Feature]:
    df = pd.read_csv(path)
    missing = {"id", "x", "y", "z"} - set(df.columns)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    return [Feature(int(r.id), np.array([r.x, r.y, r.z])) for r in df.itertuples(index=False)]


def field_bounds(positions, margin: float) -> tuple[NDArray, NDArray]:
    """Axis-aligned box enclosing the given positions plus a margin."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    return positions.min(axis=0) - margin, positions.max(axis=0) + margin
