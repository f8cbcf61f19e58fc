"""
Team dynamics, reference trajectories, and horizon-stacked prediction.

Robot indices are 1-based in the reference-trajectory formulas and 0-based
everywhere else (state layout is [x_t^1..x_t^N, x_{t+1}^1, ...]).
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from features import matkit
from features.vision import euler_zyx


@dataclass(frozen=True)
class TeamDynamics:
    num_robots: int
    process_noise: NDArray = field(default_factory=lambda: 0.01 * np.eye(3))
    A: NDArray = field(default_factory=lambda: np.eye(3))
    B: NDArray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        lam = np.asarray(self.process_noise, dtype=float)
        if lam.shape != (3, 3):
            raise ValueError("process noise must be 3x3")
        if np.linalg.eigvalsh(matkit.symmetrize(lam))[0] <= 0:
            raise ValueError("process noise must be strictly positive definite")
        object.__setattr__(self, "process_noise", matkit.symmetrize(lam))
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float))

    @property
    def team_A(self) -> NDArray:
        return np.kron(np.eye(self.num_robots), self.A)

    @property
    def team_B(self) -> NDArray:
        return np.kron(np.eye(self.num_robots), self.B)

    @property
    def team_noise(self) -> NDArray:
        return np.kron(np.eye(self.num_robots), self.process_noise)


@dataclass(frozen=True)
class ReferencePlan:
    num_robots: int = 10
    horizon: int = 20
    t_end: int = 200
    lane_scale: float = 1e4

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.num_robots < 1:
            raise ValueError("num_robots must be >= 1")

    def _phase(self, i: int, tau):
        n, te = self.num_robots, self.t_end
        return 4 * np.pi * (i - n / 2) * tau / (n * te)

    def position(self, i: int, tau) -> NDArray:
        te, m = self.t_end, self.horizon
        p = self.lane_scale * ((i + 0.5) + 0.1 * np.sin(np.pi * tau / 10))
        y = -2 * (te + m) / te + 10 * tau / te
        z = np.sin(self._phase(i, tau))
        return np.array([p, y, z], dtype=float)

    def euler(self, i: int, tau) -> NDArray:
        """Camera Euler angles (alpha, beta, gamma) for the z-y-x rotation sequence."""
        n = self.num_robots
        a = 0.0
        b = np.pi / 2 + np.pi / 5 * np.sin(self._phase(i, tau))
        g = np.pi / 2 + np.pi / 10 * np.sin(np.pi / n * (i - n / 2) + np.pi / 10 * tau)
        return np.array([a, b, g], dtype=float)

    def camera_rotation(self, i: int, tau) -> NDArray:
        return euler_zyx(self.euler(i, tau))

    def reference_trajectory(self, i: int, tau) -> tuple[NDArray, NDArray]:
        return self.position(i, tau), self.euler(i, tau)

    def team_reference(self, tau) -> NDArray:
        return np.concatenate([self.position(i, tau) for i in range(1, self.num_robots + 1)])


@dataclass(frozen=True)
class HorizonGaussian:
    mean: NDArray
    cov: NDArray
    num_robots: int
    horizon: int
    t: int = 0

    def __post_init__(self):
        n = 3 * self.num_robots * (self.horizon + 1)
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (n,) or cov.shape != (n, n):
            raise ValueError(f"expected dim {n}, got mean {mean.shape} and cov {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def step_slice(self, k: int) -> slice:
        w = 3 * self.num_robots
        return slice(k * w, (k + 1) * w)

    def step_block(self, k: int) -> tuple[NDArray, NDArray]:
        s = self.step_slice(k)
        return self.mean[s].copy(), self.cov[s, s].copy()


def step_truth(dyn: TeamDynamics, state, control, rng=None, noiseless: bool = False) -> NDArray:
    """x+ = A x + B u + delta, delta ~ N(0, I_N kron Lambda)."""
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    if state.shape != control.shape or state.shape != (3 * dyn.num_robots,):
        raise ValueError(f"state/control must both have shape ({3 * dyn.num_robots},)")
    nxt = dyn.team_A @ state + dyn.team_B @ control
    if noiseless:
        return nxt
    rng = np.random.default_rng(rng)
    chol = np.linalg.cholesky(dyn.process_noise)
    delta = rng.standard_normal((dyn.num_robots, 3)) @ chol.T
    return nxt + delta.reshape(-1)


def tracking_control(ref_next, mean_est) -> NDArray:
    """Dead-beat tracking on the estimate: u = x_ref - mu."""
    ref_next = np.asarray(ref_next, dtype=float)
    mean_est = np.asarray(mean_est, dtype=float)
    if ref_next.shape != mean_est.shape:
        raise ValueError("reference and estimate dimensions differ")
    return ref_next - mean_est


def predicted_means(dyn: TeamDynamics, plan: ReferencePlan, init_mean, t: int) -> list[NDArray]:
    means = [np.asarray(init_mean, dtype=float)]
    a, b = dyn.team_A, dyn.team_B
    for k in range(1, plan.horizon + 1):
        u = tracking_control(plan.team_reference(t + k), means[-1])
        means.append(a @ means[-1] + b @ u)
    return means


def predict_horizon(dyn: TeamDynamics, plan: ReferencePlan, init_mean, init_cov, t: int = 0,
                    horizon: int | None = None) -> HorizonGaussian:
    """Stacked mean and covariance of x_{t:t+M}, cross-time blocks included."""
    m = plan.horizon if horizon is None else horizon
    init_cov = matkit.symmetrize(init_cov)
    w = 3 * dyn.num_robots
    if init_cov.shape != (w, w):
        raise ValueError(f"initial covariance must be {w}x{w}")
    if m == 0:
        return HorizonGaussian(np.asarray(init_mean, dtype=float), init_cov, dyn.num_robots, 0, t)

    means = predicted_means(dyn, plan if m == plan.horizon else _with_horizon(plan, m), init_mean, t)
    a, q = dyn.team_A, dyn.team_noise
    marg = [init_cov]
    for _ in range(m):
        marg.append(matkit.symmetrize(a @ marg[-1] @ a.T + q))

    cov = np.zeros(((m + 1) * w, (m + 1) * w))
    for k1 in range(m + 1):
        cov[k1 * w:(k1 + 1) * w, k1 * w:(k1 + 1) * w] = marg[k1]
        cross = marg[k1]
        for k2 in range(k1 + 1, m + 1):
            # Cov(x_k2, x_k1) = A^(k2-k1) Sigma_k1
            cross = a @ cross
            cov[k2 * w:(k2 + 1) * w, k1 * w:(k1 + 1) * w] = cross
            cov[k1 * w:(k1 + 1) * w, k2 * w:(k2 + 1) * w] = cross.T
    return HorizonGaussian(np.concatenate(means), matkit.symmetrize(cov), dyn.num_robots, m, t)


def _with_horizon(plan: ReferencePlan, m: int) -> ReferencePlan:
    return ReferencePlan(plan.num_robots, m, plan.t_end, plan.lane_scale)


def prior_info(hg: HorizonGaussian) -> NDArray:
    """H-bar = Sigma-bar^-1"""
    return matkit.inv_spd(hg.cov)


def sample_rollouts(dyn: TeamDynamics, hg: HorizonGaussian, count: int, rng=None) -> NDArray:
    """Open-loop Monte Carlo rollouts of x_{t:t+M} driven by the predicted controls."""
    rng = np.random.default_rng(rng)
    w, m = 3 * dyn.num_robots, hg.horizon
    a, b = dyn.team_A, dyn.team_B
    means = [hg.mean[k * w:(k + 1) * w] for k in range(m + 1)]
    controls = [means[k] - a @ means[k - 1] for k in range(1, m + 1)]
    controls = [np.linalg.lstsq(b, c, rcond=None)[0] for c in controls]

    x = rng.multivariate_normal(means[0], hg.cov[:w, :w], size=count)
    out = [x]
    chol = np.linalg.cholesky(dyn.team_noise)
    for k in range(m):
        x = x @ a.T + b @ controls[k] + rng.standard_normal((count, w)) @ chol.T
        out.append(x)
    return np.concatenate(out, axis=1)
