"""
Receding-horizon information filter.

Each cycle predicts x_{t:t+M}, selects features over the horizon, then steps
the truth forward. After every step the horizon posterior is rebuilt from the
prior, the relative measurements realized so far and the selected features'
frames observed so far, and the per-step metrics are recorded.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from features import matkit, motion, netgraph, selection, vision
from features.scenario import KIND_FEATURE, KIND_RELATIVE, KIND_SELECTION, KIND_TRUTH, Scenario, stream
from features.selection import Measure, SelectionOutcome

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InfoState:
    b: NDArray
    H: NDArray
    num_robots: int
    t: int = 0

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).reshape(-1)
        h = np.asarray(self.H, dtype=float)
        if h.shape != (b.size, b.size):
            raise matkit.DimensionError(f"info matrix {h.shape} does not match vector of size {b.size}")
        if b.size % (3 * self.num_robots):
            raise matkit.DimensionError(f"dim {b.size} is not a multiple of 3N={3 * self.num_robots}")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "H", h)

    @property
    def horizon(self) -> int:
        return self.b.size // (3 * self.num_robots) - 1

    @classmethod
    def from_gaussian(cls, hg: motion.HorizonGaussian) -> "InfoState":
        h = matkit.inv_spd(hg.cov)
        return cls(h @ hg.mean, h, hg.num_robots, hg.t)


@dataclass
class MetricSeries:
    taus: list[int] = field(default_factory=list)
    theta: list[float] = field(default_factory=list)
    psi: list[float] = field(default_factory=list)
    psi_max: list[float] = field(default_factory=list)

    def append(self, tau: int, theta: float, psi: float, psi_max: float) -> None:
        if theta < 0 or psi < 0 or psi_max < 0:
            raise ValueError(f"negative metric at tau={tau}")
        self.taus.append(tau)
        self.theta.append(theta)
        self.psi.append(psi)
        self.psi_max.append(psi_max)

    def extend(self, other: "MetricSeries") -> None:
        for row in zip(other.taus, other.theta, other.psi, other.psi_max):
            self.append(*row)

    def __len__(self) -> int:
        return len(self.taus)


@dataclass
class CycleResult:
    metrics: MetricSeries
    truth: NDArray
    mean: NDArray
    cov: NDArray
    t_next: int
    candidates: int
    selected: int


@dataclass
class TrialResult:
    strategy: str
    replicate: int
    metrics: MetricSeries
    selections: list[tuple[int, int, int]] = field(default_factory=list)  # (t, |Theta|, |Phi|)


def fuse_network(state: InfoState, graphs, xis) -> InfoState:
    """Fold relative measurements step by step; a None entry in xis skips that step."""
    graphs = list(graphs)
    xis = list(xis)
    if len(graphs) != state.horizon + 1 or len(xis) != len(graphs):
        raise matkit.DimensionError(
            f"need {state.horizon + 1} graphs and measurement sets, got {len(graphs)} and {len(xis)}")
    h, b = state.H.copy(), state.b.copy()
    w = 3 * state.num_robots
    for k, (g, xi) in enumerate(zip(graphs, xis)):
        if xi is None:
            continue
        if g.num_nodes != state.num_robots:
            raise matkit.DimensionError(f"graph at step {k} has {g.num_nodes} nodes, expected {state.num_robots}")
        s = slice(k * w, (k + 1) * w)
        c3 = np.kron(netgraph.incidence(g), np.eye(3))
        h[s, s] += np.kron(netgraph.laplacian(g), np.eye(3))
        b[s] += c3 @ (np.repeat(g.weights, 3) * np.asarray(xi, dtype=float))
    return InfoState(b, h, state.num_robots, state.t)


def fuse_features(state: InfoState, selected, measurements) -> InfoState:
    """H += sum H^f, b += sum b^f for the selected features.

    `selected` is a SelectionOutcome or a sequence of FeatureInfo;
    `measurements` maps feature id to the stacked z over its frames.
    """
    infos = selected.infos if isinstance(selected, SelectionOutcome) else selected
    h, b = state.H.copy(), state.b.copy()
    for info in infos:
        if not info.triangulated:
            raise matkit.NotTriangulatedError(f"feature {info.feature_id} not triangulated")
        if info.dim != b.size:
            raise matkit.DimensionError(f"feature {info.feature_id} has dim {info.dim}, state has {b.size}")
        s = info.support
        h[np.ix_(s, s)] += info.info_block
        b[s] += info.information_vector(measurements[info.feature_id])
    return InfoState(b, h, state.num_robots, state.t)


def recover_estimate(state: InfoState) -> motion.HorizonGaussian:
    cov = matkit.inv_spd(state.H)
    return motion.HorizonGaussian(cov @ state.b, cov, state.num_robots, state.horizon, state.t)


def performance(state: InfoState, measure: Measure | str) -> float:
    f = matkit.spectral_functionals(state.H)
    return {
        Measure.VARIANCE: f.trace_inv,
        Measure.ENTROPY: f.neg_logdet,
        Measure.SPECTRAL: f.min_eig_inv,
    }[Measure(measure)]


def select_features(cs: selection.CandidateSet, strategy: str, scenario: Scenario, replicate: int,
                    t: int) -> SelectionOutcome:
    cfg = scenario.config
    key = (cfg.seed, replicate, KIND_SELECTION, t)
    q = selection.resolve_budget(cs, cfg.eps, cfg.delta, cfg.q)
    if strategy == "randomized":
        return selection.sample_randomized(cs, q, stream(*key))
    if strategy == "uniform":
        return selection.sample_uniform(cs, q, stream(*key))
    if strategy == "greedy":
        k = cfg.k
        if k is None:
            k = len(selection.sample_randomized(cs, q, stream(*key)).ids) if cs.size else 0
        return selection.select_greedy(cs, min(k, cs.size), cfg.greedy_measure)
    raise ValueError(f"unknown strategy: {strategy}")


def build_candidates(scenario: Scenario, t: int, mean, cov):
    """Horizon prediction, graphs and the candidate set seen from time t.

    Returns (horizon gaussian, prior information, graphs, candidate set). When
    t > 0 the step-0 network and frames are left out; they belong to the
    previous cycle.
    """
    cfg = scenario.config
    n_rob = scenario.num_robots
    w = 3 * n_rob
    m = min(cfg.horizon, cfg.t_end - t)
    hg = motion.predict_horizon(scenario.dynamics, scenario.plan, mean, cov, t, horizon=m)
    prior_h = motion.prior_info(hg)
    graphs = scenario.graphs(hg)
    network = netgraph.horizon_network_info(graphs, m)
    if t > 0:
        network[:w, :w] = 0.0
    infos = vision.candidate_infos(
        scenario.features, scenario.horizon_poses(hg), scenario.rigs, n_rob, m,
        cfg.cond_limit, first_step=1 if t > 0 else 0)
    return hg, prior_h, graphs, selection.CandidateSet(prior_h + network, infos)


def run_horizon_cycle(scenario: Scenario, t: int, strategy: str, replicate: int,
                      truth: NDArray, mean: NDArray, cov: NDArray) -> CycleResult:
    """Predict, select, then advance the truth one horizon (or one step).

    Cycles after the first start from the previous terminal marginal, so their
    step 0 measurements were already folded in and are not realized again.
    """
    cfg = scenario.config
    dyn, plan, n_rob = scenario.dynamics, scenario.plan, scenario.num_robots
    w = 3 * n_rob
    carried = t > 0

    hg, prior_h, graphs, cs = build_candidates(scenario, t, mean, cov)
    m = hg.horizon
    advance = m if cfg.cadence == "horizon" else 1
    outcome = select_features(cs, strategy, scenario, replicate, t)
    logger.debug("t=%d %s: %d candidates, %d selected", t, strategy, cs.size, len(outcome.ids))

    a, b_mat = dyn.team_A, dyn.team_B
    blocks = [hg.mean[k * w:(k + 1) * w] for k in range(m + 1)]
    planned = [np.linalg.lstsq(b_mat, blocks[k + 1] - a @ blocks[k], rcond=None)[0] for k in range(m)]
    prior_mean = hg.mean.copy()
    lam_min = float(np.linalg.eigvalsh(dyn.process_noise)[0])

    z_store = {info.feature_id: np.zeros((info.n_frames, 3)) for info in outcome.infos}
    xis: list = [None] * (m + 1)
    metrics = MetricSeries()
    x = np.asarray(truth, dtype=float)
    u = None
    est = None

    for k in range(advance + 1):
        tau = t + k
        if k > 0:
            x = motion.step_truth(dyn, x, u, stream(cfg.seed, replicate, KIND_TRUTH, tau), not scenario.noisy)
        if not (carried and k == 0):
            xis[k] = netgraph.relative_measurements(
                graphs[k], x, stream(cfg.seed, replicate, KIND_RELATIVE, tau), not scenario.noisy)
        for info in outcome.infos:
            gen = stream(cfg.seed, replicate, KIND_FEATURE, tau, info.feature_id) if scenario.noisy else None
            y = scenario.feature_position(info.feature_id)
            for j, (kk, i) in enumerate(info.frames):
                if kk == k:
                    z_store[info.feature_id][j] = info.frame_measurement(j, x[3 * i:3 * i + 3], y, gen)

        state = InfoState(prior_h @ prior_mean, prior_h, n_rob, t)
        state = fuse_network(state, graphs, xis)
        partial = [p for p in (info.truncated(k, cfg.cond_limit) for info in outcome.infos) if p.triangulated]
        state = fuse_features(state, partial, {p.feature_id: z_store[p.feature_id][:p.n_frames].reshape(-1)
                                               for p in partial})
        est = recover_estimate(state)
        mu_k, cov_k = est.step_block(k)

        if not (carried and k == 0):
            eig = np.linalg.eigvalsh(matkit.symmetrize(cov_k))
            metrics.append(tau, float(np.linalg.norm(x - mu_k)), float(eig[0]) / lam_min, float(eig[-1]) / lam_min)

        if k < advance:
            u = motion.tracking_control(plan.team_reference(tau + 1), mu_k)
            # future prior means move with the applied control
            d = b_mat @ (u - planned[k])
            for j in range(k + 1, m + 1):
                prior_mean[j * w:(j + 1) * w] += d
                d = a @ d

    mean_next, cov_next = est.step_block(advance)
    return CycleResult(metrics, x, mean_next, cov_next, t + advance, cs.size, len(outcome.ids))


def run_trial(scenario: Scenario, strategy: str, replicate: int = 0) -> TrialResult:
    """Chain horizon cycles from tau = 0 to t_e."""
    cfg = scenario.config
    mean = scenario.plan.team_reference(0)
    cov = scenario.initial_cov()
    truth = mean.copy()
    if scenario.noisy:
        gen = stream(cfg.seed, replicate, KIND_TRUTH, 0)
        truth = truth + np.sqrt(cfg.init_cov) * gen.standard_normal(truth.size)

    result = TrialResult(strategy, replicate, MetricSeries())
    t = 0
    while t < cfg.t_end:
        cycle = run_horizon_cycle(scenario, t, strategy, replicate, truth, mean, cov)
        result.metrics.extend(cycle.metrics)
        result.selections.append((t, cycle.candidates, cycle.selected))
        truth, mean, cov, t = cycle.truth, cycle.mean, cycle.cov, cycle.t_next
    logger.info("%s replicate %d: %d steps, mean theta %.4g", strategy, replicate,
                len(result.metrics), float(np.mean(result.metrics.theta)))
    return result
