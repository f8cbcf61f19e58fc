"""
Property battery over randomly generated instances.

Each check reports the number of cases, the failures, and the worst margin
(the smallest slack observed; negative means violated). Seeds derive from the
master seed so the report is reproducible.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from app.config import ScenarioConfig
from features import matkit, netgraph, report, selection
from features.experiments import RunArtifacts
from features.jobs import run_jobs, spawn_generators
from features.selection import CandidateSet, Measure

logger = logging.getLogger(__name__)


@dataclass
class Check:
    battery: str
    check: str
    cases: int = 0
    failures: int = 0
    margin: float = math.inf

    def record(self, slack: float) -> None:
        self.cases += 1
        self.margin = min(self.margin, slack)
        if not slack >= 0:
            self.failures += 1

    @property
    def passed(self) -> bool:
        return self.cases > 0 and self.failures == 0

    def row(self) -> dict:
        return {"battery": self.battery, "check": self.check, "cases": self.cases,
                "failures": self.failures, "margin": self.margin, "passed": self.passed}


def random_spd(rng: np.random.Generator, n: int, lo: float = 0.5, hi: float = 2.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return matkit.symmetrize((q * rng.uniform(lo, hi, n)) @ q.T)


def random_psd(rng: np.random.Generator, n: int, max_rank: int = 3) -> np.ndarray:
    g = rng.standard_normal((int(rng.integers(1, min(max_rank, n) + 1)), n))
    return g.T @ g


def random_candidate_set(rng: np.random.Generator, n: int, m: int, zero_prob: float = 0.1) -> CandidateSet:
    mats = [np.zeros((n, n)) if rng.random() < zero_prob else random_psd(rng, n) for _ in range(m)]
    return CandidateSet.from_matrices(random_spd(rng, n), mats)


def random_graph(rng: np.random.Generator, num_nodes: int) -> netgraph.CommGraph:
    pairs = [(i, j) for i in range(num_nodes) for j in range(i + 1, num_nodes)]
    keep = [p for p in pairs if rng.random() < 0.5]
    return netgraph.CommGraph(num_nodes, tuple(keep), rng.uniform(0.1, 2.0, len(keep)))


def grown_graph(rng: np.random.Generator, g: netgraph.CommGraph) -> netgraph.CommGraph:
    """Same graph plus one weighted edge (or a heavier edge when complete)."""
    present = set(g.edges)
    missing = [(i, j) for i in range(g.num_nodes) for j in range(i + 1, g.num_nodes) if (i, j) not in present]
    if missing:
        i, j = missing[int(rng.integers(len(missing)))]
        return g.with_edge(i, j, float(rng.uniform(0.1, 2.0)))
    w = g.weights.copy()
    w[int(rng.integers(len(w)))] += float(rng.uniform(0.1, 2.0))
    return netgraph.CommGraph(g.num_nodes, g.edges, w)


def network_pair(rng: np.random.Generator, num_nodes: int, horizon: int):
    """Horizon network information before and after growing one step's graph."""
    graphs = [random_graph(rng, num_nodes) for _ in range(horizon + 1)]
    grown = list(graphs)
    k = int(rng.integers(horizon + 1))
    grown[k] = grown_graph(rng, graphs[k])
    return netgraph.horizon_network_info(graphs, horizon), netgraph.horizon_network_info(grown, horizon)


def check_leverage(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Check]:
    norm = Check("leverage", "scores sum to n")
    pmf = Check("leverage", "pmf sums to one")
    bsum = Check("b_tilde", "sum equals identity")
    btr = Check("b_tilde", "trace equals score")
    for _ in range(cfg.verify_instances):
        n = int(rng.integers(1, cfg.verify_max_dim + 1))
        m = int(rng.integers(1, cfg.verify_max_features + 1))
        cs = random_candidate_set(rng, n, m)
        prof = selection.leverage_profile(cs)
        probs = prof.pmf * 1.1 if cfg.corrupt_pmf else prof.pmf
        norm.record(1e-8 * n - abs(prof.scores.sum() - n))
        pmf.record(1e-10 - abs(probs.sum() - 1))
        bt = selection.b_tilde_matrices(cs)
        bsum.record(1e-8 * n - np.linalg.norm(sum(bt) - np.eye(n)))
        btr.record(min(1e-9 * r + 1e-14 - abs(np.trace(b) - r) for b, r in zip(bt, prof.scores)))
    return [norm, pmf, bsum, btr]


def check_connectivity(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Check]:
    """Growing the network never raises any performance measure."""
    checks = {m: Check("connectivity", f"{m.value} non-increasing") for m in Measure}
    for _ in range(cfg.verify_probe_instances):
        num_nodes = int(rng.integers(2, 5))
        horizon = int(rng.integers(0, 3))
        n = 3 * num_nodes * (horizon + 1)
        net, grown = network_pair(rng, num_nodes, horizon)
        features = sum((random_psd(rng, n) for _ in range(int(rng.integers(0, 4)))), np.zeros((n, n)))
        base = random_spd(rng, n) + features
        before = matkit.spectral_functionals(base + net)
        after = matkit.spectral_functionals(base + grown)
        for m, idx in ((Measure.VARIANCE, 0), (Measure.ENTROPY, 1), (Measure.SPECTRAL, 2)):
            checks[m].record(1e-9 * max(abs(before[idx]), 1.0) - (after[idx] - before[idx]))
    return list(checks.values())


def _branch_instance(rng, n: int, m: int, dominant: bool):
    """Feature 0 dominates the mean of the others (or is dominated by it)."""
    others = [random_psd(rng, n, max_rank=n) for _ in range(m - 1)]
    mean_others = sum(others) / (m - 1)
    if dominant:
        target = mean_others + random_psd(rng, n)
    else:
        half = matkit.symmetrize(_sqrtm_psd(mean_others))
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        shrink = (q * rng.uniform(0.0, 1.0, n)) @ q.T
        target = matkit.symmetrize(half @ shrink @ half)
    return [target] + others


def _sqrtm_psd(m):
    w, v = np.linalg.eigh(matkit.symmetrize(m))
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.T


def check_leverage_monotonicity(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Check]:
    dom = Check("leverage_monotonicity", "dominant feature score non-increasing")
    rev = Check("leverage_monotonicity", "dominated feature score non-decreasing")
    for check, dominant in ((dom, True), (rev, False)):
        for _ in range(cfg.verify_branch_instances):
            num_nodes = int(rng.integers(2, 4))
            horizon = int(rng.integers(0, 2))
            n = 3 * num_nodes * (horizon + 1)
            m = int(rng.integers(2, 7))
            mats = _branch_instance(rng, n, m, dominant)
            prior = random_spd(rng, n, 0.1, 1.0)
            net, grown = network_pair(rng, num_nodes, horizon)
            r0 = selection.leverage_profile(CandidateSet.from_matrices(prior + net, mats)).scores[0]
            r1 = selection.leverage_profile(CandidateSet.from_matrices(prior + grown, mats)).scores[0]
            slack = 1e-9 * max(r0, 1e-12)
            check.record(slack - (r1 - r0) if dominant else slack - (r0 - r1))
    return [dom, rev]


def tail_sums(b_tilde, scores, counts: np.ndarray) -> np.ndarray:
    """sum_i X_i with X = B~^f / r_f, for each row of multinomial draw counts."""
    normalized = np.stack([b / r for b, r in zip(b_tilde, scores)])
    return np.einsum("tf,fij->tij", counts, normalized)


def check_chernoff_tail(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Check]:
    n, eps, trials = 9, 0.5, cfg.verify_tail_trials
    cs = random_candidate_set(rng, n, 20, zero_prob=0.0)
    prof = selection.leverage_profile(cs)
    bt = selection.b_tilde_matrices(cs)
    out = []
    for q in cfg.verify_tail_q:
        check = Check("chernoff_tail", f"q={q} tail below bound")
        counts = rng.multinomial(q, prof.pmf / prof.pmf.sum(), size=trials)
        lam = np.linalg.eigvalsh(tail_sums(bt, prof.scores, counts))[:, 0]
        freq = float(np.mean(lam <= (1 - eps) * q / n))
        sigma = math.sqrt(freq * (1 - freq) / trials)
        check.record(selection.chernoff_tail_bound(n, q, eps) + 3 * sigma - freq)
        logger.debug("tail q=%d: empirical %.4f, bound %.4g", q, freq, selection.chernoff_tail_bound(n, q, eps))
        out.append(check)
    return out


def check_cone_hold(cfg: ScenarioConfig, rng: np.random.Generator) -> list[Check]:
    n, eps, delta = 9, 0.5, cfg.verify_hold_delta
    cs = random_candidate_set(rng, n, cfg.verify_hold_features, zero_prob=0.0)
    q = selection.sample_size(n, eps, delta)
    profile = selection.leverage_profile(cs)
    trial_rngs = spawn_generators(int(rng.integers(2 ** 32)), cfg.verify_hold_trials)

    def one(gen):
        outcome = selection.sample_randomized(cs, q, gen, profile)
        return selection.verify_cone_bound(cs, outcome, eps, replicates=cfg.chi_replicates,
                                           seed=int(gen.integers(2 ** 32)), tol=cfg.psd_tol).holds

    holds = run_jobs(one, trial_rngs, cfg.workers)
    trials = len(holds)
    target = 0.75 - delta
    sigma = math.sqrt(target * (1 - target) / trials)
    check = Check("cone_bound", f"hold frequency >= {target:g}")
    check.record(float(np.mean(holds)) - (target - 3 * sigma))
    return [check]


BATTERIES = (
    check_leverage,
    check_connectivity,
    check_leverage_monotonicity,
    check_chernoff_tail,
    check_cone_hold,
)


def run_battery(cfg: ScenarioConfig) -> pd.DataFrame:
    rows = []
    for idx, battery in enumerate(BATTERIES):
        rng = np.random.default_rng([cfg.seed, idx])
        logger.info("running %s", battery.__name__)
        rows += [c.row() for c in battery(cfg, rng)]
    return pd.DataFrame(rows, columns=["battery", "check", "cases", "failures", "margin", "passed"])


def run_verification(cfg: ScenarioConfig, out_dir: str | Path) -> RunArtifacts:
    out_dir = Path(out_dir)
    df = run_battery(cfg)
    text = report.format_verification(df)
    art = RunArtifacts()
    art.verification_report = report.write_text(text, out_dir / "verification.txt")
    art.files = [report.write_csv(df, out_dir / "verification.csv"), art.verification_report]
    art.summary = text
    art.passed = bool(df["passed"].all())
    return art
