"""
Experiment orchestration: strategy comparison, connectivity sweep, and
leverage-score histograms. Every run writes plot-ready CSV into an output
directory and returns the artifact paths.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from app.config import STRATEGIES, ScenarioConfig
from features import estimator, report, selection
from features.jobs import run_jobs
from features.scenario import build_scenario

logger = logging.getLogger(__name__)


@dataclass
class RunArtifacts:
    metrics_csv: Path | None = None
    histogram_csv: Path | None = None
    verification_report: Path | None = None
    files: list[Path] = field(default_factory=list)
    summary: str = ""
    passed: bool = True


def trials_frame(trials) -> pd.DataFrame:
    rows = []
    for tr in trials:
        m = tr.metrics
        for tau, theta, psi, psi_max in zip(m.taus, m.theta, m.psi, m.psi_max):
            rows.append({"strategy": tr.strategy, "replicate": tr.replicate, "tau": tau,
                         "theta": theta, "psi": psi, "psi_max": psi_max})
    return pd.DataFrame(rows, columns=["strategy", "replicate", "tau", "theta", "psi", "psi_max"])


def mean_frame(df: pd.DataFrame, keys: list[str]) -> pd.DataFrame:
    return df.groupby(keys, sort=False, as_index=False)[["theta", "psi", "psi_max"]].mean()


def run_comparison(cfg: ScenarioConfig, out_dir: str | Path, strategies=STRATEGIES) -> RunArtifacts:
    """All strategies on common random numbers, averaged over replicates."""
    out_dir = Path(out_dir)
    scenario = build_scenario(cfg)
    jobs = [(s, r) for s in strategies for r in range(cfg.replicates)]
    logger.info("comparison: %d strategies x %d replicates", len(strategies), cfg.replicates)
    trials = run_jobs(lambda job: estimator.run_trial(scenario, *job), jobs, cfg.workers)

    per_rep = trials_frame(trials)
    means = mean_frame(per_rep, ["strategy", "tau"])
    art = RunArtifacts()
    art.metrics_csv = report.write_csv(means, out_dir / "metrics_mean.csv")
    art.files = [
        art.metrics_csv,
        report.write_csv(per_rep, out_dir / "metrics_replicates.csv"),
        report.write_text(report.gnuplot_lines("metrics_mean.csv", "tau", ["theta"], "strategy", list(strategies),
                                               "Localization error per strategy", "theta"),
                          out_dir / "metrics_theta.gp"),
        report.write_text(report.gnuplot_lines("metrics_mean.csv", "tau", ["psi"], "strategy", list(strategies),
                                               "Covariance ratio per strategy", "psi"),
                          out_dir / "metrics_psi.gp"),
    ]
    art.summary = report.format_comparison(means)
    return art


def run_connectivity_sweep(cfg: ScenarioConfig, betas, out_dir: str | Path,
                           strategy: str = "randomized") -> RunArtifacts:
    """One strategy (randomized by default) at each beta; time-averaged psi per beta."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("betas must be nonempty")
    out_dir = Path(out_dir)
    scenarios = {b: build_scenario(cfg.with_overrides(beta=b)) for b in betas}
    jobs = [(b, r) for b in betas for r in range(cfg.replicates)]
    trials = run_jobs(lambda job: estimator.run_trial(scenarios[job[0]], strategy, job[1]), jobs, cfg.workers)

    frames = []
    for (b, _), tr in zip(jobs, trials):
        df = trials_frame([tr])
        df.insert(0, "beta", b)
        frames.append(df)
    per_rep = pd.concat(frames, ignore_index=True)
    series = mean_frame(per_rep, ["beta", "tau"])
    sweep = (series.groupby("beta", sort=False, as_index=False)
             .agg(mean_psi=("psi", "mean"), mean_psi_max=("psi_max", "mean"), mean_theta=("theta", "mean")))

    art = RunArtifacts()
    art.metrics_csv = report.write_csv(sweep, out_dir / "sweep.csv")
    art.files = [
        art.metrics_csv,
        report.write_csv(series, out_dir / "sweep_series.csv"),
        report.write_text(report.gnuplot_lines("sweep_series.csv", "tau", ["psi"], "beta", [f"{b:g}" for b in betas],
                                               "Covariance ratio per beta", "psi"),
                          out_dir / "sweep_series.gp"),
    ]
    art.summary = report.format_sweep(sweep)
    return art


def leverage_scores_at_start(cfg: ScenarioConfig) -> selection.LeverageProfile | None:
    scenario = build_scenario(cfg)
    _, _, _, cs = estimator.build_candidates(scenario, 0, scenario.plan.team_reference(0), scenario.initial_cov())
    if cs.size == 0:
        logger.warning("beta=%g: no visible features at t=0", cfg.beta)
        return None
    return selection.leverage_profile(cs)


def run_leverage_histogram(cfg: ScenarioConfig, betas, out_dir: str | Path) -> RunArtifacts:
    """Leverage profile at t = 0 per beta, binned over the observed range."""
    betas = [float(b) for b in betas]
    if not betas:
        raise ValueError("betas must be nonempty")
    out_dir = Path(out_dir)
    profiles = run_jobs(lambda b: leverage_scores_at_start(cfg.with_overrides(beta=b)), betas, cfg.workers)

    score_rows, hist_rows, stat_rows = [], [], []
    for b, prof in zip(betas, profiles):
        if prof is None:
            continue
        score_rows += [{"beta": b, "feature_id": fid, "score": s} for fid, s in zip(prof.ids, prof.scores)]
        counts, edges = np.histogram(prof.scores, bins=cfg.histogram_bins)
        hist_rows += [{"beta": b, "bin_lo": edges[i], "bin_hi": edges[i + 1], "count": int(c)}
                      for i, c in enumerate(counts)]
        std = float(np.std(prof.scores, ddof=1)) if len(prof.scores) > 1 else 0.0
        stat_rows.append({"beta": b, "features": len(prof.scores), "std": std, "total": float(prof.scores.sum())})

    hist = pd.DataFrame(hist_rows, columns=["beta", "bin_lo", "bin_hi", "count"])
    art = RunArtifacts()
    art.histogram_csv = report.write_csv(hist, out_dir / "leverage_histogram.csv")
    art.files = [
        art.histogram_csv,
        report.write_csv(pd.DataFrame(score_rows, columns=["beta", "feature_id", "score"]),
                         out_dir / "leverage_scores.csv"),
        report.write_text(report.gnuplot_histogram("leverage_histogram.csv", betas), out_dir / "leverage_histogram.gp"),
    ]
    art.summary = report.format_histogram(pd.DataFrame(stat_rows, columns=["beta", "features", "std", "total"]))
    return art
