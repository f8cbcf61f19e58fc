import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# logging.getLevelNamesMapping is Python 3.11+; same mapping on older interpreters
_level_names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))

# Numerical gates shared by every module
PSD_TOL = 1e-8
COND_LIMIT = 1e8

ENV_KEYS = {
    "LODESTAR_OUT_DIR": str,
    "LODESTAR_WORKERS": int,
    "LODESTAR_LOG_LEVEL": str,
}

STRATEGIES = ("randomized", "uniform", "greedy")
MEASURES = ("variance", "entropy", "spectral")
CADENCES = ("horizon", "step")
TOPOLOGY_TOKENS = ("complete", "ring", "path")
FEATURE_LAYOUTS = ("views", "box")


class ConfigError(ValueError):
    """Raised when a scenario file or override is invalid."""


def validate_env() -> list[str]:
    """Return the names of environment overrides that are set but malformed."""
    bad = []
    for key, kind in ENV_KEYS.items():
        raw = os.getenv(key)
        if raw is None or raw == "":
            continue
        if kind is int:
            try:
                if int(raw) < 1:
                    bad.append(key)
            except ValueError:
                bad.append(key)
        elif key == "LODESTAR_LOG_LEVEL" and raw.upper() not in _level_names():
            bad.append(key)
    return bad


def default_out_dir() -> Path:
    return Path(os.getenv("LODESTAR_OUT_DIR") or "results")


def default_workers() -> int:
    try:
        return max(1, int(os.getenv("LODESTAR_WORKERS", "1")))
    except ValueError:
        return 1


def configure_logging(level: str | None = None) -> None:
    level = (level or os.getenv("LODESTAR_LOG_LEVEL") or "INFO").upper()
    if level not in _level_names():
        level = "INFO"
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


@dataclass(frozen=True)
class ScenarioConfig:
    """All experiment parameters. Field names are the JSON keys."""

    # team and horizon
    num_robots: int = 10
    horizon: int = 20
    t_end: int = 200
    lane_scale: float = 1e4

    # noise levels
    process_noise: float = 0.01
    init_cov: float = 0.1
    pixel_sigma: float | list[float] = 0.05
    relative_noise: float = 1.0
    realize_noise: bool = True

    # network
    alpha: float = 1.0
    beta: float = 0.0
    topology: str | list[list[int]] = "complete"

    # features and cameras
    feature_count: int = 800
    feature_layout: str = "views"
    feature_margin: float = 20.0
    feature_csv: str | None = None
    fov_deg: float = 60.0
    max_range: float = 40.0
    camera_offset: list[float] = field(default_factory=lambda: [0.0, 0.0, 0.0])

    # selection
    strategy: str = "randomized"
    q: int | None = None
    k: int | None = None
    eps: float = 0.5
    delta: float = 0.25
    greedy_measure: str = "entropy"
    cadence: str = "horizon"
    chi_replicates: int = 64

    # runs
    seed: int = 0
    replicates: int = 1
    workers: int = 1
    histogram_bins: int = 64

    # verification battery sizes
    verify_instances: int = 1000
    verify_max_dim: int = 15
    verify_max_features: int = 30
    verify_probe_instances: int = 500
    verify_branch_instances: int = 200
    verify_tail_trials: int = 5000
    verify_tail_q: list[int] = field(default_factory=lambda: [20, 50, 100])
    verify_hold_trials: int = 500
    verify_hold_features: int = 40
    verify_hold_delta: float = 0.2
    corrupt_pmf: bool = False

    # numerics
    psd_tol: float = PSD_TOL
    cond_limit: float = COND_LIMIT

    @property
    def state_dim(self) -> int:
        return 3 * self.num_robots * (self.horizon + 1)

    def robot_sigmas(self) -> list[float]:
        if isinstance(self.pixel_sigma, (int, float)):
            return [float(self.pixel_sigma)] * self.num_robots
        return [float(s) for s in self.pixel_sigma]

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Copy with non-None overrides applied, re-validated."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        if not changes:
            return self
        unknown = sorted(set(changes) - {f.name for f in fields(self)})
        if unknown:
            raise ConfigError(f"Unknown config fields: {', '.join(unknown)}")
        updated = replace(self, **changes)
        problems = config_problems(updated)
        if problems:
            raise ConfigError("; ".join(problems))
        return updated

    def to_dict(self) -> dict:
        return asdict(self)


def config_problems(cfg: ScenarioConfig) -> list[str]:
    problems = []
    if cfg.num_robots < 1:
        problems.append("num_robots must be >= 1")
    if cfg.horizon < 1:
        problems.append("horizon must be >= 1")
    if cfg.t_end < cfg.horizon:
        problems.append("t_end must be >= horizon")
    for name in ("process_noise", "init_cov", "relative_noise", "alpha", "max_range", "lane_scale"):
        if not getattr(cfg, name) > 0:
            problems.append(f"{name} must be > 0")
    if cfg.beta < 0:
        problems.append("beta must be >= 0")
    sigmas = cfg.robot_sigmas()
    if len(sigmas) != cfg.num_robots:
        problems.append("pixel_sigma list length must equal num_robots")
    if any(s <= 0 for s in sigmas):
        problems.append("pixel_sigma must be > 0")
    if not 0 < cfg.fov_deg < 180:
        problems.append("fov_deg must be in (0, 180)")
    if len(cfg.camera_offset) != 3:
        problems.append("camera_offset must have 3 entries")
    if isinstance(cfg.topology, str):
        if cfg.topology not in TOPOLOGY_TOKENS:
            problems.append(f"topology must be one of {TOPOLOGY_TOKENS} or an edge list")
    elif any(len(e) != 2 for e in cfg.topology):
        problems.append("topology edges must be [i, j] pairs")
    if cfg.feature_count < 0:
        problems.append("feature_count must be >= 0")
    if cfg.feature_layout not in FEATURE_LAYOUTS:
        problems.append(f"feature_layout must be one of {FEATURE_LAYOUTS}")
    if cfg.strategy not in STRATEGIES:
        problems.append(f"strategy must be one of {STRATEGIES}")
    if cfg.greedy_measure not in MEASURES:
        problems.append(f"greedy_measure must be one of {MEASURES}")
    if cfg.cadence not in CADENCES:
        problems.append(f"cadence must be one of {CADENCES}")
    if cfg.q is not None and cfg.q < 1:
        problems.append("q must be >= 1")
    if cfg.k is not None and cfg.k < 0:
        problems.append("k must be >= 0")
    if not 0 < cfg.eps < 1:
        problems.append("eps must be in (0, 1)")
    if not 0 < cfg.delta < 0.75:
        problems.append("delta must be in (0, 3/4)")
    if not 0 < cfg.verify_hold_delta < 0.75:
        problems.append("verify_hold_delta must be in (0, 3/4)")
    for name in ("replicates", "workers", "chi_replicates", "histogram_bins"):
        if getattr(cfg, name) < 1:
            problems.append(f"{name} must be >= 1")
    if cfg.seed < 0:
        problems.append("seed must be >= 0")
    if not cfg.psd_tol > 0 or not cfg.cond_limit > 1:
        problems.append("psd_tol must be > 0 and cond_limit > 1")
    return problems


def config_from_dict(data: dict) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"Unknown config fields: {', '.join(unknown)}")
    try:
        cfg = ScenarioConfig(**data)
    except TypeError as e:
        raise ConfigError(f"Malformed config: {e}") from e
    problems = config_problems(cfg)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def load_config(path: str | Path | None) -> ScenarioConfig:
    """Load a scenario JSON file; None gives the full-scale defaults."""
    if path is None:
        cfg = ScenarioConfig(workers=default_workers())
        return cfg
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold a JSON object")
    data.setdefault("workers", default_workers())
    return config_from_dict(data)
