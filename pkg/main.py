import argparse
import sys

from app.config import STRATEGIES, ConfigError, configure_logging, default_out_dir, load_config, validate_env
from features import experiments, verify
from features.report import ReportError


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(
        seed=args.seed,
        replicates=getattr(args, "replicates", None),
        workers=args.workers,
        corrupt_pmf=True if getattr(args, "corrupt_pmf", False) else None,
    )


def _betas(args, cfg) -> list[float]:
    if args.betas:
        return [float(b) for b in args.betas.split(",") if b.strip()]
    return [cfg.beta]


# --- Handlers ---
def simulate(args) -> dict:
    """Run the strategy comparison."""
    cfg = _config(args)
    strategies = [args.strategy] if args.strategy else list(STRATEGIES)
    art = experiments.run_comparison(cfg, args.out, strategies)
    return {"success": True, "message": art.summary, "artifacts": art}


def sweep(args) -> dict:
    """Time-averaged covariance ratio across communication strengths."""
    cfg = _config(args)
    art = experiments.run_connectivity_sweep(cfg, _betas(args, cfg), args.out, args.strategy or "randomized")
    return {"success": True, "message": art.summary, "artifacts": art}


def histogram(args) -> dict:
    """Leverage-score histograms at t = 0 per beta."""
    cfg = _config(args)
    art = experiments.run_leverage_histogram(cfg, _betas(args, cfg), args.out)
    return {"success": True, "message": art.summary, "artifacts": art}


def run_verify(args) -> dict:
    cfg = _config(args)
    art = verify.run_verification(cfg, args.out)
    return {"success": art.passed, "message": art.summary, "artifacts": art}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lodestar", description="Networked visual-feature selection experiments")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="scenario JSON (defaults to the full-scale scenario)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=str(default_out_dir()))
        p.add_argument("--workers", type=int, default=None)
        return p

    p = common(sub.add_parser("simulate", help="compare selection strategies"))
    p.add_argument("--strategy", choices=STRATEGIES, default=None)
    p.add_argument("--replicates", type=int, default=None)
    p.set_defaults(handler=simulate)

    p = common(sub.add_parser("sweep", help="connectivity sweep over beta"))
    p.add_argument("--betas", default=None, help="comma-separated list, e.g. 0,1,2,5")
    p.add_argument("--strategy", choices=STRATEGIES, default=None, help="selection strategy (default randomized)")
    p.add_argument("--replicates", type=int, default=None)
    p.set_defaults(handler=sweep)

    p = common(sub.add_parser("histogram", help="leverage-score histograms"))
    p.add_argument("--betas", default=None)
    p.set_defaults(handler=histogram)

    p = common(sub.add_parser("verify", help="run the property battery"))
    p.add_argument("--corrupt-pmf", action="store_true", help="inject an unnormalized pmf (debug)")
    p.set_defaults(handler=run_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    print(f"🧭 Lodestar: {args.command}")

    bad_env = validate_env()
    if bad_env:
        print("Warning: Ignoring malformed environment variables:", ", ".join(bad_env))

    try:
        result = args.handler(args)
    except ConfigError as e:
        print(f"❌ Config error: {e}")
        return EXIT_CONFIG
    except (ReportError, OSError) as e:
        print(f"❌ I/O error: {e}")
        return EXIT_CONFIG
    except ValueError as e:
        print(f"❌ {e}")
        return EXIT_CONFIG

    print(result["message"])
    for path in result["artifacts"].files:
        print(f"  wrote {path}")
    if not result["success"]:
        print("❌ Verification failed")
        return EXIT_VERIFY_FAILED
    print("✅ Done")
    return EXIT_OK


# --- Runner ---
if __name__ == "__main__":
    sys.exit(main())
