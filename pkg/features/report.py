"""
Artifact emission: plot-ready CSV, gnuplot scripts, and text summaries.
"""

import logging
from pathlib import Path

import pandas as pd

logger = logging.getLogger(__name__)


class ReportError(OSError):
    """An artifact could not be written."""


def write_csv(df: pd.DataFrame, path: str | Path) -> Path:
    """UTF-8, LF endings, header row, round-trip float rendering."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    logger.info("wrote %s (%d rows)", path, len(df))
    return path


def write_text(text: str, path: str | Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e}") from e
    logger.info("wrote %s", path)
    return path


def gnuplot_lines(csv_name: str, x: str, ys: list[str], group: str | None, groups: list, title: str,
                  ylabel: str) -> str:
    """Script plotting columns of a CSV, one line per group value (or per column)."""
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set title '{title}'",
        f"set xlabel '{x}'",
        f"set ylabel '{ylabel}'",
        "set grid",
    ]
    plots = []
    for y in ys:
        if group is None:
            plots.append(f"'{csv_name}' using '{x}':'{y}' with lines title '{y}'")
            continue
        for g in groups:
            plots.append(
                f"'{csv_name}' using (strcol('{group}') eq '{g}' ? column('{x}') : 1/0):'{y}' "
                f"with lines title '{y} {g}'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def gnuplot_histogram(csv_name: str, betas: list[float]) -> str:
    lines = [
        "set datafile separator ','",
        "set title 'Leverage score histogram'",
        "set xlabel 'leverage score'",
        "set ylabel 'features'",
        "set style fill transparent solid 0.4",
    ]
    plots = [
        f"'{csv_name}' using (column('beta') == {b!r} ? (column('bin_lo') + column('bin_hi')) / 2 : 1/0)"
        f":'count' with boxes title 'beta={b:g}'"
        for b in betas
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def format_comparison(mean_df: pd.DataFrame) -> str:
    lines = ["📊 Strategy Comparison\n", "📈 TIME-AVERAGED METRICS:"]
    for strategy, group in mean_df.groupby("strategy", sort=False):
        lines.append(f"  {strategy:11} theta={group['theta'].mean():.6g}  psi={group['psi'].mean():.6g}")
    return "\n".join(lines)


def format_sweep(sweep_df: pd.DataFrame) -> str:
    lines = ["📡 Connectivity Sweep\n", "📈 MEAN PSI PER BETA:"]
    for row in sweep_df.itertuples(index=False):
        lines.append(f"  beta={row.beta:<6g} psi={row.mean_psi:.6g}  theta={row.mean_theta:.6g}")
    return "\n".join(lines)


def format_histogram(stats: pd.DataFrame) -> str:
    lines = ["📊 Leverage Scores\n", "📈 SPREAD PER BETA:"]
    for row in stats.itertuples(index=False):
        lines.append(f"  beta={row.beta:<6g} features={row.features}  std={row.std:.6g}  sum={row.total:.6g}")
    return "\n".join(lines)


def format_verification(df: pd.DataFrame) -> str:
    passed = int(df["passed"].sum())
    lines = ["🧪 Verification Report\n", f"📋 RESULT: {passed}/{len(df)} checks passed\n"]
    for battery, group in df.groupby("battery", sort=False):
        lines.append(f"{battery.upper()}:")
        for row in group.itertuples(index=False):
            mark = "✅" if row.passed else "❌"
            lines.append(f"  {mark} {row.check}: {row.failures}/{row.cases} failures, margin {row.margin:.3e}")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
