"""Cross-run KPI summaries: aggregates kpi/samples/trace CSVs from simulation
output directories into a summary table (text + CSV) and renders the
comparison figures (reselection/RLF rates, RSRP CDF, smoothed RSRP trace)."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .sim import rsrp_cdf, smooth_trace

TRACE_SMOOTHING_WINDOW = 15


@dataclass
class RunSummary:
    label: str
    delta_ho_db: float | None
    beta: float | None
    reselections_per_user_s: float
    rlf_per_user_s: float
    p10_rsrp_dbm: float | None
    samples: np.ndarray | None
    trace_path: Path | None

    @property
    def display_name(self):
        if self.delta_ho_db is not None:
            return f"{self.label} {self.delta_ho_db:g}dB"
        return self.label


def _read_csv_rows(path):
    with open(path) as fh:
        rows = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(rows))


def _maybe_float(raw):
    return float(raw) if raw not in (None, "") else None


def collect_runs(in_dir, percentile: float = 0.10) -> list[RunSummary]:
    """Load every run (a directory holding kpi.csv) under in_dir."""
    root = Path(in_dir)
    kpi_files = sorted(root.glob("kpi.csv")) + sorted(p for p in root.glob("*/kpi.csv"))
    runs = []
    for kpi_path in kpi_files:
        run_dir = kpi_path.parent
        samples = None
        p10 = None
        samples_path = run_dir / "rsrp_samples.csv"
        if samples_path.exists():
            samples = np.array([float(r["dbm"]) for r in _read_csv_rows(samples_path)])
            if len(samples):
                p10 = rsrp_cdf(samples, percentile)
        trace_path = run_dir / "trace.csv"
        for row in _read_csv_rows(kpi_path):
            runs.append(RunSummary(
                label=row["controller"],
                delta_ho_db=_maybe_float(row.get("delta_ho")),
                beta=_maybe_float(row.get("beta")),
                reselections_per_user_s=float(row["reselections_per_user_s"]),
                rlf_per_user_s=float(row["rlf_per_user_s"]),
                p10_rsrp_dbm=p10,
                samples=samples,
                trace_path=trace_path if trace_path.exists() else None))
    return runs


def _reference_run(runs):
    """The BR-MIN run (beta=1) used as the denominator of ratio columns."""
    for r in runs:
        if r.beta is not None and r.beta == 1.0:
            return r
    return None


def _fmt(x, digits=4):
    return "" if x is None else f"{x:.{digits}f}"


def write_summary_csv(path, runs, percentile, comments=()):
    ref = _reference_run(runs)
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("controller,delta_ho,beta,reselections_per_user_s,rlf_per_user_s,"
                 f"p{int(round(percentile * 100))}_rsrp_dbm,"
                 "rlf_ratio_vs_brmin,resel_ratio_vs_brmin\n")
        for r in runs:
            rlf_ratio = resel_ratio = None
            if ref is not None and ref is not r:
                if ref.rlf_per_user_s > 0:
                    rlf_ratio = r.rlf_per_user_s / ref.rlf_per_user_s
                if ref.reselections_per_user_s > 0:
                    resel_ratio = r.reselections_per_user_s / ref.reselections_per_user_s
            fh.write(f"{r.label},{'' if r.delta_ho_db is None else f'{r.delta_ho_db:g}'},"
                     f"{'' if r.beta is None else f'{r.beta:g}'},"
                     f"{r.reselections_per_user_s:.6f},{r.rlf_per_user_s:.6f},"
                     f"{_fmt(r.p10_rsrp_dbm, 2)},{_fmt(rlf_ratio)},{_fmt(resel_ratio)}\n")


def format_summary_table(runs, percentile) -> str:
    ref = _reference_run(runs)
    header = (f"{'run':<16} {'resel/u/s':>10} {'rlf/u/s':>10} "
              f"{'p' + str(int(round(percentile * 100))) + ' dBm':>10} {'rlf/BRMIN':>10}")
    lines = [header, "-" * len(header)]
    for r in runs:
        ratio = ""
        if ref is not None and ref is not r and ref.rlf_per_user_s > 0:
            ratio = f"{r.rlf_per_user_s / ref.rlf_per_user_s:.2f}"
        p10 = "" if r.p10_rsrp_dbm is None else f"{r.p10_rsrp_dbm:.2f}"
        lines.append(f"{r.display_name:<16} {r.reselections_per_user_s:>10.3f} "
                     f"{r.rlf_per_user_s:>10.3f} {p10:>10} {ratio:>10}")
    return "\n".join(lines)


def plot_kpi_rates(path, runs):
    """Grouped bars of reselection and RLF rates per run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(runs))
    width = 0.38
    ax.bar(x - width / 2, [r.reselections_per_user_s for r in runs], width,
           label="beam reselections")
    ax.bar(x + width / 2, [r.rlf_per_user_s for r in runs], width,
           label="radio link failures")
    ax.set_xticks(x, [r.display_name for r in runs], rotation=20, ha="right")
    ax.set_ylabel("events per user per second")
    ax.grid(axis="y", alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rsrp_cdf(path, runs):
    """Empirical CDF of serving-beam RSRP per run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for r in runs:
        if r.samples is None or len(r.samples) == 0:
            continue
        ordered = np.sort(r.samples)
        cdf = np.arange(1, len(ordered) + 1) / len(ordered)
        ax.plot(ordered, cdf, label=r.display_name)
    ax.set_xlabel("RSRP [dBm]")
    ax.set_ylabel("CDF")
    ax.grid(alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _longest_ue_trace(trace_path):
    """(t_ms, rsrp) of the UE with the most samples in a trace.csv."""
    per_ue = {}
    for row in _read_csv_rows(trace_path):
        per_ue.setdefault(row["ue"], []).append((float(row["t_ms"]), float(row["rsrp_dbm"])))
    if not per_ue:
        return None
    best = max(per_ue.values(), key=len)
    best.sort()
    return np.array([t for t, _ in best]), np.array([v for _, v in best])


def plot_rsrp_trace(path, runs, window=TRACE_SMOOTHING_WINDOW):
    """Moving-average-smoothed serving RSRP of one UE per run."""
    fig, ax = plt.subplots(figsize=(7, 4))
    plotted = False
    for r in runs:
        if r.trace_path is None:
            continue
        trace = _longest_ue_trace(r.trace_path)
        if trace is None:
            continue
        t_ms, vals = trace
        ax.plot(t_ms / 1000.0, smooth_trace(vals, window), label=r.display_name)
        plotted = True
    ax.set_xlabel("time [s]")
    ax.set_ylabel(f"RSRP [dBm], {window}-point moving average")
    ax.grid(alpha=0.4)
    if plotted:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_report(in_dir, out_dir=None, percentile: float = 0.10, comments=()):
    """Build summary.csv plus the three comparison figures; returns the runs."""
    runs = collect_runs(in_dir, percentile)
    if not runs:
        raise FileNotFoundError(f"no kpi.csv found under {in_dir}")
    out = Path(out_dir if out_dir is not None else in_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_summary_csv(out / "summary.csv", runs, percentile, comments)
    plot_kpi_rates(out / "kpi_rates.png", runs)
    plot_rsrp_cdf(out / "rsrp_cdf.png", runs)
    plot_rsrp_trace(out / "rsrp_trace.png", runs)
    return runs
