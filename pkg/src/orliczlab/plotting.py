"""Report figures rendered to files with the Agg backend."""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import ExperimentReport  # noqa: E402


def _finite(values):
    return [v if isinstance(v, (int, float)) and math.isfinite(v) else math.nan for v in values]


def plot_ratios(report: ExperimentReport, path: str | Path) -> Path:
    """Ratio per trial, one series per mesh level, with the exact bound when one exists."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    levels = sorted({r["level"] for r in report.trials})
    for lv in levels:
        rows = [r for r in report.trials if r["level"] == lv]
        ax.plot([r["trial"] for r in rows], _finite([r["ratio"] for r in rows]), "o-", ms=3, lw=0.8, label=f"L={lv}")
    bound = report.summary.get("exact_upper_bound")
    if isinstance(bound, (int, float)):
        ax.axhline(bound, color="k", ls="--", lw=0.8, label="exact bound")
    ax.set_xlabel("trial")
    ax.set_ylabel("lhs / rhs")
    ax.set_title(f"{report.theorem_id}: {report.verdict.get('status', '')}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_lower(report: ExperimentReport, path: str | Path) -> Path | None:
    """Indicator lower-bound interval per trial for two-sided experiments."""
    rows = [r for r in report.trials if "lower_min" in r]
    if not rows:
        return None
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for lv in sorted({r["level"] for r in rows}):
        sel = [r for r in rows if r["level"] == lv]
        x = [r["trial"] for r in sel]
        lo = _finite([r["lower_min"] for r in sel])
        hi = _finite([r["lower_max"] for r in sel])
        ax.fill_between(x, lo, hi, alpha=0.25, step="mid")
        ax.plot(x, lo, "v", ms=3, label=f"min, L={lv}")
    bound = report.summary.get("exact_lower_bound")
    if isinstance(bound, (int, float)):
        ax.axhline(bound, color="k", ls="--", lw=0.8, label="exact floor")
    ax.set_xlabel("trial")
    ax.set_ylabel("operator / class contribution")
    ax.set_title(f"{report.theorem_id}: indicator lower ratios")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


def render(report: ExperimentReport, stem: str | Path) -> list[Path]:
    """Write <stem>_ratio.png and, when available, <stem>_lower.png."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    out = [plot_ratios(report, stem.with_name(stem.name + "_ratio.png"))]
    low = plot_lower(report, stem.with_name(stem.name + "_lower.png"))
    if low is not None:
        out.append(low)
    return out
