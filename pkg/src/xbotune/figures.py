"""Matplotlib rendering of workbench reports to image files.

The core stays data-only (VisualSpec, tables, CSV); these helpers draw
those artifacts when a CLI report path asks for a figure next to the
text output.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .eggmodel import SensitivityReport
from .params import PARAM_BY_NAME
from .render import VisualSpec

TUNE_COLOR = "#d95f02"
NO_TUNE_COLOR = "#1f77b4"


def _label(name: str) -> str:
    spec = PARAM_BY_NAME.get(name)
    return spec.symbol if spec else name


def save_visual_figure(spec: VisualSpec, path: str | Path) -> Path:
    """Horizontal bar chart of a tune/no-tune explanation."""
    names = [_label(b.name) for b in spec.bars]
    lengths = [b.signed_length for b in spec.bars]
    colors = [TUNE_COLOR if b.tune_class == "tune" else NO_TUNE_COLOR for b in spec.bars]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    y = range(len(names))
    ax.barh(y, lengths, color=colors)
    ax.set_yticks(list(y), names)
    ax.invert_yaxis()
    ax.axvline(0.0, color="black", linewidth=0.8)
    ax.set_xlim(-1.1, 1.1)
    ax.set_xlabel(spec.axis_label)
    for yi, bar in zip(y, spec.bars):
        if bar.tune_range is not None:
            lo, hi = bar.tune_range
            ax.annotate(
                f"[{lo:g}, {hi:g}]",
                (bar.signed_length, yi),
                textcoords="offset points",
                xytext=(-4 if bar.signed_length < 0 else 4, 0),
                ha="right" if bar.signed_length < 0 else "left",
                va="center",
                fontsize=8,
            )
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def save_sensitivity_figure(report: SensitivityReport, path: str | Path) -> Path:
    """Ranked bars of relative cooking-time effects."""
    entries = [e for e in report.entries if e.defined]
    names = [_label(e.name) for e in entries]
    effects = [e.effect for e in entries]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    y = range(len(names))
    ax.barh(y, effects, color=TUNE_COLOR)
    ax.set_yticks(list(y), names)
    ax.invert_yaxis()
    ax.set_xlabel(
        f"relative cooking-time change at ±{report.fraction:.0%} perturbation"
    )
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def save_simulation_figure(rows: list[dict], path: str | Path) -> Path:
    """Per-block success-rate summary of a simulation batch, one group per policy."""
    policies = sorted({r["policy"] for r in rows})
    blocks = ("training", "baseline", "treatment")
    fig, ax = plt.subplots(figsize=(6, 3.2))
    width = 0.8 / max(len(policies), 1)
    for k, policy in enumerate(policies):
        sub = [r for r in rows if r["policy"] == policy]
        means = []
        for block in blocks:
            vals = [r[f"success_rate_{block}"] for r in sub]
            means.append(sum(vals) / len(vals) if vals else 0.0)
        xs = [i + k * width for i in range(len(blocks))]
        ax.bar(xs, means, width=width, label=policy)
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(blocks))], blocks)
    ax.set_ylabel("mean success rate")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=8)
    fig.tight_layout()
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
