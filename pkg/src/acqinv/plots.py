"""Learning-curve figures from CSV rows.

Two SVG charts: scanner discrepancy (raw patches vs learned embeddings)
and held-out tissue error per model, both against the labeled-target
budget on a log axis, as mean +- standard deviation over repetitions.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .experiment import CurveResult

log = logging.getLogger("acqinv")

MODEL_COLORS = {"source": "tab:green", "target": "tab:orange", "mrai": "tab:blue"}
DA_COLORS = {"raw": "tab:red", "mrai": "tab:blue"}
DA_LABELS = {"raw": "raw patches", "mrai": "mrai features"}


def emit_plots(curve: CurveResult, out_dir) -> list[Path]:
    """Write dA.svg and error.svg; returns the created paths."""
    if not curve.rows:
        raise ValueError("cannot plot an empty curve")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    da_path = _plot_da(curve, out_dir / "dA.svg")
    if da_path is not None:
        written.append(da_path)
    written.append(_plot_error(curve, out_dir / "error.svg"))
    return written


def _series(curve: CurveResult, model: str, value: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Means and stds of one column grouped by n_target_labels."""
    cells: dict[int, list[float]] = {}
    for row in curve.rows:
        v = getattr(row, value)
        if row.model == model and v is not None:
            cells.setdefault(row.n_target_labels, []).append(v)
    ns = np.array(sorted(cells), dtype=np.int64)
    means = np.array([np.mean(cells[n]) for n in ns])
    stds = np.array([np.std(cells[n]) for n in ns])
    return ns, means, stds


def _plot_da(curve: CurveResult, path: Path) -> Path | None:
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    plotted = False
    for model in ("raw", "mrai"):
        ns, means, stds = _series(curve, model, "d_A")
        if ns.size == 0:
            log.warning("discrepancy plot: no rows for %r, omitting its line", model)
            continue
        ax.errorbar(ns, means, yerr=stds, marker="o", capsize=3,
                    color=DA_COLORS[model], label=DA_LABELS[model])
        plotted = True
    if not plotted:
        log.warning("discrepancy plot skipped: no d_A rows at all")
        plt.close(fig)
        return None
    ax.set_xscale("log")
    ax.set_ylim(bottom=-0.05)
    ax.set_xlabel("labeled target patches per tissue")
    ax.set_ylabel("proxy A-distance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _plot_error(curve: CurveResult, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    for model in ("source", "target", "mrai"):
        ns, means, stds = _series(curve, model, "tissue_error")
        if ns.size == 0:
            log.warning("error plot: no rows for %r, omitting its line", model)
            continue
        ax.errorbar(ns, means, yerr=stds, marker="o", capsize=3,
                    color=MODEL_COLORS[model], label=model)
    ax.set_xscale("log")
    ax.set_ylim(0.0, 1.0)
    ax.set_xlabel("labeled target patches per tissue")
    ax.set_ylabel("tissue classification error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
