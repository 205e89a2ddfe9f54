"""Static report figures rendered next to the delimited output files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _loglog_axes(ax, xlabel="iteration + 1", ylabel="value"):
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)


def _plot_positive(ax, x, y, **kwargs):
    mask = y > 0
    if mask.any():
        ax.plot(x[mask], y[mask], **kwargs)


def render_report(fig_dir, curves, summary) -> list:
    """Render the standard error/disagreement/gap charts; returns written paths."""
    if curves is None:
        return []
    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    written = []
    x = curves["i"] + 1.0

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    _plot_positive(ax, x, curves["err_median"], label="sensor error (median)")
    _plot_positive(ax, x, curves["avg_err_median"], label="network-average error (median)")
    if "central_err_median" in curves:
        _plot_positive(ax, x, curves["central_err_median"], label="centralized error (median)",
                       linestyle="--")
    _loglog_axes(ax, ylabel="estimation error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = fig_dir / "errors.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fits = summary.get("rate_fits", {})
    for name, fname in (("disagreement_median", "disagreement.png"), ("gap_median", "gap.png")):
        if name not in curves:
            continue
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        _plot_positive(ax, x, curves[name], label=name.replace("_", " "))
        fit = fits.get(name)
        if fit and "exponent" in fit:
            lo, hi = fit["window"]
            xs = np.geomspace(max(lo, 1.0), max(hi, 2.0), 50)
            ax.plot(xs + 1.0, np.exp(fit["intercept"]) * (xs + 1.0) ** fit["exponent"],
                    linestyle=":", label=f"fit slope {fit['exponent']:.3f}")
        _loglog_axes(ax)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = fig_dir / fname
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def render_quadratic_sweep(path, ratios, min_eigenvalues, threshold=None):
    """lambda_min of the combined potential versus the consensus/innovation ratio."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.set_xscale("log")
    ax.plot(ratios, min_eigenvalues, label="lambda_min")
    ax.axhline(0.0, color="black", linewidth=0.8)
    if threshold is not None:
        ax.axvline(threshold, color="tab:red", linestyle="--",
                   label=f"positivity threshold {threshold:.3g}")
    ax.set_xlabel("consensus / innovation weight ratio")
    ax.set_ylabel("smallest eigenvalue")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_scaled_recursions(path, labelled_curves):
    """Scaled oracle trajectories (i+1)^d0 * y(i), one line per setting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, (iters, vals) in labelled_curves.items():
        _plot_positive(ax, np.asarray(iters, dtype=np.float64) + 1.0,
                       np.asarray(vals, dtype=np.float64), label=label)
    _loglog_axes(ax, ylabel="scaled trajectory")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def read_curves_csv(path):
    """Parse an aggregate_curves.csv back into a curves dict."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ValueError(f"{path} has no header line")
    header = lines[0]
    key = "columns="
    cols = header[header.index(key) + len(key):].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])
    return {c: data[:, k] for k, c in enumerate(cols)}
