"""Figure rendering for CLI reports.

Each report-producing command writes its delimited table and, unless
figures are disabled, a companion PNG next to it: band plots in the
point-estimate / pointwise-interval / uniform-band style, and a summary
panel for Monte Carlo replication tables.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

POINTWISE_COLOR = "#2c5f8a"
UNIFORM_COLOR = "#a8c8e8"


def band_figure(band, path, title: str | None = None) -> str:
    """Point estimates with shaded pointwise and uniform bands over the grid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    g = band.grid
    ax.fill_between(g, band.uniform_lo, band.uniform_hi, color=UNIFORM_COLOR,
                    label=f"{100 * (1 - band.alpha):g}% uniform band")
    ax.fill_between(g, band.pointwise_lo, band.pointwise_hi, color=POINTWISE_COLOR,
                    alpha=0.55, label=f"{100 * (1 - band.alpha):g}% pointwise")
    ax.plot(g, band.theta, color="black", lw=1.6, label="estimate")
    ax.set_xlabel(band.grid_name)
    ax.set_ylabel("quantile estimate")
    ax.set_title(title or band.label)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def truth_figure(rows, path, title: str = "policy-specific quantile truths") -> str:
    """Truth-table curves: one line per (policy, estimand) over the q grid."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series: dict = {}
    for r in rows:
        key = (r["policy_kind"], r["parameter"], r["t"])
        series.setdefault(key, []).append((r["q"], r["value"]))
    for (kind, par, t), pts in sorted(series.items()):
        pts = sorted(pts)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", ms=3,
                label=f"{kind}({par:g}) t={t}")
    ax.set_xlabel("q")
    ax.set_ylabel("true quantile")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def estimate_figure(rows, path, title: str = "quantile estimates") -> str:
    """Forest-style plot of point estimates with confidence intervals."""
    rows = [r for r in rows if r["point"] is not None]
    fig, ax = plt.subplots(figsize=(7, 0.5 + 0.4 * max(len(rows), 4)))
    y = np.arange(len(rows))[::-1]
    for yi, r in zip(y, rows):
        lo, hi = r["ci_lo"], r["ci_hi"]
        color = POINTWISE_COLOR if r["estimator"] == "np" else "#888888"
        if lo is not None and hi is not None:
            ax.plot([lo, hi], [yi, yi], color=color, lw=2)
        ax.plot([r["point"]], [yi], "o", color=color, ms=5)
    labels = []
    for r in rows:
        t = f' t={r["t"]}' if r["t"] is not None else ""
        labels.append(f'{r["estimand"]} {r["policy_kind"]}({r["parameter"]:g})'
                      f'{t} q={r["q"]:g} [{r["estimator"]}]')
    ax.set_yticks(y)
    ax.set_yticklabels(labels, fontsize=8)
    ax.axvline(0.0, color="gray", lw=0.6, ls=":")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def replicate_figure(rows, path, title: str = "Monte Carlo summary") -> str:
    """Bias (with MCSD whiskers) and coverage per estimand configuration."""
    rows = [r for r in rows if np.isfinite(r["bias"])]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    labels = [f'{r["estimator"]}:{r["policy_kind"]}({r["parameter"]:g}) t={r["t"]}' for r in rows]
    x = np.arange(len(rows))
    bias = np.array([r["bias"] for r in rows])
    mcsd = np.array([r["mcsd"] for r in rows])
    colors = ["#a8c8e8" if r["estimator"] == "ipw" else POINTWISE_COLOR for r in rows]
    ax1.bar(x, bias, yerr=mcsd, color=colors, capsize=2)
    ax1.axhline(0.0, color="black", lw=0.8)
    ax1.set_ylabel("bias (whisker: MCSD)")
    ax1.set_title(title)
    cov = np.array([r["coverage"] for r in rows])
    ax2.plot(x, cov, "o", color="black")
    ax2.axhline(95.0, color="gray", ls="--", lw=0.8)
    ax2.set_ylabel("coverage (%)")
    ax2.set_ylim(min(50, np.nanmin(cov) - 5 if np.isfinite(cov).any() else 50), 101)
    ax2.set_xticks(x)
    ax2.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
