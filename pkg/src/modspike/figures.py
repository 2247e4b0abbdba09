"""Render experiment CSV rows to figure files (PNG/PDF via matplotlib Agg)."""

from __future__ import annotations

import math

from .estimator import direction_error_bound


def _axes():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    return plt, fig, ax


def render_fig3a(rows: list[dict], path) -> None:
    """Mean estimation error against the spike exponent, with the qualitative
    error-bound trend (unit constants) overlaid."""
    plt, fig, ax = _axes()
    ks = sorted({r["k"] for r in rows})
    for k in ks:
        sub = sorted((r for r in rows if r["k"] == k), key=lambda r: r["alpha"])
        alphas = [r["alpha"] for r in sub]
        ax.errorbar(alphas, [r["mean_error"] for r in sub],
                    yerr=[r["stderr"] for r in sub],
                    marker="o", markersize=3, capsize=2, label=f"k = {k}")
        n = k * k
        trend = [direction_error_bound(k, n, max(float(k) ** a, 1.0)) for a in alphas]
        ax.plot(alphas, trend, linestyle="--", linewidth=0.9, alpha=0.6,
                label=f"trend bound, k = {k}")
    ax.set_xlabel(r"spike exponent $\alpha$  ($\nu = k^\alpha$)")
    ax.set_ylabel("mean direction error")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_fig3b(rows: list[dict], path) -> None:
    """Unwrapping error rate per decoder against the dynamic-range exponent."""
    plt, fig, ax = _axes()
    decoders = sorted({r["decoder"] for r in rows})
    for name in decoders:
        sub = sorted((r for r in rows if r["decoder"] == name),
                     key=lambda r: r["delta_exp"])
        floor = min(0.5 / max(r["trials_total"], 1) for r in sub)
        xs = [r["delta_exp"] for r in sub]
        ys = [max(r["p_e_hat"], floor) if not math.isnan(r["p_e_hat"]) else math.nan
              for r in sub]
        ax.plot(xs, ys, marker="o", markersize=3, label=name)
    ax.axhline(1e-2, color="gray", linestyle=":", linewidth=0.9)
    ax.set_xlabel(r"$\delta$  ($\Delta = 2^\delta \sqrt{\log k}$)")
    ax.set_ylabel("fraction of erroneously recovered samples")
    ax.set_yscale("log")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
