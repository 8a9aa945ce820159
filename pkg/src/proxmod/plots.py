"""Figure rendering for report outputs.

Each report command writes tidy CSV first; these helpers render a matching
figure next to it (PNG, Agg backend, no display required).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_speedup(table: list, path) -> str:
    """Speedup vs batch size, one line per (algorithm, model)."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    series: dict = {}
    for row in table:
        series.setdefault((row["algorithm"], row["model"]), []).append(
            (int(row["m"]), float(row["speedup"])))
    for (alg, model), pts in sorted(series.items()):
        pts.sort()
        ms, sp = zip(*pts)
        ax.plot(ms, sp, marker="o", label=f"{alg}:{model}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("batch size m")
    ax.set_ylabel(r"speedup $T^*_1 / T^*_m$")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_iters_vs_alpha0(rows: list, path) -> str:
    """Mean iterations-to-target vs initial stepsize, one line per
    (algorithm, model, m)."""
    groups: dict = {}
    for row in rows:
        if row["status"] == "error":
            continue
        key = (row["algorithm"], row["model"], int(row["m"]))
        groups.setdefault(key, {}).setdefault(float(row["alpha0"]), []).append(
            float(row["iters_to_target"]))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for (alg, model, m), per_alpha in sorted(groups.items()):
        alphas = sorted(per_alpha)
        means = [np.mean(per_alpha[a]) for a in alphas]
        ax.plot(alphas, means, marker=".", label=f"{alg}:{model} m={m}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"initial stepsize $\alpha_0$")
    ax.set_ylabel("iterations to target")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_stationarity(rows: list, path) -> str:
    ks = [r["k"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.semilogy(ks, [r["grad_norm_x"] for r in rows], marker=".", label="at x^k")
    gz = [r["grad_norm_z"] for r in rows]
    if not all(np.isnan(gz)):
        ax.semilogy(ks, gz, marker=".", label="at z^k")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("smoothed gradient norm estimate")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_recover_grid(images: list, path) -> str:
    """Row of reshaped iterates, labelled by iteration index."""
    fig, axes = plt.subplots(1, len(images), figsize=(1.6 * len(images), 2.0))
    if len(images) == 1:
        axes = [axes]
    for ax, (k, img) in zip(axes, images):
        ax.imshow(img, cmap="gray")
        ax.set_title(f"k={k}", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def plot_stability(rows: list, path) -> str:
    """Histogram of distance/bound ratios per (kind, m)."""
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["kind"], int(row["m"])), []).append(float(row["ratio"]))
    fig, ax = plt.subplots(figsize=(5.5, 4))
    for (kind, m), ratios in sorted(groups.items()):
        ax.hist(ratios, bins=40, alpha=0.5, label=f"{kind} m={m}")
    ax.axvline(1.0, color="k", linestyle="--", linewidth=1)
    ax.set_xlabel("distance / bound")
    ax.set_ylabel("trials")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
