"""Wall-clock scaling comparison between the pursuit and greedy baselines.

The pursuit runs a fixed number of iterations regardless of budget, while
orthogonal matching pursuit re-solves after every greedy pick, so its cost
grows with the budget.  This module measures both on one shared planted
design across a budget sweep and reports times, ratios, and residuals.
"""

import time

import numpy as np

from .pursuit import PursuitConfig, iter_cosamp, omp_select
from .synthetic import gen_sparse_instance

DEFAULT_BUDGETS = (100, 500, 1000, 2000)


def run_scaling_bench(n_samples=20000, m=512, budgets=DEFAULT_BUDGETS, iterations=5,
                      sparsity=64, noise_level=0.1, seed=0, progress=None):
    """Time iter_cosamp against omp_select on one planted design.

    Returns a JSON-ready dict; entries are ordered by budget and carry
    gtp_s, omp_s, their ratio, and both final residuals.
    """
    budgets = sorted(set(int(b) for b in budgets))
    if not budgets:
        raise ValueError("need at least one budget")
    if budgets[-1] > n_samples:
        raise ValueError(f"largest budget {budgets[-1]} exceeds n_samples {n_samples}")
    inst = gen_sparse_instance(n_samples=n_samples, m=m, sparsity=sparsity,
                               noise_level=noise_level, seed=seed)
    design = inst.as_design()
    entries = []
    for budget in budgets:
        if progress:
            progress(f"budget {budget}: timing pursuit")
        t0 = time.perf_counter()
        gtp = iter_cosamp(design, PursuitConfig(budget=budget, iterations=iterations))
        gtp_s = time.perf_counter() - t0
        if progress:
            progress(f"budget {budget}: pursuit {gtp_s:.2f}s; timing greedy baseline")
        t0 = time.perf_counter()
        omp = omp_select(design, budget)
        omp_s = time.perf_counter() - t0
        if progress:
            progress(f"budget {budget}: greedy {omp_s:.2f}s (ratio {gtp_s / omp_s:.3f})")
        entries.append({
            "budget": budget,
            "gtp_s": gtp_s,
            "omp_s": omp_s,
            "ratio": gtp_s / omp_s,
            "gtp_residual": float(gtp.final_residual),
            "omp_residual": float(omp.final_residual),
        })
    return {
        "n_samples": n_samples,
        "m": m,
        "iterations": iterations,
        "sparsity": sparsity,
        "noise_level": noise_level,
        "seed": seed,
        "budgets": budgets,
        "entries": entries,
    }


def plot_scaling(result, path):
    """Write a log-log runtime plot for a run_scaling_bench result."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    budgets = [e["budget"] for e in result["entries"]]
    gtp = [e["gtp_s"] for e in result["entries"]]
    omp = [e["omp_s"] for e in result["entries"]]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(budgets, omp, "o-", label="greedy (OMP)")
    ax.loglog(budgets, gtp, "s-", label="pursuit")
    ax.set_xlabel("budget")
    ax.set_ylabel("wall time (s)")
    ax.set_title(f"selection runtime, N={result['n_samples']}, m={result['m']}")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
