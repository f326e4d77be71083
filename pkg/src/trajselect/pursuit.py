"""Subset selection on the stacked design system.

All algorithms return a Selection whose ``indices`` are distinct, sorted
ascending, and aligned with ``weights``.  Every tie (correlations, pruning
weights) breaks toward the lowest index via stable sorts, and every residual
norm is computed by the same helper, so independent implementations of the
same step reproduce identical bytes.

Algorithms
----------
``iter_cosamp``
    Compressive-sampling matching pursuit [1]_ adapted to nonnegative
    weights: iteration 1 keeps the top-``budget`` columns by correlation with
    the target (so its first step coincides with ``top_k_select``), and each
    later iteration widens to a 2x pool, solves a nonnegative least-squares
    problem there, prunes back to the budget, re-solves, and accepts the
    candidate only when it strictly lowers the residual.
``top_k_select``
    Top-``budget`` columns by correlation with the target, then one solve.
``omp_select``
    Orthogonal matching pursuit with a fresh nonnegative solve after each
    greedy pick [2]_.
``random_select``
    Uniform support without replacement from a seeded generator, then one
    solve; the floor any informed method must beat.

References
----------
.. [1] D. Needell, J. A. Tropp, "CoSaMP: Iterative signal recovery from
       incomplete and inaccurate samples", Appl. Comput. Harmon. Anal. 26(3),
       2009.
.. [2] Y. C. Pati, R. Rezaiifar, P. S. Krishnaprasad, "Orthogonal matching
       pursuit", Asilomar, 1993.
"""

import math
import time
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .nnls import solve_nnls

ALGORITHMS = ("gtp", "gtp_dist", "topk", "omp", "random")
CORRELATION_MODES = ("residual", "target_literal")
REPORT_SCHEMA_VERSION = 1


@dataclass
class PursuitConfig:
    """Knobs for iter_cosamp (and the distributed variant).

    Attributes
    ----------
    budget : int
        Number of samples to select.
    iterations : int
        Pursuit iterations; iteration 1 is the correlation-only start.
    correlation_mode : str
        'residual' correlates against the current residual (default);
        'target_literal' correlates against the raw target every iteration.
    nnls_tol, nnls_max_iter :
        Passed through to the nonnegative least-squares solver.
    tie_break : str
        Only 'lowest_index' is defined; the field exists so reports are
        explicit about the rule in effect.
    seed : int
        Reserved for seeded variants; echoed into reports.
    """

    budget: int
    iterations: int = 10
    correlation_mode: str = "residual"
    nnls_tol: float = 1e-10
    nnls_max_iter: int = 3000
    tie_break: str = "lowest_index"
    seed: int = 0

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError(f"budget must be >= 1, got {self.budget}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.correlation_mode not in CORRELATION_MODES:
            raise ValueError(
                f"correlation_mode must be one of {CORRELATION_MODES}, "
                f"got {self.correlation_mode!r}"
            )
        if self.tie_break != "lowest_index":
            raise ValueError(f"only 'lowest_index' tie-breaking is defined, got {self.tie_break!r}")
        if not 0.0 <= self.nnls_tol < 1.0:
            raise ValueError(f"nnls_tol must be in [0, 1), got {self.nnls_tol}")
        if self.nnls_max_iter < 1:
            raise ValueError(f"nnls_max_iter must be >= 1, got {self.nnls_max_iter}")


@dataclass
class Selection:
    """Result of any selection algorithm.

    ``residual_history`` conventions: iter_cosamp records ||b|| followed by
    one entry per iteration (length iterations + 1, non-increasing);
    omp_select records ||b|| then one entry per greedy step (length
    budget + 1); top_k_select and random_select record the single final
    residual.
    """

    algorithm: str
    budget: int
    indices: np.ndarray                 # sorted ascending, distinct, len == budget
    weights: np.ndarray                 # aligned with indices, nonnegative
    final_residual: float
    residual_history: list
    per_iteration_supports: list
    config_echo: dict
    timings: dict
    pool_clamped: bool = False
    aggregated_weights: Optional[np.ndarray] = None
    sample_ids: Optional[list] = None


def top_indices(values, k):
    """Indices of the k largest values, ties toward the lowest index."""
    return np.argsort(-np.asarray(values), kind="stable")[:k]


def solve_support(a, b, support, tol=1e-10, max_iter=3000):
    """Nonnegative solve restricted to sorted support columns.

    Returns (weights, residual_norm, residual, nnls_result); the residual
    norm is always sqrt(dot(r, r)) of the recomputed residual so that every
    caller agrees bit-for-bit.
    """
    sub = a[:, support]
    res = solve_nnls(sub, b, tol=tol, max_iter=max_iter)
    r = b - sub @ res.weights
    return res.weights, math.sqrt(float(np.dot(r, r))), r, res


def compute_residual(design, indices, weights):
    """Euclidean norm of b - A[:, indices] @ weights."""
    indices = np.asarray(indices, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    r = design.b - design.a[:, indices] @ weights
    return math.sqrt(float(np.dot(r, r)))


def prune_to_budget(t_indices, pool_weights, budget, proxy):
    """Keep the budget-largest positive weights; pad from the proxy if short.

    t_indices are the (sorted) candidate columns, pool_weights the solve on
    them, proxy the full-length correlation vector used this iteration.
    Padding takes the highest-proxy columns not already kept, so the result
    always has exactly ``budget`` distinct members.
    """
    order = np.argsort(-pool_weights, kind="stable")
    order = order[pool_weights[order] > 0.0][:budget]
    chosen = list(t_indices[order])
    if len(chosen) < budget:
        taken = set(chosen)
        for j in np.argsort(-proxy, kind="stable"):
            j = int(j)
            if j not in taken:
                chosen.append(j)
                taken.add(j)
                if len(chosen) == budget:
                    break
    return np.sort(np.asarray(chosen, dtype=np.int64))


def _echo(config, algorithm, design, pool_clamped=False):
    echo = asdict(config)
    echo.update({
        "algorithm": algorithm,
        "n_samples": int(design.a.shape[1]),
        "m": int(design.a.shape[0]),
        "pool_clamped": bool(pool_clamped),
    })
    return echo


def _check_budget(design, budget):
    n = design.a.shape[1]
    if budget > n:
        raise ValueError(f"budget {budget} exceeds the {n} available samples")


def iter_cosamp(design, config):
    """Iterative pursuit of a budget-sized support matching the target.

    Iteration 1 solves on the top-``budget`` correlations with the target;
    each later iteration forms a pool of the current support plus the top
    ``2 * budget`` correlations (clamped to N, flagged in the result), solves
    there, prunes to the budget, re-solves, and keeps the candidate only on a
    strict residual decrease.  The residual history therefore never
    increases and starts at ||b||.
    """
    _check_budget(design, config.budget)
    a, b = design.a, design.b
    n = a.shape[1]
    budget = config.budget
    pool_size = min(2 * budget, n)
    pool_clamped = pool_size < 2 * budget
    t0 = time.perf_counter()
    iteration_times = []

    history = [math.sqrt(float(np.dot(b, b)))]
    supports = []

    it0 = time.perf_counter()
    proxy = a.T @ b
    support = np.sort(top_indices(proxy, budget))
    weights, rnorm, resid, _ = solve_support(
        a, b, support, tol=config.nnls_tol, max_iter=config.nnls_max_iter
    )
    history.append(rnorm)
    supports.append([int(i) for i in support])
    iteration_times.append(time.perf_counter() - it0)

    for _ in range(2, config.iterations + 1):
        it0 = time.perf_counter()
        if config.correlation_mode == "residual":
            proxy = a.T @ resid
        else:
            proxy = a.T @ b
        pool = top_indices(proxy, pool_size)
        t_ind = np.union1d(support, pool).astype(np.int64)
        w_pool, _, _, _ = solve_support(
            a, b, t_ind, tol=config.nnls_tol, max_iter=config.nnls_max_iter
        )
        candidate = prune_to_budget(t_ind, w_pool, budget, proxy)
        w_cand, rnorm_cand, resid_cand, _ = solve_support(
            a, b, candidate, tol=config.nnls_tol, max_iter=config.nnls_max_iter
        )
        if rnorm_cand < history[-1]:
            support, weights, resid = candidate, w_cand, resid_cand
            history.append(rnorm_cand)
        else:
            history.append(history[-1])
        supports.append([int(i) for i in support])
        iteration_times.append(time.perf_counter() - it0)

    return Selection(
        algorithm="gtp",
        budget=budget,
        indices=support,
        weights=weights,
        final_residual=history[-1],
        residual_history=history,
        per_iteration_supports=supports,
        config_echo=_echo(config, "gtp", design, pool_clamped),
        timings={
            "total_s": time.perf_counter() - t0,
            "iterations_s": iteration_times,
        },
        pool_clamped=pool_clamped,
        sample_ids=list(design.sample_ids),
    )


def top_k_select(design, budget, nnls_tol=1e-10, nnls_max_iter=3000):
    """Top-``budget`` correlations with the target, then one solve."""
    _check_budget(design, budget)
    a, b = design.a, design.b
    t0 = time.perf_counter()
    support = np.sort(top_indices(a.T @ b, budget))
    weights, rnorm, _, _ = solve_support(a, b, support, tol=nnls_tol, max_iter=nnls_max_iter)
    config = PursuitConfig(budget=budget, iterations=1, nnls_tol=nnls_tol,
                           nnls_max_iter=nnls_max_iter)
    return Selection(
        algorithm="topk",
        budget=budget,
        indices=support,
        weights=weights,
        final_residual=rnorm,
        residual_history=[rnorm],
        per_iteration_supports=[[int(i) for i in support]],
        config_echo=_echo(config, "topk", design),
        timings={"total_s": time.perf_counter() - t0},
        sample_ids=list(design.sample_ids),
    )


def omp_select(design, budget, nnls_tol=1e-10, nnls_max_iter=3000):
    """Greedy pursuit: pick the best-correlated column, re-solve, repeat.

    Every step solves the restricted problem from scratch, so the cost per
    step grows with the support; the residual history (||b|| plus one entry
    per step) is non-increasing because each step optimizes over a superset
    of the previous support.
    """
    _check_budget(design, budget)
    a, b = design.a, design.b
    n = a.shape[1]
    t0 = time.perf_counter()
    selected = np.zeros(n, dtype=bool)
    history = [math.sqrt(float(np.dot(b, b)))]
    supports = []
    resid = b
    support = np.empty(0, dtype=np.int64)
    weights = np.empty(0)
    for _ in range(budget):
        proxy = a.T @ resid
        proxy[selected] = -np.inf
        j = int(np.argmax(proxy))
        selected[j] = True
        support = np.flatnonzero(selected).astype(np.int64)
        weights, rnorm, resid, _ = solve_support(
            a, b, support, tol=nnls_tol, max_iter=nnls_max_iter
        )
        history.append(rnorm)
        supports.append([int(i) for i in support])
    config = PursuitConfig(budget=budget, iterations=budget, nnls_tol=nnls_tol,
                           nnls_max_iter=nnls_max_iter)
    return Selection(
        algorithm="omp",
        budget=budget,
        indices=support,
        weights=weights,
        final_residual=history[-1],
        residual_history=history,
        per_iteration_supports=supports,
        config_echo=_echo(config, "omp", design),
        timings={"total_s": time.perf_counter() - t0},
        sample_ids=list(design.sample_ids),
    )


def random_select(design, budget, seed=0, nnls_tol=1e-10, nnls_max_iter=3000):
    """Uniform random support (without replacement), then one solve."""
    _check_budget(design, budget)
    a, b = design.a, design.b
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.PCG64(seed))
    support = np.sort(rng.choice(a.shape[1], size=budget, replace=False)).astype(np.int64)
    weights, rnorm, _, _ = solve_support(a, b, support, tol=nnls_tol, max_iter=nnls_max_iter)
    config = PursuitConfig(budget=budget, iterations=1, nnls_tol=nnls_tol,
                           nnls_max_iter=nnls_max_iter, seed=seed)
    return Selection(
        algorithm="random",
        budget=budget,
        indices=support,
        weights=weights,
        final_residual=rnorm,
        residual_history=[rnorm],
        per_iteration_supports=[[int(i) for i in support]],
        config_echo=_echo(config, "random", design),
        timings={"total_s": time.perf_counter() - t0},
        sample_ids=list(design.sample_ids),
    )


def validate_selection(selection, n_samples):
    """Return a list of invariant violations; empty means well formed."""
    violations = []
    idx = np.asarray(selection.indices)
    if idx.shape != (selection.budget,):
        violations.append(f"indices shape {idx.shape} != ({selection.budget},)")
        return violations
    if len(np.unique(idx)) != idx.size:
        violations.append("indices are not distinct")
    if np.any(np.diff(idx) <= 0):
        violations.append("indices are not sorted ascending")
    if idx.size and (idx[0] < 0 or idx[-1] >= n_samples):
        violations.append(f"indices out of range [0, {n_samples})")
    w = np.asarray(selection.weights)
    if w.shape != idx.shape:
        violations.append(f"weights shape {w.shape} does not match indices")
    elif np.any(w < 0):
        violations.append("negative weights")
    if not selection.residual_history:
        violations.append("empty residual history")
    elif not math.isclose(selection.final_residual, selection.residual_history[-1],
                          rel_tol=0.0, abs_tol=0.0):
        violations.append("final_residual disagrees with residual_history[-1]")
    return violations


def selection_to_report(selection):
    """JSON-ready dict mirroring a Selection; the stable external schema."""
    ids = selection.sample_ids
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "algorithm": selection.algorithm,
        "budget": int(selection.budget),
        "indices": [int(i) for i in selection.indices],
        "sample_ids": (
            [ids[int(i)] for i in selection.indices] if ids is not None else None
        ),
        "weights": [float(w) for w in selection.weights],
        "final_residual": float(selection.final_residual),
        "residual_history": [float(r) for r in selection.residual_history],
        "per_iteration_supports": selection.per_iteration_supports,
        "pool_clamped": bool(selection.pool_clamped),
        "aggregated_weights": (
            None if selection.aggregated_weights is None
            else [float(w) for w in selection.aggregated_weights]
        ),
        "config": selection.config_echo,
        "timings": selection.timings,
    }
