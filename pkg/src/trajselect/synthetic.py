"""Synthetic problem generators and the exhaustive oracle.

Everything here is seed-deterministic (numpy Generator over PCG64) so
fixtures regenerate bit-identically anywhere.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .nnls import solve_nnls
from .subspace import DesignSystem
from .trajectories import make_trajectory

# Exhaustive search refuses to enumerate more supports than this.
BRUTE_FORCE_LIMIT = 1_000_000


@dataclass
class PlantedInstance:
    """Design with a known sparse nonnegative generator.

    b = a[:, support] @ weights plus Gaussian noise scaled to exactly
    noise_level * ||a[:, support] @ weights||.
    """

    a: np.ndarray
    b: np.ndarray
    support: np.ndarray   # sorted ascending
    weights: np.ndarray   # aligned with support, in [0.5, 1.5]
    noise_level: float
    seed: int

    def as_design(self):
        m, n = self.a.shape
        return DesignSystem(
            a=self.a,
            b=self.b,
            n_timesteps=1,
            subspace_dim=m,
            sample_ids=[f"sample-{i:06d}" for i in range(n)],
        )


@dataclass
class DuplicatedInstance:
    """Design whose columns contain groups of exact duplicates.

    The target combines one representative per group, so any budget-respecting
    selection that spends two picks inside one group wastes one of them.
    """

    a: np.ndarray
    b: np.ndarray
    groups: list           # list of lists of column indices, exact copies within
    group_weights: np.ndarray
    tail_scale: float
    seed: int

    def as_design(self):
        m, n = self.a.shape
        return DesignSystem(
            a=self.a,
            b=self.b,
            n_timesteps=1,
            subspace_dim=m,
            sample_ids=[f"sample-{i:06d}" for i in range(n)],
        )


def _unit_columns(rng, m, n):
    a = rng.standard_normal((m, n))
    norms = np.sqrt(np.einsum("ij,ij->j", a, a))
    norms[norms == 0.0] = 1.0
    return a / norms


def gen_sparse_instance(n_samples, m, sparsity, noise_level=0.0, seed=0):
    """Unit-norm Gaussian columns with a planted nonnegative sparse combination.

    The support is uniform without replacement, weights are U[0.5, 1.5], and
    the additive Gaussian noise is rescaled so its norm is exactly
    noise_level times the clean signal norm.
    """
    if not 1 <= sparsity <= n_samples:
        raise ValueError(f"sparsity must be in [1, {n_samples}], got {sparsity}")
    if noise_level < 0:
        raise ValueError(f"noise_level must be >= 0, got {noise_level}")
    rng = np.random.Generator(np.random.PCG64(seed))
    a = _unit_columns(rng, m, n_samples)
    support = np.sort(rng.choice(n_samples, size=sparsity, replace=False)).astype(np.int64)
    weights = rng.uniform(0.5, 1.5, size=sparsity)
    signal = a[:, support] @ weights
    b = signal.copy()
    if noise_level > 0.0:
        noise = rng.standard_normal(m)
        nn = math.sqrt(float(np.dot(noise, noise)))
        if nn > 0.0:
            target_norm = noise_level * math.sqrt(float(np.dot(signal, signal)))
            b = signal + noise * (target_norm / nn)
    return PlantedInstance(a=a, b=b, support=support, weights=weights,
                           noise_level=noise_level, seed=seed)


def gen_duplicated_instance(n_groups=4, copies=3, n_extra=8, m=16,
                            tail_scale=0.01, seed=0):
    """Columns with exact-duplicate groups plus background columns.

    Group g occupies columns [g*copies, (g+1)*copies) and every copy is
    bit-identical; the n_extra background columns follow.  The target is one
    representative per group (positive weights) plus a small tail so it does
    not lie exactly in the group span.
    """
    if n_groups < 1 or copies < 2:
        raise ValueError("need at least one group of at least two copies")
    if m <= n_groups + 1:
        raise ValueError(f"need m > n_groups + 1, got m={m}, n_groups={n_groups}")
    rng = np.random.Generator(np.random.PCG64(seed))
    base = _unit_columns(rng, m, n_groups)
    group_weights = np.sort(rng.uniform(1.0, 2.0, size=n_groups))[::-1].copy()
    b = base @ group_weights
    if tail_scale > 0.0:
        q, _ = np.linalg.qr(base)
        tail = rng.standard_normal(m)
        tail -= q @ (q.T @ tail)  # keep the tail out of the group span
        tn = math.sqrt(float(np.dot(tail, tail)))
        if tn > 0.0:
            b = b + tail * (tail_scale / tn)
    cols = []
    groups = []
    for g in range(n_groups):
        start = len(cols)
        for _ in range(copies):
            cols.append(base[:, g])
        groups.append(list(range(start, start + copies)))
    if n_extra:
        # Background columns orthogonal to the target: they never outrank a
        # group on correlation and never help reduce the residual directly.
        extra = rng.standard_normal((m, n_extra))
        bn2 = float(np.dot(b, b))
        if bn2 > 0.0:
            extra -= np.outer(b, b @ extra) / bn2
        norms = np.sqrt(np.einsum("ij,ij->j", extra, extra))
        norms[norms == 0.0] = 1.0
        extra = extra / norms
        a = np.column_stack(cols + [extra])
    else:
        a = np.column_stack(cols)
    return DuplicatedInstance(a=a, b=b, groups=groups, group_weights=group_weights,
                              tail_scale=tail_scale, seed=seed)


def brute_force_best_subset(a, b, budget, nnls_tol=1e-10, nnls_max_iter=3000):
    """Exhaustive search over all supports of the given size.

    Returns (support, weights, residual_norm) for the best support; ties on
    residual keep the lexicographically smallest support (the enumeration
    order of itertools.combinations).  Refuses to enumerate more than
    BRUTE_FORCE_LIMIT supports.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = a.shape[1]
    if not 1 <= budget <= n:
        raise ValueError(f"budget must be in [1, {n}], got {budget}")
    total = math.comb(n, budget)
    if total > BRUTE_FORCE_LIMIT:
        raise ValueError(
            f"refusing to enumerate {total} supports (limit {BRUTE_FORCE_LIMIT})"
        )
    best = None
    for combo in itertools.combinations(range(n), budget):
        support = np.asarray(combo, dtype=np.int64)
        sub = a[:, support]
        res = solve_nnls(sub, b, tol=nnls_tol, max_iter=nnls_max_iter)
        r = b - sub @ res.weights
        rnorm = math.sqrt(float(np.dot(r, r)))
        if best is None or rnorm < best[2]:
            best = (support, res.weights, rnorm)
    return best


def gen_synthetic_trajectory(n_samples, n_timesteps, grad_dim, n_clusters=4,
                             drift=0.25, noise=0.05, seed=0, role="train",
                             cluster_of: Optional[np.ndarray] = None):
    """Gradient trajectory with cluster structure that drifts over time.

    Cluster centers follow independent Gaussian random walks; each sample's
    gradient at a timestep is its cluster's current center plus isotropic
    noise.  The center walk and the per-sample noise come from separate
    streams of the seed, so a train and a target trajectory generated with
    the same seed share the exact same drifting centers while their samples
    stay independent.  Passing ``cluster_of`` pins the sample->cluster
    assignment, e.g. to restrict a target to a subset of the train clusters.
    """
    if role not in ("train", "target"):
        raise ValueError(f"role must be 'train' or 'target', got {role!r}")
    centers_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0])))
    role_code = 1 if role == "train" else 2
    sample_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, role_code])))
    centers = centers_rng.standard_normal((n_clusters, grad_dim))
    if cluster_of is None:
        cluster_of = sample_rng.integers(0, n_clusters, size=n_samples)
    else:
        cluster_of = np.asarray(cluster_of)
        if cluster_of.shape != (n_samples,) or int(cluster_of.max()) >= n_clusters:
            raise ValueError("cluster_of must assign each sample a cluster below n_clusters")
    blocks = np.zeros((n_timesteps, n_samples, grad_dim), dtype=np.float32)
    for t in range(n_timesteps):
        if t > 0:
            centers = centers + drift * centers_rng.standard_normal((n_clusters, grad_dim))
        samples = centers[cluster_of] + noise * sample_rng.standard_normal((n_samples, grad_dim))
        blocks[t] = samples.astype(np.float32)
    prefix = "train" if role == "train" else "target"
    ids = [f"{prefix}-{i:06d}" for i in range(n_samples)]
    tags = [f"ckpt-{t:04d}" for t in range(n_timesteps)]
    return make_trajectory(blocks, role=role, sample_ids=ids, checkpoint_tags=tags)
