"""Non-negative least squares via the active-set method of Lawson and Hanson.

The passive-set least-squares problems are solved through an incrementally
maintained Cholesky factor of the passive Gram matrix, so inserting a column
costs O(m k + k^2) instead of a fresh O(m k^2) factorization.  Candidate
columns whose component orthogonal to the passive set is numerically zero
(exact duplicates in particular) are rejected, which keeps the factor well
conditioned and the recovered support free of redundant columns.

Ties in the entering-column rule are broken toward the lowest column index.

References
----------
.. [1] C. L. Lawson, R. J. Hanson, "Solving Least Squares Problems",
       SIAM Classics in Applied Mathematics, 1995, Chapter 23.
.. [2] A. Bjorck, "Numerical Methods for Least Squares Problems",
       SIAM, 1996, Section 2.7 (seminormal equations).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

# A candidate column is treated as dependent on the passive set when the
# squared norm of its orthogonal component falls below this fraction of its
# squared norm.
_DEPENDENT_RTOL = 1e-13

# Consecutive outer iterations without a strict objective decrease before the
# solver gives up and reports its best iterate (anti-cycling safeguard).
_STALL_LIMIT = 30


@dataclass
class NnlsResult:
    """Outcome of a non-negative least-squares solve.

    Attributes
    ----------
    weights : ndarray
        Nonnegative solution, aligned with the columns of the input matrix.
    residual_norm : float
        Euclidean norm of ``b - A @ weights``.
    iterations : int
        Outer (active-set) iterations performed.
    converged : bool
        True when the KKT conditions were met within tolerance; False when
        the iteration or stall limit was reached first.
    kkt_violation : float
        max(|g_j| for weights_j > 0, max(g_j, 0) for weights_j = 0) with
        g = A.T @ (b - A @ weights); zero at an exact optimum.
    """

    weights: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    kkt_violation: float


def _kkt_violation(a, b, w):
    g = a.T @ (b - a @ w)
    pos = w > 0.0
    viol = float(np.max(np.abs(g[pos]), initial=0.0))
    viol = max(viol, float(np.max(g[~pos], initial=0.0)), 0.0)
    return viol


def solve_nnls(a_sub, b, tol=1e-10, max_iter=3000):
    """Solve min_w ||a_sub @ w - b||_2 subject to w >= 0.

    Parameters
    ----------
    a_sub : (m, n) array_like
        Design columns restricted to the candidate support.
    b : (m,) array_like
        Target vector.
    tol : float
        Relative optimality tolerance; a zero-weight column may enter only
        while its gradient exceeds ``tol * max|a_sub.T @ b|``.
    max_iter : int
        Cap on outer active-set iterations.

    Returns
    -------
    NnlsResult
    """
    a = np.ascontiguousarray(a_sub, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"a_sub must be 2-d, got shape {a.shape}")
    m, n_cols = a.shape
    if b.shape != (m,):
        raise ValueError(f"b has shape {b.shape}, expected ({m},)")

    x = np.zeros(n_cols)
    bnorm = math.sqrt(float(np.dot(b, b)))
    if n_cols == 0:
        return NnlsResult(x, bnorm, 0, True, 0.0)

    atb = a.T @ b
    scale = float(np.max(np.abs(atb)))
    if scale == 0.0:
        # b is orthogonal to every column; w = 0 already satisfies the KKT
        # conditions exactly.
        return NnlsResult(x, bnorm, 0, True, 0.0)
    threshold = tol * scale

    col_sq = np.einsum("ij,ij->j", a, a)
    cap = min(m, n_cols)
    r_fac = np.zeros((cap, cap))   # upper-triangular Cholesky factor of Gram
    gram = np.zeros((cap, cap))    # passive Gram, for one refinement pass
    apass = np.zeros((m, cap))     # passive columns in insertion order
    c_pass = np.zeros(cap)         # passive entries of a.T @ b
    order = []                     # original column index per passive slot
    passive = np.zeros(n_cols, dtype=bool)

    def insert_column(j):
        k = len(order)
        if k >= cap or col_sq[j] <= 0.0:
            return False
        aj = a[:, j]
        if k == 0:
            rho_sq = col_sq[j]
        else:
            rk = r_fac[:k, :k]
            v = apass[:, :k].T @ aj
            u = solve_triangular(rk, v, trans=1, lower=False, check_finite=False)
            rho_sq = col_sq[j] - float(np.dot(u, u))
            if rho_sq <= _DEPENDENT_RTOL * col_sq[j]:
                return False
            r_fac[:k, k] = u
            gram[:k, k] = v
            gram[k, :k] = v
        if rho_sq <= _DEPENDENT_RTOL * col_sq[j]:
            return False
        r_fac[k, k] = math.sqrt(rho_sq)
        gram[k, k] = col_sq[j]
        apass[:, k] = aj
        c_pass[k] = atb[j]
        order.append(j)
        passive[j] = True
        return True

    def delete_slot(slot):
        k = len(order)
        j = order.pop(slot)
        passive[j] = False
        apass[:, slot:k - 1] = apass[:, slot + 1:k]
        c_pass[slot:k - 1] = c_pass[slot + 1:k]
        gram[:k, slot:k - 1] = gram[:k, slot + 1:k]
        gram[slot:k - 1, :k - 1] = gram[slot + 1:k, :k - 1]
        r_fac[:k, slot:k - 1] = r_fac[:k, slot + 1:k]
        # Rows slot..k-2 now carry one subdiagonal each; restore triangularity
        # with a sweep of Givens rotations.
        for col in range(slot, k - 1):
            hi = r_fac[col, col]
            lo = r_fac[col + 1, col]
            if lo == 0.0:
                continue
            r = math.hypot(hi, lo)
            c, s = hi / r, lo / r
            row_hi = r_fac[col, col:k - 1].copy()
            row_lo = r_fac[col + 1, col:k - 1].copy()
            r_fac[col, col:k - 1] = c * row_hi + s * row_lo
            r_fac[col + 1, col:k - 1] = -s * row_hi + c * row_lo
            r_fac[col + 1, col] = 0.0
        r_fac[:k, k - 1] = 0.0
        gram[:k, k - 1] = 0.0
        gram[k - 1, :k] = 0.0
        apass[:, k - 1] = 0.0
        c_pass[k - 1] = 0.0

    def solve_passive():
        k = len(order)
        rk = r_fac[:k, :k]
        c = c_pass[:k]
        y = solve_triangular(rk, c, trans=1, lower=False, check_finite=False)
        z = solve_triangular(rk, y, lower=False, check_finite=False)
        # One refinement pass on the seminormal equations recovers the
        # accuracy lost to squaring the condition number.
        resid_c = c - gram[:k, :k] @ z
        y = solve_triangular(rk, resid_c, trans=1, lower=False, check_finite=False)
        z = z + solve_triangular(rk, y, lower=False, check_finite=False)
        return z

    resid = b.copy()
    best_x = x.copy()
    best_obj = float(np.dot(b, b))
    stall = 0
    outer = 0
    converged = False

    while outer < max_iter:
        grad = a.T @ resid
        masked = np.where(passive, -np.inf, grad)
        entered = False
        while True:
            j = int(np.argmax(masked))
            if not masked[j] > threshold:
                break
            if insert_column(j):
                entered = True
                break
            masked[j] = -np.inf
        if not entered:
            converged = True
            break
        outer += 1

        while True:
            z = solve_passive()
            if np.all(z > 0.0):
                x[:] = 0.0
                x[order] = z
                break
            idx = np.array(order)
            xp = x[idx]
            neg = z <= 0.0
            ratios = xp[neg] / (xp[neg] - z[neg])
            alpha = float(np.min(ratios))
            xp = xp + alpha * (z - xp)
            leave = np.flatnonzero(neg & (xp <= 1e-14 * np.max(xp, initial=0.0)))
            if leave.size == 0:
                # Roundoff kept every coordinate positive; evict the slot
                # that defined the step length.
                leave = np.array([np.flatnonzero(neg)[int(np.argmin(ratios))]])
            xp[leave] = 0.0
            x[:] = 0.0
            x[idx] = xp
            for slot in leave[::-1]:
                delete_slot(int(slot))
            if not order:
                break

        k = len(order)
        resid = b - apass[:, :k] @ x[order] if k else b.copy()
        obj = float(np.dot(resid, resid))
        if obj < best_obj - 1e-13 * (1.0 + best_obj):
            best_obj = obj
            best_x = x.copy()
            stall = 0
        else:
            stall += 1
            if stall >= _STALL_LIMIT:
                break

    if not converged:
        x = best_x

    r = b - a @ x
    return NnlsResult(
        weights=x,
        residual_norm=math.sqrt(float(np.dot(r, r))),
        iterations=outer,
        converged=converged,
        kkt_violation=_kkt_violation(a, b, x),
    )
