"""Per-timestep gradient subspaces and the stacked design system.

Each model checkpoint gets its own low-dimensional basis fitted to that
checkpoint's gradient block, so the subspace tracks the training trajectory
instead of freezing a single global projection.  Projected per-sample
trajectories are then stacked into one tall design matrix::

    A[t * d_s + s, i] = <basis_t[:, s], grad_t(sample i)>
    b[t * d_s + s]    = <basis_t[:, s], mean target gradient at t>

so matching A @ w to b matches the mean target gradient at every checkpoint
simultaneously.

Basis methods
-------------
``pca_uncentered`` (default)
    Top right-singular vectors of the raw gradient block; spectra are the
    squared singular values.
``pca_centered``
    Same after subtracting the per-timestep mean gradient.
``random_projection``
    Orthonormalized Gaussian directions drawn from a seeded generator.
``identity``
    No reduction; requires ``subspace_dim == grad_dim``.

For ``grad_dim`` above a threshold the PCA variants switch to a randomized
range finder with two power iterations [1]_.

All fits are deterministic functions of (block, method, subspace_dim, seed,
timestep): singular-vector signs are canonicalized and random draws use a
per-timestep child generator, so refitting anywhere reproduces identical
bytes.

References
----------
.. [1] N. Halko, P.-G. Martinsson, J. A. Tropp, "Finding Structure with
       Randomness", SIAM Review 53(2), 2011.
"""

import io
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .trajectories import (
    BadMagicError,
    ShapeInconsistencyError,
    TrajectoryGradients,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .util import atomic_write_bytes, read_string_table, string_table_size, write_string_table

METHODS = ("pca_uncentered", "pca_centered", "random_projection", "identity")
DEFAULT_METHOD = "pca_uncentered"

# Above this ambient dimension the PCA variants use the randomized range
# finder instead of a dense SVD.
RANGE_FINDER_DIM = 4096
_POWER_ITERATIONS = 2
_OVERSAMPLE = 10

# Singular values below this fraction of the largest are treated as rank
# deficiency and their directions replaced by deterministic completion.
_RANK_RTOL = 1e-12

ORTHONORMALITY_TOL = 1e-6

BASIS_MAGIC = b"SUBBASIS"
DESIGN_MAGIC = b"DESIGNAB"
FORMAT_VERSION = 1

_BASIS_HEADER = struct.Struct("<8sBBBQQQq")
_DESIGN_HEADER = struct.Struct("<8sBQQQ")


@dataclass
class SubspaceBasis:
    """Evolving orthonormal bases, one (grad_dim, subspace_dim) block per timestep."""

    method: str
    n_timesteps: int
    grad_dim: int
    subspace_dim: int
    seed: int
    bases: np.ndarray              # (T, d, d_s) float64
    spectra: Optional[np.ndarray]  # (T, d_s) float64 for PCA methods, else None
    completed: np.ndarray          # (T,) bool; True where rank completion kicked in

    def __eq__(self, other):
        if not isinstance(other, SubspaceBasis):
            return NotImplemented
        same_spectra = (
            (self.spectra is None and other.spectra is None)
            or (
                self.spectra is not None
                and other.spectra is not None
                and bool(np.array_equal(self.spectra, other.spectra))
            )
        )
        return (
            self.method == other.method
            and self.n_timesteps == other.n_timesteps
            and self.grad_dim == other.grad_dim
            and self.subspace_dim == other.subspace_dim
            and self.seed == other.seed
            and bool(np.array_equal(self.bases, other.bases))
            and same_spectra
            and bool(np.array_equal(self.completed, other.completed))
        )


@dataclass
class DesignSystem:
    """Stacked design matrix and target vector, columns aligned with samples."""

    a: np.ndarray  # (m, N) float64, m = n_timesteps * subspace_dim
    b: np.ndarray  # (m,) float64
    n_timesteps: int
    subspace_dim: int
    sample_ids: list

    @property
    def m(self):
        return self.a.shape[0]

    @property
    def n_samples(self):
        return self.a.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DesignSystem):
            return NotImplemented
        return (
            self.n_timesteps == other.n_timesteps
            and self.subspace_dim == other.subspace_dim
            and self.sample_ids == other.sample_ids
            and bool(np.array_equal(self.a, other.a))
            and bool(np.array_equal(self.b, other.b))
        )


def _rng_for(seed, timestep):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, timestep])))


def _fix_signs(v):
    """Flip each column so its largest-magnitude entry is positive."""
    if v.shape[1] == 0:
        return v
    idx = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[idx, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def _complete_basis(v, subspace_dim):
    """Extend orthonormal columns to subspace_dim using canonical vectors."""
    d = v.shape[0]
    if subspace_dim > d:
        raise ValueError(f"subspace_dim {subspace_dim} exceeds ambient dimension {d}")
    cols = [v[:, i] for i in range(v.shape[1])]
    e = 0
    while len(cols) < subspace_dim:
        if e >= d:
            raise ValueError("ran out of canonical directions while completing basis")
        w = np.zeros(d)
        w[e] = 1.0
        for _ in range(2):  # two Gram-Schmidt passes for orthogonality
            for c in cols:
                w = w - np.dot(c, w) * c
        nrm = float(np.sqrt(np.dot(w, w)))
        if nrm > 1e-10:
            cols.append(w / nrm)
        e += 1
    return np.column_stack(cols)


def _pca_directions(x, subspace_dim, seed, timestep):
    """Leading right-singular directions and squared singular values."""
    n, d = x.shape
    if d > RANGE_FINDER_DIM:
        width = min(d, subspace_dim + _OVERSAMPLE)
        rng = _rng_for(seed, timestep)
        omega = rng.standard_normal((n, width))
        q, _ = np.linalg.qr(x.T @ omega)
        for _ in range(_POWER_ITERATIONS):
            q, _ = np.linalg.qr(x.T @ (x @ q))
        _, s, wh = np.linalg.svd(x @ q, full_matrices=False)
        v = q @ wh.T
    else:
        _, s, vh = np.linalg.svd(x, full_matrices=False)
        v = vh.T
    if s.size and s[0] > 0.0:
        rank = int(np.sum(s > s[0] * _RANK_RTOL))
    else:
        rank = 0
    return v[:, :rank], s[:rank]


def fit_subspace(block, subspace_dim, method=DEFAULT_METHOD, seed=0, timestep=0):
    """Fit one timestep's basis.

    Parameters
    ----------
    block : (n_samples, grad_dim) array_like
        Gradient rows at a single checkpoint.
    subspace_dim : int
        Number of basis columns to produce.
    method : str
        One of METHODS.
    seed, timestep : int
        Jointly determine every random draw, so the fit is reproducible
        independently of where (or how often) it runs.

    Returns
    -------
    (basis, spectrum, completed)
        basis is (grad_dim, subspace_dim) with orthonormal columns; spectrum
        is a non-increasing (subspace_dim,) energy array for PCA methods and
        None otherwise; completed flags deterministic rank completion.
    """
    x = np.ascontiguousarray(block, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"block must be 2-d, got shape {x.shape}")
    d = x.shape[1]
    if not 1 <= subspace_dim <= d:
        raise ValueError(f"subspace_dim must be in [1, {d}], got {subspace_dim}")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")

    if method == "identity":
        if subspace_dim != d:
            raise ValueError(
                f"identity method requires subspace_dim == grad_dim, got {subspace_dim} != {d}"
            )
        return np.eye(d), None, False

    if method == "random_projection":
        rng = _rng_for(seed, timestep)
        g = rng.standard_normal((d, subspace_dim))
        q, r = np.linalg.qr(g)
        signs = np.sign(np.diag(r))
        signs[signs == 0] = 1.0
        return q * signs, None, False

    if method == "pca_centered":
        x = x - x.mean(axis=0)
    v, s = _pca_directions(x, subspace_dim, seed, timestep)
    take = min(subspace_dim, v.shape[1])
    v = _fix_signs(v[:, :take])
    spectrum = np.zeros(subspace_dim)
    spectrum[:take] = s[:take] ** 2
    completed = take < subspace_dim
    if completed:
        v = _complete_basis(v, subspace_dim)
    return v, spectrum, completed


def fit_evolving_subspace(grads, subspace_dim, method=DEFAULT_METHOD, seed=0):
    """Fit one basis per timestep of a gradient trajectory.

    Accepts TrajectoryGradients or a raw (T, N, d) array.  The result is a
    pure function of the arguments; in particular it does not depend on how
    work is later sharded across machines.
    """
    blocks = grads.blocks if isinstance(grads, TrajectoryGradients) else np.asarray(grads)
    if blocks.ndim != 3:
        raise ValueError(f"expected (T, N, d) blocks, got shape {blocks.shape}")
    n_timesteps, _, grad_dim = blocks.shape
    bases = np.zeros((n_timesteps, grad_dim, subspace_dim))
    spectra = np.zeros((n_timesteps, subspace_dim))
    completed = np.zeros(n_timesteps, dtype=bool)
    has_spectra = method in ("pca_uncentered", "pca_centered")
    for t in range(n_timesteps):
        v, s, comp = fit_subspace(blocks[t], subspace_dim, method=method, seed=seed, timestep=t)
        bases[t] = v
        if has_spectra:
            spectra[t] = s
        completed[t] = comp
    return SubspaceBasis(
        method=method,
        n_timesteps=n_timesteps,
        grad_dim=grad_dim,
        subspace_dim=subspace_dim,
        seed=seed,
        bases=bases,
        spectra=spectra if has_spectra else None,
        completed=completed,
    )


def validate_basis(basis):
    """Return a list of invariant violations; empty means well formed."""
    violations = []
    expected = (basis.n_timesteps, basis.grad_dim, basis.subspace_dim)
    if basis.method not in METHODS:
        violations.append(f"unknown method {basis.method!r}")
    if basis.bases.shape != expected:
        violations.append(f"bases shape {basis.bases.shape} != {expected}")
        return violations
    eye = np.eye(basis.subspace_dim)
    for t in range(basis.n_timesteps):
        v = basis.bases[t]
        err = float(np.max(np.abs(v.T @ v - eye)))
        if err > ORTHONORMALITY_TOL:
            violations.append(f"timestep {t}: orthonormality defect {err:.3e}")
    if basis.spectra is not None:
        if basis.spectra.shape != (basis.n_timesteps, basis.subspace_dim):
            violations.append(f"spectra shape {basis.spectra.shape} invalid")
        else:
            for t in range(basis.n_timesteps):
                s = basis.spectra[t]
                if np.any(s < 0):
                    violations.append(f"timestep {t}: negative spectrum entry")
                if np.any(np.diff(s) > 1e-9 * max(1.0, float(s[0]))):
                    violations.append(f"timestep {t}: spectrum not non-increasing")
    if basis.completed.shape != (basis.n_timesteps,):
        violations.append("completed flags have wrong shape")
    return violations


def project(grads, basis):
    """Project a (T, N, d) trajectory into the evolving subspace -> (T, N, d_s)."""
    blocks = grads.blocks if isinstance(grads, TrajectoryGradients) else np.asarray(grads)
    if blocks.ndim != 3:
        raise ValueError(f"expected (T, N, d) blocks, got shape {blocks.shape}")
    n_timesteps, n_samples, grad_dim = blocks.shape
    if n_timesteps != basis.n_timesteps or grad_dim != basis.grad_dim:
        raise ValueError(
            f"trajectory (T={n_timesteps}, d={grad_dim}) does not match basis "
            f"(T={basis.n_timesteps}, d={basis.grad_dim})"
        )
    out = np.zeros((n_timesteps, n_samples, basis.subspace_dim))
    for t in range(n_timesteps):
        out[t] = blocks[t].astype(np.float64) @ basis.bases[t]
    return out


def captured_variance(block, basis_t):
    """Fraction of a block's squared Frobenius mass inside one timestep's basis."""
    x = np.asarray(block, dtype=np.float64)
    total = float(np.sum(x * x))
    if total == 0.0:
        return 1.0
    proj = x @ basis_t
    return float(np.sum(proj * proj)) / total


def assemble_design(train_proj, target_proj, sample_ids=None):
    """Stack projected trajectories into the design system.

    Columns of A are per-sample trajectories (timestep-major, then subspace
    coordinate); b stacks the per-timestep mean of the target projection in
    the same order.
    """
    train_proj = np.asarray(train_proj, dtype=np.float64)
    target_proj = np.asarray(target_proj, dtype=np.float64)
    if train_proj.ndim != 3 or target_proj.ndim != 3:
        raise ValueError("projections must be (T, N, d_s) arrays")
    n_timesteps, n_samples, subspace_dim = train_proj.shape
    if target_proj.shape[0] != n_timesteps or target_proj.shape[2] != subspace_dim:
        raise ValueError(
            f"target projection {target_proj.shape} does not match train "
            f"(T={n_timesteps}, d_s={subspace_dim})"
        )
    m = n_timesteps * subspace_dim
    a = np.ascontiguousarray(train_proj.transpose(0, 2, 1).reshape(m, n_samples))
    b = np.ascontiguousarray(target_proj.mean(axis=1).reshape(m))
    if sample_ids is None:
        sample_ids = [f"sample-{i:06d}" for i in range(n_samples)]
    if len(sample_ids) != n_samples:
        raise ValueError(f"got {len(sample_ids)} sample_ids for {n_samples} columns")
    return DesignSystem(
        a=a,
        b=b,
        n_timesteps=n_timesteps,
        subspace_dim=subspace_dim,
        sample_ids=list(sample_ids),
    )


def assemble_design_from_trajectories(train, target, basis):
    """Project train/target trajectories through one basis and stack them."""
    if train.manifest.role != "train":
        raise ValueError(f"first trajectory has role {train.manifest.role!r}, expected 'train'")
    if target.manifest.role != "target":
        raise ValueError(f"second trajectory has role {target.manifest.role!r}, expected 'target'")
    if train.manifest.n_timesteps != target.manifest.n_timesteps:
        raise ValueError(
            f"timestep mismatch: train has {train.manifest.n_timesteps}, "
            f"target has {target.manifest.n_timesteps}"
        )
    if train.manifest.grad_dim != target.manifest.grad_dim:
        raise ValueError(
            f"gradient dimension mismatch: train has {train.manifest.grad_dim}, "
            f"target has {target.manifest.grad_dim}"
        )
    return assemble_design(
        project(train, basis),
        project(target, basis),
        sample_ids=train.manifest.sample_ids,
    )


def validate_design(design):
    """Return a list of invariant violations; empty means well formed."""
    violations = []
    m = design.n_timesteps * design.subspace_dim
    if design.a.ndim != 2 or design.a.shape[0] != m:
        violations.append(f"a has shape {design.a.shape}, expected ({m}, N)")
        return violations
    if design.b.shape != (m,):
        violations.append(f"b has shape {design.b.shape}, expected ({m},)")
    if len(design.sample_ids) != design.a.shape[1]:
        violations.append(
            f"{len(design.sample_ids)} sample_ids for {design.a.shape[1]} columns"
        )
    if not np.all(np.isfinite(design.a)) or not np.all(np.isfinite(design.b)):
        violations.append("non-finite entries in design")
    return violations


# ---------------------------------------------------------------------------
# Binary formats


def write_basis(basis, path):
    violations = validate_basis(basis)
    if violations:
        raise ValueError("invalid basis: " + "; ".join(violations))
    buf = io.BytesIO()
    buf.write(_BASIS_HEADER.pack(
        BASIS_MAGIC,
        FORMAT_VERSION,
        METHODS.index(basis.method),
        1 if basis.spectra is not None else 0,
        basis.n_timesteps,
        basis.grad_dim,
        basis.subspace_dim,
        basis.seed,
    ))
    buf.write(np.ascontiguousarray(basis.completed, dtype=np.uint8).tobytes())
    if basis.spectra is not None:
        buf.write(np.ascontiguousarray(basis.spectra, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(basis.bases, dtype="<f8").tobytes())
    atomic_write_bytes(path, buf.getvalue())


def read_basis(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _BASIS_HEADER.size:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, shorter than the header")
    magic, version, method_byte, has_spectra, t, d, ds, seed = _BASIS_HEADER.unpack_from(raw, 0)
    if magic != BASIS_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {BASIS_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {FORMAT_VERSION}")
    if method_byte >= len(METHODS):
        raise ShapeInconsistencyError(f"unknown method byte {method_byte}")
    offset = _BASIS_HEADER.size
    expected = offset + t + (t * ds * 8 if has_spectra else 0) + t * d * ds * 8
    if len(raw) < expected:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, need {expected}")
    if len(raw) > expected:
        raise ShapeInconsistencyError(f"{len(raw) - expected} trailing bytes beyond declared shape")
    completed = np.frombuffer(raw, dtype=np.uint8, count=t, offset=offset).astype(bool)
    offset += t
    spectra = None
    if has_spectra:
        spectra = np.frombuffer(raw, dtype="<f8", count=t * ds, offset=offset).reshape(t, ds).copy()
        offset += t * ds * 8
    bases = np.frombuffer(raw, dtype="<f8", count=t * d * ds, offset=offset).reshape(t, d, ds).copy()
    basis = SubspaceBasis(
        method=METHODS[method_byte],
        n_timesteps=t,
        grad_dim=d,
        subspace_dim=ds,
        seed=seed,
        bases=bases,
        spectra=spectra,
        completed=completed,
    )
    violations = validate_basis(basis)
    if violations:
        raise ShapeInconsistencyError("file decodes to invalid value: " + "; ".join(violations))
    return basis


def write_design(design, path):
    violations = validate_design(design)
    if violations:
        raise ValueError("invalid design: " + "; ".join(violations))
    buf = io.BytesIO()
    buf.write(_DESIGN_HEADER.pack(
        DESIGN_MAGIC,
        FORMAT_VERSION,
        design.n_timesteps,
        design.subspace_dim,
        design.n_samples,
    ))
    write_string_table(buf, design.sample_ids)
    buf.write(np.ascontiguousarray(design.a, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(design.b, dtype="<f8").tobytes())
    atomic_write_bytes(path, buf.getvalue())


def read_design(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _DESIGN_HEADER.size:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, shorter than the header")
    magic, version, t, ds, n = _DESIGN_HEADER.unpack_from(raw, 0)
    if magic != DESIGN_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {DESIGN_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {FORMAT_VERSION}")
    try:
        sample_ids, offset = read_string_table(raw, _DESIGN_HEADER.size)
    except struct.error as exc:
        raise TruncatedPayloadError(f"truncated id table: {exc}") from exc
    m = t * ds
    expected = offset + m * n * 8 + m * 8
    if len(raw) < expected:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, need {expected}")
    if len(raw) > expected:
        raise ShapeInconsistencyError(f"{len(raw) - expected} trailing bytes beyond declared shape")
    a = np.frombuffer(raw, dtype="<f8", count=m * n, offset=offset).reshape(m, n).copy()
    offset += m * n * 8
    b = np.frombuffer(raw, dtype="<f8", count=m, offset=offset).copy()
    design = DesignSystem(a=a, b=b, n_timesteps=t, subspace_dim=ds, sample_ids=sample_ids)
    violations = validate_design(design)
    if violations:
        raise ShapeInconsistencyError("file decodes to invalid value: " + "; ".join(violations))
    return design
