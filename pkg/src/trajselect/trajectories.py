"""Per-sample gradient trajectories and their on-disk format.

A trajectory holds, for each of T model checkpoints, one gradient row per
sample: T blocks of shape (n_samples, grad_dim), float32. The binary layout
is fixed so files are portable across languages and exactly sized:

    offset  size          field
    0       8             magic ``TRJGRADS``
    8       1             format version (currently 1)
    9       1             role: 0 = train, 1 = target
    10      8             n_samples  (u64 LE)
    18      8             n_timesteps (u64 LE)
    26      8             grad_dim   (u64 LE)
    34      ...           sample id table   (u32 count, then u32 len + UTF-8 each)
    ...     ...           checkpoint tag table (same encoding)
    ...     T*N*d*4       T contiguous row-major N x d float32 blocks (LE)

A sidecar ``<path>.manifest.json`` mirrors the manifest for human inspection;
it is written alongside but never read back.
"""

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .util import atomic_write_text, read_string_table, string_table_size, write_string_table

MAGIC = b"TRJGRADS"
FORMAT_VERSION = 1
_ROLES = ("train", "target")
_HEADER = struct.Struct("<8sBBQQQ")


class TrajectoryFormatError(Exception):
    """Base class for malformed trajectory files."""


class BadMagicError(TrajectoryFormatError):
    pass


class VersionMismatchError(TrajectoryFormatError):
    pass


class TruncatedPayloadError(TrajectoryFormatError):
    pass


class ShapeInconsistencyError(TrajectoryFormatError):
    pass


@dataclass
class TrajectoryManifest:
    n_samples: int
    n_timesteps: int
    grad_dim: int
    role: str
    sample_ids: list
    checkpoint_tags: list
    dtype: str = "float32"

    def to_dict(self):
        return {
            "n_samples": self.n_samples,
            "n_timesteps": self.n_timesteps,
            "grad_dim": self.grad_dim,
            "role": self.role,
            "sample_ids": list(self.sample_ids),
            "checkpoint_tags": list(self.checkpoint_tags),
            "dtype": self.dtype,
        }


@dataclass
class TrajectoryGradients:
    manifest: TrajectoryManifest
    blocks: np.ndarray  # (T, N, d) float32

    def __eq__(self, other):
        if not isinstance(other, TrajectoryGradients):
            return NotImplemented
        return (
            self.manifest == other.manifest
            and self.blocks.shape == other.blocks.shape
            and bool(np.array_equal(self.blocks, other.blocks))
        )


def validate(grads):
    """Return a list of invariant violations; empty means the value is well formed."""
    violations = []
    man = grads.manifest
    if man.n_samples < 1:
        violations.append("n_samples must be >= 1")
    if man.n_timesteps < 1:
        violations.append("n_timesteps must be >= 1")
    if man.grad_dim < 1:
        violations.append("grad_dim must be >= 1")
    if man.role not in _ROLES:
        violations.append(f"role must be one of {_ROLES}, got {man.role!r}")
    if man.dtype != "float32":
        violations.append(f"dtype is fixed to float32, got {man.dtype!r}")
    if len(man.sample_ids) != man.n_samples:
        violations.append(
            f"sample_ids length {len(man.sample_ids)} != n_samples {man.n_samples}"
        )
    if len(set(man.sample_ids)) != len(man.sample_ids):
        violations.append("sample_ids are not unique")
    if len(man.checkpoint_tags) != man.n_timesteps:
        violations.append(
            f"checkpoint_tags length {len(man.checkpoint_tags)} != n_timesteps {man.n_timesteps}"
        )
    blocks = grads.blocks
    expected = (man.n_timesteps, man.n_samples, man.grad_dim)
    if not isinstance(blocks, np.ndarray) or blocks.shape != expected:
        violations.append(
            f"blocks shape {getattr(blocks, 'shape', None)} != {expected}"
        )
        return violations
    if blocks.dtype != np.float32:
        violations.append(f"blocks dtype {blocks.dtype} != float32")
    if not np.all(np.isfinite(blocks)):
        bad_t = [int(t) for t in range(blocks.shape[0]) if not np.all(np.isfinite(blocks[t]))]
        violations.append(f"non-finite entries in timestep block(s) {bad_t}")
    return violations


def expected_file_size(manifest):
    """Exact byte size a trajectory file must have for this manifest."""
    return (
        _HEADER.size
        + string_table_size(manifest.sample_ids)
        + string_table_size(manifest.checkpoint_tags)
        + manifest.n_timesteps * manifest.n_samples * manifest.grad_dim * 4
    )


def write_trajectory(grads, path):
    """Persist a validated trajectory; refuses to touch disk on invariant failure."""
    violations = validate(grads)
    if violations:
        raise ValueError("invalid trajectory: " + "; ".join(violations))
    man = grads.manifest
    import io

    buf = io.BytesIO()
    buf.write(_HEADER.pack(
        MAGIC,
        FORMAT_VERSION,
        _ROLES.index(man.role),
        man.n_samples,
        man.n_timesteps,
        man.grad_dim,
    ))
    write_string_table(buf, man.sample_ids)
    write_string_table(buf, man.checkpoint_tags)
    blocks = np.ascontiguousarray(grads.blocks, dtype="<f4")
    buf.write(blocks.tobytes())
    payload = buf.getvalue()
    assert len(payload) == expected_file_size(man)

    from .util import atomic_write_bytes

    atomic_write_bytes(path, payload)
    atomic_write_text(
        str(path) + ".manifest.json",
        json.dumps(man.to_dict(), indent=2) + "\n",
    )


def read_trajectory(path):
    """Load a trajectory file, reporting malformed inputs distinctly.

    Raises BadMagicError, VersionMismatchError, TruncatedPayloadError (naming
    the first incomplete timestep block), or ShapeInconsistencyError.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, shorter than the header")
    magic, version, role_byte, n, t, d = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {FORMAT_VERSION}")
    if role_byte >= len(_ROLES):
        raise ShapeInconsistencyError(f"unknown role byte {role_byte}")
    try:
        sample_ids, offset = read_string_table(raw, _HEADER.size)
        tags, offset = read_string_table(raw, offset)
    except struct.error as exc:
        raise TruncatedPayloadError(f"truncated id table: {exc}") from exc
    block_bytes = n * d * 4
    remaining = len(raw) - offset
    if remaining < t * block_bytes:
        complete = remaining // block_bytes if block_bytes else 0
        raise TruncatedPayloadError(
            f"truncated payload: timestep {complete} of {t} is incomplete "
            f"({remaining} bytes left, need {t * block_bytes})"
        )
    if remaining > t * block_bytes:
        raise ShapeInconsistencyError(
            f"{remaining - t * block_bytes} trailing bytes beyond declared shape"
        )
    blocks = np.frombuffer(raw, dtype="<f4", count=t * n * d, offset=offset)
    blocks = blocks.reshape(t, n, d).copy()
    manifest = TrajectoryManifest(
        n_samples=n,
        n_timesteps=t,
        grad_dim=d,
        role=_ROLES[role_byte],
        sample_ids=sample_ids,
        checkpoint_tags=tags,
    )
    grads = TrajectoryGradients(manifest=manifest, blocks=blocks)
    violations = validate(grads)
    if violations:
        raise ShapeInconsistencyError("file decodes to invalid value: " + "; ".join(violations))
    return grads


def make_trajectory(blocks, role, sample_ids=None, checkpoint_tags=None):
    """Convenience constructor from a (T, N, d) array-like."""
    blocks = np.asarray(blocks, dtype=np.float32)
    if blocks.ndim != 3:
        raise ValueError(f"blocks must be (T, N, d), got shape {blocks.shape}")
    t, n, d = blocks.shape
    if sample_ids is None:
        sample_ids = [f"sample-{i:06d}" for i in range(n)]
    if checkpoint_tags is None:
        checkpoint_tags = [f"step-{i:04d}" for i in range(t)]
    manifest = TrajectoryManifest(
        n_samples=n,
        n_timesteps=t,
        grad_dim=d,
        role=role,
        sample_ids=list(sample_ids),
        checkpoint_tags=list(checkpoint_tags),
    )
    return TrajectoryGradients(manifest=manifest, blocks=blocks)


def file_size_on_disk(path):
    return os.stat(path).st_size
