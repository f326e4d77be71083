"""Distributed pursuit over row-sharded designs (star topology).

The design's rows (timestep x subspace-coordinate pairs) are partitioned by
timestep across machines; every machine holds all columns for its timesteps.
A coordinator drives synchronous rounds of a length-prefixed binary protocol:

    Init / InitAck            handshake, shard validation, ||b_i||^2
    CorrelateRequest          -> PartialCorrelation   (A_i^T r_i)
    NnlsRequest(stage=pool)   -> PartialWeights       (local solve on pool)
    NnlsRequest(stage=final)  -> ResidualUpdate       (local solve; worker
                                                       commits support/residual)
    ColumnsRequest            -> ColumnsPart          (rows of A on the final
                                                       support, plus b segment)
    Done / Error

Partial results are always reduced in machine-id order, so a run is a
deterministic function of (design, config, n_machines).  Workers are pure
frame handlers (bytes in, bytes out); the in-process transport and the
socket transport feed them identical bytes, which makes the two transports
bit-exact by construction.  With one machine the shard is the whole design
and every step reproduces the single-process pursuit bit-for-bit.

After the last iteration the coordinator gathers the design columns on the
final support and solves one global nonnegative least-squares problem; those
are the reported weights.  The per-machine weight sums seen during pursuit
are kept in ``aggregated_weights``.
"""

import math
import socket
import struct
import threading
import time
from dataclasses import asdict, dataclass

import numpy as np

from .nnls import solve_nnls
from .pursuit import Selection, prune_to_budget, top_indices
from .trajectories import (
    BadMagicError,
    ShapeInconsistencyError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .util import atomic_write_bytes, read_string_table, write_string_table

PROTOCOL_VERSION = 1
SHARD_MAGIC = b"DESSHARD"
SHARD_FORMAT_VERSION = 1

_MAX_FRAME = 1 << 31  # sanity bound on declared frame lengths

_TAG_INIT = 0
_TAG_INIT_ACK = 1
_TAG_CORRELATE_REQUEST = 2
_TAG_PARTIAL_CORRELATION = 3
_TAG_NNLS_REQUEST = 4
_TAG_PARTIAL_WEIGHTS = 5
_TAG_RESIDUAL_UPDATE = 6
_TAG_COLUMNS_REQUEST = 7
_TAG_COLUMNS_PART = 8
_TAG_DONE = 9
_TAG_ERROR = 10

NNLS_STAGES = ("pool", "final")

_CORRELATION_MODES = ("residual", "target_literal")


class DistributedProtocolError(Exception):
    """Protocol violation or worker failure; the message names the machine."""


# ---------------------------------------------------------------------------
# Sharding


@dataclass(frozen=True)
class ShardAssignment:
    """Contiguous timestep range (and thus row range) owned by one machine."""

    machine_id: int
    n_machines: int
    t_start: int
    t_stop: int     # exclusive
    row_start: int
    row_stop: int   # exclusive


@dataclass
class DesignShard:
    """One machine's rows of the design system."""

    assignment: ShardAssignment
    a_rows: np.ndarray   # (row_stop - row_start, n_samples) float64
    b_rows: np.ndarray   # (row_stop - row_start,) float64
    n_timesteps: int
    subspace_dim: int
    sample_ids: list


def partition_timesteps(n_timesteps, n_machines):
    """Split T timesteps into n contiguous ranges; earlier machines get extras."""
    if not 1 <= n_machines <= n_timesteps:
        raise ValueError(
            f"n_machines must be in [1, {n_timesteps}] (one timestep cannot be split), "
            f"got {n_machines}"
        )
    base, extra = divmod(n_timesteps, n_machines)
    ranges = []
    start = 0
    for i in range(n_machines):
        size = base + (1 if i < extra else 0)
        ranges.append((start, start + size))
        start += size
    return ranges


def partition_design(design, n_machines):
    """Cut a DesignSystem into per-machine row shards."""
    ranges = partition_timesteps(design.n_timesteps, n_machines)
    ds = design.subspace_dim
    shards = []
    for mid, (t0, t1) in enumerate(ranges):
        assignment = ShardAssignment(
            machine_id=mid,
            n_machines=n_machines,
            t_start=t0,
            t_stop=t1,
            row_start=t0 * ds,
            row_stop=t1 * ds,
        )
        shards.append(DesignShard(
            assignment=assignment,
            a_rows=np.ascontiguousarray(design.a[assignment.row_start:assignment.row_stop]),
            b_rows=np.ascontiguousarray(design.b[assignment.row_start:assignment.row_stop]),
            n_timesteps=design.n_timesteps,
            subspace_dim=ds,
            sample_ids=list(design.sample_ids),
        ))
    return shards


_SHARD_HEADER = struct.Struct("<8sBIIQQQQQQQ")


def write_shard(shard, path):
    import io

    asg = shard.assignment
    buf = io.BytesIO()
    buf.write(_SHARD_HEADER.pack(
        SHARD_MAGIC,
        SHARD_FORMAT_VERSION,
        asg.machine_id,
        asg.n_machines,
        asg.t_start,
        asg.t_stop,
        asg.row_start,
        asg.row_stop,
        len(shard.sample_ids),
        shard.n_timesteps,
        shard.subspace_dim,
    ))
    write_string_table(buf, shard.sample_ids)
    buf.write(np.ascontiguousarray(shard.a_rows, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(shard.b_rows, dtype="<f8").tobytes())
    atomic_write_bytes(path, buf.getvalue())


def read_shard(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _SHARD_HEADER.size:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, shorter than the header")
    (magic, version, machine_id, n_machines, t0, t1, row0, row1,
     n_samples, n_timesteps, subspace_dim) = _SHARD_HEADER.unpack_from(raw, 0)
    if magic != SHARD_MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {SHARD_MAGIC!r}")
    if version != SHARD_FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported version {version}, expected {SHARD_FORMAT_VERSION}")
    try:
        sample_ids, offset = read_string_table(raw, _SHARD_HEADER.size)
    except struct.error as exc:
        raise TruncatedPayloadError(f"truncated id table: {exc}") from exc
    rows = row1 - row0
    expected = offset + rows * n_samples * 8 + rows * 8
    if len(raw) < expected:
        raise TruncatedPayloadError(f"file is {len(raw)} bytes, need {expected}")
    if len(raw) > expected:
        raise ShapeInconsistencyError(f"{len(raw) - expected} trailing bytes beyond declared shape")
    if len(sample_ids) != n_samples:
        raise ShapeInconsistencyError(
            f"id table has {len(sample_ids)} entries, header says {n_samples}"
        )
    a_rows = np.frombuffer(raw, dtype="<f8", count=rows * n_samples,
                           offset=offset).reshape(rows, n_samples).copy()
    offset += rows * n_samples * 8
    b_rows = np.frombuffer(raw, dtype="<f8", count=rows, offset=offset).copy()
    return DesignShard(
        assignment=ShardAssignment(machine_id, n_machines, t0, t1, row0, row1),
        a_rows=a_rows,
        b_rows=b_rows,
        n_timesteps=n_timesteps,
        subspace_dim=subspace_dim,
        sample_ids=sample_ids,
    )


# ---------------------------------------------------------------------------
# Messages and codec


@dataclass
class Init:
    machine_id: int
    n_machines: int
    budget: int
    iterations: int
    correlation_mode: str
    nnls_tol: float
    nnls_max_iter: int


@dataclass
class InitAck:
    machine_id: int
    n_machines: int
    n_samples: int
    row_start: int
    row_stop: int
    b_norm_sq: float


@dataclass
class CorrelateRequest:
    pass


@dataclass
class PartialCorrelation:
    machine_id: int
    values: np.ndarray


@dataclass
class NnlsRequest:
    stage: str            # 'pool' or 'final'
    support: np.ndarray   # sorted ascending, int64


@dataclass
class PartialWeights:
    machine_id: int
    weights: np.ndarray


@dataclass
class ResidualUpdate:
    machine_id: int
    resid_sq: float
    weights: np.ndarray


@dataclass
class ColumnsRequest:
    support: np.ndarray


@dataclass
class ColumnsPart:
    machine_id: int
    row_start: int
    row_stop: int
    block: np.ndarray      # (rows, len(support)) float64
    b_segment: np.ndarray  # (rows,) float64


@dataclass
class Done:
    pass


@dataclass
class ErrorMessage:
    machine_id: int
    message: str


_INIT_BODY = struct.Struct("<IIQQBdQ")
_INIT_ACK_BODY = struct.Struct("<IIQQQd")
_PARTIAL_HDR = struct.Struct("<IQ")
_NNLS_HDR = struct.Struct("<BQ")
_RESID_HDR = struct.Struct("<IdQ")
_COLREQ_HDR = struct.Struct("<Q")
_COLPART_HDR = struct.Struct("<IQQQ")
_ERROR_HDR = struct.Struct("<II")


def _f8(values):
    return np.ascontiguousarray(values, dtype="<f8").tobytes()


def _i8(values):
    return np.ascontiguousarray(values, dtype="<q").tobytes()


def encode_message(msg):
    head = struct.pack("<BB", PROTOCOL_VERSION, _tag_of(msg))
    if isinstance(msg, Init):
        body = _INIT_BODY.pack(
            msg.machine_id, msg.n_machines, msg.budget, msg.iterations,
            _CORRELATION_MODES.index(msg.correlation_mode),
            msg.nnls_tol, msg.nnls_max_iter,
        )
    elif isinstance(msg, InitAck):
        body = _INIT_ACK_BODY.pack(
            msg.machine_id, msg.n_machines, msg.n_samples,
            msg.row_start, msg.row_stop, msg.b_norm_sq,
        )
    elif isinstance(msg, (CorrelateRequest, Done)):
        body = b""
    elif isinstance(msg, PartialCorrelation):
        body = _PARTIAL_HDR.pack(msg.machine_id, len(msg.values)) + _f8(msg.values)
    elif isinstance(msg, NnlsRequest):
        body = _NNLS_HDR.pack(NNLS_STAGES.index(msg.stage), len(msg.support)) + _i8(msg.support)
    elif isinstance(msg, PartialWeights):
        body = _PARTIAL_HDR.pack(msg.machine_id, len(msg.weights)) + _f8(msg.weights)
    elif isinstance(msg, ResidualUpdate):
        body = _RESID_HDR.pack(msg.machine_id, msg.resid_sq, len(msg.weights)) + _f8(msg.weights)
    elif isinstance(msg, ColumnsRequest):
        body = _COLREQ_HDR.pack(len(msg.support)) + _i8(msg.support)
    elif isinstance(msg, ColumnsPart):
        rows = msg.row_stop - msg.row_start
        if msg.block.shape[0] != rows or msg.b_segment.shape != (rows,):
            raise ValueError("ColumnsPart block/b_segment do not match the row range")
        body = (
            _COLPART_HDR.pack(msg.machine_id, msg.row_start, msg.row_stop, msg.block.shape[1])
            + _f8(msg.block) + _f8(msg.b_segment)
        )
    elif isinstance(msg, ErrorMessage):
        raw = msg.message.encode("utf-8")
        body = _ERROR_HDR.pack(msg.machine_id, len(raw)) + raw
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")
    return head + body


_TAGS = {
    Init: _TAG_INIT,
    InitAck: _TAG_INIT_ACK,
    CorrelateRequest: _TAG_CORRELATE_REQUEST,
    PartialCorrelation: _TAG_PARTIAL_CORRELATION,
    NnlsRequest: _TAG_NNLS_REQUEST,
    PartialWeights: _TAG_PARTIAL_WEIGHTS,
    ResidualUpdate: _TAG_RESIDUAL_UPDATE,
    ColumnsRequest: _TAG_COLUMNS_REQUEST,
    ColumnsPart: _TAG_COLUMNS_PART,
    Done: _TAG_DONE,
    ErrorMessage: _TAG_ERROR,
}


def _tag_of(msg):
    try:
        return _TAGS[type(msg)]
    except KeyError:
        raise TypeError(f"cannot encode {type(msg).__name__}") from None


def _need(raw, offset, count, what):
    if len(raw) - offset < count:
        raise DistributedProtocolError(
            f"truncated {what}: need {count} bytes at offset {offset}, frame has {len(raw)}"
        )


def _read_f8(raw, offset, count, what):
    _need(raw, offset, count * 8, what)
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).copy()
    return values, offset + count * 8


def _read_i8(raw, offset, count, what):
    _need(raw, offset, count * 8, what)
    values = np.frombuffer(raw, dtype="<q", count=count, offset=offset).copy()
    return values, offset + count * 8


def decode_message(payload):
    if len(payload) < 2:
        raise DistributedProtocolError(f"frame of {len(payload)} bytes has no header")
    version, tag = payload[0], payload[1]
    if version != PROTOCOL_VERSION:
        raise DistributedProtocolError(
            f"protocol version {version} not supported (expected {PROTOCOL_VERSION})"
        )
    body = payload[2:]
    if tag == _TAG_INIT:
        mid, n_mach, budget, iters, mode, tol, max_iter = _INIT_BODY.unpack(body)
        if mode >= len(_CORRELATION_MODES):
            raise DistributedProtocolError(f"unknown correlation mode byte {mode}")
        return Init(mid, n_mach, budget, iters, _CORRELATION_MODES[mode], tol, max_iter)
    if tag == _TAG_INIT_ACK:
        return InitAck(*_INIT_ACK_BODY.unpack(body))
    if tag == _TAG_CORRELATE_REQUEST:
        if body:
            raise DistributedProtocolError("CorrelateRequest carries no body")
        return CorrelateRequest()
    if tag == _TAG_PARTIAL_CORRELATION:
        mid, n = _PARTIAL_HDR.unpack_from(body, 0)
        values, offset = _read_f8(body, _PARTIAL_HDR.size, n, "PartialCorrelation values")
        _check_consumed(body, offset, "PartialCorrelation")
        return PartialCorrelation(mid, values)
    if tag == _TAG_NNLS_REQUEST:
        stage, k = _NNLS_HDR.unpack_from(body, 0)
        if stage >= len(NNLS_STAGES):
            raise DistributedProtocolError(f"unknown NNLS stage byte {stage}")
        support, offset = _read_i8(body, _NNLS_HDR.size, k, "NnlsRequest support")
        _check_consumed(body, offset, "NnlsRequest")
        return NnlsRequest(NNLS_STAGES[stage], support)
    if tag == _TAG_PARTIAL_WEIGHTS:
        mid, k = _PARTIAL_HDR.unpack_from(body, 0)
        weights, offset = _read_f8(body, _PARTIAL_HDR.size, k, "PartialWeights values")
        _check_consumed(body, offset, "PartialWeights")
        return PartialWeights(mid, weights)
    if tag == _TAG_RESIDUAL_UPDATE:
        mid, resid_sq, k = _RESID_HDR.unpack_from(body, 0)
        weights, offset = _read_f8(body, _RESID_HDR.size, k, "ResidualUpdate weights")
        _check_consumed(body, offset, "ResidualUpdate")
        return ResidualUpdate(mid, resid_sq, weights)
    if tag == _TAG_COLUMNS_REQUEST:
        (k,) = _COLREQ_HDR.unpack_from(body, 0)
        support, offset = _read_i8(body, _COLREQ_HDR.size, k, "ColumnsRequest support")
        _check_consumed(body, offset, "ColumnsRequest")
        return ColumnsRequest(support)
    if tag == _TAG_COLUMNS_PART:
        mid, row0, row1, k = _COLPART_HDR.unpack_from(body, 0)
        rows = row1 - row0
        flat, offset = _read_f8(body, _COLPART_HDR.size, rows * k, "ColumnsPart block")
        b_seg, offset = _read_f8(body, offset, rows, "ColumnsPart b segment")
        _check_consumed(body, offset, "ColumnsPart")
        return ColumnsPart(mid, row0, row1, flat.reshape(rows, k), b_seg)
    if tag == _TAG_DONE:
        if body:
            raise DistributedProtocolError("Done carries no body")
        return Done()
    if tag == _TAG_ERROR:
        mid, n = _ERROR_HDR.unpack_from(body, 0)
        _need(body, _ERROR_HDR.size, n, "Error message")
        text = body[_ERROR_HDR.size:_ERROR_HDR.size + n].decode("utf-8", errors="replace")
        return ErrorMessage(mid, text)
    raise DistributedProtocolError(f"unknown message tag {tag}")


def _check_consumed(body, offset, what):
    if offset != len(body):
        raise DistributedProtocolError(
            f"{what} has {len(body) - offset} trailing bytes"
        )


# ---------------------------------------------------------------------------
# Framing and transports


def send_frame(sock, payload):
    sock.sendall(struct.pack("<I", len(payload)) + payload)


def _recv_exact(sock, count):
    chunks = []
    got = 0
    while got < count:
        chunk = sock.recv(count - got)
        if not chunk:
            raise ConnectionError(f"connection closed after {got} of {count} bytes")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def recv_frame(sock):
    (length,) = struct.unpack("<I", _recv_exact(sock, 4))
    if length > _MAX_FRAME:
        raise DistributedProtocolError(f"declared frame length {length} exceeds bound")
    return _recv_exact(sock, length)


class FrameRecorder:
    """Captures every frame a connection carries, for transport equivalence tests."""

    def __init__(self):
        self.frames = []  # (machine_id, direction, payload bytes)

    def record(self, machine_id, direction, payload):
        self.frames.append((machine_id, direction, bytes(payload)))


class LocalConnection:
    """Drives a worker in-process; same bytes as the wire, no sockets."""

    def __init__(self, worker, machine_id, recorder=None):
        self._worker = worker
        self.machine_id = machine_id
        self._recorder = recorder
        self._stopped = False

    def request(self, payload):
        if self._stopped:
            raise ConnectionError("worker already stopped")
        if self._recorder:
            self._recorder.record(self.machine_id, "send", payload)
        reply, stop = self._worker.handle_frame(payload)
        if self._recorder:
            self._recorder.record(self.machine_id, "recv", reply)
        self._stopped = stop
        return reply

    def close(self):
        self._stopped = True


class SocketConnection:
    """Coordinator side of one worker's socket."""

    def __init__(self, sock, machine_id, recorder=None):
        self._sock = sock
        self.machine_id = machine_id
        self._recorder = recorder

    def request(self, payload):
        if self._recorder:
            self._recorder.record(self.machine_id, "send", payload)
        send_frame(self._sock, payload)
        reply = recv_frame(self._sock)
        if self._recorder:
            self._recorder.record(self.machine_id, "recv", reply)
        return reply

    def close(self):
        try:
            self._sock.close()
        except OSError:
            pass


# ---------------------------------------------------------------------------
# Worker


class ShardWorker:
    """Pure frame handler over one design shard.

    State between rounds: the committed support/weights and the local
    residual b_i - A_i[:, S] @ w_i.  A final-stage NnlsRequest commits; a
    pool-stage request does not.
    """

    def __init__(self, shard):
        self.shard = shard
        self.a = np.ascontiguousarray(shard.a_rows, dtype=np.float64)
        self.b = np.ascontiguousarray(shard.b_rows, dtype=np.float64)
        self.nnls_tol = 1e-10
        self.nnls_max_iter = 3000
        self.resid = self.b.copy()
        self.support = None
        self.weights = None

    def handle_frame(self, payload):
        """Decode, dispatch, encode.  Returns (reply bytes, stop flag)."""
        mid = self.shard.assignment.machine_id
        try:
            msg = decode_message(payload)
        except Exception as exc:
            return encode_message(ErrorMessage(mid, f"undecodable frame: {exc}")), True
        try:
            reply, stop = self._dispatch(msg)
        except Exception as exc:
            return encode_message(ErrorMessage(mid, f"{type(exc).__name__}: {exc}")), True
        return encode_message(reply), stop

    def _dispatch(self, msg):
        asg = self.shard.assignment
        if isinstance(msg, Init):
            if msg.machine_id != asg.machine_id or msg.n_machines != asg.n_machines:
                raise DistributedProtocolError(
                    f"shard is machine {asg.machine_id}/{asg.n_machines}, "
                    f"coordinator addressed {msg.machine_id}/{msg.n_machines}"
                )
            self.nnls_tol = msg.nnls_tol
            self.nnls_max_iter = msg.nnls_max_iter
            self.resid = self.b.copy()
            self.support = None
            self.weights = None
            return InitAck(
                machine_id=asg.machine_id,
                n_machines=asg.n_machines,
                n_samples=self.a.shape[1],
                row_start=asg.row_start,
                row_stop=asg.row_stop,
                b_norm_sq=float(np.dot(self.b, self.b)),
            ), False
        if isinstance(msg, CorrelateRequest):
            return PartialCorrelation(asg.machine_id, self.a.T @ self.resid), False
        if isinstance(msg, NnlsRequest):
            sub = self.a[:, msg.support]
            res = solve_nnls(sub, self.b, tol=self.nnls_tol, max_iter=self.nnls_max_iter)
            if msg.stage == "pool":
                return PartialWeights(asg.machine_id, res.weights), False
            r = self.b - sub @ res.weights
            self.support = msg.support.copy()
            self.weights = res.weights
            self.resid = r
            return ResidualUpdate(asg.machine_id, float(np.dot(r, r)), res.weights), False
        if isinstance(msg, ColumnsRequest):
            return ColumnsPart(
                machine_id=asg.machine_id,
                row_start=asg.row_start,
                row_stop=asg.row_stop,
                block=self.a[:, msg.support],
                b_segment=self.b,
            ), False
        if isinstance(msg, Done):
            return Done(), True
        raise DistributedProtocolError(f"unexpected message {type(msg).__name__}")


def run_worker(sock, shard):
    """Serve one coordinator connection until Done or disconnect."""
    worker = ShardWorker(shard)
    while True:
        try:
            payload = recv_frame(sock)
        except (ConnectionError, OSError):
            return
        reply, stop = worker.handle_frame(payload)
        try:
            send_frame(sock, reply)
        except OSError:
            return
        if stop:
            return


def serve_worker(shard, host="127.0.0.1", port=0, ready_callback=None):
    """Listen for exactly one coordinator connection and serve it."""
    listener = socket.create_server((host, port))
    try:
        if ready_callback is not None:
            ready_callback(listener.getsockname())
        conn, _ = listener.accept()
        try:
            run_worker(conn, shard)
        finally:
            conn.close()
    finally:
        listener.close()


# ---------------------------------------------------------------------------
# Coordinator


def _expect(reply_payload, expected_type, machine_id, phase):
    msg = decode_message(reply_payload)
    if isinstance(msg, ErrorMessage):
        raise DistributedProtocolError(
            f"machine {msg.machine_id} reported an error during {phase}: {msg.message}"
        )
    if not isinstance(msg, expected_type):
        raise DistributedProtocolError(
            f"machine {machine_id} sent {type(msg).__name__} during {phase}, "
            f"expected {expected_type.__name__}"
        )
    if hasattr(msg, "machine_id") and msg.machine_id != machine_id:
        raise DistributedProtocolError(
            f"reply claims machine {msg.machine_id} but arrived on machine "
            f"{machine_id}'s connection during {phase}"
        )
    return msg


def _roundtrip(conn, msg, expected_type, phase):
    try:
        reply = conn.request(encode_message(msg))
    except DistributedProtocolError:
        raise
    except Exception as exc:
        raise DistributedProtocolError(
            f"machine {conn.machine_id} failed during {phase}: {exc}"
        ) from exc
    return _expect(reply, expected_type, conn.machine_id, phase)


def run_coordinator(connections, config, n_machines, sample_ids=None):
    """Drive the full pursuit over already-established worker connections.

    ``connections`` must be ordered by machine id; reductions follow that
    order.  Returns a Selection with algorithm 'gtp_dist'.
    """
    if len(connections) != n_machines:
        raise ValueError(f"got {len(connections)} connections for {n_machines} machines")
    budget = config.budget
    t0 = time.perf_counter()

    acks = []
    for mid, conn in enumerate(connections):
        ack = _roundtrip(conn, Init(
            machine_id=mid,
            n_machines=n_machines,
            budget=budget,
            iterations=config.iterations,
            correlation_mode=config.correlation_mode,
            nnls_tol=config.nnls_tol,
            nnls_max_iter=config.nnls_max_iter,
        ), InitAck, "init")
        acks.append(ack)
    n = acks[0].n_samples
    for ack in acks[1:]:
        if ack.n_samples != n:
            raise DistributedProtocolError(
                f"machine {ack.machine_id} holds {ack.n_samples} columns, machine 0 holds {n}"
            )
    row = 0
    for ack in acks:
        if ack.row_start != row:
            raise DistributedProtocolError(
                f"machine {ack.machine_id} starts at row {ack.row_start}, expected {row}"
            )
        row = ack.row_stop
    m = row
    if budget > n:
        raise ValueError(f"budget {budget} exceeds the {n} available samples")
    pool_size = min(2 * budget, n)
    pool_clamped = pool_size < 2 * budget

    b_norm_sq = 0.0
    for ack in acks:
        b_norm_sq += ack.b_norm_sq
    history = [math.sqrt(b_norm_sq)]
    supports = []
    iteration_times = []

    def correlate():
        total = None
        for conn in connections:
            part = _roundtrip(conn, CorrelateRequest(), PartialCorrelation, "correlate")
            if part.values.shape != (n,):
                raise DistributedProtocolError(
                    f"machine {conn.machine_id} sent {part.values.shape[0]} correlations, "
                    f"expected {n}"
                )
            if total is None:
                total = part.values
            else:
                total = total + part.values
        return total

    def pool_round(support):
        total = None
        for conn in connections:
            part = _roundtrip(conn, NnlsRequest("pool", support), PartialWeights, "pool solve")
            if part.weights.shape != support.shape:
                raise DistributedProtocolError(
                    f"machine {conn.machine_id} sent {part.weights.shape[0]} pool weights "
                    f"for a support of {support.size}"
                )
            if total is None:
                total = part.weights
            else:
                total = total + part.weights
        return total

    def final_round(support):
        total_w = None
        total_sq = 0.0
        for conn in connections:
            upd = _roundtrip(conn, NnlsRequest("final", support), ResidualUpdate, "final solve")
            if upd.weights.shape != support.shape:
                raise DistributedProtocolError(
                    f"machine {conn.machine_id} sent {upd.weights.shape[0]} weights "
                    f"for a support of {support.size}"
                )
            if total_w is None:
                total_w = upd.weights
            else:
                total_w = total_w + upd.weights
            total_sq += upd.resid_sq
        return total_w, total_sq

    it0 = time.perf_counter()
    proxy = correlate()
    support = np.sort(top_indices(proxy, budget))
    w_agg, resid_sq = final_round(support)
    history.append(math.sqrt(resid_sq))
    supports.append([int(i) for i in support])
    iteration_times.append(time.perf_counter() - it0)

    for _ in range(2, config.iterations + 1):
        it0 = time.perf_counter()
        proxy = correlate() if config.correlation_mode == "residual" else proxy
        pool = top_indices(proxy, pool_size)
        t_ind = np.union1d(support, pool).astype(np.int64)
        w_pool = pool_round(t_ind)
        candidate = prune_to_budget(t_ind, w_pool, budget, proxy)
        w_cand, resid_sq_cand = final_round(candidate)
        rnorm_cand = math.sqrt(resid_sq_cand)
        if rnorm_cand < history[-1]:
            support = candidate
            w_agg = w_cand
            history.append(rnorm_cand)
        else:
            # Re-commit the incumbent so worker residual state matches the
            # support we are keeping (the deterministic solver reproduces the
            # incumbent's weights exactly).
            final_round(support)
            history.append(history[-1])
        supports.append([int(i) for i in support])
        iteration_times.append(time.perf_counter() - it0)

    # Gather the surviving columns and solve one global problem for the
    # reported weights.
    a_final = np.zeros((m, budget))
    b_final = np.zeros(m)
    for conn, ack in zip(connections, acks):
        part = _roundtrip(conn, ColumnsRequest(support), ColumnsPart, "column gather")
        if part.row_start != ack.row_start or part.row_stop != ack.row_stop:
            raise DistributedProtocolError(
                f"machine {conn.machine_id} sent rows [{part.row_start}, {part.row_stop}), "
                f"expected [{ack.row_start}, {ack.row_stop})"
            )
        a_final[part.row_start:part.row_stop] = part.block
        b_final[part.row_start:part.row_stop] = part.b_segment
    res = solve_nnls(a_final, b_final, tol=config.nnls_tol, max_iter=config.nnls_max_iter)
    r = b_final - a_final @ res.weights
    rnorm_final = math.sqrt(float(np.dot(r, r)))
    history.append(rnorm_final)

    for conn in connections:
        _roundtrip(conn, Done(), Done, "shutdown")

    echo = asdict(config)
    echo.update({
        "algorithm": "gtp_dist",
        "n_samples": int(n),
        "m": int(m),
        "pool_clamped": bool(pool_clamped),
        "n_machines": int(n_machines),
    })
    return Selection(
        algorithm="gtp_dist",
        budget=budget,
        indices=support,
        weights=res.weights,
        final_residual=rnorm_final,
        residual_history=history,
        per_iteration_supports=supports,
        config_echo=echo,
        timings={
            "total_s": time.perf_counter() - t0,
            "iterations_s": iteration_times,
        },
        pool_clamped=pool_clamped,
        aggregated_weights=w_agg,
        sample_ids=list(sample_ids) if sample_ids is not None else None,
    )


def dist_cosamp(design, config, n_machines, transport="local", recorder=None):
    """Partition a design, run the distributed pursuit, return its Selection.

    transport 'local' drives workers in-process; 'socket' runs each worker
    in a thread behind a stream socket.  Both carry identical frames, so the
    result is transport-independent.
    """
    shards = partition_design(design, n_machines)
    if transport == "local":
        connections = [
            LocalConnection(ShardWorker(shard), shard.assignment.machine_id, recorder)
            for shard in shards
        ]
        return run_coordinator(connections, config, n_machines,
                               sample_ids=design.sample_ids)
    if transport == "socket":
        connections = []
        threads = []
        try:
            for shard in shards:
                coord_sock, worker_sock = socket.socketpair()
                thread = threading.Thread(
                    target=run_worker, args=(worker_sock, shard), daemon=True
                )
                thread.start()
                threads.append((thread, worker_sock))
                connections.append(
                    SocketConnection(coord_sock, shard.assignment.machine_id, recorder)
                )
            return run_coordinator(connections, config, n_machines,
                                   sample_ids=design.sample_ids)
        finally:
            for conn in connections:
                conn.close()
            for thread, worker_sock in threads:
                thread.join(timeout=10.0)
                try:
                    worker_sock.close()
                except OSError:
                    pass
    raise ValueError(f"unknown transport {transport!r}, expected 'local' or 'socket'")
