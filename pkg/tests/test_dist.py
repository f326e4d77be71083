"""Distributed pursuit: partitioning, codec, transports, bit-exactness."""

import socket
import threading

import numpy as np
import pytest

from trajselect import (
    BadMagicError,
    DistributedProtocolError,
    PursuitConfig,
    TruncatedPayloadError,
    assemble_design_from_trajectories,
    dist_cosamp,
    fit_evolving_subspace,
    gen_synthetic_trajectory,
    iter_cosamp,
    partition_design,
    partition_timesteps,
    read_shard,
    run_coordinator,
    validate_selection,
    write_shard,
)
from trajselect.pursuit import solve_support
from trajselect.distributed import (
    ColumnsPart,
    ColumnsRequest,
    CorrelateRequest,
    Done,
    ErrorMessage,
    FrameRecorder,
    Init,
    InitAck,
    LocalConnection,
    NnlsRequest,
    PartialCorrelation,
    PartialWeights,
    ResidualUpdate,
    ShardWorker,
    SocketConnection,
    decode_message,
    encode_message,
    recv_frame,
    send_frame,
    serve_worker,
)


def make_design(n_samples=30, n_timesteps=6, grad_dim=10, subspace_dim=3, seed=0):
    train = gen_synthetic_trajectory(n_samples, n_timesteps, grad_dim,
                                     seed=seed, role="train")
    target = gen_synthetic_trajectory(max(4, n_samples // 5), n_timesteps,
                                      grad_dim, seed=seed, role="target")
    basis = fit_evolving_subspace(train, subspace_dim, seed=seed)
    return assemble_design_from_trajectories(train, target, basis)


class TestPartitioning:
    def test_contiguous_cover_with_extras_first(self):
        assert partition_timesteps(10, 3) == [(0, 4), (4, 7), (7, 10)]
        assert partition_timesteps(6, 6) == [(i, i + 1) for i in range(6)]
        assert partition_timesteps(5, 1) == [(0, 5)]

    def test_rejects_more_machines_than_timesteps(self):
        with pytest.raises(ValueError, match="n_machines"):
            partition_timesteps(3, 4)
        with pytest.raises(ValueError, match="n_machines"):
            partition_timesteps(3, 0)

    def test_partition_design_rows(self):
        design = make_design()
        shards = partition_design(design, 4)
        assert len(shards) == 4
        row = 0
        for mid, shard in enumerate(shards):
            asg = shard.assignment
            assert asg.machine_id == mid
            assert asg.row_start == row
            assert asg.row_start == asg.t_start * design.subspace_dim
            np.testing.assert_array_equal(
                shard.a_rows, design.a[asg.row_start:asg.row_stop]
            )
            np.testing.assert_array_equal(
                shard.b_rows, design.b[asg.row_start:asg.row_stop]
            )
            row = asg.row_stop
        assert row == design.m

    def test_shard_file_round_trip(self, tmp_path):
        design = make_design()
        shard = partition_design(design, 3)[1]
        path = tmp_path / "shard.bin"
        write_shard(shard, path)
        back = read_shard(path)
        assert back.assignment == shard.assignment
        np.testing.assert_array_equal(back.a_rows, shard.a_rows)
        np.testing.assert_array_equal(back.b_rows, shard.b_rows)
        assert back.sample_ids == shard.sample_ids
        assert back.n_timesteps == shard.n_timesteps
        assert back.subspace_dim == shard.subspace_dim

    def test_shard_file_malformed(self, tmp_path):
        design = make_design()
        shard = partition_design(design, 2)[0]
        path = tmp_path / "shard.bin"
        write_shard(shard, path)
        raw = path.read_bytes()
        bad = bytearray(raw)
        bad[:8] = b"BADSHARD"
        path.write_bytes(bytes(bad))
        with pytest.raises(BadMagicError):
            read_shard(path)
        path.write_bytes(raw[:-8])
        with pytest.raises(TruncatedPayloadError):
            read_shard(path)


class TestCodec:
    def _round_trip(self, msg):
        back = decode_message(encode_message(msg))
        assert type(back) is type(msg)
        return back

    def test_init(self):
        back = self._round_trip(Init(2, 5, 16, 10, "target_literal", 1e-10, 3000))
        assert back == Init(2, 5, 16, 10, "target_literal", 1e-10, 3000)

    def test_init_ack(self):
        back = self._round_trip(InitAck(1, 3, 40, 6, 12, 2.5))
        assert back == InitAck(1, 3, 40, 6, 12, 2.5)

    def test_bodyless_messages(self):
        self._round_trip(CorrelateRequest())
        self._round_trip(Done())

    def test_float_payloads_are_bit_exact(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(17)
        back = self._round_trip(PartialCorrelation(3, values))
        assert back.machine_id == 3
        np.testing.assert_array_equal(back.values, values)
        assert back.values.tobytes() == values.astype("<f8").tobytes()

    def test_nnls_request(self):
        support = np.array([0, 4, 9], dtype=np.int64)
        back = self._round_trip(NnlsRequest("final", support))
        assert back.stage == "final"
        np.testing.assert_array_equal(back.support, support)

    def test_partial_weights_and_residual_update(self):
        w = np.array([0.5, 0.0, 1.25])
        back = self._round_trip(PartialWeights(1, w))
        np.testing.assert_array_equal(back.weights, w)
        upd = self._round_trip(ResidualUpdate(2, 3.75, w))
        assert upd.resid_sq == 3.75
        np.testing.assert_array_equal(upd.weights, w)

    def test_columns_messages(self):
        support = np.array([1, 3], dtype=np.int64)
        back = self._round_trip(ColumnsRequest(support))
        np.testing.assert_array_equal(back.support, support)
        block = np.arange(8, dtype=np.float64).reshape(4, 2)
        part = self._round_trip(ColumnsPart(0, 4, 8, block, np.arange(4.0)))
        assert (part.row_start, part.row_stop) == (4, 8)
        np.testing.assert_array_equal(part.block, block)
        np.testing.assert_array_equal(part.b_segment, np.arange(4.0))

    def test_error_message(self):
        back = self._round_trip(ErrorMessage(7, "boom: ünïcode"))
        assert back == ErrorMessage(7, "boom: ünïcode")

    def test_version_mismatch(self):
        payload = bytearray(encode_message(Done()))
        payload[0] = 99
        with pytest.raises(DistributedProtocolError, match="version 99"):
            decode_message(bytes(payload))

    def test_unknown_tag(self):
        payload = bytearray(encode_message(Done()))
        payload[1] = 200
        with pytest.raises(DistributedProtocolError, match="tag 200"):
            decode_message(bytes(payload))

    def test_trailing_bytes_rejected(self):
        payload = encode_message(PartialWeights(0, np.array([1.0]))) + b"\x00"
        with pytest.raises(DistributedProtocolError, match="trailing"):
            decode_message(payload)

    def test_truncated_array_rejected(self):
        payload = encode_message(PartialCorrelation(0, np.ones(5)))[:-8]
        with pytest.raises(DistributedProtocolError, match="truncated"):
            decode_message(payload)

    def test_empty_frame_rejected(self):
        with pytest.raises(DistributedProtocolError, match="no header"):
            decode_message(b"\x01")


class TestFraming:
    def test_send_recv_round_trip(self):
        a, b = socket.socketpair()
        try:
            payload = encode_message(PartialCorrelation(0, np.arange(5.0)))
            send_frame(a, payload)
            assert recv_frame(b) == payload
        finally:
            a.close()
            b.close()

    def test_closed_peer_raises_connection_error(self):
        a, b = socket.socketpair()
        a.close()
        try:
            with pytest.raises(ConnectionError):
                recv_frame(b)
        finally:
            b.close()


class TestSingleMachineEquivalence:
    @pytest.mark.parametrize("mode", ["residual", "target_literal"])
    def test_matches_iter_cosamp_bitwise(self, mode):
        design = make_design(seed=3)
        cfg = PursuitConfig(budget=5, iterations=6, correlation_mode=mode)
        single = iter_cosamp(design, cfg)
        dist = dist_cosamp(design, cfg, n_machines=1)
        np.testing.assert_array_equal(dist.indices, single.indices)
        np.testing.assert_array_equal(dist.weights, single.weights)
        # One extra entry: the final gathered solve repeats the committed
        # residual when nothing changes.
        assert dist.residual_history[:-1] == single.residual_history
        assert dist.per_iteration_supports == single.per_iteration_supports

    def test_multi_machine_selection_is_well_formed(self):
        # With several machines each shard fits its own rows, so the chosen
        # support may differ from the single-machine run; what must hold is
        # that the selection is valid and the reported weights are the global
        # solve on the final support (the gathered bytes reassemble the full
        # columns exactly).
        design = make_design(seed=4)
        cfg = PursuitConfig(budget=4, iterations=5)
        for n_machines in (2, 3, 6):
            dist = dist_cosamp(design, cfg, n_machines=n_machines)
            assert validate_selection(dist, design.n_samples) == []
            w, rnorm, _, _ = solve_support(
                design.a, design.b, dist.indices, cfg.nnls_tol, cfg.nnls_max_iter
            )
            np.testing.assert_array_equal(dist.weights, w)
            assert dist.final_residual == rnorm
            assert dist.config_echo["n_machines"] == n_machines
            assert len(dist.residual_history) == cfg.iterations + 2
            committed = np.asarray(dist.residual_history[:-1])
            assert np.all(np.diff(committed) <= 0.0)


class TestTransportEquivalence:
    def test_local_and_socket_carry_identical_frames(self):
        design = make_design(seed=5)
        cfg = PursuitConfig(budget=4, iterations=4)
        rec_local = FrameRecorder()
        rec_socket = FrameRecorder()
        sel_local = dist_cosamp(design, cfg, n_machines=3, transport="local",
                                recorder=rec_local)
        sel_socket = dist_cosamp(design, cfg, n_machines=3, transport="socket",
                                 recorder=rec_socket)
        assert rec_local.frames == rec_socket.frames
        np.testing.assert_array_equal(sel_local.indices, sel_socket.indices)
        np.testing.assert_array_equal(sel_local.weights, sel_socket.weights)
        assert sel_local.residual_history == sel_socket.residual_history

    def test_unknown_transport(self):
        design = make_design()
        with pytest.raises(ValueError, match="transport"):
            dist_cosamp(design, PursuitConfig(budget=3), 2, transport="carrier_pigeon")


class TestCoordinatorValidation:
    def test_budget_exceeding_columns(self):
        design = make_design(n_samples=5)
        with pytest.raises(ValueError, match="budget"):
            dist_cosamp(design, PursuitConfig(budget=6, iterations=2), 2)

    def test_connection_count_mismatch(self):
        design = make_design()
        shards = partition_design(design, 2)
        conns = [LocalConnection(ShardWorker(s), s.assignment.machine_id)
                 for s in shards]
        with pytest.raises(ValueError, match="connections"):
            run_coordinator(conns, PursuitConfig(budget=3), 3)

    def test_init_addressed_to_wrong_machine(self):
        design = make_design()
        shards = partition_design(design, 2)
        # Swap the shards so machine ids disagree with connection order.
        conns = [
            LocalConnection(ShardWorker(shards[1]), 0),
            LocalConnection(ShardWorker(shards[0]), 1),
        ]
        with pytest.raises(DistributedProtocolError, match="machine 1"):
            run_coordinator(conns, PursuitConfig(budget=3), 2)

    def test_dead_worker_is_named(self):
        design = make_design()
        shards = partition_design(design, 3)

        class DeadConnection:
            machine_id = 1

            def request(self, payload):
                raise ConnectionError("peer vanished")

            def close(self):
                pass

        conns = [
            LocalConnection(ShardWorker(shards[0]), 0),
            DeadConnection(),
            LocalConnection(ShardWorker(shards[2]), 2),
        ]
        with pytest.raises(DistributedProtocolError, match="machine 1.*init"):
            run_coordinator(conns, PursuitConfig(budget=3), 3)

    def test_worker_error_frame_is_surfaced(self):
        design = make_design()
        shards = partition_design(design, 2)

        class Garbler:
            machine_id = 0

            def __init__(self, worker):
                self._worker = worker

            def request(self, payload):
                reply, _ = self._worker.handle_frame(b"\x01\xff garbage")
                return reply

            def close(self):
                pass

        conns = [
            Garbler(ShardWorker(shards[0])),
            LocalConnection(ShardWorker(shards[1]), 1),
        ]
        with pytest.raises(DistributedProtocolError, match="machine 0 reported"):
            run_coordinator(conns, PursuitConfig(budget=3), 2)

    def test_worker_rejects_mid_protocol_init_reuse(self):
        design = make_design()
        shard = partition_design(design, 1)[0]
        worker = ShardWorker(shard)
        reply, stop = worker.handle_frame(encode_message(ColumnsRequest(
            np.array([0], dtype=np.int64)
        )))
        assert not stop
        part = decode_message(reply)
        assert isinstance(part, ColumnsPart)
        reply, stop = worker.handle_frame(encode_message(InitAck(0, 1, 1, 0, 1, 0.0)))
        err = decode_message(reply)
        assert isinstance(err, ErrorMessage)
        assert "InitAck" in err.message
        assert stop


class RecordingWorker(ShardWorker):
    """Snapshots the local residual every time a correlation is requested."""

    def __init__(self, shard, log):
        super().__init__(shard)
        self._log = log

    def _dispatch(self, msg):
        if isinstance(msg, CorrelateRequest):
            self._log.setdefault(
                self.shard.assignment.machine_id, []
            ).append(self.resid.copy())
        return super()._dispatch(msg)


class TestGatherSumCorrelations:
    @pytest.mark.parametrize("n_machines", [2, 5])
    def test_summed_partials_match_full_product(self, n_machines):
        design = make_design(n_samples=40, n_timesteps=10, grad_dim=12,
                             subspace_dim=3, seed=6)
        cfg = PursuitConfig(budget=6, iterations=5)
        shards = partition_design(design, n_machines)
        log = {}
        conns = [
            LocalConnection(RecordingWorker(s, log), s.assignment.machine_id)
            for s in shards
        ]
        run_coordinator(conns, cfg, n_machines, sample_ids=design.sample_ids)
        rounds = len(log[0])
        assert rounds == cfg.iterations  # one per iteration in residual mode
        for r in range(rounds):
            full_resid = np.concatenate([log[mid][r] for mid in range(n_machines)])
            oracle = design.a.T @ full_resid
            summed = None
            for mid, shard in enumerate(shards):
                part = shard.a_rows.T @ log[mid][r]
                summed = part if summed is None else summed + part
            assert np.max(np.abs(summed - oracle)) <= 1e-6


class TestTcpPath:
    def test_serve_worker_over_tcp_matches_local(self):
        design = make_design(seed=7)
        cfg = PursuitConfig(budget=4, iterations=4)
        shards = partition_design(design, 2)
        threads = []
        conns = []
        try:
            for shard in shards:
                holder = {}
                ready = threading.Event()

                def ready_cb(addr, holder=holder, ready=ready):
                    holder["addr"] = addr
                    ready.set()

                t = threading.Thread(target=serve_worker, args=(shard,),
                                     kwargs={"ready_callback": ready_cb},
                                     daemon=True)
                t.start()
                threads.append(t)
                assert ready.wait(timeout=10.0)
                sock = socket.create_connection(holder["addr"], timeout=10.0)
                conns.append(SocketConnection(sock, shard.assignment.machine_id))
            sel_tcp = run_coordinator(conns, cfg, 2, sample_ids=design.sample_ids)
            sel_local = dist_cosamp(design, cfg, n_machines=2)
            np.testing.assert_array_equal(sel_tcp.indices, sel_local.indices)
            np.testing.assert_array_equal(sel_tcp.weights, sel_local.weights)
            assert sel_tcp.residual_history == sel_local.residual_history
        finally:
            for conn in conns:
                conn.close()
            for t in threads:
                t.join(timeout=10.0)
