"""Command-line interface covering the full selection pipeline.

Subcommands: ``synth`` (fixture trajectories), ``fit-subspace``,
``assemble``, ``select`` (algorithms: gtp, gtp_dist, topk, omp, random),
``oracle`` (exhaustive search), ``bench`` (runtime scaling), and the
distributed trio ``partition`` / ``worker`` / ``coordinate``.

Conventions: every output file is written atomically; JSON reports echo the
effective configuration and carry sha256 digests of their inputs; each
subcommand takes at most one ``--seed``.  Exit codes: 0 on success, 2 for
validation problems (bad arguments, missing or malformed inputs), 1 for
runtime failures (worker failures, I/O errors mid-run).  Log verbosity comes
from the TRAJSELECT_LOG environment variable (debug/info/warning/quiet;
default info).
"""

import argparse
import json
import logging
import os
import socket
import sys

import numpy as np

from . import __version__
from .bench import plot_scaling, run_scaling_bench
from .distributed import (
    DistributedProtocolError,
    SocketConnection,
    dist_cosamp,
    partition_design,
    read_shard,
    run_coordinator,
    serve_worker,
    write_shard,
)
from .pursuit import (
    ALGORITHMS,
    PursuitConfig,
    iter_cosamp,
    omp_select,
    random_select,
    selection_to_report,
    top_k_select,
)
from .subspace import (
    METHODS,
    assemble_design_from_trajectories,
    fit_evolving_subspace,
    read_basis,
    read_design,
    write_basis,
    write_design,
)
from .synthetic import brute_force_best_subset, gen_synthetic_trajectory
from .trajectories import TrajectoryFormatError, read_trajectory, write_trajectory
from .util import atomic_write_text, sha256_file

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2

REPORT_SCHEMA_VERSION = 1

_log = logging.getLogger("trajselect")


def _setup_logging():
    level_name = os.environ.get("TRAJSELECT_LOG", "info").strip().lower()
    levels = {
        "debug": logging.DEBUG,
        "info": logging.INFO,
        "warning": logging.WARNING,
        "error": logging.ERROR,
        "quiet": logging.CRITICAL,
    }
    logging.basicConfig(
        level=levels.get(level_name, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _digest(path):
    return {"path": str(path), "digest": sha256_file(path)}


def _write_report(path, report):
    atomic_write_text(path, json.dumps(report, indent=2) + "\n")


def _check_seed(seed):
    if seed < 0:
        raise ValueError(f"--seed must be non-negative, got {seed}")
    return seed


def cmd_synth(args):
    _check_seed(args.seed)
    if not 1 <= args.target_clusters <= args.clusters:
        raise ValueError(
            f"--target-clusters must be in [1, {args.clusters}], got {args.target_clusters}"
        )
    train = gen_synthetic_trajectory(
        args.samples, args.timesteps, args.grad_dim, n_clusters=args.clusters,
        drift=args.drift, noise=args.noise, seed=args.seed, role="train",
    )
    # The target shares the train clusters' drifting centers (same seed) but
    # only visits the first --target-clusters of them.
    target_assignment = np.arange(args.target_samples) % args.target_clusters
    target = gen_synthetic_trajectory(
        args.target_samples, args.timesteps, args.grad_dim, n_clusters=args.clusters,
        drift=args.drift, noise=args.noise, seed=args.seed, role="target",
        cluster_of=target_assignment,
    )
    write_trajectory(train, args.out_train)
    write_trajectory(target, args.out_target)
    _log.info("wrote %s (%d samples) and %s (%d samples)",
              args.out_train, args.samples, args.out_target, args.target_samples)
    return EXIT_OK


def cmd_fit_subspace(args):
    _check_seed(args.seed)
    grads = read_trajectory(args.train)
    basis = fit_evolving_subspace(grads, args.subspace_dim, method=args.method,
                                  seed=args.seed)
    write_basis(basis, args.out)
    _write_report(str(args.out) + ".meta.json", {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "fit-subspace",
        "inputs": {"train": _digest(args.train)},
        "config": {
            "subspace_dim": args.subspace_dim,
            "method": args.method,
            "seed": args.seed,
        },
        "completed_timesteps": [int(t) for t in np.flatnonzero(basis.completed)],
    })
    _log.info("wrote %s (%s, d_s=%d, %d/%d timesteps rank-completed)",
              args.out, args.method, args.subspace_dim,
              int(basis.completed.sum()), basis.n_timesteps)
    return EXIT_OK


def cmd_assemble(args):
    train = read_trajectory(args.train)
    target = read_trajectory(args.target)
    basis = read_basis(args.basis)
    design = assemble_design_from_trajectories(train, target, basis)
    write_design(design, args.out)
    _write_report(str(args.out) + ".meta.json", {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "assemble",
        "inputs": {
            "train": _digest(args.train),
            "target": _digest(args.target),
            "basis": _digest(args.basis),
        },
        "config": {},
        "design": {
            "m": design.m,
            "n_samples": design.n_samples,
            "n_timesteps": design.n_timesteps,
            "subspace_dim": design.subspace_dim,
        },
    })
    _log.info("wrote %s (m=%d, N=%d)", args.out, design.m, design.n_samples)
    return EXIT_OK


def cmd_select(args):
    _check_seed(args.seed)
    design = read_design(args.design)
    algorithm = args.algorithm
    if algorithm in ("gtp", "gtp_dist"):
        config = PursuitConfig(
            budget=args.budget,
            iterations=args.iterations,
            correlation_mode=args.correlation_mode,
            nnls_tol=args.nnls_tol,
            nnls_max_iter=args.nnls_max_iter,
            seed=args.seed,
        )
        if algorithm == "gtp":
            selection = iter_cosamp(design, config)
        else:
            if args.machines < 1:
                raise ValueError(f"--machines must be >= 1, got {args.machines}")
            selection = dist_cosamp(design, config, args.machines,
                                    transport=args.transport)
    elif algorithm == "topk":
        selection = top_k_select(design, args.budget, nnls_tol=args.nnls_tol,
                                 nnls_max_iter=args.nnls_max_iter)
    elif algorithm == "omp":
        selection = omp_select(design, args.budget, nnls_tol=args.nnls_tol,
                               nnls_max_iter=args.nnls_max_iter)
    elif algorithm == "random":
        selection = random_select(design, args.budget, seed=args.seed,
                                  nnls_tol=args.nnls_tol,
                                  nnls_max_iter=args.nnls_max_iter)
    else:  # pragma: no cover - argparse choices guard this
        raise ValueError(f"unknown algorithm {algorithm!r}")
    _write_report(args.out, {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "select",
        "inputs": {"design": _digest(args.design)},
        "selection": selection_to_report(selection),
    })
    _log.info("%s selected %d samples, final residual %.6g -> %s",
              algorithm, args.budget, selection.final_residual, args.out)
    return EXIT_OK


def cmd_oracle(args):
    design = read_design(args.design)
    support, weights, residual = brute_force_best_subset(
        design.a, design.b, args.budget,
        nnls_tol=args.nnls_tol, nnls_max_iter=args.nnls_max_iter,
    )
    _write_report(args.out, {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "oracle",
        "inputs": {"design": _digest(args.design)},
        "config": {
            "budget": args.budget,
            "nnls_tol": args.nnls_tol,
            "nnls_max_iter": args.nnls_max_iter,
        },
        "support": [int(i) for i in support],
        "sample_ids": [design.sample_ids[int(i)] for i in support],
        "weights": [float(w) for w in weights],
        "residual": float(residual),
    })
    _log.info("oracle over %d-subsets: residual %.6g -> %s",
              args.budget, residual, args.out)
    return EXIT_OK


def cmd_bench(args):
    _check_seed(args.seed)
    budgets = [int(b) for b in args.budgets.split(",") if b.strip()]
    result = run_scaling_bench(
        n_samples=args.samples, m=args.m, budgets=budgets,
        iterations=args.iterations, sparsity=args.sparsity,
        noise_level=args.noise, seed=args.seed, progress=_log.info,
    )
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "bench",
        "inputs": {},
        **result,
    }
    _write_report(args.out, report)
    _log.info("wrote %s", args.out)
    if args.plot:
        try:
            plot_scaling(result, args.plot)
        except ImportError as exc:
            _log.error("plotting requires matplotlib (pip install trajselect[plot]): %s", exc)
            return EXIT_RUNTIME
        _log.info("wrote %s", args.plot)
    return EXIT_OK


def cmd_partition(args):
    design = read_design(args.design)
    shards = partition_design(design, args.machines)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for shard in shards:
        asg = shard.assignment
        path = os.path.join(args.out_dir, f"shard-{asg.machine_id:03d}.bin")
        write_shard(shard, path)
        entries.append({
            "machine_id": asg.machine_id,
            "path": path,
            "digest": sha256_file(path),
            "t_start": asg.t_start,
            "t_stop": asg.t_stop,
            "row_start": asg.row_start,
            "row_stop": asg.row_stop,
        })
    _write_report(os.path.join(args.out_dir, "shards.json"), {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "partition",
        "inputs": {"design": _digest(args.design)},
        "config": {"machines": args.machines},
        "shards": entries,
    })
    _log.info("wrote %d shards to %s", len(shards), args.out_dir)
    return EXIT_OK


def cmd_worker(args):
    shard = read_shard(args.shard)

    def ready(addr):
        _log.info("machine %d serving on %s:%d",
                  shard.assignment.machine_id, addr[0], addr[1])
        if args.port_file:
            atomic_write_text(args.port_file, f"{addr[0]}:{addr[1]}\n")

    serve_worker(shard, host=args.host, port=args.port, ready_callback=ready)
    _log.info("machine %d finished", shard.assignment.machine_id)
    return EXIT_OK


def cmd_coordinate(args):
    _check_seed(args.seed)
    addresses = []
    for part in args.workers.split(","):
        part = part.strip()
        if not part:
            continue
        host, _, port = part.rpartition(":")
        if not host or not port.isdigit():
            raise ValueError(f"worker address {part!r} is not host:port")
        addresses.append((host, int(port)))
    if not addresses:
        raise ValueError("--workers needs at least one host:port")
    config = PursuitConfig(
        budget=args.budget,
        iterations=args.iterations,
        correlation_mode=args.correlation_mode,
        nnls_tol=args.nnls_tol,
        nnls_max_iter=args.nnls_max_iter,
        seed=args.seed,
    )
    inputs = {}
    sample_ids = None
    if args.design:
        design = read_design(args.design)
        sample_ids = design.sample_ids
        inputs["design"] = _digest(args.design)
    connections = []
    try:
        for mid, (host, port) in enumerate(addresses):
            sock = socket.create_connection((host, port), timeout=args.timeout)
            connections.append(SocketConnection(sock, mid))
        selection = run_coordinator(connections, config, len(addresses),
                                    sample_ids=sample_ids)
    finally:
        for conn in connections:
            conn.close()
    _write_report(args.out, {
        "schema_version": REPORT_SCHEMA_VERSION,
        "command": "coordinate",
        "inputs": inputs,
        "workers": [f"{h}:{p}" for h, p in addresses],
        "selection": selection_to_report(selection),
    })
    _log.info("distributed run over %d machines: final residual %.6g -> %s",
              len(addresses), selection.final_residual, args.out)
    return EXIT_OK


def _add_nnls_flags(sub):
    sub.add_argument("--nnls-tol", type=float, default=1e-10,
                     help="relative optimality tolerance for the solver")
    sub.add_argument("--nnls-max-iter", type=int, default=3000,
                     help="outer iteration cap for the solver")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="trajselect",
        description="Subset selection by matching gradient trajectories in "
                    "evolving low-dimensional subspaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic train/target trajectory pair")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-target", required=True)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--target-samples", type=int, default=32)
    p.add_argument("--timesteps", type=int, default=10)
    p.add_argument("--grad-dim", type=int, default=64)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--target-clusters", type=int, default=2,
                   help="target samples come from the first k train clusters")
    p.add_argument("--drift", type=float, default=0.25)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-subspace", help="fit one basis per checkpoint of a trajectory")
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--subspace-dim", type=int, required=True)
    p.add_argument("--method", choices=METHODS, default="pca_uncentered")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_subspace)

    p = sub.add_parser("assemble", help="project trajectories and stack the design system")
    p.add_argument("--train", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--basis", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("select", help="select a weighted subset from a design")
    p.add_argument("--design", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="gtp")
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--correlation-mode", choices=("residual", "target_literal"),
                   default="residual")
    p.add_argument("--machines", type=int, default=1,
                   help="machine count for gtp_dist")
    p.add_argument("--transport", choices=("local", "socket"), default="local",
                   help="gtp_dist transport: in-process or socket-backed workers")
    p.add_argument("--seed", type=int, default=0)
    _add_nnls_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("oracle", help="exhaustive best subset (small designs only)")
    p.add_argument("--design", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, required=True)
    _add_nnls_flags(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("bench", help="runtime scaling of pursuit vs greedy baseline")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", default=None, help="optional PNG path (needs matplotlib)")
    p.add_argument("--budgets", default="100,500,1000,2000")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--m", type=int, default=512)
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--sparsity", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("partition", help="cut a design into per-machine row shards")
    p.add_argument("--design", required=True)
    p.add_argument("--machines", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("worker", help="serve one shard to a coordinator")
    p.add_argument("--shard", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--port-file", default=None,
                   help="write the bound host:port here once listening")
    p.set_defaults(func=cmd_worker)

    p = sub.add_parser("coordinate", help="drive workers over TCP and report the selection")
    p.add_argument("--workers", required=True,
                   help="comma-separated host:port list in machine order")
    p.add_argument("--out", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--correlation-mode", choices=("residual", "target_literal"),
                   default="residual")
    p.add_argument("--design", default=None,
                   help="optional design file, used to attach sample ids")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    _add_nnls_flags(p)
    p.set_defaults(func=cmd_coordinate)

    return parser


def main(argv=None):
    _setup_logging()
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _log.error("missing input: %s", exc)
        return EXIT_VALIDATION
    except (ValueError, TrajectoryFormatError) as exc:
        _log.error("validation error: %s", exc)
        return EXIT_VALIDATION
    except DistributedProtocolError as exc:
        _log.error("distributed run failed: %s", exc)
        return EXIT_RUNTIME
    except (ConnectionError, OSError) as exc:
        _log.error("runtime error: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
