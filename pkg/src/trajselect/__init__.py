"""Training-data subset selection by sparse pursuit of gradient trajectories.

Pipeline: record per-sample gradient trajectories across checkpoints
(trajectories), fit evolving per-checkpoint subspaces and stack projected
trajectories into a design system (subspace), then select a budget-sized
weighted subset whose combined trajectory matches the mean target trajectory
(pursuit; distributed for row-sharded designs).
"""

from .bench import run_scaling_bench
from .distributed import (
    DesignShard,
    DistributedProtocolError,
    ShardAssignment,
    ShardWorker,
    dist_cosamp,
    partition_design,
    partition_timesteps,
    read_shard,
    run_coordinator,
    run_worker,
    serve_worker,
    write_shard,
)
from .nnls import NnlsResult, solve_nnls
from .pursuit import (
    ALGORITHMS,
    PursuitConfig,
    Selection,
    compute_residual,
    iter_cosamp,
    omp_select,
    random_select,
    selection_to_report,
    top_k_select,
    validate_selection,
)
from .subspace import (
    DesignSystem,
    SubspaceBasis,
    assemble_design,
    assemble_design_from_trajectories,
    captured_variance,
    fit_evolving_subspace,
    fit_subspace,
    project,
    read_basis,
    read_design,
    validate_basis,
    validate_design,
    write_basis,
    write_design,
)
from .synthetic import (
    DuplicatedInstance,
    PlantedInstance,
    brute_force_best_subset,
    gen_duplicated_instance,
    gen_sparse_instance,
    gen_synthetic_trajectory,
)
from .trajectories import (
    BadMagicError,
    ShapeInconsistencyError,
    TrajectoryFormatError,
    TrajectoryGradients,
    TrajectoryManifest,
    TruncatedPayloadError,
    VersionMismatchError,
    make_trajectory,
    read_trajectory,
    validate,
    write_trajectory,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "BadMagicError",
    "DesignShard",
    "DesignSystem",
    "DistributedProtocolError",
    "DuplicatedInstance",
    "NnlsResult",
    "PlantedInstance",
    "PursuitConfig",
    "Selection",
    "ShapeInconsistencyError",
    "ShardAssignment",
    "ShardWorker",
    "SubspaceBasis",
    "TrajectoryFormatError",
    "TrajectoryGradients",
    "TrajectoryManifest",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "assemble_design",
    "assemble_design_from_trajectories",
    "brute_force_best_subset",
    "captured_variance",
    "compute_residual",
    "dist_cosamp",
    "fit_evolving_subspace",
    "fit_subspace",
    "gen_duplicated_instance",
    "gen_sparse_instance",
    "gen_synthetic_trajectory",
    "iter_cosamp",
    "make_trajectory",
    "omp_select",
    "partition_design",
    "partition_timesteps",
    "project",
    "random_select",
    "read_basis",
    "read_design",
    "read_shard",
    "read_trajectory",
    "run_coordinator",
    "run_scaling_bench",
    "run_worker",
    "selection_to_report",
    "serve_worker",
    "solve_nnls",
    "top_k_select",
    "validate",
    "validate_basis",
    "validate_design",
    "validate_selection",
    "write_basis",
    "write_design",
    "write_shard",
    "write_trajectory",
]
