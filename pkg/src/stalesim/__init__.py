"""stalesim: a deterministic desk-scale simulator for data-parallel SGD.

The package simulates N training workers under three coordination
protocols (stale-synchronous with delay-compensated gradients, fully
synchronous, and an asynchronous parameter server), on small analytic
models, with bit-reproducible arithmetic and a virtual clock.
"""

from .cluster_sim import (
    ALGORITHMS,
    BatchFeeder,
    ClusterConfig,
    CostModel,
    IterationInfo,
    PsUpdateInfo,
    ReduceHandle,
    RunOptions,
    SchedulePair,
    WorkerState,
    reconstruct_average_weights,
    run_algorithm,
    run_dc_asgd,
    run_dc_s3gd,
    run_ssgd,
    shard_dataset,
    simulated_iteration_time,
    tree_sum,
)
from .config import (
    OUTPUT_ROOT_ENV,
    DatasetSpec,
    ExperimentConfig,
    ModelSpec,
    ScheduleSpec,
    config_fingerprint,
    load_config,
    parse_config_text,
    serialize_config,
)
from .data_io import atomic_write_bytes, read_dataset, write_dataset, write_dataset_csv
from .errors import (
    ConfigError,
    GradientUnderflowError,
    NonFiniteError,
    ProtocolInvariantError,
    RunIOError,
    StalesimError,
    UnsupportedModelError,
    VectorLengthError,
)
from .harness import (
    SWEEP_AXES,
    ComparisonRow,
    ComparisonTable,
    SweepResult,
    build_datasets,
    build_model,
    build_schedules,
    compare_directories,
    compare_runs,
    resolve_output_dir,
    run_experiment,
    sweep,
    total_iterations,
)
from .models import (
    BIAS_GROUP,
    WEIGHT_GROUP,
    Batch,
    BatchGradient,
    Dataset,
    LogisticRegressionModel,
    MlpModel,
    QuadraticModel,
    QuadraticSpec,
    Sample,
    as_batch,
    exact_hessian_vector,
    finite_difference_gradient,
    make_model,
    make_synthetic_dataset,
    split_dataset,
)
from .optim import (
    CompensationConfig,
    MomentumState,
    Schedule,
    apply_weight_decay,
    compensate,
    compensate_with_term,
    detect_plateau,
    dynamic_lambda,
    momentum_update,
    pseudo_hessian_term,
    schedule_value,
    stop_warmup,
    theoretical_lr,
)
from .records import (
    CSV_COLUMNS,
    IterationRow,
    RunMeta,
    RunRecord,
    RunSummary,
    load_run,
    rows_to_csv_text,
    summarize,
    write_run,
)
from .seeding import derive_seed, rng_for
from .vecmath import ParamVector, axpy, hadamard, l2_norm, scale

__version__ = "0.1.0"
