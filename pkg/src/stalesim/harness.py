"""Experiment orchestration: config in, persisted run directories out.

``run_experiment`` builds the model, data, shards, and schedules described
by an :class:`ExperimentConfig`, executes the selected protocol, and writes
``metrics.csv`` plus ``metadata.ini`` into the run directory.
``sweep`` repeats that along one axis; ``compare_runs`` aligns finished
runs into a table of final errors, simulated times, and speedups.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

from .cluster_sim import (
    RunOptions,
    SchedulePair,
    run_algorithm,
    shard_dataset,
)
from .config import (
    OUTPUT_ROOT_ENV,
    ExperimentConfig,
    config_fingerprint,
    serialize_config,
)
from .data_io import read_dataset
from .errors import ConfigError, RunIOError
from .models import (
    Dataset,
    LogisticRegressionModel,
    MlpModel,
    Model,
    QuadraticModel,
    make_synthetic_dataset,
    split_dataset,
)
from .optim import Schedule, theoretical_lr
from .records import RunRecord, load_run, write_run
from .seeding import derive_seed

__all__ = [
    "build_model",
    "build_datasets",
    "build_schedules",
    "resolve_output_dir",
    "total_iterations",
    "run_experiment",
    "compare_runs",
    "compare_directories",
    "ComparisonRow",
    "ComparisonTable",
    "sweep",
    "SweepResult",
    "SWEEP_AXES",
]


def build_model(cfg: ExperimentConfig) -> Model:
    spec = cfg.model
    if spec.kind == "quadratic":
        return QuadraticModel.seeded(spec.input_dim, cfg.seed)
    if spec.kind == "logistic_regression":
        return LogisticRegressionModel(spec.input_dim, spec.n_classes)
    return MlpModel(spec.input_dim, spec.hidden_units, spec.n_classes)


def build_datasets(cfg: ExperimentConfig, model: Model) -> tuple[Dataset, Dataset]:
    """Returns the (train, validation) split."""
    spec = cfg.dataset
    if spec.source == "synthetic":
        full = make_synthetic_dataset(
            cfg.model.kind, spec.n_samples, cfg.model.input_dim,
            cfg.model.n_classes, cfg.seed, margin=spec.margin,
        )
    else:
        full = read_dataset(spec.path)
        if full.dimension != cfg.model.input_dim:
            raise ConfigError(
                f"dataset dimension {full.dimension} != model input_dim "
                f"{cfg.model.input_dim}",
                field="dataset.path",
            )
    return split_dataset(full, spec.val_fraction)


def _iterations_per_epoch(cfg: ExperimentConfig, n_train: int) -> int:
    shard = n_train // cfg.cluster.n_workers
    if shard < 1:
        raise ConfigError(
            f"{n_train} training samples cannot feed {cfg.cluster.n_workers} workers",
            field="cluster.n_workers",
        )
    ipe = shard // cfg.cluster.local_batch_size
    if ipe < 1:
        raise ConfigError(
            f"shard of {shard} samples is smaller than one batch "
            f"({cfg.cluster.local_batch_size})",
            field="cluster.local_batch_size",
        )
    return ipe


def total_iterations(cfg: ExperimentConfig, n_train: int) -> int:
    """Iteration budget implied by the config and the training set size.

    In epoch mode this is epochs * iterations-per-epoch; for the parameter
    server protocol every worker pass counts, so it is N times larger.
    """
    if cfg.max_iterations is not None:
        return cfg.max_iterations
    ipe = _iterations_per_epoch(cfg, n_train)
    per_epoch = ipe * (cfg.cluster.n_workers if cfg.cluster.algorithm == "dc_asgd" else 1)
    return cfg.epochs * per_epoch


def build_schedules(cfg: ExperimentConfig, iterations: int) -> SchedulePair:
    """Learning-rate and weight-decay trajectories over the whole run.

    The learning-rate peak is the worker-scaled rate for the collective
    protocols.  The server protocol applies updates one worker at a time,
    N times per round, so its peak stays at the single-node rate.
    The decay schedule is the same shape scaled to peak base * factor.
    """
    sch = cfg.schedule
    if cfg.cluster.algorithm == "dc_asgd":
        peak = sch.eta_single_node
    else:
        peak = theoretical_lr(cfg.cluster.n_workers, sch.eta_single_node)
    warmup_end = int(iterations * sch.warmup_fraction)
    lr = Schedule(iterations, warmup_end, peak, sch.start_value, sch.end_value)
    wd = lr.scaled_to_peak(sch.weight_decay_base * sch.weight_decay_factor)
    return SchedulePair(lr, wd)


def _run_options(cfg: ExperimentConfig, val: Dataset, observer=None) -> RunOptions:
    sch = cfg.schedule
    return RunOptions(
        momentum=sch.momentum,
        val_dataset=val if len(val) else None,
        eval_interval=cfg.eval_interval,
        plateau_enabled=sch.plateau_detection,
        plateau_window=sch.plateau_window,
        plateau_threshold=sch.plateau_threshold,
        excluded_groups=frozenset(sch.excluded_groups),
        observer=observer,
    )


def resolve_output_dir(cfg: ExperimentConfig, override: Optional[str] = None) -> str:
    """Explicit override, else <output root>/<configured dir or name>.

    The root is the ``STALESIM_OUTPUT_ROOT`` environment variable when set,
    ``runs`` otherwise.  Absolute configured paths are taken verbatim.
    """
    if override:
        return override
    sub = cfg.output_dir or cfg.name
    if os.path.isabs(sub):
        return sub
    root = os.environ.get(OUTPUT_ROOT_ENV, "runs")
    return os.path.join(root, sub)


def run_experiment(
    cfg: ExperimentConfig,
    output_dir: Optional[str] = None,
    observer: Optional[Callable] = None,
) -> tuple[RunRecord, str]:
    """Execute one configured run and persist it; returns (record, directory)."""
    model = build_model(cfg)
    train, val = build_datasets(cfg, model)
    shards = shard_dataset(train, cfg.cluster.n_workers)
    iterations = total_iterations(cfg, len(train))
    _iterations_per_epoch(cfg, len(train))  # batch-vs-shard validation
    schedules = build_schedules(cfg, iterations)
    record = run_algorithm(
        cfg.cluster, model, shards, schedules, cfg.compensation, iterations,
        _run_options(cfg, val, observer),
    )
    record.meta = replace(
        record.meta,
        config_echo=serialize_config(cfg),
        fingerprint=config_fingerprint(cfg),
    )
    directory = resolve_output_dir(cfg, output_dir)
    write_run(directory, record)
    return record, directory


@dataclass(frozen=True)
class ComparisonRow:
    label: str
    algorithm: str
    n_workers: int
    iterations: int
    final_train_loss: float
    final_train_error: float
    final_val_error: Optional[float]
    total_simulated_time: float
    time_per_iteration: float
    speedup: float
    delta_loss: float  # vs the first row after canonical ordering
    delta_error: float


class ComparisonTable:
    def __init__(self, rows: list[ComparisonRow]):
        self.rows = rows

    _HEADER = (
        "label", "algorithm", "n_workers", "iterations", "final_train_loss",
        "final_train_error", "final_val_error", "total_simulated_time",
        "time_per_iteration", "speedup", "delta_loss", "delta_error",
    )

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self._HEADER)
        for r in self.rows:
            writer.writerow(
                [
                    r.label, r.algorithm, str(r.n_workers), str(r.iterations),
                    repr(r.final_train_loss), repr(r.final_train_error),
                    "" if r.final_val_error is None else repr(r.final_val_error),
                    repr(r.total_simulated_time), repr(r.time_per_iteration),
                    f"{r.speedup:.2f}", repr(r.delta_loss), repr(r.delta_error),
                ]
            )
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [list(self._HEADER)]
        for r in self.rows:
            cells.append(
                [
                    r.label, r.algorithm, str(r.n_workers), str(r.iterations),
                    f"{r.final_train_loss:.6g}", f"{r.final_train_error:.4f}",
                    "-" if r.final_val_error is None else f"{r.final_val_error:.4f}",
                    f"{r.total_simulated_time:.6g}", f"{r.time_per_iteration:.6g}",
                    f"{r.speedup:.2f}x", f"{r.delta_loss:+.3g}", f"{r.delta_error:+.3g}",
                ]
            )
        widths = [max(len(row[c]) for row in cells) for c in range(len(self._HEADER))]
        lines = []
        for row in cells:
            lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"


def compare_runs(
    records: Sequence[Union[RunRecord, tuple[str, RunRecord]]],
) -> ComparisonTable:
    """Align finished runs; speedup is relative to the slowest per-iteration time.

    Inputs may be records or (label, record) pairs.  Rows are ordered
    canonically, so any input permutation yields the same table.
    """
    labeled: list[tuple[str, RunRecord]] = []
    for item in records:
        if isinstance(item, tuple):
            labeled.append(item)
        else:
            m = item.meta
            labeled.append((f"{m.algorithm}-n{m.n_workers}-s{m.seed}", item))
    if len(labeled) < 2:
        raise ValueError("need at least two runs to compare")
    dims = {rec.meta.model_dimension for _, rec in labeled}
    if len(dims) != 1:
        raise ConfigError(
            f"runs have different model dimensions: {sorted(dims)}", field="records"
        )

    labeled.sort(key=lambda pair: (
        pair[1].meta.algorithm, pair[1].meta.n_workers, pair[1].meta.seed,
        pair[1].meta.fingerprint, pair[0],
    ))
    per_iter = []
    for _, rec in labeled:
        s = rec.summary
        per_iter.append(s.total_simulated_time / max(s.n_iterations, 1))
    slowest = max(per_iter)

    rows = []
    base = labeled[0][1].summary
    for (label, rec), tpi in zip(labeled, per_iter):
        s = rec.summary
        rows.append(
            ComparisonRow(
                label=label,
                algorithm=rec.meta.algorithm,
                n_workers=rec.meta.n_workers,
                iterations=s.n_iterations,
                final_train_loss=s.final_train_loss,
                final_train_error=s.final_train_error,
                final_val_error=s.final_val_error,
                total_simulated_time=s.total_simulated_time,
                time_per_iteration=tpi,
                speedup=slowest / tpi if tpi > 0 else float("nan"),
                delta_loss=s.final_train_loss - base.final_train_loss,
                delta_error=s.final_train_error - base.final_train_error,
            )
        )
    return ComparisonTable(rows)


def compare_directories(directories: Sequence[str]) -> ComparisonTable:
    return compare_runs([(os.path.basename(os.path.normpath(d)), load_run(d))
                         for d in directories])


# axis name -> (apply(cfg, value), value parser)
def _set_cluster(field_name):
    def apply(cfg: ExperimentConfig, value):
        return replace(cfg, cluster=replace(cfg.cluster, **{field_name: value}))
    return apply


def _set_cost(field_name):
    def apply(cfg: ExperimentConfig, value):
        cost = replace(cfg.cluster.cost_model, **{field_name: value})
        return replace(cfg, cluster=replace(cfg.cluster, cost_model=cost))
    return apply


def _set_schedule(field_name):
    def apply(cfg: ExperimentConfig, value):
        return replace(cfg, schedule=replace(cfg.schedule, **{field_name: value}))
    return apply


def _set_n_workers(cfg: ExperimentConfig, value):
    cluster = replace(cfg.cluster, n_workers=value)
    if cfg.batch_mode == "aggregate":
        if cfg.aggregate_batch_size % value:
            raise ConfigError(
                f"aggregate batch {cfg.aggregate_batch_size} not divisible by "
                f"n_workers {value}",
                field="cluster.aggregate_batch_size",
            )
        cluster = replace(cluster, local_batch_size=cfg.aggregate_batch_size // value)
    return replace(cfg, cluster=cluster)


def _set_local_batch(cfg: ExperimentConfig, value):
    return replace(
        cfg,
        batch_mode="local",
        aggregate_batch_size=0,
        cluster=replace(cfg.cluster, local_batch_size=value),
    )


def _set_aggregate_batch(cfg: ExperimentConfig, value):
    if value % cfg.cluster.n_workers:
        raise ConfigError(
            f"aggregate batch {value} not divisible by n_workers "
            f"{cfg.cluster.n_workers}",
            field="cluster.aggregate_batch_size",
        )
    return replace(
        cfg,
        batch_mode="aggregate",
        aggregate_batch_size=value,
        cluster=replace(cfg.cluster, local_batch_size=value // cfg.cluster.n_workers),
    )


def _set_lambda0(cfg: ExperimentConfig, value):
    return replace(cfg, compensation=replace(cfg.compensation, lambda0=value))


def _set_epochs(cfg: ExperimentConfig, value):
    return replace(cfg, epochs=value, max_iterations=None)


def _set_max_iterations(cfg: ExperimentConfig, value):
    return replace(cfg, epochs=None, max_iterations=value)


def _set_seed(cfg: ExperimentConfig, value):
    return cfg.with_seed(value)


SWEEP_AXES: dict[str, tuple[Callable, Callable]] = {
    "n_workers": (_set_n_workers, int),
    "local_batch_size": (_set_local_batch, int),
    "aggregate_batch_size": (_set_aggregate_batch, int),
    "algorithm": (_set_cluster("algorithm"), str),
    "t_compute": (_set_cost("t_compute"), float),
    "t_allreduce": (_set_cost("t_allreduce"), float),
    "t_ps_roundtrip": (_set_cost("t_ps_roundtrip"), float),
    "jitter_amplitude": (_set_cost("jitter_amplitude"), float),
    "eta_single_node": (_set_schedule("eta_single_node"), float),
    "momentum": (_set_schedule("momentum"), float),
    "warmup_fraction": (_set_schedule("warmup_fraction"), float),
    "weight_decay_base": (_set_schedule("weight_decay_base"), float),
    "weight_decay_factor": (_set_schedule("weight_decay_factor"), float),
    "lambda0": (_set_lambda0, float),
    "epochs": (_set_epochs, int),
    "max_iterations": (_set_max_iterations, int),
    "seed": (_set_seed, int),
}


@dataclass
class SweepResult:
    value: object
    directory: str
    record: Optional[RunRecord] = None
    error: Optional[str] = None


def sweep(
    cfg: ExperimentConfig,
    axis: str,
    values: Sequence,
    output_dir: Optional[str] = None,
) -> list[SweepResult]:
    """One run per value under <output>/<axis>=<value>/.

    In a multi-value sweep each run's seed is derived from (base seed,
    axis, value index); a seed sweep uses the given values directly, and a
    single-value sweep keeps the base seed so it reproduces run_experiment
    exactly.  A failing value is recorded and the sweep moves on.
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(
            f"not a sweepable axis; choose from {sorted(SWEEP_AXES)}", field=axis
        )
    if not values:
        raise ConfigError("no values to sweep", field=axis)
    apply_value, _ = SWEEP_AXES[axis]
    base_dir = resolve_output_dir(cfg, output_dir)

    results: list[SweepResult] = []
    for index, value in enumerate(values):
        tag = repr(value) if isinstance(value, float) else str(value)
        directory = os.path.join(base_dir, f"{axis}={tag}")
        try:
            cfg_i = apply_value(cfg, value)
            if axis != "seed" and len(values) > 1:
                cfg_i = cfg_i.with_seed(derive_seed(cfg.seed, "sweep", axis, index))
            record, _ = run_experiment(cfg_i, directory)
            results.append(SweepResult(value, directory, record=record))
        except (ConfigError, RunIOError, ValueError) as exc:
            results.append(SweepResult(value, directory, error=str(exc)))
    return results
