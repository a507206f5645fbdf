"""Deterministic simulation of N data-parallel workers under three protocols.

* ``dc_s3gd``  -- stale-synchronous: each iteration posts the previous local
  update to a non-blocking all-reduce, computes the next gradient while the
  reduction is in flight, then corrects the stale gradient toward the
  average weights before applying it.  Per-iteration simulated time is
  max(t_compute, t_allreduce).
* ``ssgd``     -- fully synchronous: gradients are reduced with a blocking
  collective every iteration; time is t_compute + t_allreduce.
* ``dc_asgd``  -- asynchronous parameter server: workers exchange with a
  central server, which corrects each stale gradient against its current
  weights; time per worker cycle is t_compute + t_ps_roundtrip.

Everything is single-threaded.  All reductions sum in a fixed balanced
pairwise order over the worker index, so results are bit-reproducible and
identical contributions sum exactly (no rounding) for power-of-two worker
counts.  The two synchronous protocols advance in rounds, because the
collective acts as a barrier; the parameter-server protocol runs on an
event heap ordered by (time, worker id, sequence number).
"""

from __future__ import annotations

import heapq
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NonFiniteError, ProtocolInvariantError
from .models import Batch, Dataset, Model
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
    schedule_value,
    stop_warmup,
)
from .records import IterationRow, RunMeta, RunRecord, summarize
from .seeding import rng_for
from .vecmath import ParamVector, l2_norm

__all__ = [
    "ALGORITHMS",
    "CostModel",
    "ClusterConfig",
    "WorkerState",
    "ReduceHandle",
    "SchedulePair",
    "RunOptions",
    "IterationInfo",
    "PsUpdateInfo",
    "shard_dataset",
    "BatchFeeder",
    "simulated_iteration_time",
    "reconstruct_average_weights",
    "run_dc_s3gd",
    "run_ssgd",
    "run_dc_asgd",
    "run_algorithm",
]

ALGORITHMS = ("dc_s3gd", "ssgd", "dc_asgd")


@dataclass(frozen=True)
class CostModel:
    """Simulated durations, in abstract time units."""

    t_compute: float = 1.0
    t_allreduce: float = 1.0
    t_ps_roundtrip: float = 1.0
    jitter_amplitude: float = 0.0  # worker compute time scales by 1 + amp*U[0,1)

    def __post_init__(self):
        for name in ("t_compute", "t_allreduce", "t_ps_roundtrip", "jitter_amplitude"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"{name} must be finite and >= 0")


@dataclass(frozen=True)
class ClusterConfig:
    n_workers: int
    algorithm: str
    local_batch_size: int
    cost_model: CostModel = field(default_factory=CostModel)
    seed: int = 0

    def __post_init__(self):
        if self.n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        if self.local_batch_size < 1:
            raise ValueError("local_batch_size must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")


@dataclass
class WorkerState:
    worker_id: int
    weights: ParamVector
    momentum: MomentumState
    pending_update: Optional[ParamVector] = None  # set iff a reduce is in flight
    shard_cursor: int = 0
    local_clock: float = 0.0


class ReduceHandle:
    """One in-flight all-reduce: per-worker payloads, timestamps, summed result.

    The result is the fixed-order pairwise tree sum over worker index and
    becomes available once every worker has posted and :meth:`complete`
    ran.  Completion time is the latest post time plus the collective's
    duration.
    """

    def __init__(self, n_workers: int):
        self.n_workers = n_workers
        self.contributions: list[Optional[ParamVector]] = [None] * n_workers
        self.post_times: list[Optional[float]] = [None] * n_workers
        self.start_time: Optional[float] = None
        self.completion_time: Optional[float] = None
        self.result: Optional[ParamVector] = None

    def post(self, worker_id: int, payload: ParamVector, now: float) -> None:
        if self.contributions[worker_id] is not None:
            raise ProtocolInvariantError(
                f"worker {worker_id} posted twice to one reduce"
            )
        self.contributions[worker_id] = payload
        self.post_times[worker_id] = now
        if self.start_time is None or now < self.start_time:
            self.start_time = now

    def complete(self, t_allreduce: float) -> None:
        if any(c is None for c in self.contributions):
            missing = [i for i, c in enumerate(self.contributions) if c is None]
            raise ProtocolInvariantError(f"reduce completed with workers {missing} missing")
        self.completion_time = max(self.post_times) + t_allreduce
        self.result = tree_sum(self.contributions)


def tree_sum(vectors: Sequence[ParamVector]) -> ParamVector:
    """Balanced pairwise sum in worker-index order.

    Pairwise (rather than running left-to-right) keeps the sum of N
    identical vectors exact for power-of-two N: every partial sum is a
    doubling, which IEEE arithmetic performs without rounding.
    """
    if not vectors:
        raise ValueError("nothing to sum")
    level = [v.values for v in vectors]
    while len(level) > 1:
        nxt = [level[j] + level[j + 1] for j in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return vectors[0].with_values(level[0])


@dataclass(frozen=True)
class SchedulePair:
    learning_rate: Schedule
    weight_decay: Schedule


@dataclass
class RunOptions:
    """Optional knobs shared by all runners."""

    momentum: float = 0.9
    val_dataset: Optional[Dataset] = None
    eval_interval: int = 0  # 0: evaluate only on the final iteration
    plateau_enabled: bool = False
    plateau_window: int = 5
    plateau_threshold: float = 0.005
    excluded_groups: frozenset = frozenset()
    shuffle: bool = True
    init_weights: Optional[ParamVector] = None
    observer: Optional[Callable] = None


@dataclass(frozen=True)
class IterationInfo:
    """Everything one synchronous iteration produced; handed to observers."""

    iteration: int
    time: float
    gradients: tuple[ParamVector, ...]  # raw batch gradients, before decay
    updates: tuple[ParamVector, ...]  # this iteration's local updates
    distances: Optional[tuple[ParamVector, ...]]  # D_i; None on the priming step
    lambdas: tuple[float, ...]
    delta_bar: Optional[ParamVector]  # the reduce's summed payloads
    reconstructed: Optional[tuple[ParamVector, ...]]  # w_i + D_i, before application
    average_replica: tuple[ParamVector, ...]  # each worker's running average copy
    weights: tuple[ParamVector, ...]  # w_i after application


@dataclass(frozen=True)
class PsUpdateInfo:
    """One parameter-server update; handed to observers of dc_asgd runs."""

    iteration: int
    time: float
    worker_id: int
    staleness: int  # server updates applied since this worker's snapshot
    distance_norm: float  # ||w_server - w_snapshot|| at apply time
    lambda_i: float
    server_weights: ParamVector


def shard_dataset(dataset: Dataset, n_workers: int) -> list[Dataset]:
    """Contiguous equal shards by worker index; the remainder is dropped."""
    size = len(dataset) // n_workers
    if size < 1:
        raise ValueError(f"{len(dataset)} samples cannot feed {n_workers} workers")
    return [dataset.subset(i * size, (i + 1) * size) for i in range(n_workers)]


class BatchFeeder:
    """Deterministic batch stream over one worker's shard.

    Each epoch reshuffles the shard with a permutation seeded by (master
    seed, worker id, epoch); partial trailing batches are dropped.
    """

    def __init__(
        self,
        shard: Dataset,
        batch_size: int,
        master_seed: int,
        worker_id: int,
        shuffle: bool = True,
    ):
        if batch_size > len(shard):
            raise ValueError(
                f"batch size {batch_size} exceeds shard size {len(shard)}"
            )
        self.shard = shard
        self.batch_size = batch_size
        self.master_seed = master_seed
        self.worker_id = worker_id
        self.shuffle = shuffle
        self.iters_per_epoch = len(shard) // batch_size
        self._perms: dict[int, np.ndarray] = {}

    def _perm(self, epoch: int) -> np.ndarray:
        if not self.shuffle:
            return np.arange(len(self.shard))
        if epoch not in self._perms:
            rng = rng_for(self.master_seed, "shard-order", self.worker_id, epoch)
            self._perms[epoch] = rng.permutation(len(self.shard))
            if len(self._perms) > 4:  # keep only recent epochs
                for k in sorted(self._perms)[:-4]:
                    del self._perms[k]
        return self._perms[epoch]

    def batch_for(self, iteration: int) -> Batch:
        epoch, pos = divmod(iteration, self.iters_per_epoch)
        idx = self._perm(epoch)[pos * self.batch_size : (pos + 1) * self.batch_size]
        return self.shard.batch(idx)


def simulated_iteration_time(cost: CostModel, algorithm: str) -> float:
    """Nominal per-iteration duration of each protocol, without jitter."""
    if algorithm == "ssgd":
        return cost.t_compute + cost.t_allreduce
    if algorithm == "dc_s3gd":
        return max(cost.t_compute, cost.t_allreduce)
    if algorithm == "dc_asgd":
        return cost.t_compute + cost.t_ps_roundtrip
    raise ValueError(f"algorithm must be one of {ALGORITHMS}")


def reconstruct_average_weights(worker: WorkerState, distance: ParamVector) -> ParamVector:
    """The average weights implied by a worker's local state: w_i + D_i.

    Valid between forming D_i and applying the local update; every worker's
    reconstruction names the same point (up to rounding of the two-term sum).
    """
    return worker.weights + distance


class _JitterStream:
    def __init__(self, master_seed: int, worker_id: int, amplitude: float):
        self.amplitude = amplitude
        self._rng = rng_for(master_seed, "jitter", worker_id) if amplitude > 0 else None

    def factor(self) -> float:
        if self._rng is None:
            return 1.0
        return 1.0 + self.amplitude * float(self._rng.random())


def _finite(x: float) -> bool:
    return bool(np.isfinite(x))


class _EpochTracker:
    """Collects per-epoch mean losses and decides warm-up early stops."""

    def __init__(self, iters_per_epoch: int, opts: RunOptions):
        self.iters_per_epoch = iters_per_epoch
        self.opts = opts
        self.epoch_losses: list[float] = []
        self._buffer: list[float] = []

    def push(self, loss: float, iteration: int, schedules: SchedulePair) -> SchedulePair:
        """Record one iteration's loss; at epoch boundaries, maybe stop warm-up.

        Returns the (possibly rebuilt) schedule pair to use from the next
        iteration on.
        """
        self._buffer.append(loss)
        if len(self._buffer) < self.iters_per_epoch:
            return schedules
        self.epoch_losses.append(float(np.mean(self._buffer)))
        self._buffer.clear()
        epochs_done = len(self.epoch_losses)
        lr = schedules.learning_rate
        if (
            self.opts.plateau_enabled
            and iteration + 1 < lr.warmup_end_iteration
            and epochs_done % self.opts.plateau_window == 0
            and detect_plateau(
                self.epoch_losses,
                self.opts.plateau_window,
                epochs_done,
                self.opts.plateau_threshold,
            )
        ):
            stop_at = iteration + 1
            return SchedulePair(
                stop_warmup(lr, stop_at),
                stop_warmup(schedules.weight_decay, stop_at),
            )
        return schedules


def _make_feeders(
    config: ClusterConfig, shards: Sequence[Dataset], opts: RunOptions
) -> list[BatchFeeder]:
    if len(shards) != config.n_workers:
        raise ValueError(f"{len(shards)} shards for {config.n_workers} workers")
    feeders = [
        BatchFeeder(shards[i], config.local_batch_size, config.seed, i, opts.shuffle)
        for i in range(config.n_workers)
    ]
    if len({f.iters_per_epoch for f in feeders}) != 1:
        raise ValueError("shards must be the same size")
    return feeders


def _init_weights(model: Model, config: ClusterConfig, opts: RunOptions) -> ParamVector:
    if opts.init_weights is not None:
        return opts.init_weights
    return model.init_weights(config.seed)


def _maybe_validate(
    model: Model,
    weights: ParamVector,
    opts: RunOptions,
    iteration: int,
    last_iteration: int,
) -> Optional[float]:
    if opts.val_dataset is None:
        return None
    due = iteration == last_iteration or (
        opts.eval_interval > 0 and iteration % opts.eval_interval == 0
    )
    if not due:
        return None
    return model.metrics(weights, opts.val_dataset)[1]


def _meta(config: ClusterConfig, model: Model, iters_per_epoch: int) -> RunMeta:
    return RunMeta(
        algorithm=config.algorithm,
        n_workers=config.n_workers,
        seed=config.seed,
        iterations_per_epoch=iters_per_epoch,
        model_kind=model.kind,
        model_dimension=model.dimension,
    )


def run_dc_s3gd(
    config: ClusterConfig,
    model: Model,
    shards: Sequence[Dataset],
    schedules: SchedulePair,
    comp: CompensationConfig,
    max_iterations: int,
    options: Optional[RunOptions] = None,
) -> RunRecord:
    """Stale-synchronous run: iteration 0 is the uncorrected priming step,
    every later iteration overlaps one all-reduce with one gradient."""
    opts = options or RunOptions()
    n = config.n_workers
    feeders = _make_feeders(config, shards, opts)
    tracker = _EpochTracker(feeders[0].iters_per_epoch, opts)
    jitter = [_JitterStream(config.seed, i, config.cost_model.jitter_amplitude) for i in range(n)]
    cost = config.cost_model

    init = _init_weights(model, config, opts)
    workers = [
        WorkerState(i, init, MomentumState(model.dimension, 0.0, opts.momentum))
        for i in range(n)
    ]
    replicas = [init for _ in range(n)]  # each worker's copy of the running average
    meta = _meta(config, model, feeders[0].iters_per_epoch)

    rows: list[IterationRow] = []
    started = _time.perf_counter()
    diverged_at: Optional[int] = None

    try:
        # priming: plain local step, nothing reduced yet
        grads, losses, errors = [], [], []
        for w in workers:
            batch = feeders[w.worker_id].batch_for(0)
            w.shard_cursor = 1
            bg = model.batch_gradient(w.weights, batch)
            grads.append(bg.gradient)
            losses.append(bg.loss)
            errors.append(bg.error_rate)
        _check_losses(losses, 0)
        decay0 = schedule_value(schedules.weight_decay, 0)
        eta0 = schedule_value(schedules.learning_rate, 0)
        updates = []
        for w, g in zip(workers, grads):
            g_reg = apply_weight_decay(g, w.weights, decay0, opts.excluded_groups)
            w.momentum.eta = eta0
            upd = momentum_update(w.momentum, g_reg)
            w.weights = w.weights + upd
            w.local_clock = cost.t_compute * jitter[w.worker_id].factor()
            updates.append(upd)
        now = max(w.local_clock for w in workers)
        rows.append(
            IterationRow(
                0,
                now,
                float(np.mean(losses)),
                float(np.mean(errors)),
                0.0,
                0.0,
                float(np.mean([l2_norm(g) for g in grads])),
                _maybe_validate(model, replicas[0], opts, 0, max_iterations - 1),
            )
        )
        if opts.observer:
            opts.observer(
                IterationInfo(
                    0, now, tuple(grads), tuple(updates), None, (0.0,) * n, None,
                    None, tuple(replicas), tuple(w.weights for w in workers),
                )
            )
        schedules = tracker.push(rows[-1].train_loss, 0, schedules)

        for t in range(1, max_iterations):
            handle = ReduceHandle(n)
            for w, upd in zip(workers, updates):
                if w.pending_update is not None:
                    raise ProtocolInvariantError(
                        f"worker {w.worker_id} started a reduce with one in flight"
                    )
                w.pending_update = upd
                handle.post(w.worker_id, upd, w.local_clock)

            grads, losses, errors, grad_done, batches = [], [], [], [], []
            for w in workers:
                batch = feeders[w.worker_id].batch_for(t)
                w.shard_cursor = t + 1
                bg = model.batch_gradient(w.weights, batch)
                batches.append(batch)
                grads.append(bg.gradient)
                losses.append(bg.loss)
                errors.append(bg.error_rate)
                grad_done.append(w.local_clock + cost.t_compute * jitter[w.worker_id].factor())
            _check_losses(losses, t)

            handle.complete(cost.t_allreduce)
            delta_bar = handle.result
            share = delta_bar.with_values(delta_bar.values / n)

            distances = []
            for w in workers:
                distances.append(share - w.pending_update)
                w.pending_update = None

            reconstructed = None
            if opts.observer:
                reconstructed = tuple(
                    reconstruct_average_weights(w, d) for w, d in zip(workers, distances)
                )

            replicas = [replica + share for replica in replicas]

            decay_t = schedule_value(schedules.weight_decay, t)
            eta_t = schedule_value(schedules.learning_rate, t)
            lambdas, updates = [], []
            for w, g, d, batch in zip(workers, grads, distances, batches):
                g_reg = apply_weight_decay(g, w.weights, decay_t, opts.excluded_groups)
                if not comp.enabled:
                    lam = 0.0
                    g_corr = compensate(g_reg, d, 0.0)
                elif comp.exact_hessian:
                    # test hook: true curvature along D with unit scale
                    term = model.hessian_vector(w.weights, batch, d)
                    lam = 1.0
                    g_corr = compensate_with_term(g_reg, term, lam)
                else:
                    lam = dynamic_lambda(comp, g_reg, d)
                    g_corr = compensate(g_reg, d, lam)
                w.momentum.eta = eta_t
                upd = momentum_update(w.momentum, g_corr)
                lambdas.append(lam)
                updates.append(upd)

            for w, replica, upd in zip(workers, replicas, updates):
                w.weights = replica + upd
                w.local_clock = max(grad_done[w.worker_id], handle.completion_time)
            now = max(w.local_clock for w in workers)

            rows.append(
                IterationRow(
                    t,
                    now,
                    float(np.mean(losses)),
                    float(np.mean(errors)),
                    float(np.mean(lambdas)),
                    float(max(np.max(np.abs(d.values)) for d in distances)),
                    float(np.mean([l2_norm(g) for g in grads])),
                    _maybe_validate(model, replicas[0], opts, t, max_iterations - 1),
                )
            )
            if opts.observer:
                opts.observer(
                    IterationInfo(
                        t, now, tuple(grads), tuple(updates), tuple(distances),
                        tuple(lambdas), delta_bar, reconstructed, tuple(replicas),
                        tuple(w.weights for w in workers),
                    )
                )
            schedules = tracker.push(rows[-1].train_loss, t, schedules)
    except NonFiniteError:
        diverged_at = len(rows)

    wall = _time.perf_counter() - started
    record = RunRecord(meta=meta, rows=rows)
    record.summary = summarize(meta, rows, wall, diverged_at is not None, diverged_at)
    return record


def _check_losses(losses: Sequence[float], iteration: int) -> None:
    if not all(_finite(v) for v in losses):
        raise NonFiniteError(f"non-finite loss at iteration {iteration}")


def run_ssgd(
    config: ClusterConfig,
    model: Model,
    shards: Sequence[Dataset],
    schedules: SchedulePair,
    max_iterations: int,
    options: Optional[RunOptions] = None,
) -> RunRecord:
    """Synchronous baseline: reduce the gradients, step identically everywhere."""
    opts = options or RunOptions()
    n = config.n_workers
    feeders = _make_feeders(config, shards, opts)
    tracker = _EpochTracker(feeders[0].iters_per_epoch, opts)
    jitter = [_JitterStream(config.seed, i, config.cost_model.jitter_amplitude) for i in range(n)]
    cost = config.cost_model

    init = _init_weights(model, config, opts)
    workers = [
        WorkerState(i, init, MomentumState(model.dimension, 0.0, opts.momentum))
        for i in range(n)
    ]
    meta = _meta(config, model, feeders[0].iters_per_epoch)

    rows: list[IterationRow] = []
    started = _time.perf_counter()
    diverged_at: Optional[int] = None

    try:
        for t in range(max_iterations):
            grads, losses, errors, done = [], [], [], []
            for w in workers:
                batch = feeders[w.worker_id].batch_for(t)
                w.shard_cursor = t + 1
                bg = model.batch_gradient(w.weights, batch)
                grads.append(bg.gradient)
                losses.append(bg.loss)
                errors.append(bg.error_rate)
                done.append(w.local_clock + cost.t_compute * jitter[w.worker_id].factor())
            _check_losses(losses, t)

            total = tree_sum(grads)
            mean_grad = total.with_values(total.values / n)
            now = max(done) + cost.t_allreduce

            decay_t = schedule_value(schedules.weight_decay, t)
            eta_t = schedule_value(schedules.learning_rate, t)
            updates = []
            for w in workers:
                g_reg = apply_weight_decay(mean_grad, w.weights, decay_t, opts.excluded_groups)
                w.momentum.eta = eta_t
                upd = momentum_update(w.momentum, g_reg)
                w.weights = w.weights + upd
                w.local_clock = now
                updates.append(upd)

            rows.append(
                IterationRow(
                    t,
                    now,
                    float(np.mean(losses)),
                    float(np.mean(errors)),
                    0.0,
                    0.0,
                    l2_norm(mean_grad),
                    _maybe_validate(model, workers[0].weights, opts, t, max_iterations - 1),
                )
            )
            if opts.observer:
                opts.observer(
                    IterationInfo(
                        t, now, tuple(grads), tuple(updates), None, (0.0,) * n,
                        total, None, tuple(w.weights for w in workers),
                        tuple(w.weights for w in workers),
                    )
                )
            schedules = tracker.push(rows[-1].train_loss, t, schedules)
    except NonFiniteError:
        diverged_at = len(rows)

    wall = _time.perf_counter() - started
    record = RunRecord(meta=meta, rows=rows)
    record.summary = summarize(meta, rows, wall, diverged_at is not None, diverged_at)
    return record


def run_dc_asgd(
    config: ClusterConfig,
    model: Model,
    shards: Sequence[Dataset],
    schedules: SchedulePair,
    comp: CompensationConfig,
    max_iterations: int,
    options: Optional[RunOptions] = None,
) -> RunRecord:
    """Asynchronous parameter-server baseline.

    Workers cycle compute-then-exchange; the server applies each arriving
    gradient after correcting it against the distance between its current
    weights and the snapshot the worker computed on.  ``max_iterations``
    counts server updates.  Event order: (completion time, worker id).
    """
    opts = options or RunOptions()
    n = config.n_workers
    feeders = _make_feeders(config, shards, opts)
    per_worker_ipe = feeders[0].iters_per_epoch
    tracker = _EpochTracker(per_worker_ipe * n, opts)
    jitter = [_JitterStream(config.seed, i, config.cost_model.jitter_amplitude) for i in range(n)]
    cost = config.cost_model

    server_weights = _init_weights(model, config, opts)
    server_momentum = MomentumState(model.dimension, 0.0, opts.momentum)
    version = 0

    snapshots = [server_weights] * n
    snapshot_versions = [0] * n
    worker_iters = [0] * n
    meta = _meta(config, model, per_worker_ipe * n)

    heap: list[tuple[float, int, int]] = []
    seq = 0
    for i in range(n):
        ready = cost.t_compute * jitter[i].factor() + cost.t_ps_roundtrip
        heapq.heappush(heap, (ready, i, seq))
        seq += 1

    rows: list[IterationRow] = []
    started = _time.perf_counter()
    diverged_at: Optional[int] = None

    try:
        while heap and len(rows) < max_iterations:
            now, i, _ = heapq.heappop(heap)
            batch = feeders[i].batch_for(worker_iters[i])
            bg = model.batch_gradient(snapshots[i], batch)
            _check_losses([bg.loss], len(rows))

            t = len(rows)  # server update index
            distance = server_weights - snapshots[i]
            g_reg = apply_weight_decay(
                bg.gradient, snapshots[i], schedule_value(schedules.weight_decay, t),
                opts.excluded_groups,
            )
            if comp.enabled:
                lam = dynamic_lambda(comp, g_reg, distance)
            else:
                lam = 0.0
            g_corr = compensate(g_reg, distance, lam)
            server_momentum.eta = schedule_value(schedules.learning_rate, t)
            upd = momentum_update(server_momentum, g_corr)
            server_weights = server_weights + upd
            staleness = version - snapshot_versions[i]
            version += 1

            rows.append(
                IterationRow(
                    t,
                    now,
                    bg.loss,
                    bg.error_rate,
                    lam,
                    float(np.max(np.abs(distance.values))),
                    l2_norm(bg.gradient),
                    _maybe_validate(model, server_weights, opts, t, max_iterations - 1),
                )
            )
            if opts.observer:
                opts.observer(
                    PsUpdateInfo(t, now, i, staleness, l2_norm(distance), lam, server_weights)
                )
            schedules = tracker.push(bg.loss, t, schedules)

            snapshots[i] = server_weights
            snapshot_versions[i] = version
            worker_iters[i] += 1
            ready = now + cost.t_compute * jitter[i].factor() + cost.t_ps_roundtrip
            heapq.heappush(heap, (ready, i, seq))
            seq += 1
    except NonFiniteError:
        diverged_at = len(rows)

    wall = _time.perf_counter() - started
    record = RunRecord(meta=meta, rows=rows)
    record.summary = summarize(meta, rows, wall, diverged_at is not None, diverged_at)
    return record


def run_algorithm(
    config: ClusterConfig,
    model: Model,
    shards: Sequence[Dataset],
    schedules: SchedulePair,
    comp: CompensationConfig,
    max_iterations: int,
    options: Optional[RunOptions] = None,
) -> RunRecord:
    if config.algorithm == "dc_s3gd":
        return run_dc_s3gd(config, model, shards, schedules, comp, max_iterations, options)
    if config.algorithm == "ssgd":
        return run_ssgd(config, model, shards, schedules, max_iterations, options)
    if config.algorithm == "dc_asgd":
        return run_dc_asgd(config, model, shards, schedules, comp, max_iterations, options)
    raise ValueError(f"algorithm must be one of {ALGORITHMS}")
