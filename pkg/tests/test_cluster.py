"""Tests for the worker/cluster simulation: reductions, feeders, timing,
protocol invariants, divergence handling, and cross-protocol equivalences."""

import numpy as np
import pytest

from stalesim import (
    BatchFeeder,
    ClusterConfig,
    CompensationConfig,
    CostModel,
    LogisticRegressionModel,
    MomentumState,
    ParamVector,
    ProtocolInvariantError,
    QuadraticModel,
    ReduceHandle,
    RunOptions,
    Schedule,
    SchedulePair,
    apply_weight_decay,
    make_synthetic_dataset,
    momentum_update,
    rng_for,
    run_algorithm,
    run_dc_asgd,
    run_dc_s3gd,
    run_ssgd,
    schedule_value,
    shard_dataset,
    simulated_iteration_time,
    tree_sum,
)


def flat_pair(iterations: int, lr: float, decay: float = 0.0) -> SchedulePair:
    return SchedulePair(
        Schedule(iterations, 0, lr, lr, lr),
        Schedule(iterations, 0, decay, decay, decay),
    )


def logistic_problem(n_samples=640, dim=8, classes=3, seed=7):
    model = LogisticRegressionModel(dim, classes)
    data = make_synthetic_dataset("logistic_regression", n_samples, dim, classes, seed=seed)
    return model, data


class TestTreeSum:
    def test_matches_extended_precision(self):
        rng = rng_for(30, "tree-sum")
        vectors = [ParamVector(rng.normal(size=16)) for _ in range(7)]
        got = tree_sum(vectors).values
        want = np.array(
            [sum(float(v.values[k]) for v in vectors) for k in range(16)]
        )
        assert np.max(np.abs(got - want)) < 1e-12

    def test_identical_vectors_power_of_two_is_exact(self):
        rng = rng_for(30, "tree-sum-exact")
        v = ParamVector(rng.normal(size=32))
        assert np.array_equal(tree_sum([v] * 8).values, 8.0 * v.values)

    def test_single_vector_is_value_copy(self):
        v = ParamVector([1.0, 2.0])
        out = tree_sum([v])
        assert out is not v
        assert np.array_equal(out.values, v.values)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            tree_sum([])


class TestReduceHandle:
    def test_double_post_rejected(self):
        handle = ReduceHandle(2)
        handle.post(0, ParamVector([1.0]), 0.0)
        with pytest.raises(ProtocolInvariantError):
            handle.post(0, ParamVector([2.0]), 1.0)

    def test_completion_requires_all_posts(self):
        handle = ReduceHandle(2)
        handle.post(0, ParamVector([1.0]), 0.0)
        with pytest.raises(ProtocolInvariantError):
            handle.complete(1.0)

    def test_completion_time_is_last_post_plus_duration(self):
        handle = ReduceHandle(3)
        for i, at in enumerate([2.0, 5.0, 3.0]):
            handle.post(i, ParamVector([float(i)]), at)
        handle.complete(4.0)
        assert handle.completion_time == 9.0
        assert handle.result.values.tolist() == [3.0]


class TestShardingAndFeeding:
    def test_contiguous_shards_drop_remainder(self):
        _, data = logistic_problem(100)
        shards = shard_dataset(data, 8)
        assert [len(s) for s in shards] == [12] * 8
        assert np.array_equal(shards[1].features, data.features[12:24])

    def test_single_worker_keeps_everything(self):
        _, data = logistic_problem(100)
        assert len(shard_dataset(data, 1)[0]) == 100

    def test_too_many_workers_rejected(self):
        _, data = logistic_problem(10)
        with pytest.raises(ValueError):
            shard_dataset(data, 11)

    def test_unshuffled_feeder_is_sequential(self):
        _, data = logistic_problem(64)
        feeder = BatchFeeder(data, 16, master_seed=1, worker_id=0, shuffle=False)
        batch = feeder.batch_for(1)
        assert np.array_equal(batch.features, data.features[16:32])

    def test_shuffled_feeder_is_reproducible(self):
        _, data = logistic_problem(64)
        a = BatchFeeder(data, 16, master_seed=1, worker_id=0)
        b = BatchFeeder(data, 16, master_seed=1, worker_id=0)
        for t in (0, 3, 7):
            assert np.array_equal(a.batch_for(t).features, b.batch_for(t).features)

    def test_workers_get_different_orders(self):
        _, data = logistic_problem(64)
        a = BatchFeeder(data, 16, master_seed=1, worker_id=0)
        b = BatchFeeder(data, 16, master_seed=1, worker_id=1)
        assert not np.array_equal(a.batch_for(0).features, b.batch_for(0).features)

    def test_epoch_cache_eviction_does_not_change_batches(self):
        _, data = logistic_problem(64)
        feeder = BatchFeeder(data, 16, master_seed=1, worker_id=0)
        first = feeder.batch_for(0).features.copy()
        feeder.batch_for(4 * 12)  # touch a far epoch to evict early ones
        assert np.array_equal(feeder.batch_for(0).features, first)

    def test_batch_larger_than_shard_rejected(self):
        _, data = logistic_problem(10)
        with pytest.raises(ValueError):
            BatchFeeder(data, 16, master_seed=1, worker_id=0)

    def test_each_epoch_visits_every_sample_once(self):
        _, data = logistic_problem(64)
        feeder = BatchFeeder(data, 16, master_seed=1, worker_id=0)
        seen = np.concatenate(
            [feeder.batch_for(t).features[:, 0] for t in range(4)]
        )
        assert sorted(seen) == sorted(data.features[:, 0])


class TestIterationTime:
    def test_formula_table(self):
        cost = CostModel(t_compute=10.0, t_allreduce=4.0, t_ps_roundtrip=3.0)
        assert simulated_iteration_time(cost, "ssgd") == 14.0
        assert simulated_iteration_time(cost, "dc_s3gd") == 10.0
        assert simulated_iteration_time(cost, "dc_asgd") == 13.0

    def test_equal_costs_double_throughput(self):
        cost = CostModel(t_compute=2.5, t_allreduce=2.5)
        assert simulated_iteration_time(cost, "ssgd") == 2.0 * simulated_iteration_time(
            cost, "dc_s3gd"
        )

    def test_free_network_degenerates_to_compute(self):
        cost = CostModel(t_compute=10.0, t_allreduce=0.0, t_ps_roundtrip=0.0)
        for algorithm in ("ssgd", "dc_s3gd", "dc_asgd"):
            assert simulated_iteration_time(cost, algorithm) == 10.0

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            simulated_iteration_time(CostModel(), "gossip")

    def test_negative_cost_rejected(self):
        with pytest.raises(ValueError):
            CostModel(t_compute=-1.0)


class TestSsgd:
    def test_workers_stay_bit_identical(self):
        model, data = logistic_problem()
        config = ClusterConfig(4, "ssgd", 16, CostModel(), seed=3)
        mismatches = []

        def observer(info):
            first = info.weights[0].values
            for w in info.weights[1:]:
                if not np.array_equal(first, w.values):
                    mismatches.append(info.iteration)

        run_ssgd(config, model, shard_dataset(data, 4), flat_pair(60, 0.2), 60,
                 RunOptions(observer=observer))
        assert mismatches == []

    def test_wall_clock_is_iterations_times_step_cost(self):
        model, data = logistic_problem()
        cost = CostModel(t_compute=10.0, t_allreduce=4.0)
        config = ClusterConfig(2, "ssgd", 16, cost, seed=3)
        record = run_ssgd(config, model, shard_dataset(data, 2), flat_pair(25, 0.2), 25)
        assert [row.simulated_time for row in record.rows] == [
            14.0 * (t + 1) for t in range(25)
        ]

    def test_single_worker_equals_momentum_sgd(self):
        model, data = logistic_problem()
        schedules = flat_pair(150, 0.3, decay=0.001)
        config = ClusterConfig(1, "ssgd", 16, CostModel(), seed=9)
        trajectory = []
        run_ssgd(config, model, shard_dataset(data, 1), schedules, 150,
                 RunOptions(observer=lambda info: trajectory.append(info.weights[0])))

        w = model.init_weights(9)
        state = MomentumState(model.dimension, 0.0, 0.9)
        feeder = BatchFeeder(data, 16, 9, 0)
        for t in range(150):
            bg = model.batch_gradient(w, feeder.batch_for(t))
            g = apply_weight_decay(bg.gradient, w, schedule_value(schedules.weight_decay, t))
            state.eta = schedule_value(schedules.learning_rate, t)
            w = w + momentum_update(state, g)
            assert np.array_equal(w.values, trajectory[t].values), f"iteration {t}"


class TestDcS3gd:
    def test_identical_shards_behave_synchronously(self):
        """With every worker on the same data (no shuffling) all updates agree,
        distances are exactly zero, and the trajectory equals the synchronous
        baseline bit-for-bit."""
        model, data = logistic_problem()
        replicated = [data.subset(0, 128)] * 8
        schedules = flat_pair(200, 0.2)
        max_d = []
        stale_weights = []
        run_dc_s3gd(
            ClusterConfig(8, "dc_s3gd", 16, CostModel(), seed=7),
            model, replicated, schedules, CompensationConfig(0.2), 200,
            RunOptions(
                shuffle=False,
                observer=lambda info: (
                    max_d.append(
                        0.0 if info.distances is None
                        else max(float(np.max(np.abs(d.values))) for d in info.distances)
                    ),
                    stale_weights.append(info.weights[0]),
                ),
            ),
        )
        sync_weights = []
        run_ssgd(
            ClusterConfig(8, "ssgd", 16, CostModel(), seed=7),
            model, replicated, schedules, 200,
            RunOptions(shuffle=False,
                       observer=lambda info: sync_weights.append(info.weights[0])),
        )
        assert max(max_d) == 0.0
        assert all(
            np.array_equal(a.values, b.values)
            for a, b in zip(stale_weights, sync_weights)
        )

    def test_momentum_option_is_respected(self):
        model, data = logistic_problem()
        shards = shard_dataset(data, 2)
        schedules = flat_pair(30, 0.2)
        runs = []
        for mu in (0.0, 0.9):
            record = run_dc_s3gd(
                ClusterConfig(2, "dc_s3gd", 16, CostModel(), seed=3),
                model, shards, schedules, CompensationConfig(0.2), 30,
                RunOptions(momentum=mu),
            )
            runs.append(record.summary.final_train_loss)
        assert runs[0] != runs[1]

    def test_compensation_off_records_zero_lambda(self):
        model, data = logistic_problem()
        record = run_dc_s3gd(
            ClusterConfig(4, "dc_s3gd", 16, CostModel(), seed=3),
            model, shard_dataset(data, 4), flat_pair(20, 0.2),
            CompensationConfig(0.2, enabled=False), 20,
        )
        assert all(row.mean_lambda == 0.0 for row in record.rows)

    def test_validation_follows_eval_interval(self):
        model, data = logistic_problem()
        val = data.subset(0, 64)
        record = run_dc_s3gd(
            ClusterConfig(2, "dc_s3gd", 16, CostModel(), seed=3),
            model, shard_dataset(data.subset(64, 640), 2), flat_pair(20, 0.2),
            CompensationConfig(0.2), 20,
            RunOptions(val_dataset=val, eval_interval=5),
        )
        evaluated = [row.iteration for row in record.rows if row.val_error is not None]
        assert evaluated == [0, 5, 10, 15, 19]

    def test_final_iteration_always_evaluated_when_val_given(self):
        model, data = logistic_problem()
        record = run_dc_s3gd(
            ClusterConfig(2, "dc_s3gd", 16, CostModel(), seed=3),
            model, shard_dataset(data.subset(64, 640), 2), flat_pair(20, 0.2),
            CompensationConfig(0.2), 20,
            RunOptions(val_dataset=data.subset(0, 64)),
        )
        evaluated = [row.iteration for row in record.rows if row.val_error is not None]
        assert evaluated == [19]

    def test_jittered_run_is_deterministic(self):
        model, data = logistic_problem()
        cost = CostModel(jitter_amplitude=0.5)
        rows = []
        for _ in range(2):
            record = run_dc_s3gd(
                ClusterConfig(4, "dc_s3gd", 16, cost, seed=11),
                model, shard_dataset(data, 4), flat_pair(40, 0.2),
                CompensationConfig(0.2), 40,
            )
            rows.append([(r.simulated_time, r.train_loss) for r in record.rows])
        assert rows[0] == rows[1]

    def test_jitter_stretches_compute_within_bounds(self):
        model, data = logistic_problem()
        amp = 0.5
        record = run_ssgd(
            ClusterConfig(2, "ssgd", 16, CostModel(t_allreduce=0.0, jitter_amplitude=amp),
                          seed=11),
            model, shard_dataset(data, 2), flat_pair(30, 0.2), 30,
        )
        times = [row.simulated_time for row in record.rows]
        deltas = np.diff([0.0] + times)
        assert np.all(deltas >= 1.0) and np.all(deltas < 1.0 + amp)
        assert len(set(deltas.tolist())) > 1

    def test_divergence_is_recorded_not_silent(self):
        model = QuadraticModel.seeded(6, seed=2)
        data = make_synthetic_dataset("quadratic", 64, 6, 0, seed=2)
        record = run_dc_s3gd(
            ClusterConfig(2, "dc_s3gd", 16, CostModel(), seed=2),
            model, shard_dataset(data, 2), flat_pair(500, 1000.0),
            CompensationConfig(0.2), 500,
        )
        assert record.summary.diverged
        assert record.summary.diverged_iteration is not None
        assert len(record.rows) == record.summary.diverged_iteration
        for row in record.rows:
            assert np.isfinite(row.train_loss)

    def test_plateau_stop_changes_nothing_before_the_trigger(self):
        """An early warm-up stop at iteration s leaves values on [0, s]
        untouched (continuity), so trajectories must agree through s and
        split right after."""
        model, data = logistic_problem(n_samples=80, dim=4, classes=2, seed=5)
        shards = shard_dataset(data, 1)  # 80 samples, batch 16: 5 iterations/epoch
        lr = Schedule(60, 50, 0.5, 0.05, 0.0)
        schedules = SchedulePair(lr, lr.scaled_to_peak(0.00023))
        trajectories = {}
        for plateau in (False, True):
            seen = []
            run_dc_s3gd(
                ClusterConfig(1, "dc_s3gd", 16, CostModel(), seed=5),
                model, shards, schedules, CompensationConfig(0.2), 60,
                RunOptions(
                    plateau_enabled=plateau,
                    plateau_window=1,
                    plateau_threshold=1.0,  # any two finished epochs trigger the stop
                    observer=lambda info: seen.append(info.weights[0].values),
                ),
            )
            trajectories[plateau] = seen
        same = [
            bool(np.array_equal(a, b))
            for a, b in zip(trajectories[False], trajectories[True])
        ]
        # window 1, 5 iterations/epoch: trigger after epoch 2, stop at iteration 10;
        # the frozen schedule equals the ramp at 10 and departs from 11 on
        assert all(same[:11])
        assert not all(same[11:])


class TestDcAsgd:
    def test_single_worker_equals_momentum_sgd(self):
        model, data = logistic_problem()
        schedules = flat_pair(150, 0.3, decay=0.001)
        config = ClusterConfig(1, "dc_asgd", 16, CostModel(), seed=9)
        server_states = []
        run_dc_asgd(config, model, shard_dataset(data, 1), schedules,
                    CompensationConfig(0.2), 150,
                    RunOptions(observer=lambda u: server_states.append(u)))

        w = model.init_weights(9)
        state = MomentumState(model.dimension, 0.0, 0.9)
        feeder = BatchFeeder(data, 16, 9, 0)
        for t in range(150):
            bg = model.batch_gradient(w, feeder.batch_for(t))
            g = apply_weight_decay(bg.gradient, w, schedule_value(schedules.weight_decay, t))
            state.eta = schedule_value(schedules.learning_rate, t)
            w = w + momentum_update(state, g)
            assert np.array_equal(w.values, server_states[t].server_weights.values)
        assert all(u.staleness == 0 for u in server_states)
        assert all(u.distance_norm == 0.0 for u in server_states)

    def test_update_times_follow_worker_cycles(self):
        model, data = logistic_problem()
        cost = CostModel(t_compute=1.0, t_ps_roundtrip=2.0)
        config = ClusterConfig(2, "dc_asgd", 16, cost, seed=9)
        record = run_dc_asgd(config, model, shard_dataset(data, 2), flat_pair(10, 0.1),
                             CompensationConfig(0.2), 10)
        times = [row.simulated_time for row in record.rows]
        assert times == [3.0, 3.0, 6.0, 6.0, 9.0, 9.0, 12.0, 12.0, 15.0, 15.0]

    def test_equal_speed_ties_resolve_by_worker_id(self):
        model, data = logistic_problem()
        config = ClusterConfig(4, "dc_asgd", 16, CostModel(), seed=9)
        order = []
        run_dc_asgd(config, model, shard_dataset(data, 4), flat_pair(8, 0.1),
                    CompensationConfig(0.2), 8,
                    RunOptions(observer=lambda u: order.append(u.worker_id)))
        assert order == [0, 1, 2, 3, 0, 1, 2, 3]


class TestRunAlgorithm:
    @pytest.mark.parametrize("algorithm", ["dc_s3gd", "ssgd", "dc_asgd"])
    def test_dispatch_tags_metadata(self, algorithm):
        model, data = logistic_problem()
        record = run_algorithm(
            ClusterConfig(2, algorithm, 16, CostModel(), seed=1),
            model, shard_dataset(data, 2), flat_pair(12, 0.1),
            CompensationConfig(0.2), 12,
        )
        assert record.meta.algorithm == algorithm
        assert record.meta.n_workers == 2
        assert len(record.rows) == 12

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ValueError):
            ClusterConfig(2, "gossip", 16, CostModel(), seed=1)
