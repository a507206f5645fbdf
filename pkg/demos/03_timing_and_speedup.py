"""Where the speedup comes from: overlapping compute with communication.

All three protocols step through the same workload under the same cost
model, one unit of compute and one unit of network per iteration.  The
synchronous baseline pays both in sequence.  The stale-synchronous
protocol posts its update and immediately starts the next gradient, so
each iteration costs only the larger of the two.  The parameter-server
protocol pays compute plus a round trip to the server.
"""

from stalesim import (
    ClusterConfig,
    CompensationConfig,
    CostModel,
    LogisticRegressionModel,
    Schedule,
    SchedulePair,
    compare_runs,
    make_synthetic_dataset,
    run_algorithm,
    shard_dataset,
    simulated_iteration_time,
)

cost = CostModel(t_compute=1.0, t_allreduce=1.0, t_ps_roundtrip=1.0)
print("per-iteration cost under t_compute = t_allreduce = t_ps = 1:")
for name in ("ssgd", "dc_s3gd", "dc_asgd"):
    print(f"  {name:<8} {simulated_iteration_time(cost, name):.1f}")

model = LogisticRegressionModel(16, 4)
data = make_synthetic_dataset("logistic_regression", 1024, 16, 4, seed=6)
shards = shard_dataset(data, 4)
lr = Schedule(200, 100, 0.4, 0.0, 0.0)
schedules = SchedulePair(lr, lr.scaled_to_peak(0.00023))

# equal work per worker: 200 gradients each.  For the collective protocols
# that is 200 rounds; the server protocol counts every worker's update as
# an iteration of its own, so the same work is 4 * 200 updates there.
records = []
for name, iterations in (("ssgd", 200), ("dc_s3gd", 200), ("dc_asgd", 800)):
    config = ClusterConfig(4, name, 32, cost, seed=6)
    sched = SchedulePair(
        Schedule(iterations, iterations // 2, lr.peak_value, 0.0, 0.0),
        Schedule(iterations, iterations // 2, 0.00023, 0.0, 0.0),
    )
    records.append(
        run_algorithm(config, model, shards, sched, CompensationConfig(0.2), iterations)
    )

print("\nsame gradient work per worker, same data, same seed:")
print(compare_runs(records).to_text())
print("read total_simulated_time for the equal-work comparison: the overlap")
print("protocol finishes in half the synchronous wall clock, while the")
print("server protocol's round trips keep it at the synchronous pace.  The")
print("speedup column is per recorded update, and the server records four")
print("small updates per round, hence its large per-update rate.")
