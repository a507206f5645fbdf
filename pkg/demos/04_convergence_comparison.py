"""Does the correction actually help training?  Three runs, one table.

The same 8-worker classification workload is trained three ways: the
stale-synchronous protocol with the correction switched off, the same
protocol with it on, and the fully synchronous baseline that never sees
stale weights at all.  Both stale runs finish in half the synchronous
simulated time; the on/off pair isolates what the correction itself buys
at identical cost.  (Try other seeds: the ordering is stable.)
"""

import tempfile
from dataclasses import replace

from stalesim import compare_runs, parse_config_text, run_experiment

CONFIG = """
[experiment]
name = convergence-demo
seed = 20
epochs = 12

[cluster]
algorithm = dc_s3gd
n_workers = 8
aggregate_batch_size = 256
t_compute = 1.0
t_allreduce = 1.0

[model]
kind = logistic_regression
input_dim = 32
n_classes = 4

[dataset]
n_samples = 8192
margin = 2.5
val_fraction = 0.2

[schedule]
eta_single_node = 0.1
warmup_fraction = 0.5
"""

cfg = parse_config_text(CONFIG)
workdir = tempfile.mkdtemp(prefix="stalesim-demo-")
print(f"writing run directories under {workdir}\n")

variants = [
    ("stale, uncorrected", replace(cfg, compensation=replace(cfg.compensation, enabled=False))),
    ("stale, corrected", cfg),
    ("synchronous", replace(cfg, cluster=replace(cfg.cluster, algorithm="ssgd"))),
]

records = []
for label, variant in variants:
    record, directory = run_experiment(variant, f"{workdir}/{label.replace(' ', '-').replace(',', '')}")
    records.append((label, record))
    s = record.summary
    print(f"{label:<20} loss {s.final_train_loss:.6f}  train err {s.final_train_error:.4f}  "
          f"val err {s.final_val_error:.4f}  simulated time {s.total_simulated_time:.0f}")

off = records[0][1].summary.final_train_loss
on = records[1][1].summary.final_train_loss
print(f"\ncorrection benefit at identical wall clock: {off - on:+.2e} lower loss")
print("the stale runs cost half the synchronous simulated time, and at this")
print("learning rate the one-exchange lag costs no quality to begin with;")
print("the correction still buys a consistently lower final loss on top.")
print("\nfull comparison table:")
print(compare_runs(records).to_text())
