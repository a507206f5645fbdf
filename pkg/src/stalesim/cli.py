"""Command-line front end.

Verbs: ``run``, ``sweep``, ``compare``, ``validate-config``, ``gen-data``.
Exit codes: 0 success, 2 configuration error, 3 divergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Optional, Sequence

from .config import load_config, serialize_config
from .data_io import write_dataset, write_dataset_csv
from .errors import ConfigError, RunIOError
from .harness import SWEEP_AXES, compare_directories, run_experiment, sweep
from .models import make_synthetic_dataset

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stalesim",
        description="Deterministic data-parallel training simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one configured experiment")
    p.add_argument("config", help="path to an INI experiment config")
    p.add_argument("--output", help="run directory (overrides config and root)")

    p = sub.add_parser("sweep", help="run the config once per axis value")
    p.add_argument("config")
    p.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p.add_argument("--values", required=True,
                   help="comma-separated values, e.g. 1,2,4,8")
    p.add_argument("--output", help="parent directory for the value subdirectories")

    p = sub.add_parser("compare", help="tabulate finished run directories")
    p.add_argument("directories", nargs="+", metavar="dir")
    p.add_argument("--csv", help="also write the table as CSV to this path")

    p = sub.add_parser("validate-config", help="parse, validate, and echo a config")
    p.add_argument("config")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset a config describes")
    p.add_argument("spec", help="config file with [model] and [dataset] sections")
    p.add_argument("out", help="output path for the binary dataset")
    p.add_argument("--csv", help="also write a CSV copy to this path")

    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    record, directory = run_experiment(cfg, args.output)
    s = record.summary
    print(f"run '{cfg.name}': {cfg.cluster.algorithm}, {cfg.cluster.n_workers} workers, "
          f"{s.n_iterations} iterations")
    print(f"  final train loss {s.final_train_loss:.6g}, "
          f"error {s.final_train_error:.4f}"
          + ("" if s.final_val_error is None else f", val error {s.final_val_error:.4f}"))
    print(f"  simulated time {s.total_simulated_time:.6g}, "
          f"wall {s.wall_time_seconds:.2f}s")
    print(f"  written to {directory}")
    if s.diverged:
        print(f"  DIVERGED at iteration {s.diverged_iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _parse_values(axis: str, text: str):
    _, convert = SWEEP_AXES[axis]
    try:
        return [convert(part.strip()) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}: {exc}", field=axis)


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    values = _parse_values(args.axis, args.values)
    results = sweep(cfg, args.axis, values, args.output)
    worst = EXIT_OK
    for res in results:
        if res.error is not None:
            print(f"{args.axis}={res.value}: ERROR {res.error}", file=sys.stderr)
            worst = max(worst, EXIT_CONFIG)
        elif res.record.diverged:
            it = res.record.summary.diverged_iteration
            print(f"{args.axis}={res.value}: diverged at iteration {it} "
                  f"-> {res.directory}")
            worst = max(worst, EXIT_DIVERGED)
        else:
            s = res.record.summary
            print(f"{args.axis}={res.value}: loss {s.final_train_loss:.6g}, "
                  f"error {s.final_train_error:.4f}, "
                  f"time {s.total_simulated_time:.6g} -> {res.directory}")
    return worst


def _cmd_compare(args) -> int:
    table = compare_directories(args.directories)
    print(table.to_text(), end="")
    if args.csv:
        from .data_io import atomic_write_bytes

        atomic_write_bytes(args.csv, table.to_csv_text().encode("utf-8"))
        print(f"csv written to {args.csv}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(serialize_config(cfg), end="")
    return EXIT_OK


def _cmd_gen_data(args) -> int:
    cfg = load_config(args.spec)
    if cfg.dataset.source != "synthetic":
        raise ConfigError("gen-data needs a synthetic dataset spec",
                          field="dataset.source")
    dataset = make_synthetic_dataset(
        cfg.model.kind, cfg.dataset.n_samples, cfg.model.input_dim,
        cfg.model.n_classes, cfg.seed, margin=cfg.dataset.margin,
    )
    write_dataset(args.out, dataset)
    print(f"{len(dataset)} samples, dimension {dataset.dimension}, "
          f"{dataset.n_classes} classes -> {args.out}")
    if args.csv:
        write_dataset_csv(args.csv, dataset)
        print(f"csv copy -> {args.csv}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "validate-config": _cmd_validate,
    "gen-data": _cmd_gen_data,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        field = getattr(exc, "field", None)
        where = f" ({field})" if field else ""
        print(f"config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RunIOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
