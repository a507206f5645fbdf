"""Per-iteration metric rows, run summaries, and their on-disk form.

A persisted run is a directory holding ``metrics.csv`` (one row per
iteration) and ``metadata.ini`` (summary, seed, config echo, and the
completeness marker).  Files are written through a temp-file rename, and a
directory whose metadata lacks ``status`` is treated as incomplete.
"""

from __future__ import annotations

import configparser
import csv
import io
import os
from dataclasses import dataclass, field
from typing import Optional

from .data_io import atomic_write_bytes
from .errors import RunIOError

__all__ = [
    "CSV_COLUMNS",
    "IterationRow",
    "RunMeta",
    "RunSummary",
    "RunRecord",
    "summarize",
    "write_run",
    "load_run",
]

CSV_COLUMNS = (
    "iteration",
    "simulated_time",
    "train_loss",
    "train_error",
    "mean_lambda",
    "max_abs_D",
    "grad_norm",
    "val_error",
)

METRICS_FILE = "metrics.csv"
METADATA_FILE = "metadata.ini"


@dataclass(frozen=True)
class IterationRow:
    iteration: int
    simulated_time: float
    train_loss: float
    train_error: float
    mean_lambda: float
    max_abs_D: float
    grad_norm: float
    val_error: Optional[float] = None


@dataclass(frozen=True)
class RunMeta:
    algorithm: str
    n_workers: int
    seed: int
    iterations_per_epoch: int  # 0 when the run is not epoch-structured
    model_kind: str
    model_dimension: int
    config_echo: str = ""  # resolved config text, verbatim
    fingerprint: str = ""


@dataclass(frozen=True)
class RunSummary:
    n_iterations: int
    final_train_loss: float
    final_train_error: float
    final_val_error: Optional[float]
    total_simulated_time: float
    wall_time_seconds: float
    diverged: bool = False
    diverged_iteration: Optional[int] = None


@dataclass
class RunRecord:
    meta: RunMeta
    rows: list[IterationRow] = field(default_factory=list)
    summary: Optional[RunSummary] = None

    @property
    def diverged(self) -> bool:
        return bool(self.summary and self.summary.diverged)


def summarize(
    meta: RunMeta,
    rows: list[IterationRow],
    wall_time_seconds: float,
    diverged: bool = False,
    diverged_iteration: Optional[int] = None,
) -> RunSummary:
    """Summary derived from the rows alone.

    Final train loss/error are means over the last completed epoch's rows
    (a single batch is too noisy to stand for "final"); for runs without
    epoch structure, the last row.  Final validation error is the most
    recent evaluated value.
    """
    if not rows:
        return RunSummary(0, float("nan"), float("nan"), None, 0.0,
                          wall_time_seconds, diverged, diverged_iteration)
    span = meta.iterations_per_epoch if meta.iterations_per_epoch > 0 else 1
    span = min(span, len(rows))
    tail = rows[-span:]
    loss = sum(r.train_loss for r in tail) / span
    err = sum(r.train_error for r in tail) / span
    val = None
    for r in reversed(rows):
        if r.val_error is not None:
            val = r.val_error
            break
    return RunSummary(
        n_iterations=len(rows),
        final_train_loss=loss,
        final_train_error=err,
        final_val_error=val,
        total_simulated_time=rows[-1].simulated_time,
        wall_time_seconds=wall_time_seconds,
        diverged=diverged,
        diverged_iteration=diverged_iteration,
    )


def _fmt(x: float) -> str:
    # repr round-trips float64 exactly and is stable across runs
    return repr(float(x))


def rows_to_csv_text(rows: list[IterationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                str(r.iteration),
                _fmt(r.simulated_time),
                _fmt(r.train_loss),
                _fmt(r.train_error),
                _fmt(r.mean_lambda),
                _fmt(r.max_abs_D),
                _fmt(r.grad_norm),
                "" if r.val_error is None else _fmt(r.val_error),
            ]
        )
    return buf.getvalue()


def _metadata_text(record: RunRecord) -> str:
    meta, summary = record.meta, record.summary
    parser = configparser.ConfigParser(interpolation=None)
    parser["run"] = {}
    run = parser["run"]
    run["status"] = "diverged" if summary.diverged else "complete"
    run["algorithm"] = meta.algorithm
    run["n_workers"] = str(meta.n_workers)
    run["seed"] = str(meta.seed)
    run["iterations_per_epoch"] = str(meta.iterations_per_epoch)
    run["model_kind"] = meta.model_kind
    run["model_dimension"] = str(meta.model_dimension)
    run["fingerprint"] = meta.fingerprint
    run["n_iterations"] = str(summary.n_iterations)
    run["final_train_loss"] = _fmt(summary.final_train_loss)
    run["final_train_error"] = _fmt(summary.final_train_error)
    if summary.final_val_error is not None:
        run["final_val_error"] = _fmt(summary.final_val_error)
    run["total_simulated_time"] = _fmt(summary.total_simulated_time)
    run["wall_time_seconds"] = _fmt(summary.wall_time_seconds)
    if summary.diverged_iteration is not None:
        run["diverged_iteration"] = str(summary.diverged_iteration)
    buf = io.StringIO()
    parser.write(buf)
    text = buf.getvalue()
    if record.meta.config_echo:
        text += "\n" + record.meta.config_echo
    return text


def write_run(directory: str, record: RunRecord) -> None:
    """Persist metrics then metadata; metadata lands last so its presence
    (with a status) marks the run as fully written."""
    if record.summary is None:
        raise ValueError("record has no summary; summarize() it first")
    os.makedirs(directory, exist_ok=True)
    atomic_write_bytes(
        os.path.join(directory, METRICS_FILE),
        rows_to_csv_text(record.rows).encode("utf-8"),
    )
    atomic_write_bytes(
        os.path.join(directory, METADATA_FILE),
        _metadata_text(record).encode("utf-8"),
    )


def load_run(directory: str) -> RunRecord:
    meta_path = os.path.join(directory, METADATA_FILE)
    csv_path = os.path.join(directory, METRICS_FILE)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(meta_path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise RunIOError(f"cannot read {meta_path}: {exc}") from exc
    except configparser.Error as exc:
        raise RunIOError(f"{meta_path}: {exc}") from exc
    if not parser.has_option("run", "status"):
        raise RunIOError(f"{meta_path}: no status; run is incomplete")
    run = parser["run"]

    rows: list[IterationRow] = []
    try:
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise RunIOError(f"{csv_path}: unexpected columns {reader.fieldnames}")
            for line in reader:
                rows.append(
                    IterationRow(
                        iteration=int(line["iteration"]),
                        simulated_time=float(line["simulated_time"]),
                        train_loss=float(line["train_loss"]),
                        train_error=float(line["train_error"]),
                        mean_lambda=float(line["mean_lambda"]),
                        max_abs_D=float(line["max_abs_D"]),
                        grad_norm=float(line["grad_norm"]),
                        val_error=float(line["val_error"]) if line["val_error"] else None,
                    )
                )
    except OSError as exc:
        raise RunIOError(f"cannot read {csv_path}: {exc}") from exc

    meta = RunMeta(
        algorithm=run.get("algorithm", ""),
        n_workers=run.getint("n_workers", 0),
        seed=run.getint("seed", 0),
        iterations_per_epoch=run.getint("iterations_per_epoch", 0),
        model_kind=run.get("model_kind", ""),
        model_dimension=run.getint("model_dimension", 0),
        fingerprint=run.get("fingerprint", ""),
    )
    diverged = run["status"] == "diverged"
    summary = RunSummary(
        n_iterations=run.getint("n_iterations", len(rows)),
        final_train_loss=run.getfloat("final_train_loss", float("nan")),
        final_train_error=run.getfloat("final_train_error", float("nan")),
        final_val_error=(
            run.getfloat("final_val_error") if run.get("final_val_error") else None
        ),
        total_simulated_time=run.getfloat("total_simulated_time", 0.0),
        wall_time_seconds=run.getfloat("wall_time_seconds", 0.0),
        diverged=diverged,
        diverged_iteration=(
            run.getint("diverged_iteration") if run.get("diverged_iteration") else None
        ),
    )
    return RunRecord(meta=meta, rows=rows, summary=summary)
