"""Experiment configuration: a flat INI file, one section per concern.

Sections and keys (defaults in parentheses; [model] and [dataset] are the
only required sections):

* ``[experiment]`` name (file stem), seed (0), epochs (1) XOR
  max_iterations, eval_interval (0), output_dir (name)
* ``[cluster]`` algorithm (dc_s3gd), n_workers (1), local_batch_size (32)
  XOR aggregate_batch_size, t_compute (1.0), t_allreduce (1.0),
  t_ps_roundtrip (1.0), jitter_amplitude (0.0)
* ``[model]`` kind, input_dim, n_classes, hidden_units
* ``[dataset]`` source (synthetic), n_samples, margin (4.0), path,
  val_fraction (0.2)
* ``[schedule]`` eta_single_node (0.1), warmup_fraction (0.5),
  start_value (0.0), end_value (0.0), momentum (0.9),
  weight_decay_base (0.0001), weight_decay_factor (2.3),
  excluded_groups (1), plateau_detection (false), plateau_window (5),
  plateau_threshold (0.005)
* ``[compensation]`` lambda0 (0.2), enabled (true), exact_hessian (false)

Unknown sections or keys are errors; nothing is silently ignored.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import os
from dataclasses import dataclass, field, replace
from typing import Optional

from .cluster_sim import ALGORITHMS, ClusterConfig, CostModel
from .errors import ConfigError
from .optim import CompensationConfig

__all__ = [
    "ModelSpec",
    "DatasetSpec",
    "ScheduleSpec",
    "ExperimentConfig",
    "load_config",
    "parse_config_text",
    "serialize_config",
    "config_fingerprint",
    "OUTPUT_ROOT_ENV",
]

OUTPUT_ROOT_ENV = "STALESIM_OUTPUT_ROOT"

MODEL_KINDS = ("quadratic", "logistic_regression", "mlp")


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    n_classes: int = 0
    hidden_units: int = 0


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic"
    n_samples: int = 0
    margin: float = 4.0
    path: str = ""
    val_fraction: float = 0.2


@dataclass(frozen=True)
class ScheduleSpec:
    eta_single_node: float = 0.1
    warmup_fraction: float = 0.5
    start_value: float = 0.0
    end_value: float = 0.0
    momentum: float = 0.9
    weight_decay_base: float = 0.0001
    weight_decay_factor: float = 2.3
    excluded_groups: tuple[int, ...] = (1,)
    plateau_detection: bool = False
    plateau_window: int = 5
    plateau_threshold: float = 0.005


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int
    cluster: ClusterConfig
    model: ModelSpec
    dataset: DatasetSpec
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    compensation: CompensationConfig = field(default_factory=CompensationConfig)
    epochs: Optional[int] = None
    max_iterations: Optional[int] = None
    eval_interval: int = 0
    output_dir: str = ""
    batch_mode: str = "local"  # which batch key the user set
    aggregate_batch_size: int = 0

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed, cluster=replace(self.cluster, seed=seed))


_SCHEMA = {
    "experiment": {"name", "seed", "epochs", "max_iterations", "eval_interval", "output_dir"},
    "cluster": {
        "algorithm", "n_workers", "local_batch_size", "aggregate_batch_size",
        "t_compute", "t_allreduce", "t_ps_roundtrip", "jitter_amplitude",
    },
    "model": {"kind", "input_dim", "n_classes", "hidden_units"},
    "dataset": {"source", "n_samples", "margin", "path", "val_fraction"},
    "schedule": {
        "eta_single_node", "warmup_fraction", "start_value", "end_value", "momentum",
        "weight_decay_base", "weight_decay_factor", "excluded_groups",
        "plateau_detection", "plateau_window", "plateau_threshold",
    },
    "compensation": {"lambda0", "enabled", "exact_hessian"},
}


class _Section:
    """Typed accessors over one INI section, with field-naming errors."""

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        self.raw = dict(parser[name]) if parser.has_section(name) else {}

    def _get(self, key, default):
        return self.raw.get(key, default)

    def text(self, key: str, default: str) -> str:
        return str(self._get(key, default)).strip()

    def integer(self, key: str, default: Optional[int]) -> Optional[int]:
        v = self._get(key, None)
        if v is None:
            return default
        try:
            return int(str(v).strip())
        except ValueError:
            raise ConfigError(f"not an integer: {v!r}", field=f"{self.name}.{key}")

    def real(self, key: str, default: float) -> float:
        v = self._get(key, None)
        if v is None:
            return default
        try:
            return float(str(v).strip())
        except ValueError:
            raise ConfigError(f"not a number: {v!r}", field=f"{self.name}.{key}")

    def flag(self, key: str, default: bool) -> bool:
        v = self._get(key, None)
        if v is None:
            return default
        lowered = str(v).strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {v!r}", field=f"{self.name}.{key}")

    def int_list(self, key: str, default: tuple[int, ...]) -> tuple[int, ...]:
        v = self._get(key, None)
        if v is None:
            return default
        text = str(v).strip()
        if not text:
            return ()
        try:
            return tuple(int(part.strip()) for part in text.split(","))
        except ValueError:
            raise ConfigError(f"not a comma list of integers: {v!r}", field=f"{self.name}.{key}")


def _check_schema(parser: configparser.ConfigParser) -> None:
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]", field=section)
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r}", field=f"{section}.{key}")
    if parser.defaults():
        stray = ", ".join(parser.defaults())
        raise ConfigError(f"keys outside any section: {stray}", field="DEFAULT")


def load_config(path: str) -> ExperimentConfig:
    """Parse and fully validate; every error names the offending field."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}", field=path)
    default_name = os.path.splitext(os.path.basename(path))[0]
    return parse_config_text(text, base_dir=os.path.dirname(os.path.abspath(path)),
                             default_name=default_name)


def parse_config_text(
    text: str, base_dir: str = ".", default_name: str = "experiment"
) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}", field="config")
    _check_schema(parser)

    exp = _Section(parser, "experiment")
    clu = _Section(parser, "cluster")
    mod = _Section(parser, "model")
    dat = _Section(parser, "dataset")
    sch = _Section(parser, "schedule")
    cmp_ = _Section(parser, "compensation")

    if not mod.raw:
        raise ConfigError("section is required", field="model")
    if not dat.raw:
        raise ConfigError("section is required", field="dataset")

    name = exp.text("name", default_name)
    seed = exp.integer("seed", 0)
    epochs = exp.integer("epochs", None)
    max_iterations = exp.integer("max_iterations", None)
    if epochs is not None and max_iterations is not None:
        raise ConfigError("give epochs or max_iterations, not both",
                          field="experiment.epochs")
    if epochs is None and max_iterations is None:
        epochs = 1
    if epochs is not None and epochs < 1:
        raise ConfigError("must be >= 1", field="experiment.epochs")
    if max_iterations is not None and max_iterations < 1:
        raise ConfigError("must be >= 1", field="experiment.max_iterations")
    eval_interval = exp.integer("eval_interval", 0)
    if eval_interval < 0:
        raise ConfigError("must be >= 0", field="experiment.eval_interval")
    output_dir = exp.text("output_dir", "")

    algorithm = clu.text("algorithm", "dc_s3gd").lower().replace("-", "_")
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"must be one of {ALGORITHMS}", field="cluster.algorithm")
    n_workers = clu.integer("n_workers", 1)
    if n_workers < 1:
        raise ConfigError("must be >= 1", field="cluster.n_workers")
    local_given = "local_batch_size" in clu.raw
    aggregate_given = "aggregate_batch_size" in clu.raw
    if local_given and aggregate_given:
        raise ConfigError("give local_batch_size or aggregate_batch_size, not both",
                          field="cluster.local_batch_size")
    if aggregate_given:
        aggregate = clu.integer("aggregate_batch_size", 0)
        if aggregate < 1:
            raise ConfigError("must be >= 1", field="cluster.aggregate_batch_size")
        if aggregate % n_workers:
            raise ConfigError(
                f"aggregate batch {aggregate} not divisible by n_workers {n_workers}",
                field="cluster.aggregate_batch_size",
            )
        local_batch = aggregate // n_workers
        batch_mode = "aggregate"
    else:
        aggregate = 0
        local_batch = clu.integer("local_batch_size", 32)
        batch_mode = "local"
    if local_batch < 1:
        raise ConfigError("must be >= 1", field="cluster.local_batch_size")
    for key in ("t_compute", "t_allreduce", "t_ps_roundtrip", "jitter_amplitude"):
        if clu.real(key, 0.0) < 0.0:
            raise ConfigError("must be >= 0", field=f"cluster.{key}")
    cost = CostModel(
        t_compute=clu.real("t_compute", 1.0),
        t_allreduce=clu.real("t_allreduce", 1.0),
        t_ps_roundtrip=clu.real("t_ps_roundtrip", 1.0),
        jitter_amplitude=clu.real("jitter_amplitude", 0.0),
    )
    cluster = ClusterConfig(n_workers, algorithm, local_batch, cost, seed)

    kind = mod.text("kind", "")
    if kind not in MODEL_KINDS:
        raise ConfigError(f"must be one of {MODEL_KINDS}", field="model.kind")
    input_dim = mod.integer("input_dim", 0)
    if input_dim < 1:
        raise ConfigError("must be >= 1", field="model.input_dim")
    n_classes = mod.integer("n_classes", 0)
    hidden_units = mod.integer("hidden_units", 0)
    if kind in ("logistic_regression", "mlp") and n_classes < 2:
        raise ConfigError("classification model needs n_classes >= 2",
                          field="model.n_classes")
    if kind == "mlp" and hidden_units < 1:
        raise ConfigError("mlp needs hidden_units >= 1", field="model.hidden_units")
    model = ModelSpec(kind, input_dim, n_classes, hidden_units)

    source = dat.text("source", "synthetic")
    if source not in ("synthetic", "file"):
        raise ConfigError("must be 'synthetic' or 'file'", field="dataset.source")
    n_samples = dat.integer("n_samples", 0)
    path = dat.text("path", "")
    if source == "synthetic":
        if n_samples < 1:
            raise ConfigError("synthetic dataset needs n_samples >= 1",
                              field="dataset.n_samples")
    else:
        if not path:
            raise ConfigError("file dataset needs a path", field="dataset.path")
        if not os.path.isabs(path):
            path = os.path.normpath(os.path.join(base_dir, path))
        if not os.path.exists(path):
            raise ConfigError(f"no such file: {path}", field="dataset.path")
        n_samples = 0  # the file defines the sample count
    val_fraction = dat.real("val_fraction", 0.2)
    if not 0.0 <= val_fraction < 1.0:
        raise ConfigError("must lie in [0, 1)", field="dataset.val_fraction")
    # margin only shapes synthetic generation; pin it for file datasets so
    # serialize/reload round-trips exactly
    margin = dat.real("margin", 4.0) if source == "synthetic" else 4.0
    dataset = DatasetSpec(source, n_samples, margin, path, val_fraction)

    eta_sn = sch.real("eta_single_node", 0.1)
    if eta_sn <= 0.0:
        raise ConfigError("must be > 0", field="schedule.eta_single_node")
    warmup_fraction = sch.real("warmup_fraction", 0.5)
    if not 0.0 <= warmup_fraction <= 1.0:
        raise ConfigError("must lie in [0, 1]", field="schedule.warmup_fraction")
    momentum = sch.real("momentum", 0.9)
    if not 0.0 <= momentum < 1.0:
        raise ConfigError("must lie in [0, 1)", field="schedule.momentum")
    plateau_window = sch.integer("plateau_window", 5)
    if plateau_window < 1:
        raise ConfigError("must be >= 1", field="schedule.plateau_window")
    for key in ("start_value", "end_value", "weight_decay_base", "weight_decay_factor",
                "plateau_threshold"):
        if sch.real(key, 0.0) < 0.0:
            raise ConfigError("must be >= 0", field=f"schedule.{key}")
    schedule = ScheduleSpec(
        eta_single_node=eta_sn,
        warmup_fraction=warmup_fraction,
        start_value=sch.real("start_value", 0.0),
        end_value=sch.real("end_value", 0.0),
        momentum=momentum,
        weight_decay_base=sch.real("weight_decay_base", 0.0001),
        weight_decay_factor=sch.real("weight_decay_factor", 2.3),
        excluded_groups=sch.int_list("excluded_groups", (1,)),
        plateau_detection=sch.flag("plateau_detection", False),
        plateau_window=plateau_window,
        plateau_threshold=sch.real("plateau_threshold", 0.005),
    )

    lambda0 = cmp_.real("lambda0", 0.2)
    if lambda0 < 0.0:
        raise ConfigError("must be >= 0", field="compensation.lambda0")
    compensation = CompensationConfig(
        lambda0=lambda0,
        enabled=cmp_.flag("enabled", True),
        exact_hessian=cmp_.flag("exact_hessian", False),
    )

    return ExperimentConfig(
        name=name,
        seed=seed,
        cluster=cluster,
        model=model,
        dataset=dataset,
        schedule=schedule,
        compensation=compensation,
        epochs=epochs,
        max_iterations=max_iterations,
        eval_interval=eval_interval,
        output_dir=output_dir,
        batch_mode=batch_mode,
        aggregate_batch_size=aggregate,
    )


def serialize_config(cfg: ExperimentConfig) -> str:
    """Echo every resolved value; reparsing yields an equal config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser["experiment"] = {"name": cfg.name, "seed": str(cfg.seed)}
    if cfg.epochs is not None:
        parser["experiment"]["epochs"] = str(cfg.epochs)
    else:
        parser["experiment"]["max_iterations"] = str(cfg.max_iterations)
    parser["experiment"]["eval_interval"] = str(cfg.eval_interval)
    if cfg.output_dir:
        parser["experiment"]["output_dir"] = cfg.output_dir

    cost = cfg.cluster.cost_model
    parser["cluster"] = {
        "algorithm": cfg.cluster.algorithm,
        "n_workers": str(cfg.cluster.n_workers),
    }
    if cfg.batch_mode == "aggregate":
        parser["cluster"]["aggregate_batch_size"] = str(cfg.aggregate_batch_size)
    else:
        parser["cluster"]["local_batch_size"] = str(cfg.cluster.local_batch_size)
    parser["cluster"].update(
        {
            "t_compute": repr(cost.t_compute),
            "t_allreduce": repr(cost.t_allreduce),
            "t_ps_roundtrip": repr(cost.t_ps_roundtrip),
            "jitter_amplitude": repr(cost.jitter_amplitude),
        }
    )

    parser["model"] = {"kind": cfg.model.kind, "input_dim": str(cfg.model.input_dim)}
    if cfg.model.n_classes:
        parser["model"]["n_classes"] = str(cfg.model.n_classes)
    if cfg.model.hidden_units:
        parser["model"]["hidden_units"] = str(cfg.model.hidden_units)

    parser["dataset"] = {"source": cfg.dataset.source}
    if cfg.dataset.source == "synthetic":
        parser["dataset"]["n_samples"] = str(cfg.dataset.n_samples)
        parser["dataset"]["margin"] = repr(cfg.dataset.margin)
    else:
        parser["dataset"]["path"] = cfg.dataset.path
    parser["dataset"]["val_fraction"] = repr(cfg.dataset.val_fraction)

    sch = cfg.schedule
    parser["schedule"] = {
        "eta_single_node": repr(sch.eta_single_node),
        "warmup_fraction": repr(sch.warmup_fraction),
        "start_value": repr(sch.start_value),
        "end_value": repr(sch.end_value),
        "momentum": repr(sch.momentum),
        "weight_decay_base": repr(sch.weight_decay_base),
        "weight_decay_factor": repr(sch.weight_decay_factor),
        "excluded_groups": ",".join(str(g) for g in sch.excluded_groups),
        "plateau_detection": str(sch.plateau_detection).lower(),
        "plateau_window": str(sch.plateau_window),
        "plateau_threshold": repr(sch.plateau_threshold),
    }

    parser["compensation"] = {
        "lambda0": repr(cfg.compensation.lambda0),
        "enabled": str(cfg.compensation.enabled).lower(),
        "exact_hessian": str(cfg.compensation.exact_hessian).lower(),
    }

    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_fingerprint(cfg: ExperimentConfig) -> str:
    """Short content hash of the resolved config."""
    digest = hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()
    return digest[:10]
