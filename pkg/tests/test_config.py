"""Configuration parsing: defaults, validation errors that name their field,
exclusive options, and serialize/reparse stability."""

import pytest

from stalesim import (
    ConfigError,
    config_fingerprint,
    load_config,
    parse_config_text,
    serialize_config,
)

MINIMAL = """
[model]
kind = logistic_regression
input_dim = 4
n_classes = 2

[dataset]
n_samples = 64
"""

FULL = """
[experiment]
name = demo
seed = 42
max_iterations = 250
eval_interval = 10
output_dir = out/demo

[cluster]
algorithm = DC-S3GD
n_workers = 4
aggregate_batch_size = 64
t_compute = 2.0
t_allreduce = 0.5
jitter_amplitude = 0.1

[model]
kind = mlp
input_dim = 16
n_classes = 4
hidden_units = 32

[dataset]
n_samples = 4096
margin = 2.5
val_fraction = 0.25

[schedule]
eta_single_node = 0.05
warmup_fraction = 0.4
momentum = 0.8
excluded_groups = 1,3
plateau_detection = true

[compensation]
lambda0 = 0.3
exact_hessian = true
"""


BASE_SECTIONS = {
    "model": {"kind": "logistic_regression", "input_dim": "4", "n_classes": "2"},
    "dataset": {"n_samples": "64"},
}


def parse(edits=None):
    """Parse the minimal config with {(section, key): value} overrides merged in."""
    sections = {name: dict(kv) for name, kv in BASE_SECTIONS.items()}
    for (section, key), value in (edits or {}).items():
        sections.setdefault(section, {})[key] = value
    text = "\n\n".join(
        f"[{name}]\n" + "\n".join(f"{k} = {v}" for k, v in kv.items())
        for name, kv in sections.items()
    )
    return parse_config_text(text)


class TestDefaults:
    def test_minimal_config_fills_documented_defaults(self):
        cfg = parse_config_text(MINIMAL)
        assert cfg.seed == 0
        assert cfg.epochs == 1 and cfg.max_iterations is None
        assert cfg.eval_interval == 0
        assert cfg.cluster.algorithm == "dc_s3gd"
        assert cfg.cluster.n_workers == 1
        assert cfg.cluster.local_batch_size == 32
        assert cfg.cluster.cost_model.t_compute == 1.0
        assert cfg.cluster.cost_model.jitter_amplitude == 0.0
        assert cfg.dataset.margin == 4.0
        assert cfg.dataset.val_fraction == 0.2
        assert cfg.schedule.eta_single_node == 0.1
        assert cfg.schedule.warmup_fraction == 0.5
        assert cfg.schedule.momentum == 0.9
        assert cfg.schedule.weight_decay_base == 0.0001
        assert cfg.schedule.weight_decay_factor == 2.3
        assert cfg.schedule.excluded_groups == (1,)
        assert cfg.schedule.plateau_detection is False
        assert cfg.compensation.lambda0 == 0.2
        assert cfg.compensation.enabled is True
        assert cfg.compensation.exact_hessian is False

    def test_full_config_reads_every_section(self):
        cfg = parse_config_text(FULL)
        assert cfg.name == "demo"
        assert cfg.seed == 42 and cfg.cluster.seed == 42
        assert cfg.max_iterations == 250 and cfg.epochs is None
        assert cfg.cluster.algorithm == "dc_s3gd"  # normalized spelling
        assert cfg.batch_mode == "aggregate"
        assert cfg.aggregate_batch_size == 64
        assert cfg.cluster.local_batch_size == 16  # 64 split over 4 workers
        assert cfg.schedule.excluded_groups == (1, 3)
        assert cfg.compensation.exact_hessian is True

    def test_with_seed_updates_cluster_too(self):
        cfg = parse_config_text(MINIMAL).with_seed(77)
        assert cfg.seed == 77 and cfg.cluster.seed == 77


class TestValidation:
    @pytest.mark.parametrize(
        "section,key,value,field",
        [
            ("experiment", "seed", "abc", "experiment.seed"),
            ("experiment", "eval_interval", "-1", "experiment.eval_interval"),
            ("cluster", "n_workers", "0", "cluster.n_workers"),
            ("cluster", "t_compute", "-1.0", "cluster.t_compute"),
            ("cluster", "t_compute", "fast", "cluster.t_compute"),
            ("cluster", "algorithm", "gossip", "cluster.algorithm"),
            ("cluster", "local_batch_size", "0", "cluster.local_batch_size"),
            ("dataset", "val_fraction", "1.0", "dataset.val_fraction"),
            ("schedule", "momentum", "1.0", "schedule.momentum"),
            ("schedule", "warmup_fraction", "1.5", "schedule.warmup_fraction"),
            ("schedule", "eta_single_node", "0", "schedule.eta_single_node"),
            ("schedule", "excluded_groups", "1,x", "schedule.excluded_groups"),
            ("schedule", "plateau_window", "0", "schedule.plateau_window"),
            ("compensation", "lambda0", "-0.1", "compensation.lambda0"),
            ("compensation", "enabled", "maybe", "compensation.enabled"),
        ],
    )
    def test_bad_value_names_its_field(self, section, key, value, field):
        with pytest.raises(ConfigError) as err:
            parse({(section, key): value})
        assert err.value.field == field

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse({("cluster", "topology"): "ring"})
        assert err.value.field == "cluster.topology"

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text(MINIMAL + "\n[network]\nbandwidth = 10\n")
        assert err.value.field == "network"

    def test_key_outside_sections_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("stray = 1\n" + MINIMAL)

    def test_duplicate_key_rejected(self):
        bad = MINIMAL.replace("n_samples = 64", "n_samples = 64\nn_samples = 65")
        with pytest.raises(ConfigError):
            parse_config_text(bad)

    def test_model_section_required(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[dataset]\nn_samples = 10\n")
        assert err.value.field == "model"

    def test_dataset_section_required(self):
        with pytest.raises(ConfigError) as err:
            parse_config_text("[model]\nkind = quadratic\ninput_dim = 4\n")
        assert err.value.field == "dataset"

    def test_epochs_and_max_iterations_exclusive(self):
        with pytest.raises(ConfigError) as err:
            parse({("experiment", "epochs"): "2",
                   ("experiment", "max_iterations"): "100"})
        assert "not both" in str(err.value)

    def test_local_and_aggregate_batch_exclusive(self):
        with pytest.raises(ConfigError) as err:
            parse({("cluster", "local_batch_size"): "16",
                   ("cluster", "aggregate_batch_size"): "64"})
        assert "not both" in str(err.value)

    def test_aggregate_batch_must_divide_evenly(self):
        with pytest.raises(ConfigError) as err:
            parse({("cluster", "n_workers"): "3",
                   ("cluster", "aggregate_batch_size"): "64"})
        assert err.value.field == "cluster.aggregate_batch_size"

    def test_classifier_needs_classes(self):
        text = MINIMAL.replace("n_classes = 2", "")
        with pytest.raises(ConfigError) as err:
            parse_config_text(text)
        assert err.value.field == "model.n_classes"

    def test_mlp_needs_hidden_units(self):
        text = MINIMAL.replace("kind = logistic_regression", "kind = mlp")
        with pytest.raises(ConfigError) as err:
            parse_config_text(text)
        assert err.value.field == "model.hidden_units"

    def test_quadratic_needs_no_classes(self):
        text = "[model]\nkind = quadratic\ninput_dim = 4\n[dataset]\nn_samples = 16\n"
        assert parse_config_text(text).model.kind == "quadratic"

    def test_file_source_requires_existing_path(self, tmp_path):
        text = MINIMAL.replace("n_samples = 64", "source = file\npath = missing.bin")
        with pytest.raises(ConfigError) as err:
            parse_config_text(text, base_dir=str(tmp_path))
        assert err.value.field == "dataset.path"

    def test_file_source_resolves_relative_to_config(self, tmp_path):
        data_file = tmp_path / "points.bin"
        data_file.write_bytes(b"placeholder")
        text = MINIMAL.replace("n_samples = 64", "source = file\npath = points.bin")
        cfg = parse_config_text(text, base_dir=str(tmp_path))
        assert cfg.dataset.path == str(data_file)


class TestRoundTrip:
    @pytest.mark.parametrize("text", [MINIMAL, FULL])
    def test_serialize_then_parse_is_identity(self, text):
        cfg = parse_config_text(text, default_name="experiment")
        again = parse_config_text(serialize_config(cfg), default_name="experiment")
        assert again == cfg

    def test_fingerprint_is_stable(self):
        a = config_fingerprint(parse_config_text(FULL))
        b = config_fingerprint(parse_config_text(FULL))
        assert a == b and len(a) == 10

    def test_fingerprint_tracks_content(self):
        base = parse_config_text(FULL)
        changed = parse_config_text(FULL.replace("seed = 42", "seed = 43"))
        assert config_fingerprint(base) != config_fingerprint(changed)


class TestLoadConfig:
    def test_name_defaults_to_file_stem(self, tmp_path):
        path = tmp_path / "warm_restart.ini"
        path.write_text(MINIMAL)
        assert load_config(str(path)).name == "warm_restart"

    def test_explicit_name_wins_over_stem(self, tmp_path):
        path = tmp_path / "whatever.ini"
        path.write_text("[experiment]\nname = chosen\n" + MINIMAL)
        assert load_config(str(path)).name == "chosen"

    def test_missing_file_is_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / "nope.ini"))
