"""Configuration parsing, precedence, validation, and echo round-trips."""

import dataclasses

import pytest

from genli.config import (
    Config,
    build_config,
    config_fields,
    effective_config_text,
    format_value,
    read_config_file,
    synthetic_spec,
    validate,
)
from genli.errors import ConfigError


class TestParsing:
    def test_defaults_validate(self):
        validate(Config())

    def test_file_then_flag_precedence(self):
        cfg = build_config({"seed": "7", "epochs": "9"}, {"epochs": "3"})
        assert cfg.seed == 7
        assert cfg.epochs == 3

    def test_typed_values(self):
        cfg = build_config({
            "learning_rate": "0.01",
            "shuffle": "false",
            "mlp_hidden": "64, 32",
            "interest_kinds": "implicit,explicit",
        })
        assert cfg.learning_rate == pytest.approx(0.01)
        assert cfg.shuffle is False
        assert cfg.mlp_hidden == (64, 32)
        assert cfg.interest_kinds == ("implicit", "explicit")

    def test_single_element_tuple(self):
        assert build_config({"ctr_hidden": "48"}).ctr_hidden == (48,)

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            build_config({"learnig_rate": "0.1"})

    def test_bad_value_rejected(self):
        with pytest.raises(ConfigError, match="bad value"):
            build_config({"epochs": "two"})
        with pytest.raises(ConfigError, match="bad value"):
            build_config({"shuffle": "maybe"})

    def test_config_file_format(self, tmp_path):
        path = tmp_path / "run.conf"
        path.write_text(
            "# comment line\n"
            "seed = 11   # trailing comment\n"
            "\n"
            "model = avg_pool\n"
        )
        values = read_config_file(path)
        assert values == {"seed": "11", "model": "avg_pool"}
        cfg = build_config(values)
        assert (cfg.seed, cfg.model) == (11, "avg_pool")

    def test_config_file_rejects_garbage(self, tmp_path):
        path = tmp_path / "bad.conf"
        path.write_text("just some words\n")
        with pytest.raises(ConfigError, match="expected 'key = value'"):
            read_config_file(path)


class TestValidation:
    @pytest.mark.parametrize("key,value", [
        ("seq_len", "0"),
        ("top_k", "-1"),
        ("n_buckets", "0"),
        ("epochs", "0"),
        ("learning_rate", "0"),
        ("train_fraction", "1.5"),
        ("p_click_in", "-0.2"),
        ("model", "transformer"),
        ("interest_kinds", "implicit,psychic"),
        ("window", "200"),  # cannot exceed seq_len
    ])
    def test_out_of_range(self, key, value):
        with pytest.raises(ConfigError):
            build_config({key: value})

    def test_exposure_shares_must_leave_room(self):
        with pytest.raises(ConfigError):
            build_config({"active_share": "0.8", "expired_share": "0.3"})


class TestRoundTrip:
    def test_every_field_survives_format_parse(self):
        cfg = Config()
        text = {f.name: format_value(getattr(cfg, f.name))
                for f in config_fields()}
        again = build_config(text)
        assert again == cfg

    def test_effective_text_is_reparseable(self, tmp_path):
        cfg = build_config({"seed": "123", "mlp_hidden": "16,8",
                            "early_stop": "true"})
        path = tmp_path / "echo.conf"
        path.write_text(effective_config_text(cfg))
        assert build_config(read_config_file(path)) == cfg

    def test_help_text_present_for_every_field(self):
        for f in config_fields():
            assert f.metadata["help"], f.name


class TestSyntheticSpec:
    def test_mirrors_config_fields(self):
        cfg = build_config({"n_users": "5", "seed": "99", "recur_rate": "0.0"})
        spec = synthetic_spec(cfg)
        assert spec.n_users == 5
        assert spec.seed == 99
        assert spec.recur_rate == 0.0
        for f in dataclasses.fields(spec):
            assert hasattr(cfg, f.name), f.name
