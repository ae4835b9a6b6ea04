"""Tests for config module."""

import pytest
import yaml

from densketch.config import (
    SEED_ENV_VAR,
    ConfigError,
    RunConfig,
    SketchConfig,
    load_config,
)
from densketch.hashing import MERSENNE_61


class TestLoadConfig:
    """Tests for load_config function."""

    def test_defaults_without_file(self, monkeypatch):
        """Test a missing config file yields the defaults."""
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        config = load_config("/nonexistent/path")

        assert config.seed == 0
        assert config.epsilon == 0.5
        assert config.delta == 1.0
        assert config.sketch.prime == MERSENNE_61
        assert config.bench.rates == [0.05, 0.1, 0.2, 0.5]
        assert config.solver.local_search_restarts == 8

    def test_load_from_file(self, tmp_path, monkeypatch):
        """Test loading config from YAML file."""
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        config_data = {
            "run": {"seed": 42, "epsilon": 0.25, "delta": 2},
            "sketch": {"degree_cap": 64, "minwise_eps": 0.01, "batch_size": 32},
            "bench": {"trials": 5, "workers": 2, "rates": [0.1, 0.5], "threshold": 0.8},
            "solver": {"local_search_restarts": 3},
        }
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump(config_data))

        config = load_config(str(config_file))

        assert config.seed == 42
        assert config.epsilon == 0.25
        assert config.delta == 2.0
        assert config.sketch.degree_cap == 64
        assert config.sketch.minwise_eps == 0.01
        assert config.sketch.batch_size == 32
        assert config.bench.trials == 5
        assert config.bench.workers == 2
        assert config.bench.rates == [0.1, 0.5]
        assert config.bench.threshold == 0.8
        assert config.solver.local_search_restarts == 3

    def test_env_seed_overrides_file(self, tmp_path, monkeypatch):
        """Test the seed environment variable wins over the file."""
        config_file = tmp_path / "config.yaml"
        config_file.write_text(yaml.dump({"run": {"seed": 1}}))
        monkeypatch.setenv(SEED_ENV_VAR, "0x10")

        assert load_config(str(config_file)).seed == 16

    def test_bad_env_seed(self, monkeypatch):
        """Test a non-integer seed variable is a config error."""
        monkeypatch.setenv(SEED_ENV_VAR, "abc")
        with pytest.raises(ConfigError, match=SEED_ENV_VAR):
            load_config("/nonexistent/path")

    def test_empty_file(self, tmp_path, monkeypatch):
        """Test an empty YAML file is treated as no overrides."""
        monkeypatch.delenv(SEED_ENV_VAR, raising=False)
        config_file = tmp_path / "config.yaml"
        config_file.write_text("")

        assert load_config(str(config_file)).seed == 0


class TestSketchConfig:
    """Tests for SketchConfig."""

    def test_minwise_eps_default(self):
        """Test the min-wise target is min(e^-δ, 0.1) unless set."""
        assert SketchConfig().effective_minwise_eps(1.0) == 0.1
        assert SketchConfig().effective_minwise_eps(3.0) == pytest.approx(0.04978707)
        assert SketchConfig(minwise_eps=0.3).effective_minwise_eps(1.0) == 0.3


class TestRunConfigValidate:
    """Tests for RunConfig.validate."""

    def test_valid(self):
        """Test a plain densest run on a file validates."""
        RunConfig(command="densest", input_path="g.txt").validate()

    @pytest.mark.parametrize(
        "kwargs,message",
        [
            ({"command": "draw", "input_path": "g.txt"}, "unknown command"),
            ({"command": "densest"}, "exactly one input"),
            ({"command": "densest", "input_path": "g.txt", "gen": "er:n=5"}, "exactly one input"),
            ({"command": "merge"}, "at least one sketch"),
            ({"command": "densest", "input_path": "g.txt", "epsilon": 1.0}, "epsilon"),
            ({"command": "densest", "input_path": "g.txt", "delta": 0.5}, "delta"),
            ({"command": "bench", "input_path": "g.txt", "trials": 0}, "trials"),
            ({"command": "bench", "input_path": "g.txt", "workers": 0}, "workers"),
            ({"command": "sample", "input_path": "g.txt", "sample_size": 0}, "sample size"),
            ({"command": "densest", "input_path": "g.txt", "solver": "greedy"}, "unknown solver"),
            ({"command": "estimate", "input_path": "g.txt"}, "--problem"),
            (
                {"command": "estimate", "input_path": "g.txt", "problem": "d-max-cut", "d": 1},
                "--d",
            ),
        ],
    )
    def test_invalid(self, kwargs, message):
        """Test each inconsistent invocation names its problem."""
        with pytest.raises(ConfigError, match=message):
            RunConfig(**kwargs).validate()

    def test_merge_needs_no_input(self):
        """Test merge takes sketch files instead of a stream."""
        RunConfig(command="merge", sketch_paths=["a.dskt", "b.dskt"]).validate()
