"""Tests for run configuration."""

from __future__ import annotations

from pathlib import Path

import pytest

from subtori.config import RunConfig, load_config
from subtori.errors import ConfigError
from subtori.scenarios import example_4_1, example_4_3
from subtori.series import Dims


class TestRunConfig:
    """Test RunConfig defaults and validation."""

    def test_defaults(self) -> None:
        config = RunConfig()
        assert config.scenario == "example-4.1-line"
        assert config.mode == "check"
        assert config.gammas == [0.1]
        assert config.D_y == 2
        assert config.hypothesis_mode == "measured"
        assert config.tau is None

    def test_scenario_defaults_fill_unset_values(self) -> None:
        config = RunConfig(eps0=1e-9).with_scenario_defaults(example_4_1())
        assert config.eps0 == 1e-9
        assert config.tau == 3.0
        assert config.seed == 0

    def test_tau_floor_depends_on_rank(self) -> None:
        dims = Dims(3, 2)
        RunConfig(tau=2.5).validate(dims, rank_deficient=False)
        with pytest.raises(ConfigError, match="must exceed 5"):
            RunConfig(tau=5.0).validate(dims, rank_deficient=True)

    def test_builtin_defaults_validate(self) -> None:
        scenario = example_4_3()
        config = RunConfig().with_scenario_defaults(scenario)
        config.validate(scenario.dims, scenario.rank_deficient)

    @pytest.mark.parametrize(
        ("changes", "match"),
        [
            ({"gammas": [1.5]}, "gamma"),
            ({"gammas": []}, "at least one gamma"),
            ({"eps0": 1.0}, "eps0"),
            ({"steps": -1}, "steps"),
            ({"workers": 0}, "workers"),
            ({"grid": 1}, "grid"),
        ],
    )
    def test_rejects_out_of_range(self, changes: dict[str, object], match: str) -> None:
        config = RunConfig(**changes)  # type: ignore[arg-type]
        with pytest.raises(ConfigError, match=match):
            config.validate(Dims(2, 1), rank_deficient=True)


class TestLoadConfig:
    def test_no_config_file(self) -> None:
        config = load_config()
        assert config == RunConfig()

    def test_run_and_verify_tables(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("""\
[run]
scenario = "example-4.3"
mode = "iterate"
lam = [1.4, 1.7]
gammas = [0.05, 0.01]
steps = 3
out = "results"

[verify]
T = 50.0
seeds = 4
""")
        config = load_config(config_file)
        assert config.scenario == "example-4.3"
        assert config.mode == "iterate"
        assert config.lam == [(1.4, 1.7)]
        assert config.gammas == [0.05, 0.01]
        assert config.steps == 3
        assert config.out == Path("results")
        assert config.verify_T == 50.0
        assert config.verify_seeds == 4

    def test_several_points(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[run]\nlam = [[1.2], [1.4]]\n")
        assert load_config(config_file).lam == [(1.2,), (1.4,)]

    def test_cli_overrides_file(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[run]\nsteps = 3\ntau = 4.0\n")
        config = load_config(config_file, steps=7, tau=None, gammas=[])
        assert config.steps == 7
        assert config.tau == 4.0
        assert config.gammas == [0.1]

    def test_cli_points(self) -> None:
        config = load_config(lam=[(1.3,)], gammas=(0.01,))
        assert config.lam == [(1.3,)]
        assert config.gammas == [0.01]

    def test_unknown_key(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[run]\nsteps = 3\ncolour = 'red'\n")
        with pytest.raises(ConfigError, match="colour"):
            load_config(config_file)

    def test_verify_keys_belong_in_verify_table(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[run]\nverify_T = 3.0\n")
        with pytest.raises(ConfigError, match="verify_T"):
            load_config(config_file)

    def test_unknown_table(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[server]\nport = 8000\n")
        with pytest.raises(ConfigError, match="server"):
            load_config(config_file)

    def test_invalid_toml(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text("[run\n")
        with pytest.raises(ConfigError, match="invalid config file"):
            load_config(config_file)

    def test_bad_lam(self, tmp_path: Path) -> None:
        config_file = tmp_path / "config.toml"
        config_file.write_text('[run]\nlam = "1.3"\n')
        with pytest.raises(ConfigError, match="lam"):
            load_config(config_file)
