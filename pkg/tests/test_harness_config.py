import numpy as np
import pytest

from app.core.exceptions import ConfigurationError
from app.harness.config import PRESETS, describe_keys, load_config
from app.harness.schemas import Method
from app.harness.service import trial_rng


class TestPresets:
    @pytest.mark.parametrize("name", sorted(PRESETS))
    def test_presets_load(self, name):
        config = load_config(preset=name)
        assert config.scene.overlap <= min(config.scene.num_targets, config.scene.num_scatterers)

    def test_paper_preset_values(self):
        config = load_config(preset="paper")
        assert config.system.num_antennas == 64
        assert config.system.num_subcarriers == 1024
        assert config.system.grid.num_points == 400
        assert config.sweep.snr_db == [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]

    def test_quick_preset_bandwidth(self, quick_config):
        assert quick_config.system.bandwidth == pytest.approx(256 * 30e3)
        assert quick_config.system.tau_bound == pytest.approx(2.0 / (256 * 30e3))

    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError, match="unknown preset"):
            load_config(preset="huge")


class TestOverrides:
    def test_override_wins_over_preset(self):
        config = load_config(preset="quick", overrides={"scene": {"on_grid": True}}, seed=7)
        assert config.scene.on_grid
        assert config.scene.num_targets == 3
        assert config.sweep.seed == 7

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            load_config(preset="quick", overrides={"scene": {"num_ghosts": 1}})

    def test_unknown_section(self):
        with pytest.raises(ConfigurationError):
            load_config(overrides={"radar": {"power": 1.0}})

    def test_methods(self):
        config = load_config(preset="quick", methods=["omp", "sea_joint"])
        assert config.sweep.methods == [Method.OMP, Method.SEA_JOINT]

    def test_unknown_method(self):
        with pytest.raises(ConfigurationError, match="unknown method"):
            load_config(preset="quick", methods=["music"])

    def test_overlap_exceeds_counts(self):
        with pytest.raises(ConfigurationError, match="overlap"):
            load_config(overrides={"scene": {"num_targets": 2, "num_scatterers": 5, "overlap": 3}})

    def test_pilot_spacing_exceeds_subcarriers(self):
        with pytest.raises(ConfigurationError):
            load_config(overrides={"system": {"num_subcarriers": 16, "pilot_spacing": 32}})

    def test_invalid_value(self):
        with pytest.raises(ConfigurationError):
            load_config(overrides={"sweep": {"trials": 0}})


class TestConfigFile:
    def test_file_between_preset_and_overrides(self, tmp_path):
        path = tmp_path / "experiment.toml"
        path.write_text(
            "[scene]\nnum_targets = 2\noverlap = 1\n\n[prior]\nlambda = 0.2\n\n"
            "[sweep]\ntrials = 3\n"
        )
        config = load_config(preset="quick", path=path, overrides={"sweep": {"trials": 4}})
        assert config.scene.num_targets == 2
        assert config.scene.num_scatterers == 4
        assert config.prior.lambda_ == pytest.approx(0.2)
        assert config.sweep.trials == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError, match="not found"):
            load_config(path=tmp_path / "absent.toml")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "broken.toml"
        path.write_text("[scene\nnum_targets = ")
        with pytest.raises(ConfigurationError, match="cannot parse"):
            load_config(path=path)


def test_describe_keys():
    keys = describe_keys()
    assert {"system", "scene", "prior", "turbo", "m_step", "solver", "omp", "sweep"} <= set(keys)
    assert "lambda" in keys["prior"]
    assert keys["system"]["resolution"]


def test_trial_streams_are_independent():
    first = trial_rng(0, 3, 0).standard_normal(5)
    assert np.array_equal(first, trial_rng(0, 3, 0).standard_normal(5))
    assert not np.array_equal(first, trial_rng(0, 4, 0).standard_normal(5))
    assert not np.array_equal(first, trial_rng(0, 3, 1).standard_normal(5))
    assert not np.array_equal(first, trial_rng(1, 3, 0).standard_normal(5))
