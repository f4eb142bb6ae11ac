"""Tests for run configuration loading, defaults and seed derivation."""

import pytest

from chf_survival.config import RunConfig, derive_seed, load_config, write_default_config
from chf_survival.exceptions import ConfigError, format_error


class TestDefaults:

    def test_documented_defaults(self):
        config = RunConfig()
        assert config.seed == 42
        assert config.horizons == [365.0, 730.0]
        assert config.n_boot == 1000 and config.ci_level == 0.90
        assert config.cv_folds == 5 and config.test_fraction == 0.30
        assert config.signal.quality_threshold == 0.85
        assert config.signal.threshold_fraction == 0.3125
        assert config.features.t_region == (62, 95)
        assert config.explain.median_window == 201
        assert config.grid == 'pruned'

    def test_horizons_are_sorted(self):
        assert RunConfig(horizons=[730.0, 365.0]).horizons == [365.0, 730.0]

    def test_frozen(self):
        with pytest.raises(Exception):
            RunConfig().seed = 1


class TestLoadConfig:

    def test_no_file_gives_defaults(self):
        assert load_config() == RunConfig()

    def test_file_with_sections_and_lists(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text(
            "# comment\n"
            "seed = 7\n"
            "horizons = 180, 365\n"
            "signal.quality_threshold = 0.9\n"
            "features.t_region = 60,96\n"
            "boost.max_depth = 4\n"
            "progress = false\n"
        )
        config = load_config(path)
        assert config.seed == 7
        assert config.horizons == [180.0, 365.0]
        assert config.signal.quality_threshold == 0.9
        assert config.features.t_region == (60, 96)
        assert config.boost.max_depth == 4
        assert config.progress is False

    def test_overrides_win_and_none_is_ignored(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("seed = 7\nn_boot = 50\n")
        config = load_config(path, seed=11, n_boot=None)
        assert config.seed == 11
        assert config.n_boot == 50

    @pytest.mark.parametrize('line', ['colour = red', 'signal.colour = red', 'signal = 3'])
    def test_unknown_key(self, tmp_path, line):
        path = tmp_path / 'run.cfg'
        path.write_text(line + "\n")
        with pytest.raises(ConfigError, match="unknown config key"):
            load_config(path)

    def test_invalid_value(self, tmp_path):
        path = tmp_path / 'run.cfg'
        path.write_text("ci_level = 1.5\n")
        with pytest.raises(ConfigError, match="ci_level"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / 'absent.cfg')

    def test_written_defaults_load_back(self, tmp_path):
        path = write_default_config(tmp_path / 'defaults.cfg')
        text = path.read_text()
        assert "signal.quality_threshold = 0.85" in text
        assert "horizons = 365.0,730.0" in text
        assert load_config(path) == RunConfig()

    def test_error_format(self):
        assert format_error(ConfigError("bad")) == "error: ConfigError: bad"


class TestDeriveSeed:

    def test_deterministic_and_distinct(self):
        assert derive_seed(42, 'bootstrap', 3) == derive_seed(42, 'bootstrap', 3)
        assert derive_seed(42, 'bootstrap', 3) != derive_seed(42, 'bootstrap', 4)
        assert derive_seed(42, 'bootstrap', 3) != derive_seed(42, 'segment-selection', 3)
        assert derive_seed(42, 'bootstrap', 3) != derive_seed(43, 'bootstrap', 3)

    def test_fits_in_uint32(self):
        assert 0 <= derive_seed(0, 'x') < 2 ** 32
