import pytest

from src.errors import ConfigError
from src.run_config import RunConfig, load_run_config


def _ini(tmp_path, text):
    path = tmp_path / "run.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_share_one_seed():
    config = load_run_config()
    assert config.seed == 7
    assert config.synth.rng_seed == 7 and config.train.rng_seed == 7
    assert config.augment.rng_seed == 8
    assert config.rows is None and config.assignment == "greedy"
    assert config.use_augmentation is False and config.batchnorm is True


def test_ini_values_are_applied(tmp_path):
    path = _ini(tmp_path, """
[run]
seed = 21

[synth]
n_per_cell = 12

[train]
epochs = 4
augment = yes

[augment]
zoom_min = 0.95

[grid]
rows = 5
cols = auto
hard_labels = yes
""")
    config = load_run_config(path)
    assert config.seed == 21 and config.augment.rng_seed == 22
    assert config.synth.n_per_cell == 12
    assert config.train.epochs == 4
    assert config.use_augmentation is True
    assert config.augment.zoom_range == (0.95, 1.1)
    assert config.rows == 5 and config.cols is None
    assert config.hard_labels is True


def test_overrides_win_over_file(tmp_path):
    path = _ini(tmp_path, "[train]\nepochs = 4\n[run]\nseed = 3\n")
    config = load_run_config(path, train__epochs=9, seed=11, alpha=None, out_dir="elsewhere")
    assert config.train.epochs == 9
    assert config.seed == 11 and config.train.rng_seed == 11
    assert config.out_dir == "elsewhere"
    assert config.alpha == RunConfig().alpha


@pytest.mark.parametrize("text", [
    "[plots]\ndpi = 100\n",
    "[train]\nwarmup = 3\n",
    "[train]\nepochs = many\n",
    "[grid]\nhard_labels = maybe\n",
    "[render]\nalpha = 1.5\n",
    "[split]\ntrain_subpop = C\n",
])
def test_invalid_files_raise_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        load_run_config(_ini(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(str(tmp_path / "none.ini"))


def test_invalid_override():
    with pytest.raises(ConfigError):
        load_run_config(tile=0)
    with pytest.raises(ConfigError):
        load_run_config(assignment="spiral")


def test_to_dict_sections():
    settings = load_run_config(manifest="m.csv").to_dict()
    assert settings["paths"]["manifest"] == "m.csv"
    assert settings["augment"]["zoom_range"] == [0.9, 1.1]
    assert set(settings) == {"run", "synth", "split", "train", "augment", "pca", "grid", "render", "paths"}
    assert "paths" not in load_run_config().to_dict(include_paths=False)
