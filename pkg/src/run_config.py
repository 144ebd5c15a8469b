"""
Effective run configuration: defaults, then an INI file, then command-line overrides.

One seed drives every generator: synthesis and training use it directly and
augmentation uses seed + 1.
"""
import configparser
import os
from dataclasses import dataclass, field

from .augment import AugmentConfig
from .config import (
    ASSIGNMENT_METHODS,
    DEFAULT_ALPHA,
    DEFAULT_DROPOUT_RATE,
    DEFAULT_OUT_DIR,
    DEFAULT_PCA_COMPONENTS,
    DEFAULT_PCA_SIDE,
    DEFAULT_SEED,
    DEFAULT_SYNTH_SIDE,
    DEFAULT_TEST_FRACTION,
    DEFAULT_TILE,
    DEFAULT_USE_AUGMENTATION,
    DEFAULT_WORKERS,
    LOG_LEVEL,
    SUBPOPULATIONS,
)
from .errors import ConfigError
from .synth import SynthConfig
from .training import TrainConfig


def _to_bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_int(text):
    text = str(text).strip()
    return None if text.lower() in ("", "auto", "none") else int(text)


def _optional_str(text):
    text = str(text).strip()
    return text or None


# section -> key -> (attribute path, parser)
INI_SCHEMA = {
    "paths": {
        "out_dir": ("out_dir", str),
        "manifest": ("manifest", _optional_str),
        "test_manifest": ("test_manifest", _optional_str),
        "model": ("model", _optional_str),
    },
    "run": {
        "seed": ("seed", int),
        "log_level": ("log_level", str),
        "workers": ("workers", int),
    },
    "synth": {
        "n_per_cell": ("synth.n_per_cell", int),
        "tone_a": ("synth.tone_a", float),
        "tone_b": ("synth.tone_b", float),
        "tone_jitter": ("synth.tone_jitter", float),
        "image_side": ("synth.image_side", int),
        "noise_std": ("synth.noise_std", float),
    },
    "split": {
        "train_subpop": ("train_subpop", str),
        "test_fraction": ("test_fraction", float),
    },
    "train": {
        "learning_rate": ("train.learning_rate", float),
        "beta1": ("train.beta1", float),
        "beta2": ("train.beta2", float),
        "epsilon_adam": ("train.epsilon_adam", float),
        "batch_size": ("train.batch_size", int),
        "epochs": ("train.epochs", int),
        "image_side": ("image_side", int),
        "grayscale": ("grayscale", _to_bool),
        "batchnorm": ("batchnorm", _to_bool),
        "dropout": ("dropout", float),
        "augment": ("use_augmentation", _to_bool),
    },
    "augment": {
        "rescale_min": ("augment.rescale_range[0]", float),
        "rescale_max": ("augment.rescale_range[1]", float),
        "shear_max": ("augment.shear_max", float),
        "zoom_min": ("augment.zoom_range[0]", float),
        "zoom_max": ("augment.zoom_range[1]", float),
        "hflip_prob": ("augment.hflip_prob", float),
    },
    "pca": {
        "side": ("pca_side", int),
        "components": ("pca_components", int),
    },
    "grid": {
        "rows": ("rows", _optional_int),
        "cols": ("cols", _optional_int),
        "assignment": ("assignment", str),
        "hard_labels": ("hard_labels", _to_bool),
    },
    "render": {
        "alpha": ("alpha", float),
        "tile": ("tile", int),
    },
}


@dataclass
class RunConfig:
    out_dir: str = DEFAULT_OUT_DIR
    manifest: str | None = None
    test_manifest: str | None = None
    model: str | None = None
    seed: int = DEFAULT_SEED
    log_level: str = LOG_LEVEL
    workers: int = DEFAULT_WORKERS
    synth: SynthConfig = field(default_factory=SynthConfig)
    train_subpop: str = SUBPOPULATIONS[0]
    test_fraction: float = DEFAULT_TEST_FRACTION
    train: TrainConfig = field(default_factory=TrainConfig)
    image_side: int = DEFAULT_SYNTH_SIDE
    grayscale: bool = False
    batchnorm: bool = True
    dropout: float = DEFAULT_DROPOUT_RATE
    use_augmentation: bool = DEFAULT_USE_AUGMENTATION
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    pca_side: int = DEFAULT_PCA_SIDE
    pca_components: int = DEFAULT_PCA_COMPONENTS
    rows: int | None = None
    cols: int | None = None
    assignment: str = ASSIGNMENT_METHODS[0]
    hard_labels: bool = False
    alpha: float = DEFAULT_ALPHA
    tile: int = DEFAULT_TILE

    def apply_seed(self, seed):
        self.seed = int(seed)
        self.synth.rng_seed = self.seed
        self.train.rng_seed = self.seed
        self.augment.rng_seed = self.seed + 1
        return self

    def set(self, path, value):
        """Sets a field by dotted path, e.g. "train.epochs" or "augment.zoom_range[0]"."""
        target = self
        *parents, leaf = path.split(".")
        for name in parents:
            target = getattr(target, name)
        if leaf.endswith("]"):
            name, index = leaf[:-1].split("[")
            bounds = list(getattr(target, name))
            bounds[int(index)] = value
            setattr(target, name, tuple(bounds))
        else:
            setattr(target, leaf, value)

    def override(self, **values):
        """Applies non-None overrides; keys are attribute paths with "." replaced by "__"."""
        for key, value in values.items():
            if value is None:
                continue
            if key == "seed":
                self.apply_seed(value)
            else:
                self.set(key.replace("__", "."), value)
        return self

    def validate(self):
        """Checks every field before any work starts."""
        self.synth.validate()
        self.train.validate()
        self.augment.validate()
        if self.train_subpop not in SUBPOPULATIONS:
            raise ConfigError(f"split.train_subpop must be one of {SUBPOPULATIONS}, got {self.train_subpop!r}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigError(f"split.test_fraction must lie in [0, 1), got {self.test_fraction}")
        if self.image_side < 10:
            raise ConfigError(f"train.image_side must be at least 10 pixels, got {self.image_side}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"train.dropout must lie in [0, 1), got {self.dropout}")
        if self.pca_side < 1:
            raise ConfigError(f"pca.side must be positive, got {self.pca_side}")
        if self.pca_components < 2:
            raise ConfigError(f"pca.components must be at least 2 for grid placement, got {self.pca_components}")
        for name in ("rows", "cols"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"grid.{name} must be positive, got {value}")
        if self.assignment not in ASSIGNMENT_METHODS:
            raise ConfigError(f"grid.assignment must be one of {ASSIGNMENT_METHODS}, got {self.assignment!r}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"render.alpha must lie in [0, 1], got {self.alpha}")
        if self.tile < 1:
            raise ConfigError(f"render.tile must be positive, got {self.tile}")
        if self.workers < 1:
            raise ConfigError(f"run.workers must be positive, got {self.workers}")
        return self

    def to_dict(self, include_paths=True):
        """Effective settings by section; reports leave out paths so runs in different directories compare equal."""
        settings = {
            "run": {"seed": self.seed, "workers": self.workers},
            "synth": self.synth.to_dict(),
            "split": {"train_subpop": self.train_subpop, "test_fraction": self.test_fraction},
            "train": {
                **self.train.to_dict(),
                "image_side": self.image_side,
                "grayscale": self.grayscale,
                "batchnorm": self.batchnorm,
                "dropout": self.dropout,
                "augment": self.use_augmentation,
            },
            "augment": {k: list(v) if isinstance(v, tuple) else v for k, v in self.augment.to_dict().items()},
            "pca": {"side": self.pca_side, "components": self.pca_components},
            "grid": {
                "rows": self.rows,
                "cols": self.cols,
                "assignment": self.assignment,
                "hard_labels": self.hard_labels,
            },
            "render": {"alpha": self.alpha, "tile": self.tile},
        }
        if include_paths:
            settings["paths"] = {
                "out_dir": self.out_dir,
                "manifest": self.manifest,
                "test_manifest": self.test_manifest,
                "model": self.model,
            }
        return settings


def load_run_config(path=None, **overrides):
    """
    Builds the effective configuration.

    Args:
        path (str, optional): INI file with sections paths, run, synth, split, train,
            augment, pca, grid, render
        **overrides: Flag values keyed by attribute path ("." written as "__"); None is ignored

    Returns:
        RunConfig: Validated configuration
    """
    config = RunConfig().apply_seed(DEFAULT_SEED)
    if path is not None:
        if not os.path.exists(path):
            raise FileNotFoundError(f"Config file not found: {path}")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(path, encoding="utf-8")
        except configparser.Error as e:
            raise ConfigError(f"{path}: {e}") from None
        seed = None
        for section in parser.sections():
            if section not in INI_SCHEMA:
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, raw in parser.items(section):
                if key not in INI_SCHEMA[section]:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
                attr, convert = INI_SCHEMA[section][key]
                try:
                    value = convert(raw)
                except ValueError:
                    raise ConfigError(f"{path}: [{section}] {key} = {raw!r} is not a valid value") from None
                if attr == "seed":
                    seed = value
                else:
                    config.set(attr, value)
        if seed is not None:
            config.apply_seed(seed)
    config.override(**overrides)
    return config.validate()
