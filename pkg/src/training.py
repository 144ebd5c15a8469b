"""
Mini-batch Adam training, evaluation and batched prediction.
"""
from dataclasses import dataclass, asdict, field

import numpy as np
import pandas as pd
import structlog

from .augment import augment_batch, make_rng
from .config import (
    DEFAULT_LEARNING_RATE,
    DEFAULT_BETA1,
    DEFAULT_BETA2,
    DEFAULT_EPSILON_ADAM,
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_SEED,
    DECISION_THRESHOLD,
    PREDICT_BATCH_SIZE,
)
from .errors import ConfigError, DatasetError, ShapeError
from .nn import INFERENCE, TRAINING, backprop, bce_loss, forward

logger = structlog.get_logger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = DEFAULT_LEARNING_RATE
    beta1: float = DEFAULT_BETA1
    beta2: float = DEFAULT_BETA2
    epsilon_adam: float = DEFAULT_EPSILON_ADAM
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    rng_seed: int = DEFAULT_SEED

    def validate(self):
        if self.batch_size < 1:
            raise ConfigError(f"train.batch_size must be at least 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"train.epochs must be at least 1, got {self.epochs}")
        for name in ("beta1", "beta2"):
            beta = getattr(self, name)
            if not 0.0 <= beta < 1.0:
                raise ConfigError(f"train.{name} must lie in [0, 1), got {beta}")
        if self.learning_rate < 0:
            raise ConfigError(f"train.learning_rate must be non-negative, got {self.learning_rate}")
        if self.epsilon_adam <= 0:
            raise ConfigError(f"train.epsilon_adam must be positive, got {self.epsilon_adam}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass
class Dataset:
    """
    Images with binary labels and optional per-sample tags.

    Args:
        images (np.ndarray): (N, h, w, c) batch
        labels (np.ndarray): (N,) labels in {0, 1}
        tags (list, optional): Per-sample group tag such as the subpopulation
    """
    images: np.ndarray
    labels: np.ndarray
    tags: list = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.float64).reshape(-1)
        if self.images.shape[0] != self.labels.shape[0]:
            raise ShapeError(f"{self.images.shape[0]} images but {self.labels.shape[0]} labels")
        if self.tags and len(self.tags) != self.labels.shape[0]:
            raise ShapeError(f"{len(self.tags)} tags for {self.labels.shape[0]} samples")

    def __len__(self):
        return int(self.labels.shape[0])

    def validate(self):
        if len(self) == 0:
            raise DatasetError("dataset is empty")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DatasetError("dataset labels must be 0 or 1")
        return self

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        tags = [t for t, keep in zip(self.tags, mask) if keep] if self.tags else []
        return Dataset(self.images[mask], self.labels[mask], tags)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros(cls, params):
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state, config):
    """
    One Adam update with bias-corrected moments.

    Args:
        params (dict): Parameter arrays
        grads (dict): Gradient per parameter key
        state (AdamState): Moment estimates and step count
        config (TrainConfig): learning_rate, beta1, beta2, epsilon_adam

    Returns:
        tuple: (updated params dict, updated AdamState)
    """
    t = state.t + 1
    b1, b2 = config.beta1, config.beta2
    new_params, new_m, new_v = {}, {}, {}
    for key, p in params.items():
        g = np.asarray(grads[key], dtype=np.float64)
        if g.shape != p.shape or state.m[key].shape != p.shape or state.v[key].shape != p.shape:
            raise ShapeError(f"adam: parameter {key} has shape {p.shape}, gradient {g.shape}")
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[key] = p - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon_adam)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def _batch_bounds(n, batch_size):
    """Batch start offsets; a trailing single-sample batch is merged into the previous one."""
    starts = list(range(0, n, batch_size))
    if len(starts) > 1 and n - starts[-1] == 1:
        starts.pop()
    return list(zip(starts, starts[1:] + [n]))


def _accuracy(labels, outputs):
    return float(np.mean((outputs >= DECISION_THRESHOLD) == (labels == 1)))


def train(model, dataset, config, augment_config=None, validation=None):
    """
    Trains the model with mini-batch Adam on binary cross-entropy.

    Shuffling and dropout masks are drawn from generators seeded by
    config.rng_seed; augmentation parameters from augment_config.rng_seed.

    Args:
        model (Model): Network, updated in place
        dataset (Dataset): Training data
        config (TrainConfig): Optimizer and schedule settings
        augment_config (AugmentConfig, optional): Per-batch augmentation, off when None
        validation (Dataset, optional): Evaluated after every epoch

    Returns:
        tuple: (model, history DataFrame with epoch, loss, accuracy[, val_loss, val_accuracy])
    """
    config.validate()
    dataset.validate()
    if augment_config is not None:
        augment_config.validate()
    if validation is not None:
        validation.validate()

    shuffle_seq, dropout_seq = np.random.SeedSequence(config.rng_seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    model.rng = np.random.default_rng(dropout_seq)
    augment_rng = make_rng(augment_config) if augment_config is not None else None
    state = AdamState.zeros(model.parameters())
    n = len(dataset)
    bounds = _batch_bounds(n, config.batch_size)

    history = []
    for epoch in range(1, config.epochs + 1):
        model.mode = TRAINING
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0
        for start, stop in bounds:
            idx = order[start:stop]
            xb = dataset.images[idx]
            yb = dataset.labels[idx]
            if augment_rng is not None:
                xb = augment_batch(xb, augment_config, augment_rng)
            loss, outputs, grads = backprop(model, xb, yb)
            grads.pop("input")
            params, state = adam_step(model.parameters(), grads, state, config)
            model.set_parameters(params)
            loss_sum += loss * len(idx)
            correct += int(np.sum((outputs >= DECISION_THRESHOLD) == (yb == 1)))

        row = {"epoch": epoch, "loss": loss_sum / n, "accuracy": correct / n}
        if validation is not None:
            metrics = evaluate(model, validation)
            row["val_loss"] = metrics["mean_bce"]
            row["val_accuracy"] = metrics["accuracy"]
        history.append(row)
        logger.info("epoch_finished", **row)

    model.mode = INFERENCE
    model.clear_caches()
    return model, pd.DataFrame(history)


def predict(model, images, batch_size=PREDICT_BATCH_SIZE):
    """
    Output probabilities in inference mode, computed batch by batch.

    Args:
        model (Model): Network
        images (np.ndarray): (N, h, w, c) batch
        batch_size (int): Samples per forward pass

    Returns:
        np.ndarray: (N,) probabilities
    """
    images = np.asarray(images, dtype=np.float64)
    previous = model.mode
    model.mode = INFERENCE
    try:
        chunks = [forward(model, images[s:s + batch_size]) for s in range(0, images.shape[0], batch_size)]
    finally:
        model.mode = previous
        model.clear_caches()
    return np.concatenate(chunks) if chunks else np.zeros(0)


def evaluate(model, dataset, augment_config=None):
    """
    Accuracy at the 0.5 threshold (outputs >= 0.5 predict 1) and mean cross-entropy.

    Args:
        model (Model): Network
        dataset (Dataset): Evaluation data
        augment_config (AugmentConfig, optional): Augment the inputs first with this config's seed

    Returns:
        dict: {"count", "accuracy", "mean_bce"}
    """
    dataset.validate()
    images = dataset.images
    if augment_config is not None:
        images = augment_batch(images, augment_config.validate(), make_rng(augment_config))
    outputs = predict(model, images)
    return {
        "count": len(dataset),
        "accuracy": _accuracy(dataset.labels, outputs),
        "mean_bce": bce_loss(dataset.labels, outputs),
    }
