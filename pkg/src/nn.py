"""
Binary convolutional classifier: model container, loss and backpropagation.

A Model is an ordered list of layers ending in a Sigmoid with one output unit.
The loss is binary cross-entropy averaged over the batch; its gradient is
taken through the fused sigmoid/cross-entropy derivative (o - y) / N.
"""
import numpy as np
import structlog

from .config import BCE_EPSILON, DEFAULT_DROPOUT_RATE, DEFAULT_SEED
from .errors import BackwardStateError, ConfigError, ShapeError
from .layers import (
    INFERENCE,
    MODES,
    TRAINING,
    BatchNorm,
    Conv,
    Dense,
    Dropout,
    Flatten,
    MaxPool,
    ReLU,
    Sigmoid,
    sigmoid,
)

logger = structlog.get_logger(__name__)

__all__ = [
    "Model",
    "TRAINING",
    "INFERENCE",
    "sigmoid",
    "bce_loss",
    "forward",
    "backward",
    "backprop",
    "output_gradient",
    "build_default_model",
]


class Model:
    """
    Ordered layer stack with a fixed per-sample input shape.

    Args:
        layers (list): Layer instances, last one a Sigmoid with a single output
        input_shape (tuple): Shape of one sample, e.g. (32, 32, 1)
        seed (int): Seed of the generator that draws dropout masks
        mode (str): "training" or "inference"
    """

    def __init__(self, layers, input_shape, seed=DEFAULT_SEED, mode=INFERENCE):
        self.layers = list(layers)
        self.input_shape = tuple(int(d) for d in input_shape)
        self.rng = np.random.default_rng(seed)
        self.mode = mode
        self._input = None
        self.output_shape = self._check_shapes()

    @property
    def mode(self):
        return self._mode

    @mode.setter
    def mode(self, value):
        if value not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {value!r}")
        self._mode = value

    def _check_shapes(self):
        if not self.layers or not isinstance(self.layers[-1], Sigmoid):
            raise ShapeError("model must end with a Sigmoid layer")
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if shape != (1,):
            raise ShapeError(f"model must produce a single output per sample, got shape {shape}")
        return shape

    def parameters(self):
        """Parameter arrays keyed "<layer index>.<name>"."""
        return {f"{i}.{name}": value for i, layer in enumerate(self.layers) for name, value in layer.params.items()}

    def gradients(self):
        return {f"{i}.{name}": value for i, layer in enumerate(self.layers) for name, value in layer.grads.items()}

    def set_parameters(self, params):
        for key, value in params.items():
            index, name = key.split(".", 1)
            layer = self.layers[int(index)]
            current = layer.params[name]
            value = np.asarray(value, dtype=np.float64)
            if value.shape != current.shape:
                raise ShapeError(f"parameter {key} has shape {current.shape}, got {value.shape}")
            layer.params[name] = value

    def clear_caches(self):
        self._input = None
        for layer in self.layers:
            layer.cache = None

    def __repr__(self):
        return f"Model(input_shape={self.input_shape}, layers={self.layers})"


def bce_loss(y, o, eps=BCE_EPSILON):
    """
    Binary cross-entropy, averaged when given arrays.

    Args:
        y (int | array-like): Labels in {0, 1}
        o (float | array-like): Predicted probabilities, clamped to [eps, 1 - eps]
        eps (float): Clamp margin

    Returns:
        float: Mean loss
    """
    y = np.asarray(y, dtype=np.float64)
    o = np.clip(np.asarray(o, dtype=np.float64), eps, 1.0 - eps)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    losses = -(y * np.log(o) + (1.0 - y) * np.log1p(-o))
    return float(np.mean(losses))


def _batch_input(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        x = x[None]
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"model expects samples of shape {model.input_shape}, got batch shape {x.shape}")
    return x


def forward(model, x):
    """
    Runs the layers in order under the model's mode, keeping caches for backward.

    Args:
        model (Model): Network
        x (np.ndarray): One sample or a batch of samples

    Returns:
        np.ndarray: (N,) output probabilities
    """
    a = _batch_input(model, x)
    model._input = a
    for layer in model.layers:
        a = layer.forward(a, model.mode, model.rng)
    return a[:, 0]


def _propagate(model, dlogit):
    """Sends a gradient at the pre-sigmoid logit back through every earlier layer."""
    grad = dlogit
    for layer in reversed(model.layers[:-1]):
        layer.grads = {}
        grad = layer.backward(grad)
    return grad


def _check_caches(model, x):
    if model._input is None or model.layers[-1].cache is None:
        raise BackwardStateError("backward called before forward")
    if model._input.shape != x.shape or not np.array_equal(model._input, x):
        raise BackwardStateError("backward input does not match the cached forward input")


def backward(model, x, y):
    """
    Reverse-mode gradients of the mean cross-entropy of the last forward pass.

    Dropout masks and batch statistics are those of that forward pass.

    Args:
        model (Model): Network after forward(model, x)
        x (np.ndarray): The same input given to forward
        y (array-like): Labels in {0, 1}, one per sample

    Returns:
        dict: Gradient per parameter key plus "input"
    """
    x = _batch_input(model, x)
    _check_caches(model, x)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ShapeError(f"got {y.shape[0]} labels for a batch of {x.shape[0]}")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")

    o = model.layers[-1].cache[:, 0]
    dlogit = ((o - y) / x.shape[0])[:, None]
    dx = _propagate(model, dlogit)
    grads = model.gradients()
    grads["input"] = dx
    return grads


def backprop(model, x, y):
    """
    Forward pass followed by backward.

    Args:
        model (Model): Network
        x (np.ndarray): Batch
        y (array-like): Labels

    Returns:
        tuple: (mean loss, outputs, gradients dict)
    """
    x = _batch_input(model, x)
    outputs = forward(model, x)
    loss = bce_loss(y, outputs)
    return loss, outputs, backward(model, x, y)


def output_gradient(model, x):
    """
    Gradient of each sample's output probability with respect to its input.

    Args:
        model (Model): Network
        x (np.ndarray): One sample or a batch

    Returns:
        np.ndarray: Batch of input gradients
    """
    x = _batch_input(model, x)
    o = forward(model, x)
    return _propagate(model, (o * (1.0 - o))[:, None])


def build_default_model(input_shape, seed=DEFAULT_SEED, batchnorm=True, dropout=DEFAULT_DROPOUT_RATE,
                        cross_correlation=False):
    """
    Builds the two-block convolutional classifier with three dense layers.

    conv 8@3x3, ReLU, maxpool 2, conv 16@3x3, ReLU, maxpool 2, flatten,
    [batchnorm], dense 64, ReLU, [dropout], dense 16, ReLU, dense 1, sigmoid.

    Args:
        input_shape (tuple): (h, w, c) of one sample
        seed (int): Seed for weight initialization and dropout masks
        batchnorm (bool): Normalize the flattened features
        dropout (float): Drop probability after the first dense layer, 0 disables it
        cross_correlation (bool): Use unflipped kernels

    Returns:
        Model: Freshly initialized network in inference mode
    """
    h, w, c = input_shape
    init_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    features = [
        Conv(c, 8, 3, cross_correlation=cross_correlation, rng=init_rng),
        ReLU(),
        MaxPool(2),
        Conv(8, 16, 3, cross_correlation=cross_correlation, rng=init_rng),
        ReLU(),
        MaxPool(2),
        Flatten(),
    ]
    shape = tuple(input_shape)
    for layer in features:
        shape = layer.output_shape(shape)
    n_features = shape[0]

    head = [BatchNorm(n_features)] if batchnorm else []
    head += [Dense(n_features, 64, rng=init_rng), ReLU()]
    if dropout > 0:
        head.append(Dropout(dropout))
    head += [Dense(64, 16, rng=init_rng), ReLU(), Dense(16, 1, rng=init_rng), Sigmoid()]

    model = Model(features + head, input_shape, seed=seed)
    logger.debug("model_built", input_shape=model.input_shape, layers=len(model.layers), features=n_features)
    return model
