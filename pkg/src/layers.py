"""
Layer types of the convolutional classifier.

Activations are NHWC float64 arrays. Every layer keeps the cache of its last
forward pass; backward consumes it and fills `grads` for the layer's parameters.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .config import BATCHNORM_EPSILON, BATCHNORM_MOMENTUM
from .errors import BackwardStateError, ConfigError, ShapeError

TRAINING = "training"
INFERENCE = "inference"
MODES = (TRAINING, INFERENCE)


def he_uniform(shape, fan_in, rng):
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def _as_batch(x, rank):
    """Adds a leading batch axis to a single sample of the given rank."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ShapeError(f"expected a sample of rank {rank} or a batch of rank {rank + 1}, got shape {x.shape}")


def _scatter_windows(dx, per_tap, kh, kw, stride):
    """Adds per-tap window gradients (N, Ho, Wo, C, kh, kw) back onto the input grid."""
    ho, wo = per_tap.shape[1:3]
    for i in range(kh):
        for j in range(kw):
            dx[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += per_tap[..., i, j]
    return dx


def relu(x):
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, 0.0)


def sigmoid(z):
    """
    Logistic function, evaluated without overflow for large negative inputs.

    Args:
        z (float | np.ndarray): Logits

    Returns:
        float | np.ndarray: Values in (0, 1), same shape as z
    """
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def conv_forward(x, layer):
    """
    Valid-padding 2-D convolution summed over input channels.

    The kernel is flipped relative to cross-correlation unless the layer was
    built with cross_correlation=True.

    Args:
        x (np.ndarray): (H, W, C) image or (N, H, W, C) batch
        layer (Conv): Layer holding kernel (out, in, kh, kw) and bias (out,)

    Returns:
        np.ndarray: (Ho, Wo, out) or (N, Ho, Wo, out) feature maps
    """
    x, single = _as_batch(x, 3)
    windows = layer.windows(x)
    out = np.einsum("nhwcij,ocij->nhwo", windows, layer.effective_kernel()) + layer.params["bias"]
    return out[0] if single else out


def maxpool_forward(x, window, stride=None):
    """
    Max pooling over square windows.

    Args:
        x (np.ndarray): (H, W), (H, W, C) or (N, H, W, C) array
        window (int): Window side
        stride (int, optional): Step between windows, defaults to window

    Returns:
        tuple: (pooled array shaped like x with reduced H and W, argmax of each window
            as a flat index into window x window, first occurrence on ties)
    """
    x = np.asarray(x, dtype=np.float64)
    stride = stride or window
    rank = x.ndim
    if rank == 2:
        x4 = x[None, :, :, None]
    elif rank == 3:
        x4 = x[None]
    elif rank == 4:
        x4 = x
    else:
        raise ShapeError(f"maxpool expects a 2-D, 3-D or 4-D array, got shape {x.shape}")
    h, w = x4.shape[1:3]
    if window < 1 or stride < 1:
        raise ShapeError(f"window and stride must be positive, got {window} and {stride}")
    if window > h or window > w:
        raise ShapeError(f"pooling window {window} exceeds input of {h} x {w}")

    windows = sliding_window_view(x4, (window, window), axis=(1, 2))[:, ::stride, ::stride]
    flat = windows.reshape(windows.shape[:4] + (window * window,))
    argmax = flat.argmax(axis=-1)
    pooled = np.take_along_axis(flat, argmax[..., None], axis=-1)[..., 0]

    if rank == 2:
        return pooled[0, :, :, 0], argmax[0, :, :, 0]
    if rank == 3:
        return pooled[0], argmax[0]
    return pooled, argmax


def dense_forward(a, layer):
    """
    Affine map z = W a + b.

    Args:
        a (np.ndarray): (in,) vector or (N, in) batch
        layer (Dense): Layer holding weights (out, in) and bias (out,)

    Returns:
        np.ndarray: (out,) or (N, out)
    """
    a = np.asarray(a, dtype=np.float64)
    weights = layer.params["weights"]
    if a.ndim not in (1, 2) or a.shape[-1] != weights.shape[1]:
        raise ShapeError(f"dense layer expects {weights.shape[1]} inputs, got shape {a.shape}")
    return a @ weights.T + layer.params["bias"]


def dropout_forward(x, rate, mode, rng):
    """
    Inverted dropout.

    Args:
        x (np.ndarray): Activations
        rate (float): Drop probability in [0, 1)
        mode (str): "training" or "inference"
        rng (np.random.Generator): Mask generator, used in training mode only

    Returns:
        tuple: (output, mask applied to x)
    """
    x = np.asarray(x, dtype=np.float64)
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode != TRAINING or rate == 0.0:
        return x, np.ones_like(x)
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def _batchnorm(x, layer, mode):
    axes = tuple(range(x.ndim - 1))
    if mode == TRAINING:
        count = int(np.prod([x.shape[a] for a in axes]))
        if x.shape[0] < 2:
            raise ShapeError(f"batch normalization in training mode needs a batch of at least 2, got {x.shape[0]}")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = layer.momentum
        layer.buffers["running_mean"] = m * layer.buffers["running_mean"] + (1.0 - m) * mean
        layer.buffers["running_var"] = m * layer.buffers["running_var"] + (1.0 - m) * var
    else:
        count = None
        mean = layer.buffers["running_mean"]
        var = layer.buffers["running_var"]
    inv_std = 1.0 / np.sqrt(var + layer.epsilon)
    xhat = (x - mean) * inv_std
    return layer.params["gamma"] * xhat + layer.params["beta"], xhat, inv_std, count


def batchnorm_forward(x, layer, mode):
    """
    Per-channel batch normalization over every axis but the last.

    Training mode normalizes by the batch statistics and updates the layer's
    running statistics; inference mode uses the running statistics.

    Args:
        x (np.ndarray): Batch with channels last
        layer (BatchNorm): Layer holding gamma, beta and running statistics
        mode (str): "training" or "inference"

    Returns:
        np.ndarray: Normalized batch
    """
    out, _, _, _ = _batchnorm(np.asarray(x, dtype=np.float64), layer, mode)
    return out


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self.cache = None

    def forward(self, x, mode=INFERENCE, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, input_shape):
        return tuple(input_shape)

    def config(self):
        return {}

    @classmethod
    def from_config(cls, config):
        return cls(**config)

    def _cached(self):
        if self.cache is None:
            raise BackwardStateError(f"{self.kind} layer has no forward cache")
        return self.cache

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


class Conv(Layer):
    kind = "conv"

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, cross_correlation=False, rng=None):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.cross_correlation = cross_correlation
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        fan_in = in_channels * kernel_size * kernel_size
        self.params["kernel"] = he_uniform(shape, fan_in, rng) if rng is not None else np.zeros(shape)
        self.params["bias"] = np.zeros(out_channels)

    def effective_kernel(self):
        kernel = self.params["kernel"]
        return kernel if self.cross_correlation else kernel[:, :, ::-1, ::-1]

    def windows(self, x):
        k = self.kernel_size
        n, h, w, c = x.shape
        if c != self.in_channels:
            raise ShapeError(f"conv layer expects {self.in_channels} input channels, got {c}")
        if h < k or w < k:
            raise ShapeError(f"input of {h} x {w} is smaller than the {k} x {k} kernel")
        return sliding_window_view(x, (k, k), axis=(1, 2))[:, ::self.stride, ::self.stride]

    def forward(self, x, mode=INFERENCE, rng=None):
        out = conv_forward(x, self)
        self.cache = x
        return out

    def backward(self, dout):
        x = self._cached()
        windows = self.windows(x)
        d_effective = np.einsum("nhwcij,nhwo->ocij", windows, dout)
        self.grads["kernel"] = d_effective if self.cross_correlation else d_effective[:, :, ::-1, ::-1]
        self.grads["bias"] = dout.sum(axis=(0, 1, 2))
        per_tap = np.einsum("nhwo,ocij->nhwcij", dout, self.effective_kernel())
        k = self.kernel_size
        return _scatter_windows(np.zeros_like(x), per_tap, k, k, self.stride)

    def output_shape(self, input_shape):
        h, w, c = input_shape
        k = self.kernel_size
        if c != self.in_channels or h < k or w < k:
            raise ShapeError(f"conv layer ({self.in_channels} channels, {k} x {k}) cannot take input {input_shape}")
        return (h - k) // self.stride + 1, (w - k) // self.stride + 1, self.out_channels

    def config(self):
        return {
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "cross_correlation": self.cross_correlation,
        }


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, mode=INFERENCE, rng=None):
        self.cache = x > 0
        return relu(x)

    def backward(self, dout):
        return dout * self._cached()


class MaxPool(Layer):
    kind = "maxpool"

    def __init__(self, window=2, stride=None):
        super().__init__()
        self.window = window
        self.stride = stride or window

    def forward(self, x, mode=INFERENCE, rng=None):
        pooled, argmax = maxpool_forward(x, self.window, self.stride)
        self.cache = (x.shape, argmax)
        return pooled

    def backward(self, dout):
        shape, argmax = self._cached()
        k = self.window
        taps = np.arange(k * k).reshape(k, k)
        per_tap = dout[..., None, None] * (argmax[..., None, None] == taps)
        return _scatter_windows(np.zeros(shape), per_tap, k, k, self.stride)

    def output_shape(self, input_shape):
        h, w, c = input_shape
        if self.window > h or self.window > w:
            raise ShapeError(f"pooling window {self.window} exceeds input {input_shape}")
        return (h - self.window) // self.stride + 1, (w - self.window) // self.stride + 1, c

    def config(self):
        return {"window": self.window, "stride": self.stride}


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, mode=INFERENCE, rng=None):
        self.cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cached())

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)


class Dense(Layer):
    kind = "dense"

    def __init__(self, in_features, out_features, rng=None):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        shape = (out_features, in_features)
        self.params["weights"] = he_uniform(shape, in_features, rng) if rng is not None else np.zeros(shape)
        self.params["bias"] = np.zeros(out_features)

    def forward(self, x, mode=INFERENCE, rng=None):
        out = dense_forward(x, self)
        self.cache = x
        return out

    def backward(self, dout):
        x = self._cached()
        self.grads["weights"] = dout.T @ x
        self.grads["bias"] = dout.sum(axis=0)
        return dout @ self.params["weights"]

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.in_features,):
            raise ShapeError(f"dense layer expects ({self.in_features},) inputs, got {input_shape}")
        return (self.out_features,)

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, mode=INFERENCE, rng=None):
        out, mask = dropout_forward(x, self.rate, mode, rng)
        self.cache = mask
        return out

    def backward(self, dout):
        return dout * self._cached()

    def config(self):
        return {"rate": self.rate}


class BatchNorm(Layer):
    kind = "batchnorm"

    def __init__(self, num_features, epsilon=BATCHNORM_EPSILON, momentum=BATCHNORM_MOMENTUM):
        super().__init__()
        if epsilon <= 0:
            raise ConfigError(f"batchnorm epsilon must be positive, got {epsilon}")
        self.num_features = num_features
        self.epsilon = epsilon
        self.momentum = momentum
        self.params["gamma"] = np.ones(num_features)
        self.params["beta"] = np.zeros(num_features)
        self.buffers["running_mean"] = np.zeros(num_features)
        self.buffers["running_var"] = np.ones(num_features)

    def forward(self, x, mode=INFERENCE, rng=None):
        out, xhat, inv_std, count = _batchnorm(np.asarray(x, dtype=np.float64), self, mode)
        self.cache = (xhat, inv_std, count)
        return out

    def backward(self, dout):
        xhat, inv_std, count = self._cached()
        axes = tuple(range(dout.ndim - 1))
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"]
        if count is None:
            return dxhat * inv_std
        return (inv_std / count) * (count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))

    def output_shape(self, input_shape):
        if input_shape[-1] != self.num_features:
            raise ShapeError(f"batchnorm expects {self.num_features} channels, got {input_shape}")
        return tuple(input_shape)

    def config(self):
        return {"num_features": self.num_features, "epsilon": self.epsilon, "momentum": self.momentum}


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, mode=INFERENCE, rng=None):
        out = sigmoid(x)
        self.cache = out
        return out

    def backward(self, dout):
        out = self._cached()
        return dout * out * (1.0 - out)


LAYER_TYPES = {cls.kind: cls for cls in (Conv, ReLU, MaxPool, Flatten, Dense, Dropout, BatchNorm, Sigmoid)}
