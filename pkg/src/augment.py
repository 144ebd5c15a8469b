"""
Training-time augmentation: intensity rescale, centered shear and zoom, horizontal flip.
"""
import math
from dataclasses import dataclass, asdict

import numpy as np

from .config import (
    DEFAULT_RESCALE_RANGE,
    DEFAULT_SHEAR_MAX,
    DEFAULT_ZOOM_RANGE,
    DEFAULT_HFLIP_PROB,
    DEFAULT_SEED,
)
from .errors import ConfigError, ShapeError
from .ingest import sample_bilinear


@dataclass
class AugmentConfig:
    rescale_range: tuple = DEFAULT_RESCALE_RANGE
    shear_max: float = DEFAULT_SHEAR_MAX
    zoom_range: tuple = DEFAULT_ZOOM_RANGE
    hflip_prob: float = DEFAULT_HFLIP_PROB
    rng_seed: int = DEFAULT_SEED + 1

    def validate(self):
        for name in ("rescale_range", "zoom_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ConfigError(f"augment.{name}: lower bound {lo} exceeds upper bound {hi}")
        if self.zoom_range[0] <= 0:
            raise ConfigError(f"augment.zoom_range: zoom must be positive, got {self.zoom_range[0]}")
        if self.rescale_range[0] < 0:
            raise ConfigError(f"augment.rescale_range: factor must be non-negative, got {self.rescale_range[0]}")
        if self.shear_max < 0:
            raise ConfigError(f"augment.shear_max must be non-negative, got {self.shear_max}")
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"augment.hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class AugmentParams:
    rescale: float = 1.0
    shear: float = 0.0
    zoom: float = 1.0
    flip: bool = False

    @property
    def is_identity(self):
        return self.rescale == 1.0 and self.shear == 0.0 and self.zoom == 1.0 and not self.flip


def make_rng(config):
    return np.random.default_rng(config.rng_seed)


def sample_params(config, rng):
    """
    Draws one set of augmentation parameters uniformly from the configured ranges.

    Args:
        config (AugmentConfig): Ranges and flip probability
        rng (np.random.Generator): Generator owned by the caller

    Returns:
        AugmentParams: Sampled parameters
    """
    rescale = float(rng.uniform(*config.rescale_range))
    shear = float(rng.uniform(-config.shear_max, config.shear_max))
    zoom = float(rng.uniform(*config.zoom_range))
    flip = bool(rng.random() < config.hflip_prob)
    return AugmentParams(rescale=rescale, shear=shear + 0.0, zoom=zoom, flip=flip)


def _affine(image, shear, zoom):
    """Shear then zoom about the image center, sampled bilinearly with edge clamping."""
    h, w = image.shape[:2]
    cy = (h - 1) / 2.0
    cx = (w - 1) / 2.0
    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: undo zoom, then undo shear (x' = x + tan(shear) * y)
    v = (ys - cy) / zoom
    u = (xs - cx) / zoom
    u = u - math.tan(shear) * v
    return sample_bilinear(image, v + cy, u + cx)


def augment(image, params):
    """
    Applies rescale, shear/zoom and flip in that order.

    Args:
        image (np.ndarray): (h, w, c) array in [0, 1]
        params (AugmentParams): Parameters from sample_params

    Returns:
        np.ndarray: Augmented image with the same shape, clamped to [0, 1]
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.size == 0:
        raise ShapeError(f"augment expects a non-empty (h, w, c) image, got shape {image.shape}")
    if params.zoom <= 0:
        raise ValueError(f"zoom must be positive, got {params.zoom}")

    out = image * params.rescale
    if params.shear != 0.0 or params.zoom != 1.0:
        out = _affine(out, params.shear, params.zoom)
    if params.flip:
        out = out[:, ::-1, :]
    return np.clip(out, 0.0, 1.0)


def augment_batch(images, config, rng):
    """
    Augments every image of a (N, h, w, c) batch with freshly sampled parameters.

    Args:
        images (np.ndarray): Batch array
        config (AugmentConfig): Ranges and flip probability
        rng (np.random.Generator): Generator owned by the caller

    Returns:
        np.ndarray: Augmented batch
    """
    return np.stack([augment(img, sample_params(config, rng)) for img in images])
