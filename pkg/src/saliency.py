"""
Input-gradient saliency: which pixels move the model's output the most.
"""
import numpy as np

from .errors import ShapeError
from .nn import INFERENCE, output_gradient


def input_gradient(model, image):
    """
    Raw gradient of the output probability with respect to one input image.

    Computed in inference mode; the model's previous mode is restored.

    Args:
        model (Model): Network
        image (np.ndarray): One sample of the model's input shape

    Returns:
        np.ndarray: Gradient with the image's shape
    """
    image = np.asarray(image, dtype=np.float64)
    if image.shape != model.input_shape:
        raise ShapeError(f"saliency expects one image of shape {model.input_shape}, got {image.shape}")
    previous = model.mode
    model.mode = INFERENCE
    try:
        return output_gradient(model, image)[0]
    finally:
        model.mode = previous
        model.clear_caches()


def normalize_map(values):
    """Min-max scales to [0, 1]; a constant map becomes all zeros."""
    values = np.asarray(values, dtype=np.float64)
    lo = values.min()
    span = values.max() - lo
    if span == 0.0:
        return np.zeros_like(values)
    return (values - lo) / span


def input_saliency(model, image):
    """
    Absolute output gradient per pixel, max-reduced over channels and min-max normalized.

    Args:
        model (Model): Network whose input is (h, w, c) images
        image (np.ndarray): One (h, w, c) sample

    Returns:
        np.ndarray: (h, w) map in [0, 1]
    """
    grad = np.abs(input_gradient(model, image))
    if grad.ndim == 3:
        grad = grad.max(axis=2)
    return normalize_map(grad)


def saliency_focus(saliency, mask):
    """
    Share of total saliency falling inside a region mask.

    Args:
        saliency (np.ndarray): (h, w) non-negative map
        mask (np.ndarray): (h, w) boolean region

    Returns:
        float: Fraction in [0, 1]; 0 for an all-zero map
    """
    saliency = np.asarray(saliency, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if saliency.shape != mask.shape:
        raise ShapeError(f"saliency shape {saliency.shape} does not match mask shape {mask.shape}")
    total = saliency.sum()
    if total == 0.0:
        return 0.0
    return float(saliency[mask].sum() / total)
