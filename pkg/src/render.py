"""
Rendering of audit artifacts: overlay montage, saliency overlays, image writers and charts.
"""
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import png
import structlog

from .config import DEFAULT_ALPHA, DEFAULT_TILE
from .errors import GridError, ShapeError
from .gridlayout import grid_positions
from .ingest import resize_bilinear, to_grayscale, to_rgb

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class Colormap:
    """Piecewise-linear palette over (position, (r, g, b)) anchors with positions 0 ... 1."""
    anchors: tuple

    def __post_init__(self):
        positions = [p for p, _ in self.anchors]
        if len(positions) < 2 or positions[0] != 0.0 or positions[-1] != 1.0:
            raise ValueError("colormap anchors must start at 0 and end at 1")
        if any(b <= a for a, b in zip(positions, positions[1:])):
            raise ValueError("colormap anchor positions must be strictly increasing")

    @property
    def positions(self):
        return np.array([p for p, _ in self.anchors], dtype=np.float64)

    @property
    def colors(self):
        return np.array([c for _, c in self.anchors], dtype=np.float64)


OVERLAY = Colormap((
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
))

SALIENCY = Colormap((
    (0.0, (0, 0, 255)),
    (0.5, (0, 255, 0)),
    (1.0, (255, 0, 0)),
))


def colormap_values(cmap, values):
    """
    Vectorized lookup.

    Args:
        cmap (Colormap): Palette
        values (array-like): Values, clamped to [0, 1]

    Returns:
        np.ndarray: values.shape + (3,) integer RGB, rounded half up
    """
    values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    positions, colors = cmap.positions, cmap.colors
    channels = [np.interp(values, positions, colors[:, k]) for k in range(3)]
    return np.floor(np.stack(channels, axis=-1) + 0.5).astype(np.int64)


def colormap_lookup(cmap, v):
    r, g, b = colormap_values(cmap, float(v))
    return int(r), int(g), int(b)


def blend(color, pixels, alpha):
    """alpha * color + (1 - alpha) * pixels, with color given in 0 ... 255."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return np.clip(alpha * (np.asarray(color, dtype=np.float64) / 255.0) + (1.0 - alpha) * pixels, 0.0, 1.0)


def render_tile(image, overlay, tile_px=DEFAULT_TILE, alpha=DEFAULT_ALPHA, cmap=OVERLAY):
    """
    One montage cell: the image resized to the tile, tinted by correctness 1 - overlay.

    Args:
        image (np.ndarray): (h, w, c) image
        overlay (float): Prediction error of the cell, NaN for no tint
        tile_px (int): Tile side
        alpha (float): Tint weight
        cmap (Colormap): Palette

    Returns:
        np.ndarray: (tile_px, tile_px, 3) array in [0, 1]
    """
    pixels = to_rgb(resize_bilinear(image, tile_px, tile_px))
    if np.isnan(overlay):
        return pixels
    return blend(colormap_values(cmap, 1.0 - overlay), pixels, alpha)


def montage(layout, images, tile_px=DEFAULT_TILE, alpha=DEFAULT_ALPHA, cmap=OVERLAY):
    """
    Composes the grid montage with row 0 at the top; empty cells stay black.

    Args:
        layout (GridLayout): Assigned layout with overlay values
        images (list): Images indexed by sample index
        tile_px (int): Tile side in pixels
        alpha (float): Tint weight in [0, 1]
        cmap (Colormap): Palette for correctness values

    Returns:
        np.ndarray: (rows * tile_px, cols * tile_px, 3) array in [0, 1]
    """
    if tile_px < 1:
        raise ValueError(f"tile size must be positive, got {tile_px}")
    rows, cols = layout.shape
    canvas = np.zeros((rows * tile_px, cols * tile_px, 3))
    for row, col, index in layout.assigned_cells():
        if index >= len(images) or images[index] is None:
            raise GridError(f"cell ({row}, {col}) refers to sample {index}, which has no image")
        tile = render_tile(images[index], layout.overlay[row, col], tile_px, alpha, cmap)
        canvas[row * tile_px:(row + 1) * tile_px, col * tile_px:(col + 1) * tile_px] = tile
    return canvas


def saliency_overlay(image, saliency, alpha=DEFAULT_ALPHA, cmap=SALIENCY):
    """
    Tints the grayscale-rendered image with the saliency palette.

    Args:
        image (np.ndarray): (h, w, c) image
        saliency (np.ndarray): (h, w) map in [0, 1]
        alpha (float): Tint weight
        cmap (Colormap): Palette, blue (low) to red (high) by default

    Returns:
        np.ndarray: (h, w, 3) array in [0, 1]
    """
    saliency = np.asarray(saliency, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or saliency.shape != image.shape[:2]:
        raise ShapeError(f"saliency shape {saliency.shape} does not match image shape {image.shape}")
    return blend(colormap_values(cmap, saliency), to_rgb(to_grayscale(image)), alpha)


def to_bytes(image):
    """Quantizes [0, 1] values to uint8, rounding half up."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3 or image.shape[2] not in (1, 3):
        raise ShapeError(f"expected an (h, w, 1) or (h, w, 3) image, got shape {image.shape}")
    if image.shape[0] == 0 or image.shape[1] == 0:
        raise ShapeError(f"cannot write an image with a zero dimension, got shape {image.shape}")
    return np.floor(np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def write_png(image, path):
    """
    Writes an 8-bit non-interlaced grey or RGB PNG.

    Args:
        image (np.ndarray): (h, w, 1) or (h, w, 3) array in [0, 1]
        path (str): Destination path
    """
    data = to_bytes(image)
    h, w, c = data.shape
    writer = png.Writer(width=w, height=h, greyscale=(c == 1), bitdepth=8)
    with open(path, "wb") as f:
        writer.write(f, data.reshape(h, w * c))


def write_ppm(image, path):
    """
    Writes binary PGM (P5) for one channel or PPM (P6) for three.

    Args:
        image (np.ndarray): (h, w, 1) or (h, w, 3) array in [0, 1]
        path (str): Destination path
    """
    data = to_bytes(image)
    h, w, c = data.shape
    magic = "P5" if c == 1 else "P6"
    with open(path, "wb") as f:
        f.write(f"{magic}\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())


def write_image(image, path):
    if os.path.splitext(path)[1].lower() in (".ppm", ".pgm", ".pnm"):
        write_ppm(image, path)
    else:
        write_png(image, path)


def projection_plot(coords, spec, path, tags=None):
    """
    Scatter of projected samples (red) with the grid positions (blue).

    Args:
        coords (np.ndarray): N x 2 projections
        spec (GridSpec): Grid built over coords
        path (str): Destination image path
        tags (list, optional): Per-sample tags, drawn with distinct markers
    """
    coords = np.asarray(coords, dtype=np.float64)
    grid = grid_positions(spec).reshape(-1, 2)
    fig, ax = plt.subplots(figsize=(6, 6))
    ax.scatter(grid[:, 0], grid[:, 1], s=8, c="tab:blue", label="grid position")
    if tags:
        markers = ["o", "^", "s", "D"]
        for k, tag in enumerate(sorted({str(t) for t in tags})):
            mask = np.array([str(t) == tag for t in tags])
            ax.scatter(coords[mask, 0], coords[mask, 1], s=6, c="tab:red", marker=markers[k % len(markers)],
                       label=f"projection ({tag})")
    else:
        ax.scatter(coords[:, 0], coords[:, 1], s=6, c="tab:red", label="projection")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.invert_yaxis()
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def history_plot(history, path):
    """
    Loss and accuracy curves per epoch, with validation curves when recorded.

    Args:
        history (pd.DataFrame): Columns epoch, loss, accuracy[, val_loss, val_accuracy]
        path (str): Destination image path
    """
    fig, (ax_loss, ax_acc) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, metric in ((ax_loss, "loss"), (ax_acc, "accuracy")):
        ax.plot(history["epoch"], history[metric], label="train")
        if f"val_{metric}" in history:
            ax.plot(history["epoch"], history[f"val_{metric}"], label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel(metric)
        ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
