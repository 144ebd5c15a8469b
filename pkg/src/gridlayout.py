"""
Grid layout of projected images and the per-cell error overlay.

Cells are indexed (row, col). Column positions run along the first
projection axis and row positions along the second, so row 0 sits at the
minimum of the second coordinate and is drawn at the top of a montage.
"""
import math
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
import structlog
from scipy.optimize import linear_sum_assignment

from .config import EXACT_ASSIGN_MAX_CELLS, DECISION_THRESHOLD
from .errors import GridError, ShapeError

logger = structlog.get_logger(__name__)

EMPTY = -1


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    d1: float
    d2: float


@dataclass(frozen=True)
class GridLayout:
    spec: GridSpec
    assignment: np.ndarray
    overlay: np.ndarray

    @property
    def shape(self):
        return self.spec.rows, self.spec.cols

    def assigned_cells(self):
        """Yields (row, col, sample_index) for every non-empty cell in row-major order."""
        for row in range(self.spec.rows):
            for col in range(self.spec.cols):
                index = int(self.assignment[row, col])
                if index != EMPTY:
                    yield row, col, index


def default_grid_shape(n):
    side = math.isqrt(n)
    return side, side


def _check_coords(coords):
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] < 2:
        raise ShapeError(f"coords must be N x 2, got shape {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coords contain non-finite values")
    return coords[:, :2]


def make_grid_spec(coords, rows, cols):
    """
    Builds the uniform grid spanning the projected coordinates.

    Args:
        coords (array-like): N x 2 projected coordinates
        rows (int): Number of grid rows
        cols (int): Number of grid columns

    Returns:
        GridSpec: Bounds and step sizes
    """
    coords = _check_coords(coords)
    n = coords.shape[0]
    if rows < 1 or cols < 1:
        raise GridError(f"grid needs at least one row and column, got {rows} x {cols}")
    if rows * cols > n:
        raise GridError(f"grid of {rows} x {cols} = {rows * cols} cells exceeds {n} images")
    x_min, x_max = float(coords[:, 0].min()), float(coords[:, 0].max())
    y_min, y_max = float(coords[:, 1].min()), float(coords[:, 1].max())
    return GridSpec(
        rows=rows,
        cols=cols,
        x_min=x_min,
        x_max=x_max,
        y_min=y_min,
        y_max=y_max,
        d1=(x_max - x_min) / max(cols - 1, 1),
        d2=(y_max - y_min) / max(rows - 1, 1),
    )


def grid_position(spec, row, col):
    return spec.x_min + col * spec.d1, spec.y_min + row * spec.d2


def grid_positions(spec):
    """Grid positions as a (rows, cols, 2) array."""
    positions = np.empty((spec.rows, spec.cols, 2))
    for row in range(spec.rows):
        for col in range(spec.cols):
            positions[row, col] = grid_position(spec, row, col)
    return positions


def _empty_layout(spec):
    return GridLayout(
        spec=spec,
        assignment=np.full((spec.rows, spec.cols), EMPTY, dtype=np.int64),
        overlay=np.full((spec.rows, spec.cols), np.nan),
    )


def greedy_assign(coords, rows, cols):
    """
    Assigns images to grid cells by the nearest-unused-image rule.

    Positions are visited column by column (outer loop over x, inner loop over y);
    each takes the closest image not used yet, lowest index on ties.

    Args:
        coords (array-like): N x 2 projected coordinates
        rows (int): Number of grid rows
        cols (int): Number of grid columns

    Returns:
        GridLayout: Injective cell-to-image assignment without overlay values
    """
    coords = _check_coords(coords)
    spec = make_grid_spec(coords, rows, cols)
    layout = _empty_layout(spec)
    available = np.ones(coords.shape[0], dtype=bool)

    for col in range(cols):
        for row in range(rows):
            gx, gy = grid_position(spec, row, col)
            dx = coords[:, 0] - gx
            dy = coords[:, 1] - gy
            dist = np.sqrt(dx * dx + dy * dy)
            dist[~available] = np.inf
            chosen = int(np.argmin(dist))
            layout.assignment[row, col] = chosen
            available[chosen] = False

    logger.debug("greedy_assigned", rows=rows, cols=cols, images=coords.shape[0])
    return layout


def _cost_matrix(spec, coords):
    positions = grid_positions(spec).reshape(-1, 2)
    diff = positions[:, None, :] - coords[None, :, :]
    return np.einsum("cnk,cnk->cn", diff, diff)


def exact_assign(coords, rows, cols):
    """
    Assigns images to grid cells minimizing total squared cell-to-image distance.

    Args:
        coords (array-like): N x 2 projected coordinates
        rows (int): Number of grid rows
        cols (int): Number of grid columns

    Returns:
        GridLayout: Optimal injective assignment without overlay values
    """
    coords = _check_coords(coords)
    spec = make_grid_spec(coords, rows, cols)
    if rows * cols > EXACT_ASSIGN_MAX_CELLS:
        raise GridError(f"exact assignment supports at most {EXACT_ASSIGN_MAX_CELLS} cells, got {rows * cols}")
    cost = _cost_matrix(spec, coords)
    cells, samples = linear_sum_assignment(cost)
    layout = _empty_layout(spec)
    layout.assignment.reshape(-1)[cells] = samples
    logger.debug("exact_assigned", rows=rows, cols=cols, cost=float(cost[cells, samples].sum()))
    return layout


def assign(coords, rows, cols, method="greedy"):
    if method == "greedy":
        return greedy_assign(coords, rows, cols)
    if method == "exact":
        return exact_assign(coords, rows, cols)
    raise ValueError(f"Unknown assignment method: {method}")


def layout_cost(layout, coords):
    """
    Total squared Euclidean distance between cell positions and their images.

    Args:
        layout (GridLayout): Assigned layout
        coords (array-like): N x 2 coordinates the layout was built from

    Returns:
        float: Summed squared distance
    """
    coords = _check_coords(coords)
    total = 0.0
    for row, col, index in layout.assigned_cells():
        gx, gy = grid_position(layout.spec, row, col)
        total += (coords[index, 0] - gx) ** 2 + (coords[index, 1] - gy) ** 2
    return total


def overlay_values(layout, labels, outputs, hard=False):
    """
    Fills each assigned cell with the prediction error |label - output| of its image.

    Args:
        layout (GridLayout): Assigned layout
        labels (array-like): Binary labels indexed like the coordinates
        outputs (array-like): Model outputs in [0, 1] indexed like the coordinates
        hard (bool): Threshold outputs at 0.5 before taking the error

    Returns:
        GridLayout: Copy of the layout with overlay values set
    """
    labels = np.asarray(labels, dtype=np.float64).ravel()
    outputs = np.asarray(outputs, dtype=np.float64).ravel()
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0 or 1")
    if np.any(~np.isfinite(outputs)) or np.any((outputs < 0) | (outputs > 1)):
        raise ValueError("outputs must lie in [0, 1]")
    if hard:
        outputs = (outputs >= DECISION_THRESHOLD).astype(np.float64)

    overlay = np.full(layout.assignment.shape, np.nan)
    limit = min(labels.shape[0], outputs.shape[0])
    for row, col, index in layout.assigned_cells():
        if index >= limit:
            raise IndexError(f"cell ({row}, {col}) refers to sample {index}, but only {limit} labels/outputs given")
        overlay[row, col] = abs(labels[index] - outputs[index])
    return replace(layout, overlay=overlay)


def _region_masks(rows, cols):
    r = np.arange(rows)[:, None]
    c = np.arange(cols)[None, :]
    top = np.broadcast_to(r < rows // 2, (rows, cols))
    bottom = np.broadcast_to(r >= rows - rows // 2, (rows, cols))
    left = np.broadcast_to(c < cols // 2, (rows, cols))
    right = np.broadcast_to(c >= cols - cols // 2, (rows, cols))
    return {
        "top": top,
        "bottom": bottom,
        "left": left,
        "right": right,
        "top_left": top & left,
        "top_right": top & right,
        "bottom_left": bottom & left,
        "bottom_right": bottom & right,
    }


def _summarize(values):
    values = values[~np.isnan(values)]
    count = int(values.shape[0])
    return {"count": count, "mean": float(values.mean()) if count else None}


def region_report(layout):
    """
    Mean overlay error overall, per half and per quadrant of the grid.

    On odd grid sizes the middle row/column belongs to no half.

    Args:
        layout (GridLayout): Layout with overlay values

    Returns:
        dict: {"overall": {...}, "regions": {name: {"count", "mean"}}, "grid": [rows, cols]}
    """
    overlay = layout.overlay
    if not np.any(~np.isnan(overlay)):
        raise GridError("region report needs at least one cell with an overlay value")
    regions = {name: _summarize(overlay[mask]) for name, mask in _region_masks(*overlay.shape).items()}
    return {
        "grid": [layout.spec.rows, layout.spec.cols],
        "overall": _summarize(overlay.ravel()),
        "regions": regions,
    }


def region_composition(layout, tags):
    """
    Counts how many images of each tag fall into each region.

    Args:
        layout (GridLayout): Assigned layout
        tags (list): Tag per sample index (e.g. subpopulation)

    Returns:
        dict: {region: {tag: count}}
    """
    tag_grid = np.full(layout.assignment.shape, None, dtype=object)
    for row, col, index in layout.assigned_cells():
        tag_grid[row, col] = tags[index]
    composition = {}
    for name, mask in _region_masks(*layout.assignment.shape).items():
        counts = pd.Series([t for t in tag_grid[mask] if t is not None], dtype=object).value_counts()
        composition[name] = {str(k): int(v) for k, v in sorted(counts.items(), key=lambda kv: str(kv[0]))}
    return composition


def layout_frame(layout):
    rows = []
    for row, col, index in layout.assigned_cells():
        gx, gy = grid_position(layout.spec, row, col)
        rows.append({
            "row": row,
            "col": col,
            "sample_index": index,
            "x_grid": gx,
            "y_grid": gy,
            "overlay": layout.overlay[row, col],
        })
    return pd.DataFrame(rows, columns=["row", "col", "sample_index", "x_grid", "y_grid", "overlay"])


def write_layout(layout, path):
    """
    Writes the `row,col,sample_index,x_grid,y_grid,overlay` table, empty cells omitted.

    Args:
        layout (GridLayout): Layout to export
        path (str): Destination CSV path
    """
    layout_frame(layout).to_csv(path, index=False, float_format="%.17g", na_rep="", lineterminator="\n")
