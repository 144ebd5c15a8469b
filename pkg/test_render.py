import numpy as np
import pandas as pd
import pytest

from src.errors import GridError, ShapeError
from src.gridlayout import greedy_assign, overlay_values
from src.ingest import read_image
from src.render import (
    OVERLAY,
    SALIENCY,
    Colormap,
    colormap_lookup,
    history_plot,
    montage,
    projection_plot,
    saliency_overlay,
    to_bytes,
    write_image,
    write_png,
    write_ppm,
)


def _layout(overlay_outputs):
    coords = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    return overlay_values(greedy_assign(coords, 2, 2), [0, 0, 0, 0], overlay_outputs)


def _tiles():
    return [np.full((2, 2, 3), v) for v in (0.1, 0.3, 0.5, 0.7)]


def test_colormap_anchors_and_midpoint():
    assert colormap_lookup(OVERLAY, 0.0) == (68, 1, 84)
    assert colormap_lookup(OVERLAY, 1.0) == (253, 231, 37)
    assert colormap_lookup(OVERLAY, 0.5) == (33, 145, 140)
    assert colormap_lookup(OVERLAY, 0.125) == (64, 42, 112)
    assert colormap_lookup(OVERLAY, -3.0) == colormap_lookup(OVERLAY, 0.0)
    assert colormap_lookup(SALIENCY, 1.0) == (255, 0, 0)


def test_colormap_rejects_bad_anchors():
    with pytest.raises(ValueError):
        Colormap(((0.2, (0, 0, 0)), (1.0, (1, 1, 1))))
    with pytest.raises(ValueError):
        Colormap(((0.0, (0, 0, 0)), (0.5, (1, 1, 1)), (0.5, (2, 2, 2)), (1.0, (3, 3, 3))))


def test_montage_alpha_zero_shows_images_in_grid_order():
    layout = _layout([0.0, 0.5, 1.0, 0.25])
    canvas = montage(layout, _tiles(), tile_px=2, alpha=0.0)
    assert canvas.shape == (4, 4, 3)
    for row in range(2):
        for col in range(2):
            tile = canvas[row * 2:(row + 1) * 2, col * 2:(col + 1) * 2]
            assert np.array_equal(tile, _tiles()[layout.assignment[row, col]])


def test_montage_alpha_one_shows_correctness_colors():
    outputs = [0.0, 0.5, 1.0, 0.25]
    layout = _layout(outputs)
    canvas = montage(layout, _tiles(), tile_px=2, alpha=1.0)
    for row in range(2):
        for col in range(2):
            correctness = 1.0 - layout.overlay[row, col]
            expected = np.array(colormap_lookup(OVERLAY, correctness)) / 255.0
            assert np.array_equal(canvas[row * 2, col * 2], expected)


def test_montage_missing_image_and_bad_tile():
    layout = _layout([0.0] * 4)
    with pytest.raises(GridError):
        montage(layout, _tiles()[:2], tile_px=2)
    with pytest.raises(ValueError):
        montage(layout, _tiles(), tile_px=0)
    with pytest.raises(ValueError):
        montage(layout, _tiles(), tile_px=2, alpha=1.5)


def test_saliency_overlay_colors():
    image = np.full((2, 2, 1), 0.4)
    saliency = np.array([[0.0, 1.0], [0.5, 0.0]])
    opaque = saliency_overlay(image, saliency, alpha=1.0)
    assert opaque[0, 0].tolist() == [0.0, 0.0, 1.0]
    assert opaque[0, 1].tolist() == [1.0, 0.0, 0.0]
    assert opaque[1, 0].tolist() == [0.0, 1.0, 0.0]
    assert np.allclose(saliency_overlay(image, saliency, alpha=0.0), 0.4)
    with pytest.raises(ShapeError):
        saliency_overlay(image, np.zeros((3, 3)))


def test_ppm_bytes(tmp_path):
    path = tmp_path / "white.ppm"
    write_ppm(np.ones((2, 2, 3)), str(path))
    assert path.read_bytes() == b"P6\n2 2\n255\n" + bytes([255] * 12)

    grey = tmp_path / "grey.pgm"
    write_image(np.full((1, 2, 1), 0.5), str(grey))
    assert grey.read_bytes() == b"P5\n2 1\n255\n" + bytes([128, 128])


def test_png_round_trip(tmp_path):
    image = np.random.default_rng(0).random((5, 4, 3))
    path = str(tmp_path / "img.png")
    write_png(image, path)
    assert np.array_equal(read_image(path), to_bytes(image) / 255.0)


def test_zero_dimension_rejected(tmp_path):
    with pytest.raises(ShapeError):
        write_png(np.zeros((0, 3, 3)), str(tmp_path / "empty.png"))
    with pytest.raises(ShapeError):
        to_bytes(np.zeros((2, 2, 2)))


def test_plots_write_png_files(tmp_path):
    coords = np.random.default_rng(1).normal(size=(9, 2))
    layout = greedy_assign(coords, 3, 3)
    scatter = tmp_path / "projection.png"
    projection_plot(coords, layout.spec, str(scatter), tags=["A"] * 5 + ["B"] * 4)
    assert scatter.read_bytes().startswith(b"\x89PNG")

    curves = tmp_path / "history.png"
    history = pd.DataFrame({"epoch": [1, 2], "loss": [0.7, 0.5], "accuracy": [0.5, 0.8],
                            "val_loss": [0.72, 0.6], "val_accuracy": [0.5, 0.7]})
    history_plot(history, str(curves))
    assert curves.read_bytes().startswith(b"\x89PNG")
