import numpy as np
import pandas as pd
import pytest

from src.errors import ShapeError
from src.pca import fit_project, mean_center, project_new, write_coords


def test_mean_center_examples():
    centered, mean = mean_center([[0.0, 2.0], [2.0, 0.0]])
    assert np.array_equal(mean, [1.0, 1.0])
    assert np.array_equal(centered, [[-1.0, 1.0], [1.0, -1.0]])

    centered, _ = mean_center(np.tile([[0.3, 0.7, 0.1]], (3, 1)))
    assert np.array_equal(centered, np.zeros((3, 3)))

    centered, _ = mean_center(np.random.default_rng(0).normal(size=(5, 6)))
    assert np.all(np.abs(centered.sum(axis=0)) <= 1e-12)


def test_mean_center_constant_columns_are_exact():
    images = np.array([[0.3, 1.0, 0.1], [0.3, 2.0, 0.1], [0.3, 4.0, 0.1]])
    centered, mean = mean_center(images)
    assert mean[0] == 0.3 and mean[2] == 0.1
    assert np.array_equal(centered[:, [0, 2]], np.zeros((3, 2)))
    assert centered[:, 1].sum() == pytest.approx(0.0, abs=1e-12)


def test_mean_center_rejects_empty():
    with pytest.raises(ShapeError):
        mean_center(np.zeros((0, 3)))


def test_collinear_images():
    model = fit_project([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]], j=2)
    root2 = np.sqrt(2.0)
    assert np.allclose(np.abs(model.coords[:, 0]), [root2, 0.0, root2], atol=1e-10)
    assert model.coords[0, 0] * model.coords[2, 0] < 0
    assert np.allclose(model.coords[:, 1], 0.0, atol=1e-10)


def test_full_rank_reconstruction():
    images = np.random.default_rng(1).normal(size=(6, 4))
    model = fit_project(images, j=4)
    centered, _ = mean_center(images)
    assert np.linalg.norm(centered - model.coords @ model.components.T) <= 1e-8
    assert np.sum(model.explained_variance_ratio()) == pytest.approx(1.0, abs=1e-10)


def test_scores_ordered_and_uncorrelated():
    model = fit_project(np.random.default_rng(2).normal(size=(20, 50)), j=3)
    variances = model.coords.var(axis=0)
    assert variances[0] >= variances[1] >= variances[2]
    gram = model.coords.T @ model.coords
    off = gram - np.diag(np.diag(gram))
    assert np.max(np.abs(off)) <= 1e-8 * np.max(np.diag(gram))
    assert np.max(np.abs(model.components.T @ model.components - np.eye(3))) <= 1e-8
    assert np.sum(model.singular_values ** 2) <= model.total_variance + 1e-9


def test_translation_invariance():
    images = np.random.default_rng(3).normal(size=(10, 8))
    shifted = images + np.linspace(-2.0, 5.0, 8)
    assert np.allclose(fit_project(images).coords, fit_project(shifted).coords, atol=1e-8)


def test_project_new():
    images = np.random.default_rng(4).normal(size=(9, 5))
    model = fit_project(images, j=2)
    assert np.allclose(project_new(model, model.mean), 0.0, atol=1e-12)
    assert np.allclose(project_new(model, model.mean + model.components[:, 0]), [1.0, 0.0], atol=1e-10)
    for i in range(images.shape[0]):
        assert np.allclose(project_new(model, images[i]), model.coords[i], atol=1e-8)
    with pytest.raises(ShapeError):
        project_new(model, np.zeros(4))


def test_fit_project_preconditions():
    with pytest.raises(ShapeError):
        fit_project(np.ones((1, 4)))
    with pytest.raises(ValueError):
        fit_project(np.ones((3, 2)), j=3)
    with pytest.raises(ValueError):
        fit_project(np.ones((3, 2)), j=0)


def test_write_coords_round_trips(tmp_path):
    model = fit_project(np.random.default_rng(5).normal(size=(7, 3)))
    path = tmp_path / "coords.csv"
    write_coords(model, str(path))
    assert path.read_text().splitlines()[0] == "index,x,y"
    frame = pd.read_csv(path, float_precision="round_trip")
    assert list(frame["index"]) == list(range(7))
    assert np.array_equal(frame[["x", "y"]].to_numpy(), model.coords[:, :2])
