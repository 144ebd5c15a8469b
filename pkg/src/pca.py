"""
Principal component projection of stacked images.

Images arrive as rows of an N x P matrix. The mean image is subtracted and the
centered matrix is factored with numerics.svd; each image's position in the
principal subspace is its row of U scaled by the singular values.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd
import structlog

from .config import DEFAULT_PCA_COMPONENTS
from .errors import ShapeError
from .numerics import as_matrix, svd

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray
    coords: np.ndarray
    total_variance: float

    @property
    def n_components(self):
        return self.components.shape[1]

    def explained_variance_ratio(self):
        """
        Share of the centered matrix's squared Frobenius norm carried by each component.

        Returns:
            np.ndarray: One ratio per retained component
        """
        if self.total_variance == 0.0:
            return np.zeros_like(self.singular_values)
        return np.square(self.singular_values) / self.total_variance


def mean_center(images):
    """
    Subtracts the column-wise mean image from every row.

    Args:
        images (array-like): N x P matrix, one flattened image per row

    Returns:
        tuple: (centered N x P matrix, mean vector of length P)
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 2 or images.shape[0] < 1:
        raise ShapeError(f"mean_center needs a non-empty N x P matrix, got shape {images.shape}")
    images = as_matrix(images, "images")
    # constant columns take their value directly so they center to exact zeros
    mean = np.where(np.ptp(images, axis=0) == 0.0, images[0], images.mean(axis=0))
    return images - mean, mean


def fit_project(images, j=DEFAULT_PCA_COMPONENTS):
    """
    Fits PCA and projects every image onto the leading j components.

    Args:
        images (array-like): N x P matrix, N >= 2
        j (int): Number of components to retain, 1 <= j <= min(N, P)

    Returns:
        PcaModel: Mean, components (P x j), singular values (j,), coords (N x j)
    """
    images = as_matrix(images, "images")
    n, p = images.shape
    if n < 2:
        raise ShapeError(f"fit_project needs at least 2 images, got {n}")
    if not 1 <= j <= min(n, p):
        raise ValueError(f"j must be in [1, {min(n, p)}], got {j}")

    centered, mean = mean_center(images)
    result = svd(centered)
    coords = result.u[:, :j] * result.sigma[:j]
    model = PcaModel(
        mean=mean,
        components=result.v[:, :j].copy(),
        singular_values=result.sigma[:j].copy(),
        coords=coords,
        total_variance=float(np.sum(np.square(centered))),
    )
    logger.info(
        "pca_fitted",
        images=n,
        pixels=p,
        components=j,
        explained=[round(float(r), 4) for r in model.explained_variance_ratio()],
    )
    return model


def project_new(model, image):
    """
    Projects an out-of-sample image into the fitted subspace.

    Args:
        model (PcaModel): Fitted model
        image (array-like): Flattened image of length P

    Returns:
        np.ndarray: Coordinates of length j
    """
    image = np.asarray(image, dtype=np.float64).ravel()
    if image.shape[0] != model.mean.shape[0]:
        raise ShapeError(f"image length {image.shape[0]} does not match model length {model.mean.shape[0]}")
    return (image - model.mean) @ model.components


def coords_frame(model):
    coords = model.coords
    y = coords[:, 1] if coords.shape[1] > 1 else np.zeros(coords.shape[0])
    return pd.DataFrame({"index": np.arange(coords.shape[0]), "x": coords[:, 0], "y": y})


def write_coords(model, path):
    """
    Writes the `index,x,y` coordinate table.

    Args:
        model (PcaModel): Fitted model
        path (str): Destination CSV path
    """
    coords_frame(model).to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
