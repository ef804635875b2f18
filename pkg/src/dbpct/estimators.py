"""Scikit-learn style estimators wrapping the reconstruction pipeline.

``FilteredBackProjection`` is a stateless transformer; ``DeepBackProjection``
is fit on (sinogram, clean image) pairs and then reconstructs unseen
sinograms.  Both operate on stacked arrays so they compose with the usual
sklearn tooling (``get_params``, ``set_params``, ``clone``).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .pipeline import SplitManifest, TrainConfig, reconstruct_dbp, train
from .projection import ProjectionGeometry, Sinogram, build_bp_tensor, fbp, uniform_angles

__all__ = ["FilteredBackProjection", "DeepBackProjection"]


def _as_sino_stack(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None, :, :]
    if X.ndim != 3:
        raise ValueError(
            f"expected sinograms of shape (n_scans, channels, views), got {X.shape}"
        )
    return X


class FilteredBackProjection(TransformerMixin, BaseEstimator):
    """Classical FBP as a transformer from sinograms to images.

    Parameters
    ----------
    image_size : side length of the reconstruction grid; defaults to the
        sinogram channel count.
    angles : explicit view angles; defaults to the uniform sparse-view
        protocol ``j * pi / views``.
    """

    def __init__(self, image_size=None, angles=None):
        self.image_size = image_size
        self.angles = angles

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        X = _as_sino_stack(X)
        n_c = X.shape[1]
        size = self.image_size if self.image_size is not None else n_c
        geometry = ProjectionGeometry(image_size=size, channels=n_c)
        angles = (np.asarray(self.angles, dtype=np.float64)
                  if self.angles is not None else uniform_angles(X.shape[2]))
        out = np.empty((X.shape[0], size, size))
        for i in range(X.shape[0]):
            out[i] = fbp(Sinogram(data=X[i], angles=angles), geometry)
        return out


class DeepBackProjection(BaseEstimator):
    """Learned reconstructor: back project each view separately, then map
    the stack to the clean image with a trained CNN.

    ``fit(X, y)`` takes sinograms ``X`` of shape (n_scans, channels, views)
    and clean images ``y`` of shape (n_scans, n, n); ``predict(X)`` returns
    reconstructed images.  All fitting hyperparameters mirror
    :class:`dbpct.pipeline.TrainConfig`.
    """

    def __init__(self, epochs=15, batch_size=64, patches_per_scan=250,
                 depth=5, width=32, lr_start=1e-3, lr_end=1e-5,
                 angles=None, random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.patches_per_scan = patches_per_scan
        self.depth = depth
        self.width = width
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.angles = angles
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            patches_per_scan=self.patches_per_scan,
            depth=self.depth,
            width=self.width,
            lr_start=self.lr_start,
            lr_end=self.lr_end,
            seed=self.random_state,
        )

    def _angles(self, views: int) -> np.ndarray:
        if self.angles is not None:
            return np.asarray(self.angles, dtype=np.float64)
        return uniform_angles(views)

    def fit(self, X, y):
        X = _as_sino_stack(X)
        y = np.asarray(y, dtype=np.float64)
        if y.ndim != 3 or y.shape[0] != X.shape[0]:
            raise ValueError(
                f"targets must be (n_scans, n, n) matching X, got {y.shape}"
            )
        angles = self._angles(X.shape[2])
        geometry = ProjectionGeometry(image_size=y.shape[1], channels=X.shape[1])
        tensors = [
            build_bp_tensor(Sinogram(data=X[i], angles=angles), geometry)
            for i in range(X.shape[0])
        ]
        manifest = SplitManifest(train_ids=tuple(range(X.shape[0])), test_ids=())
        self.model_, self.log_ = train(tensors, list(y), manifest, self._config())
        self.geometry_ = geometry
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "model_")
        X = _as_sino_stack(X)
        angles = self._angles(X.shape[2])
        n = self.geometry_.image_size
        out = np.empty((X.shape[0], n, n))
        for i in range(X.shape[0]):
            sino = Sinogram(data=X[i], angles=angles)
            out[i] = reconstruct_dbp(sino, self.model_, self.geometry_)
        return out
