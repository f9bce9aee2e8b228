"""Input checks shared by the estimators and the CLI."""

from __future__ import annotations

import numpy as np

from .data import TimeSeriesDataset


def check_series(X, min_timepoints: int = 3) -> np.ndarray:
    """Return ``X`` as a finite float64 ``(subjects, nodes, time)`` array."""
    if isinstance(X, TimeSeriesDataset):
        return X.series
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    if X.ndim != 3:
        raise ValueError(f"expected a (subjects, nodes, time) array, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError("X has no subjects or no nodes")
    if X.shape[2] < min_timepoints:
        raise ValueError(f"series have {X.shape[2]} time points; need at least {min_timepoints}")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or infinite values")
    return X


def check_binary_labels(y, n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    """Encode ``y`` as 0/1; returns ``(encoded, classes)``."""
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != n_samples:
        raise ValueError(f"y must be 1-D with {n_samples} entries, got shape {y.shape}")
    classes, encoded = np.unique(y, return_inverse=True)
    if classes.size != 2:
        raise ValueError(f"binary classification needs exactly 2 classes, found {classes.size}")
    return encoded.astype(int), classes


def as_dataset(X, y=None, prefix: str = "s") -> TimeSeriesDataset:
    if isinstance(X, TimeSeriesDataset):
        return X
    X = check_series(X)
    width = len(str(max(X.shape[0] - 1, 0)))
    return TimeSeriesDataset(ids=[f"{prefix}{i:0{width}d}" for i in range(X.shape[0])], series=X, labels=y)
