"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np


def as_float_array(a, name: str = "array") -> np.ndarray:
    """Coerce to a float64 ndarray, rejecting non-finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def as_image(a, name: str = "image") -> np.ndarray:
    """Coerce to a finite, square 2-D float64 image."""
    arr = as_float_array(a, name)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square 2-D array, got shape {arr.shape}")
    return arr


def check_positive(value: float, name: str) -> None:
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
