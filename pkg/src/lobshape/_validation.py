"""Input coercion shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array


def check_series(x, *, name: str = "series", min_length: int = 1) -> np.ndarray:
    """Coerce to a finite 1-D float array."""
    arr = check_array(x, ensure_2d=False, dtype=np.float64, input_name=name)
    if arr.ndim != 1:
        if arr.ndim == 2 and 1 in arr.shape:
            arr = arr.ravel()
        else:
            raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} values, got {arr.size}")
    return arr


def split_positive(x, *, name: str = "values") -> tuple[np.ndarray, int]:
    """Drop zeros (which have no logarithm) and report how many went.

    Negative values are an error, not a drop.
    """
    arr = check_series(x, name=name, min_length=0) if np.size(x) else np.zeros(0)
    if np.any(arr < 0):
        raise ValueError(f"{name} must be non-negative")
    keep = arr > 0
    return arr[keep], int(arr.size - keep.sum())


def check_range(fit_range, *, name: str = "fit_range") -> tuple[float, float]:
    if fit_range is None:
        raise ValueError(f"{name} is required")
    lo, hi = fit_range
    lo, hi = float(lo), float(hi)
    if not lo < hi:
        raise ValueError(f"{name} must satisfy lo < hi, got ({lo}, {hi})")
    return lo, hi
