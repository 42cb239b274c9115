"""Shared input checks."""

from __future__ import annotations

import numpy as np


class DimensionError(ValueError):
    """Array shapes are inconsistent with each other or with a configuration."""


def check_same_shape(*arrays, names=None):
    shapes = [np.shape(a) for a in arrays]
    if any(s != shapes[0] for s in shapes[1:]):
        label = ", ".join(names) if names else "inputs"
        raise DimensionError(f"{label} have mismatched shapes {shapes}")


def check_matrix(arr, name="array", n_cols=None, finite=True) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if n_cols is not None and arr.shape[1] != n_cols:
        raise DimensionError(f"{name} has {arr.shape[1]} columns, expected {n_cols}")
    if finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
