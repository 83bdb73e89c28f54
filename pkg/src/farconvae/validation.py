"""Input validation helpers for the estimator API."""

from __future__ import annotations

import numpy as np

__all__ = ["check_matrix", "check_binary", "check_consistent_length"]


def check_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 2-D array with at least one row and column."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise ValueError(f"{name} must be non-empty, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinity")
    return X


def check_binary(v, name: str = "y") -> np.ndarray:
    """Coerce to a flat array of 0/1 values (bool, int, or float input)."""
    v = np.asarray(v)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v.reshape(-1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {v.shape}")
    v = v.astype(np.float64)
    if not np.all((v == 0.0) | (v == 1.0)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return v


def check_consistent_length(**named_arrays) -> int:
    lengths = {name: len(arr) for name, arr in named_arrays.items()}
    distinct = set(lengths.values())
    if len(distinct) != 1:
        raise ValueError(f"inconsistent row counts: {lengths}")
    return distinct.pop()
