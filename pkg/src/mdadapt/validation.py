"""Input validation helpers.

All public entry points funnel array-likes through these checks so that the
numerical core can assume finite float64 data of the right shape.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError


def as_vector(x, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array.

    Raises:
        ShapeError: not 1-D, empty, or containing NaN/Inf.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"{name} must not be empty")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def as_matrix(x, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array.

    Raises:
        ShapeError: not 2-D or containing NaN/Inf.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{name} contains non-finite entries")
    return arr


def as_rows(x, dim: int | None = None, name: str = "rows") -> np.ndarray:
    """Coerce a sequence of equal-length vectors to an (n, d) float64 array.

    Args:
        x: 2-D array-like or sequence of 1-D vectors.
        dim: if given, require exactly this many columns.
        name: label used in error messages.
    """
    arr = as_matrix(x, name=name)
    if dim is not None and arr.shape[1] != dim:
        raise ShapeError(f"{name} must have {dim} columns, got {arr.shape[1]}")
    return arr


def same_length(a: np.ndarray, b: np.ndarray, what: str = "vectors") -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what} must have equal shape: {a.shape} vs {b.shape}")
