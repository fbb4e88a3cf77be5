"""Dense vector/matrix primitives and the finite-difference gradient oracle.

These are the only numerical building blocks the losses and the encoder are
allowed to rely on. Everything here is a pure function over immutable inputs
and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .exceptions import DegenerateInputError, InsufficientSamplesError
from .validation import as_matrix, as_vector, same_length

# Norms at or below this floor are treated as degenerate rather than scored.
NORM_FLOOR = 1e-12

# Coordinates where both gradients are below this magnitude are compared
# absolutely: the relative error of two near-zero finite-difference reads is
# dominated by round-off and carries no signal.
GRAD_REL_FLOOR = 1e-6


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1].

    Raises:
        DegenerateInputError: either vector has norm <= 1e-12. A zero-norm
            embedding is a bug upstream and must never score silently as 0.
    """
    a = as_vector(a, "a")
    b = as_vector(b, "b")
    same_length(a, b)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise DegenerateInputError(
            f"cosine undefined for near-zero vector (norms {na:.3e}, {nb:.3e})"
        )
    value = float(np.dot(a, b) / (na * nb))
    return min(1.0, max(-1.0, value))


def covariance(rows) -> np.ndarray:
    """Unbiased sample covariance of stacked row vectors.

    Each row is one observation (here: one embedding). Uses the n-1 divisor.

    Raises:
        InsufficientSamplesError: fewer than 2 rows.
    """
    x = as_matrix(rows, "rows")
    n = x.shape[0]
    if n < 2:
        raise InsufficientSamplesError(f"covariance needs >= 2 rows, got {n}")
    centered = x - x.mean(axis=0)
    return centered.T @ centered / (n - 1)


def frobenius_sq(m) -> float:
    """Sum of squared entries of a matrix."""
    x = as_matrix(m, "m")
    return float(np.sum(x * x))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], p, h: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function at parameter vector p.

    This is the single source of truth every analytic gradient in the package
    is tested against.

    Args:
        f: scalar-valued function of a 1-D parameter vector.
        p: point at which to differentiate.
        h: step size, must be > 0.

    Raises:
        DegenerateInputError: f returned a non-finite value at a probe point.
    """
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    p = as_vector(p, "p")
    grad = np.empty_like(p)
    probe = p.copy()
    for i in range(p.size):
        probe[i] = p[i] + h
        up = float(f(probe))
        probe[i] = p[i] - h
        down = float(f(probe))
        probe[i] = p[i]
        if not (np.isfinite(up) and np.isfinite(down)):
            raise DegenerateInputError(
                f"non-finite function value near coordinate {i}: f+={up}, f-={down}"
            )
        grad[i] = (up - down) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class GradCheckReport:
    """Outcome of comparing an analytic gradient against finite differences."""

    max_rel_err: float
    max_abs_err: float
    param_count: int

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_err <= tol


def compare_gradients(analytic, numeric) -> GradCheckReport:
    """Elementwise comparison of two gradient vectors.

    Relative error uses max(|a|, |n|) as the denominator; coordinates where
    both magnitudes are below GRAD_REL_FLOOR contribute only to the absolute
    error (their relative error is round-off noise).
    """
    a = as_vector(analytic, "analytic")
    n = as_vector(numeric, "numeric")
    same_length(a, n, "gradients")
    abs_err = np.abs(a - n)
    denom = np.maximum(np.abs(a), np.abs(n))
    mask = denom > GRAD_REL_FLOOR
    max_rel = float(np.max(abs_err[mask] / denom[mask])) if np.any(mask) else 0.0
    return GradCheckReport(
        max_rel_err=max_rel,
        max_abs_err=float(np.max(abs_err)),
        param_count=int(a.size),
    )


def check_gradient(
    f: Callable[[np.ndarray], float],
    analytic,
    p,
    h: float = 1e-5,
) -> GradCheckReport:
    """Convenience: finite-difference f at p and compare with `analytic`."""
    return compare_gradients(analytic, finite_diff_grad(f, p, h=h))
