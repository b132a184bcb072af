"""Input validation helpers shared by the estimators and solvers."""

from __future__ import annotations

import numbers

import numpy as np
import scipy.sparse as sp

__all__ = [
    "NotConvexError",
    "InfeasibleError",
    "check_positive",
    "check_count",
    "check_vector",
    "check_square",
    "check_symmetric",
    "check_pd",
    "check_unit_interval",
    "check_random_state",
    "as_dense",
]


class NotConvexError(ValueError):
    """A matrix that must be positive (semi)definite is not."""


class InfeasibleError(RuntimeError):
    """A constraint system admits no point."""


def check_positive(value, name: str, strict: bool = True) -> float:
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real number, got {value!r}")
    if (strict and value <= 0) or (not strict and value < 0):
        raise ValueError(f"{name} must be {'>' if strict else '>='} 0, got {value!r}")
    return float(value)


def check_count(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_vector(x, name: str, size: int | None = None) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_square(M, name: str, size: int | None = None) -> np.ndarray:
    arr = np.asarray(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise ValueError(f"{name} must be {size}x{size}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_symmetric(M, name: str, tol: float = 0.0) -> np.ndarray:
    arr = check_square(M, name)
    scale = max(1.0, float(np.abs(arr).max(initial=0.0)))
    if np.abs(arr - arr.T).max(initial=0.0) > tol * scale:
        raise ValueError(f"{name} must be symmetric")
    return arr


def check_pd(M, name: str, min_eig: float = 0.0) -> np.ndarray:
    """Accept a symmetric positive definite matrix, or a positive 1-D diagonal.

    A 1-D array is interpreted as the diagonal of a diagonal matrix and is
    returned unchanged.
    """
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        if not np.all(np.isfinite(arr)) or np.any(arr <= min_eig):
            raise NotConvexError(f"{name} diagonal must be > {min_eig}")
        return arr
    arr = check_symmetric(arr, name, tol=1e-12)
    lam = np.linalg.eigvalsh(arr)[0]
    if lam <= min_eig:
        raise NotConvexError(f"{name} is not positive definite (min eigenvalue {lam:.3e})")
    return arr


def check_unit_interval(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError(f"{name} entries must lie in [0, 1]")
    return arr


def check_random_state(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def as_dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)
