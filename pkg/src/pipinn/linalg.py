"""Dense float64 linear algebra for the regularized normal equations.

The head solve works on the small ``cols x cols`` gram system rather than a
QR of the tall constraint matrix.  Factorizations that hit a non-positive
pivot are reported, never silently jittered.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import DimensionMismatch, NotPositiveDefinite


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.size == 0:
        raise DimensionMismatch(f"expected a nonempty 2-d matrix, got shape {X.shape}")
    return X


def gram(X) -> np.ndarray:
    """Return ``X.T @ X`` with exact symmetry."""
    X = _as_matrix(X)
    G = X.T @ X
    return 0.5 * (G + G.T)


def cholesky(A) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    Raises NotPositiveDefinite when a pivot is not strictly positive.
    """
    A = _as_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"matrix must be square, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        L = scipy.linalg.cholesky(A, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.diag(L) > 0.0):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    return L


def cho_solve(L: np.ndarray, b) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    return scipy.linalg.cho_solve((L, True), b, check_finite=False)


def spd_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` for symmetric positive-definite ``A``."""
    b = np.asarray(b, dtype=np.float64)
    L = cholesky(A)
    if b.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"rhs length {b.shape[0]} != matrix size {L.shape[0]}")
    return cho_solve(L, b)


def ridge_system(X, y, lambda_pi: float):
    """Return ``(lambda_pi*I + X^T X, X^T y)``."""
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[0]} rows but y has length {y.shape[0]}")
    if lambda_pi < 0:
        raise ValueError("lambda_pi must be nonnegative")
    A = gram(X)
    A[np.diag_indices_from(A)] += lambda_pi
    return A, X.T @ y


def ridge_factor(X, y, lambda_pi: float):
    """Solve the ridge normal equations and keep the factor for adjoint reuse.

    Returns ``(w, L)`` with ``L`` the lower Cholesky factor of
    ``lambda_pi*I + X^T X``.
    """
    A, rhs = ridge_system(X, y, lambda_pi)
    L = cholesky(A)
    return cho_solve(L, rhs), L


def ridge_solve(X, y, lambda_pi: float = 0.0) -> np.ndarray:
    """Head weights ``w`` solving ``(lambda_pi*I + X^T X) w = X^T y``."""
    return ridge_factor(X, y, lambda_pi)[0]
