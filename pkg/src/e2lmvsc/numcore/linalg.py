"""Dense linear algebra helpers (float64 throughout)."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..errors import AsymmetricInput, NoConvergence, NotPositiveDefinite, ShapeMismatch

SYM_TOL = 1e-10


def as_matrix(a, name="matrix"):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatch(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    return m


def check_symmetric(A, tol=SYM_TOL, name="matrix"):
    A = as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise ShapeMismatch(f"{name} must be square, got {A.shape}")
    if A.size and np.max(np.abs(A - A.T)) > tol:
        raise AsymmetricInput(f"{name} is not symmetric within {tol:g}")
    return A


def cholesky_lower(A):
    """Lower Cholesky factor of an SPD matrix; raises NotPositiveDefinite."""
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0.0):
        raise NotPositiveDefinite("non-positive Cholesky pivot")
    return L


def cholesky_logdet(A) -> float:
    """Natural log-determinant of a symmetric positive-definite matrix."""
    A = check_symmetric(A)
    L = cholesky_lower(A)
    return float(2.0 * np.sum(np.log(np.diag(L))))


def spd_inverse(A):
    """Inverse of an SPD matrix via Cholesky solves."""
    c = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(c, np.eye(A.shape[0]), check_finite=False)


def sym_eig_smallest(A, k: int):
    """The ``k`` algebraically smallest eigenpairs of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors as unit-norm columns. Each eigenvector's sign is fixed so
    that its largest-magnitude entry is positive.
    """
    A = check_symmetric(A)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ShapeMismatch(f"k must lie in [1, {n}], got {k}")
    A = 0.5 * (A + A.T)
    try:
        w, V = scipy.linalg.eigh(A, subset_by_index=[0, k - 1], driver="evr")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise NoConvergence(f"eigensolver failed: {exc}") from None
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    pivot = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[pivot, np.arange(k)])
    signs[signs == 0] = 1.0
    V = V * signs

    scale = max(np.linalg.norm(A), 1.0)
    residuals = np.linalg.norm(A @ V - V * w, axis=0)
    if np.any(residuals > 1e-8 * scale):
        raise NoConvergence("eigenpair residual above 1e-8*||A||_F", residuals=residuals)
    return w, V


def softmax_rows(M):
    """Row-wise softmax with per-row max subtraction."""
    M = np.asarray(M, dtype=np.float64)
    z = M - np.max(M, axis=1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=1, keepdims=True)


def log_softplus_inverse(y: float) -> float:
    """x such that softplus(x) == y (y > 0)."""
    return float(np.log(np.expm1(y)))
