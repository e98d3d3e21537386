"""Dense complex linear algebra for the PHY pipeline.

All routines operate on numpy complex128 arrays (row-major). Matrices in
this simulator are small (at most a few hundred entries), so numpy/LAPACK
through scipy is more than sufficient; the value added here is shape
validation and explicit singularity detection.
"""

import warnings

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgWarning

PIVOT_TOL = 1e-12


class SingularMatrixError(ValueError):
    """Raised when a linear system is numerically singular (pivot < tol)."""


def as_cmatrix(a) -> np.ndarray:
    """Coerce to a 2-D complex128 array."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def conj_transpose(a) -> np.ndarray:
    return as_cmatrix(a).conj().T


def hadamard(a, b) -> np.ndarray:
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape != b.shape:
        raise ValueError(
            f"hadamard dimension mismatch: {a.shape} vs {b.shape}")
    return a * b


def diag_from_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1:
        raise ValueError(f"expected a vector, got ndim={v.ndim}")
    return np.diag(v)


def solve_regularized(a, b, sigma2: float = 0.0) -> np.ndarray:
    """Solve X (a + sigma2*I) = b via partial-pivot LU.

    Right-division: X = b (a + sigma2*I)^{-1}. `a` must be square and
    `sigma2` nonnegative. Raises SingularMatrixError when any U pivot of
    the LU factorization falls below PIVOT_TOL in magnitude.
    """
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"coefficient matrix must be square, got {a.shape}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    if b.shape[1] != a.shape[0]:
        raise ValueError(
            f"solve dimension mismatch: {b.shape} vs {a.shape}")
    m = a + sigma2 * np.eye(a.shape[0], dtype=np.complex128)
    # X m = b  <=>  m^T X^T = b^T
    with warnings.catch_warnings():
        # exact-zero pivots are reported via SingularMatrixError below
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m.T, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if pivots.min(initial=np.inf) < PIVOT_TOL:
        raise SingularMatrixError(
            f"singular system: pivot magnitude {pivots.min():.3e} < {PIVOT_TOL}")
    x = scipy.linalg.lu_solve((lu, piv), b.T, check_finite=False)
    return x.T
