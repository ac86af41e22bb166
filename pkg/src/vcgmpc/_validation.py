"""Input validation helpers for matrices and state vectors."""

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DegeneracyError, InvalidParameterError

PSD_TOL = 1e-10


def as_matrix(a, name="matrix"):
    """Return ``a`` as a 2-d float array, promoting scalars to 1x1."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise InvalidParameterError(f"{name} must be 2-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return arr


def check_square(a, name="matrix"):
    arr = as_matrix(a, name)
    if arr.shape[0] != arr.shape[1]:
        raise InvalidParameterError(f"{name} must be square, got shape {arr.shape}")
    return arr


def symmetrize(a):
    return 0.5 * (a + a.T)


def min_eig(a):
    return float(np.linalg.eigvalsh(symmetrize(a))[0])


def check_symmetric(a, name="matrix", rtol=1e-9):
    arr = check_square(a, name)
    scale = max(1.0, float(np.max(np.abs(arr))))
    if np.max(np.abs(arr - arr.T)) > rtol * scale:
        raise InvalidParameterError(f"{name} is not symmetric")
    return symmetrize(arr)


def check_psd(a, name="matrix", tol=PSD_TOL):
    arr = check_symmetric(a, name)
    if arr.size and min_eig(arr) < -tol * max(1.0, float(np.max(np.abs(arr)))):
        raise InvalidParameterError(f"{name} is not positive semidefinite")
    return arr


def check_pd(a, name="matrix"):
    arr = check_symmetric(a, name)
    if arr.size == 0 or min_eig(arr) <= 0.0:
        raise InvalidParameterError(f"{name} is not positive definite")
    return arr


def check_vector(x, size, name="x"):
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.shape[0] != size:
        raise InvalidParameterError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite entries")
    return arr


def generalized_eigvalsh(a, b):
    """Eigenvalues of the symmetric pencil ``a v = lambda b v`` with ``b`` PD.

    Reduced to a standard symmetric problem by congruence with the Cholesky
    factor of ``b``. Returned in ascending order.
    """
    a = symmetrize(np.asarray(a, dtype=float))
    b = symmetrize(np.asarray(b, dtype=float))
    try:
        L = np.linalg.cholesky(b)
    except np.linalg.LinAlgError as exc:
        raise DegeneracyError("pencil matrix is not positive definite") from exc
    tmp = solve_triangular(L, a, lower=True)
    c = solve_triangular(L, tmp.T, lower=True)
    return np.linalg.eigvalsh(symmetrize(c))
