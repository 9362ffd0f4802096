"""Dense linear-algebra kernels used throughout the package.

Matrices are plain ``numpy.ndarray`` objects of dtype float64.  The helpers
here add the validation the rest of the package relies on (finite entries,
squareness) and fix the tolerance conventions for the definiteness and
Hurwitz tests.
"""

import numpy as np
import scipy.linalg

__all__ = [
    "as_matrix",
    "kron",
    "kron_power",
    "expm",
    "eigenvalues",
    "spectral_abscissa",
    "spectral_radius",
    "is_hurwitz",
    "is_negative_semidefinite",
    "sym",
    "lyapunov_form",
    "DEFAULT_HURWITZ_TOL",
    "DEFAULT_DEFINITENESS_TOL",
]

DEFAULT_HURWITZ_TOL = 1e-9
DEFAULT_DEFINITENESS_TOL = 1e-9


def as_matrix(m, *, square=False, name="matrix"):
    """Return `m` as a finite 2-D float array, validating shape.

    Vectors are accepted and returned as column matrices.
    """
    arr = np.array(m, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if square and arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be square, got shape {arr.shape}")
    return arr


def kron(a, b):
    """Kronecker product of two matrices."""
    return np.kron(as_matrix(a, name="a"), as_matrix(b, name="b"))


def kron_power(m, i):
    """Return the `i`-th Kronecker power ``m ⊗ m ⊗ ... ⊗ m``.

    Built as ``m ⊗ kron_power(m, i - 1)``; a 1-D input is treated as a
    column vector.
    """
    if int(i) != i or i < 1:
        raise ValueError(f"Kronecker power needs an integer i >= 1, got {i}")
    m = as_matrix(m)
    out = m
    for _ in range(int(i) - 1):
        out = np.kron(m, out)
    return out


def expm(m, t=1.0):
    """Matrix exponential ``exp(m * t)``.

    Uses scipy's scaling-and-squaring Padé implementation.  Raises
    ``OverflowError`` instead of returning infinite entries.
    """
    m = as_matrix(m, square=True)
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    with np.errstate(over="ignore", invalid="ignore"):
        out = scipy.linalg.expm(m * t)
    if not np.all(np.isfinite(out)):
        raise OverflowError(f"matrix exponential overflowed at t={t}")
    return out


def eigenvalues(m):
    """Full complex spectrum of a square matrix.

    ``numpy.linalg.LinAlgError`` is raised if the QR iteration does not
    converge.
    """
    return np.linalg.eigvals(as_matrix(m, square=True))


def spectral_abscissa(m):
    return float(np.max(eigenvalues(m).real))


def spectral_radius(m):
    return float(np.max(np.abs(eigenvalues(m))))


def is_hurwitz(m, tol=DEFAULT_HURWITZ_TOL):
    """True iff every eigenvalue of `m` has real part below ``-tol``."""
    return spectral_abscissa(m) < -tol


def sym(m):
    return 0.5 * (m + m.T)


def is_negative_semidefinite(m, tol=DEFAULT_DEFINITENESS_TOL):
    """True iff the largest eigenvalue of ``(m + m.T) / 2`` is at most `tol`."""
    m = as_matrix(m, square=True)
    return float(np.linalg.eigvalsh(sym(m))[-1]) <= tol


def lyapunov_form(m, p):
    """Return the symmetric matrix ``m.T @ p + p @ m``."""
    out = m.T @ p + p @ m
    return sym(out)
