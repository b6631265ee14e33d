"""Small SPD-matrix helpers used throughout the package."""

import numpy as np

from .errors import DimensionMismatch, NotSPD

SYMMETRY_RTOL = 1e-12


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NotSPD("matrix has non-finite entries")
    return a


def check_spd(m, name: str = "matrix") -> np.ndarray:
    """Validate symmetry (relative tolerance 1e-12) and positive definiteness.

    Returns the symmetrized matrix; raises NotSPD otherwise.
    """
    a = as_matrix(m)
    scale = np.max(np.abs(a)) if a.size else 0.0
    if scale == 0.0:
        raise NotSPD(f"{name} is zero")
    if np.max(np.abs(a - a.T)) > SYMMETRY_RTOL * scale:
        raise NotSPD(f"{name} is not symmetric")
    a = 0.5 * (a + a.T)
    try:
        np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotSPD(f"{name} is not positive definite") from None
    return a


def is_spd(m) -> bool:
    try:
        check_spd(m)
    except (NotSPD, DimensionMismatch):
        return False
    return True


def spd_sqrt(m) -> np.ndarray:
    """Symmetric positive-definite square root."""
    a = check_spd(m)
    w, q = np.linalg.eigh(a)
    return (q * np.sqrt(w)) @ q.T


def spd_inv(m) -> np.ndarray:
    a = check_spd(m)
    w, q = np.linalg.eigh(a)
    return (q / w) @ q.T


def extreme_eigenvalues(m) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of a symmetric matrix."""
    w = np.linalg.eigvalsh(as_matrix(m))
    return float(w[0]), float(w[-1])
