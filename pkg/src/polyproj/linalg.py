"""Dense kernels: rank-revealing QR, orthogonal-complement projector,
minimum-norm least squares.

Matrices are plain 2-D float64 ``numpy`` arrays.  The pivoted QR is LAPACK's
``geqp3`` (Householder reflections with column pivoting) through scipy.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError

DEFAULT_RANK_TOL = 1e-10


def as_matrix(h, name="matrix", cols=None):
    """Coerce ``h`` to a finite 2-D float array.

    ``cols`` fixes the column count for inputs that may be empty (0 rows).
    """
    arr = np.asarray(h, dtype=float)
    if arr.size == 0 and cols is not None:
        return np.zeros((0, cols))
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise InputError(f"{name} must have {cols} columns, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


def as_vector(v, name="vector", size=None):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {arr.shape}")
    if size is not None and arr.shape[0] != size:
        raise InputError(f"{name} must have length {size}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class QrFactorization:
    """``h[:, pivot] = q1 @ r`` truncated to the numerical rank.

    ``q1`` is rows x rank with orthonormal columns; ``r`` is rank x cols,
    upper trapezoidal.
    """

    q1: np.ndarray
    r: np.ndarray
    pivot: np.ndarray
    rank: int

    @property
    def rows(self):
        return self.q1.shape[0]

    @classmethod
    def empty(cls, rows):
        """Factorization of a rows x 0 matrix (its range is {0})."""
        return cls(np.zeros((rows, 0)), np.zeros((0, 0)),
                   np.zeros(0, dtype=int), 0)


def qr_pivoted(h, rank_tol=DEFAULT_RANK_TOL):
    h = as_matrix(h, "h")
    if h.shape[0] == 0 or h.shape[1] == 0:
        raise InputError(f"qr_pivoted needs a non-empty matrix, got {h.shape}")
    if not rank_tol > 0:
        raise InputError("rank_tol must be positive")
    q, r, piv = scipy.linalg.qr(h, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        rank = 0
    else:
        rank = int(np.count_nonzero(diag > rank_tol * diag[0]))
    return QrFactorization(q[:, :rank].copy(), r[:rank, :].copy(), piv, rank)


def orth_complement_apply(f, v):
    """Return ``(I - q1 q1^T) v``."""
    v = as_vector(v, "v", f.rows)
    if f.rank == 0:
        return v.copy()
    return v - f.q1 @ (f.q1.T @ v)


def lstsq_min_norm(h, r, rank_tol=DEFAULT_RANK_TOL):
    """Minimum-norm minimizer of ``||h z - r||``.

    Uses a complete orthogonal decomposition: pivoted QR of ``h`` followed by
    a QR of the (full row rank) triangular factor's transpose.  Returns
    ``(z, residual_norm)``.
    """
    h = as_matrix(h, "h")
    r = as_vector(r, "r", h.shape[0])
    cols = h.shape[1]
    if h.shape[0] == 0 or cols == 0:
        return np.zeros(cols), float(np.linalg.norm(r))
    f = qr_pivoted(h, rank_tol)
    z = np.zeros(cols)
    if f.rank > 0:
        c = f.q1.T @ r
        # r_k is rank x cols with full row rank: min-norm solve via QR of r_k^T
        zq, tq = np.linalg.qr(f.r.T)
        w = scipy.linalg.solve_triangular(tq, c, trans="T")
        z[f.pivot] = zq @ w
    residual = float(np.linalg.norm(h @ z - r))
    return z, residual
