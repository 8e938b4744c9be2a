"""Backward pass of the projection layer.

The computable element of the HS-Jacobian at x is the orthogonal projector
onto the complement of ``range([A_I^T B^T])`` where I is the active set of the
projected point.  It is held implicitly as an orthonormal basis ``q1`` of that
range, so ``J g = g - q1 (q1^T g)`` and J is never formed during training.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import InputError, SizeError
from .linalg import DEFAULT_RANK_TOL, QrFactorization, as_vector, qr_pivoted
from .qp import project

DENSE_MAX_N = 64
ENUMERATE_MAX_ACTIVE = 12


@dataclass(frozen=True)
class HsFactor:
    active: np.ndarray
    q1: np.ndarray
    rank: int
    n: int


@dataclass
class HsSet:
    # list of (K as tuple of indices, dense J_K)
    elements: list


def constraint_span(P, active):
    """``H = [A_I^T  B^T]`` for the index set ``active``."""
    active = np.asarray(active, dtype=int)
    cols = []
    if active.size:
        cols.append(P.a_mat[active].T)
    if P.l:
        cols.append(P.b_mat.T)
    if not cols:
        return np.zeros((P.n, 0))
    return np.hstack(cols)


def hs_element(P, result, rank_tol=DEFAULT_RANK_TOL):
    """Factor J(x) from the active set identified by the forward solve."""
    active = np.asarray(result.active, dtype=int)
    H = constraint_span(P, active)
    if H.shape[1] == 0:
        f = QrFactorization.empty(P.n)
    else:
        f = qr_pivoted(H, rank_tol)
    return HsFactor(active=active, q1=f.q1, rank=f.rank, n=P.n)


def vjp(f, g):
    g = as_vector(g, "g", f.n)
    if f.rank == 0:
        return g.copy()
    return g - f.q1 @ (f.q1.T @ g)


# J is symmetric, so the forward action is the same computation
jvp = vjp


def dense_jacobian(f):
    if f.n > DENSE_MAX_N:
        raise SizeError(f"refusing to materialise a {f.n}x{f.n} Jacobian")
    return np.eye(f.n) - f.q1 @ f.q1.T


def hs_enumerate(P, x, result, rank_tol=DEFAULT_RANK_TOL):
    """All ``J_K`` with ``K`` in the index family at x (test oracle).

    K is accepted when ``[A_K^T B^T]`` has full column rank and
    ``[A_K^T B^T] z = x - y`` has an exact solution whose A-part is
    nonnegative.  ``J_K`` is built from the explicit Gram inverse, a route
    independent of :func:`hs_element`.
    """
    x = as_vector(x, "x", P.n)
    active = np.asarray(result.active, dtype=int)
    if active.size > ENUMERATE_MAX_ACTIVE:
        raise SizeError(f"|I(x)| = {active.size} exceeds {ENUMERATE_MAX_ACTIVE}")
    rhs = x - result.y
    elements = []
    for size in range(active.size + 1):
        for K in itertools.combinations(active.tolist(), size):
            H = constraint_span(P, K)
            if H.shape[1] > P.n:
                continue
            if H.shape[1] == 0:
                if np.max(np.abs(rhs)) <= 1e-9:
                    elements.append((K, np.eye(P.n)))
                continue
            if qr_pivoted(H, rank_tol).rank < H.shape[1]:
                continue
            z, *_ = np.linalg.lstsq(H, rhs, rcond=None)
            if np.linalg.norm(H @ z - rhs) > 1e-9:
                continue
            if size and z[:size].min() < -1e-12:
                continue
            J = np.eye(P.n) - H @ np.linalg.solve(H.T @ H, H.T)
            elements.append((K, J))
    return HsSet(elements)


def path_integral_error(P, x0, x1, samples=2000, tol=1e-10):
    """Trapezoid check of ``Pi(x1) - Pi(x0) = int_0^1 J(g(t)) (x1 - x0) dt``
    along the segment ``g(t) = (1 - t) x0 + t x1``.

    Returns ``(error_inf, crossings)`` where ``crossings`` counts active-set
    changes seen along the sampled path.
    """
    x0 = as_vector(x0, "x0", P.n)
    x1 = as_vector(x1, "x1", P.n)
    if samples < 2:
        raise InputError("need at least 2 samples")
    d = x1 - x0
    ts = np.linspace(0.0, 1.0, samples)
    vals = np.empty((samples, P.n))
    warm = None
    prev = None
    crossings = 0
    first = last = None
    for k, t in enumerate(ts):
        res = project(P, x0 + t * d, tol=tol, warm_start=warm)
        warm = res.working
        key = tuple(res.active.tolist())
        if prev is not None and key != prev:
            crossings += 1
        prev = key
        vals[k] = jvp(hs_element(P, res), d)
        if k == 0:
            first = res.y
        last = res.y
    h = 1.0 / (samples - 1)
    integral = h * (vals.sum(axis=0) - 0.5 * (vals[0] + vals[-1]))
    return float(np.max(np.abs(integral - (last - first)))), crossings


def random_segment(P, rng, length=0.25, spread=1.0):
    """Random segment of the given length centred near the boundary of P.

    The centre is the projection of a Gaussian perturbation of the witness
    point, jittered by ``length / 2``, so a good share of segments cross
    active-set changes.
    """
    z = P.witness + spread * rng.standard_normal(P.n)
    centre = project(P, z).y + 0.5 * length * rng.standard_normal(P.n) / np.sqrt(P.n)
    u = rng.standard_normal(P.n)
    u /= np.linalg.norm(u)
    return centre - 0.5 * length * u, centre + 0.5 * length * u
