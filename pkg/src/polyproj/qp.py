"""Forward pass of the projection layer.

:func:`project` is a dual active-set method (Goldfarb-Idnani) specialised to
the unit Hessian of ``min 1/2 ||y - x||^2`` over ``{A y <= a, B y = b}``.  It
starts from the projection onto the affine hull of the equalities, which is
dual feasible, and adds violated inequalities one at a time while keeping the
inequality multipliers nonnegative.  On exit the working set, the multipliers
and the projected point come from one exact equality-constrained solve.

:func:`project_bruteforce` enumerates candidate active sets and is only meant
as a test oracle.
"""

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, InfeasibleError, SizeError
from .linalg import as_vector

DEFAULT_TOL = 1e-10
DEFAULT_EPS_ACT = 1e-9
BRUTEFORCE_MAX_M = 16

# a new constraint normal whose component off the working span is below this
# fraction of its norm counts as linearly dependent
_DEP_TOL = 1e-10
_R_TOL = 1e-13


@dataclass
class ProjectionResult:
    y: np.ndarray
    lam: np.ndarray
    mu: np.ndarray
    active: np.ndarray
    kkt_residual: float
    iterations: int
    # solver working set (inequalities with exactly enforced equality)
    working: tuple = ()


def active_set(P, y, eps_act=DEFAULT_EPS_ACT):
    """Indices i with ``|A_i y - a_i| <= eps_act * (1 + |a_i|)``."""
    if P.m == 0:
        return np.zeros(0, dtype=int)
    gap = np.abs(P.a_mat @ y - P.a_vec)
    return np.flatnonzero(gap <= eps_act * (1.0 + np.abs(P.a_vec)))


def kkt_residual(P, x, result):
    y, lam, mu = result.y, result.lam, result.mu
    stat = y - x
    if P.m:
        stat = stat + P.a_mat.T @ lam
    if P.l:
        stat = stat + P.b_mat.T @ mu
    terms = [np.max(np.abs(stat))]
    if P.m:
        slack = P.a_mat @ y - P.a_vec
        terms.append(np.sqrt(np.sum(np.maximum(slack, 0.0) ** 2)))
        terms.append(np.max(np.maximum(-lam, 0.0)))
        terms.append(np.max(np.abs(lam * slack)))
    if P.l:
        terms.append(np.sqrt(np.sum((P.b_mat @ y - P.b_vec) ** 2)))
    return float(max(terms))


def _face(x, N, rhs):
    """Project x onto ``{y : N^T y = rhs}``; N has full column rank.

    Returns ``(y, u, q, r)`` with ``y = x - N u`` and ``N = q r``.
    """
    q, r = np.linalg.qr(N)
    w = scipy.linalg.solve_triangular(r, N.T @ x - rhs, trans="T")
    return x - q @ w, scipy.linalg.solve_triangular(r, w), q, r


def _full_rank(r):
    d = np.abs(np.diag(r))
    return d.size == 0 or d.min() > 1e-10 * max(d.max(), 1.0)


class _State:
    """Working set and multipliers of the dual method."""

    def __init__(self, P, x):
        self.P, self.x = P, x
        self.working = []
        self.y = x.copy()
        self.mu = np.zeros(P.l)
        self.lam_w = np.zeros(0)
        self.q = self.r = None

    def normals(self):
        P = self.P
        cols = [P.b_mat.T] if P.l else []
        if self.working:
            cols.append(P.a_mat[self.working].T)
        if not cols:
            return None, None
        N = np.hstack(cols)
        rhs = np.concatenate([P.b_vec, P.a_vec[self.working]])
        return N, rhs

    def refactor(self):
        """Refresh the QR of the working normals, leaving y untouched."""
        N, _ = self.normals()
        if N is None:
            self.q = self.r = None
        else:
            self.q, self.r = np.linalg.qr(N)

    def solve_face(self):
        """Recompute y and multipliers exactly on the current face."""
        N, rhs = self.normals()
        if N is None:
            self.y = self.x.copy()
            self.q = self.r = None
            self.lam_w = np.zeros(0)
            return True
        if N.shape[1] > N.shape[0]:
            return False
        y, u, q, r = _face(self.x, N, rhs)
        if not _full_rank(r):
            return False
        self.y, self.q, self.r = y, q, r
        l = self.P.l
        self.mu = u[:l]
        self.lam_w = u[l:]
        return True


def _try_warm(state, warm):
    m = state.P.m
    state.working = sorted({int(i) for i in warm if 0 <= int(i) < m})
    if state.working and state.solve_face() and np.all(state.lam_w >= 0.0):
        return True
    state.working = []
    state.lam_w = np.zeros(0)
    state.mu = np.zeros(state.P.l)
    state.q = state.r = None
    return False


def project(P, x, tol=DEFAULT_TOL, eps_act=DEFAULT_EPS_ACT, warm_start=None,
            max_iter=None):
    """Euclidean projection of ``x`` onto ``P``.

    The stopping tolerance is raised to a rounding floor proportional to
    ``n * eps * (1 + |x|_inf + |a|_inf)`` when that exceeds ``tol``; for data of
    unit scale the floor sits near 1e-13 and ``tol`` governs.

    ``warm_start`` is an iterable of inequality indices believed active
    (typically ``previous_result.working``); it is discarded if the
    multipliers it implies are not all nonnegative.
    """
    x = as_vector(x, "x", P.n)
    A, a = P.a_mat, P.a_vec
    m, l = P.m, P.l
    cap = max_iter if max_iter is not None else 50 * (m + l + P.n)
    # slacks below the rounding floor of the data cannot be driven to zero;
    # without this, large-magnitude inputs cycle until the cap
    scale = 1.0 + np.max(np.abs(x)) + (np.max(np.abs(a)) if m else 0.0)
    tol = max(tol, 8.0 * P.n * np.finfo(float).eps * scale)
    state = _State(P, x)
    if not (warm_start is not None and _try_warm(state, warm_start)):
        if not state.solve_face():
            raise InfeasibleError("equality matrix is rank deficient")
    iters = 0

    def fail(msg):
        res = _result(P, x, state, iters, eps_act)
        raise ConvergenceError(msg, best=res.y, residual=res.kkt_residual)

    while m:
        slack = A @ state.y - a
        if state.working:
            slack[state.working] = -np.inf
        p = int(np.argmax(slack))  # first maximiser: smallest index on ties
        s_p = slack[p]
        if s_p <= tol:
            break
        n_p = A[p]
        u_p = 0.0
        while True:
            iters += 1
            if iters > cap:
                fail(f"active-set iteration cap {cap} exceeded")
            if state.q is not None:
                qn = state.q.T @ n_p
                z = n_p - state.q @ qn
                r = scipy.linalg.solve_triangular(state.r, qn)
            else:
                z, r = n_p, np.zeros(0)
            z2 = float(z @ z)
            dependent = np.sqrt(z2) <= _DEP_TOL * np.linalg.norm(n_p)
            t1, block = np.inf, None
            r_in = r[l:]
            for k, ck in enumerate(state.working):
                if r_in[k] > _R_TOL:
                    ratio = state.lam_w[k] / r_in[k]
                    if ratio < t1 or (ratio == t1 and ck < state.working[block]):
                        t1, block = ratio, k
            t2 = np.inf if dependent else s_p / z2
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise InfeasibleError("constraint set is empty")
            t = min(t1, t2)
            if not dependent:
                state.y = state.y - t * z
                s_p -= t * z2
            state.mu = state.mu - t * r[:l]
            state.lam_w = state.lam_w - t * r_in
            u_p += t
            if t2 <= t1:
                state.working.append(p)
                state.lam_w = np.append(state.lam_w, u_p)
                order = np.argsort(state.working)
                state.working = [state.working[i] for i in order]
                state.lam_w = state.lam_w[order]
                if not state.solve_face():
                    fail("working set lost full column rank")
                # rounding can leave a multiplier at -1e-17
                state.lam_w = np.maximum(state.lam_w, 0.0)
                break
            del state.working[block]
            state.lam_w = np.delete(state.lam_w, block)
            state.refactor()
    return _result(P, x, state, iters, eps_act)


def _result(P, x, state, iters, eps_act):
    lam = np.zeros(P.m)
    if state.working:
        lam[state.working] = state.lam_w
    res = ProjectionResult(
        y=state.y.copy(), lam=lam, mu=np.array(state.mu, dtype=float),
        active=active_set(P, state.y, eps_act), kkt_residual=0.0,
        iterations=iters, working=tuple(state.working))
    res.kkt_residual = kkt_residual(P, x, res)
    return res


def project_bruteforce(P, x, eps_act=DEFAULT_EPS_ACT):
    """Exhaustive active-set oracle for small ``m``.

    Every subset S of inequalities is tried as equalities; the KKT linear
    system is solved by least squares and accepted if consistent, primal
    feasible and with ``lambda_S >= -1e-12``.  The accepted point nearest to
    ``x`` wins.
    """
    x = as_vector(x, "x", P.n)
    n, m, l = P.n, P.m, P.l
    if m > BRUTEFORCE_MAX_M:
        raise SizeError(f"brute force limited to m <= {BRUTEFORCE_MAX_M}, got {m}")
    A, a, B, b = P.a_mat, P.a_vec, P.b_mat, P.b_vec
    best = None
    count = 0
    for size in range(m + 1):
        for S in itertools.combinations(range(m), size):
            count += 1
            S = list(S)
            k = len(S)
            K = np.zeros((n + k + l, n + k + l))
            K[:n, :n] = np.eye(n)
            K[:n, n:n + k] = A[S].T
            K[:n, n + k:] = B.T
            K[n:n + k, :n] = A[S]
            K[n + k:, :n] = B
            rhs = np.concatenate([x, a[S], b])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if np.max(np.abs(K @ sol - rhs), initial=0.0) > 1e-9 * (1.0 + np.abs(rhs).max()):
                continue
            y = sol[:n]
            if m and np.max(A @ y - a) > 1e-9:
                continue
            lam_s = sol[n:n + k]
            if k and lam_s.min() < -1e-12:
                continue
            dist = float(np.linalg.norm(y - x))
            if best is None or dist < best[0] - 1e-14:
                lam = np.zeros(m)
                lam[S] = lam_s
                best = (dist, y, lam, sol[n + k:], tuple(S))
    if best is None:
        raise InfeasibleError("no KKT point found; constraint set empty?")
    _, y, lam, mu, S = best
    res = ProjectionResult(y=y, lam=lam, mu=mu, active=active_set(P, y, eps_act),
                           kkt_residual=0.0, iterations=count, working=S)
    res.kkt_residual = kkt_residual(P, x, res)
    return res


def complementarity_margin(P, result):
    """Smallest of the active multipliers and the inactive slacks.

    A positive margin means the active set is locally stable, so the
    projection is affine in a neighbourhood of the input.
    """
    if P.m == 0:
        return np.inf
    slack = P.a_vec - P.a_mat @ result.y
    active = np.zeros(P.m, dtype=bool)
    active[result.active] = True
    vals = np.concatenate([result.lam[active], slack[~active]])
    return float(vals.min()) if vals.size else np.inf
