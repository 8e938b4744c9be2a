"""Polyhedral sets ``{y : A y <= a, B y = b}``, constructors for the
portfolio / matching / Birkhoff families, feasibility metrics and the
``polytope v1`` text format.

Index sets are 0-based throughout the library.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, InputError, RankError
from .linalg import DEFAULT_RANK_TOL, as_matrix, as_vector, lstsq_min_norm, qr_pivoted

FORMAT_HEADER = "polytope v1"


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Polytope:
    a_mat: np.ndarray
    a_vec: np.ndarray
    b_mat: np.ndarray
    b_vec: np.ndarray
    witness: np.ndarray = field(repr=False)
    # indices (into the caller's equality rows) removed as redundant
    dropped_eq: tuple = ()

    @property
    def n(self):
        return self.a_mat.shape[1]

    @property
    def m(self):
        return self.a_mat.shape[0]

    @property
    def l(self):
        return self.b_mat.shape[0]


@dataclass(frozen=True)
class ViolationReport:
    v_ineq: float
    v_eq: float
    v_all: float


def _shapes(A, a, B, b, n):
    if n is None:
        for mat in (A, B):
            arr = np.asarray(mat, dtype=float)
            if arr.ndim == 2 and arr.shape[1] > 0:
                n = arr.shape[1]
                break
        else:
            raise InputError("cannot infer dimension n from empty A and B")
    A = as_matrix(A, "A", cols=n)
    B = as_matrix(B, "B", cols=n)
    a = as_vector(a, "a", A.shape[0]) if A.shape[0] else np.zeros(0)
    b = as_vector(b, "b", B.shape[0]) if B.shape[0] else np.zeros(0)
    return A, a, B, b


def drop_redundant_equalities(B, b, tol=DEFAULT_RANK_TOL, n=None):
    """Reduce ``B y = b`` to an equivalent full-row-rank system.

    Returns ``(B', b', kept)`` with ``kept`` the sorted original row indices
    retained.  Raises :class:`InfeasibleError` if the system is inconsistent.
    """
    B = as_matrix(B, "B", cols=n)
    l = B.shape[0]
    b = as_vector(b, "b", l) if l else np.zeros(0)
    if l == 0:
        return B, b, np.zeros(0, dtype=int)
    f = qr_pivoted(B.T, tol)
    kept = np.sort(f.pivot[:f.rank])
    B_red, b_red = B[kept], b[kept]
    if f.rank < l:
        y0, _ = lstsq_min_norm(B_red, b_red, tol)
        scale = 1.0 + np.abs(b).max()
        if np.abs(B @ y0 - b).max() > 1e3 * tol * scale:
            raise InfeasibleError("equality constraints are inconsistent")
    return B_red, b_red, kept


def new_polytope(A, a, B, b, n=None, reduce_equalities=False):
    """Validate constraint data and certify nonemptiness.

    With ``reduce_equalities`` a rank-deficient ``B`` is reduced through
    :func:`drop_redundant_equalities` instead of raising :class:`RankError`.
    """
    from .qp import project  # cyclic: the solver needs Polytope

    A, a, B, b = _shapes(A, a, B, b, n)
    n = A.shape[1]
    dropped = ()
    if B.shape[0]:
        if reduce_equalities:
            B2, b2, kept = drop_redundant_equalities(B, b, n=n)
            dropped = tuple(sorted(set(range(B.shape[0])) - set(kept.tolist())))
            B, b = B2, b2
        else:
            rank = qr_pivoted(B.T).rank
            if rank < B.shape[0]:
                raise RankError(
                    f"B has rank {rank} < {B.shape[0]} rows; "
                    "use drop_redundant_equalities")
    draft = Polytope(_frozen(A), _frozen(a), _frozen(B), _frozen(b),
                     witness=_frozen(np.zeros(n)), dropped_eq=dropped)
    # one projection solve from the origin certifies nonemptiness
    res = project(draft, np.zeros(n))
    return Polytope(draft.a_mat, draft.a_vec, draft.b_mat, draft.b_vec,
                    witness=_frozen(res.y), dropped_eq=dropped)


def make_simplex(n):
    if n < 1:
        raise InputError("simplex dimension must be >= 1")
    return new_polytope(-np.eye(n), np.zeros(n), np.ones((1, n)), [1.0])


def make_portfolio(n, C, delta):
    """Budget, long-only and minimum group weight ``sum_{i in C} w_i >= delta``.

    Rows of A: ``-w_i <= 0`` for every asset, then the group row (omitted
    when ``C`` is empty and ``delta <= 0``).
    """
    if n < 1:
        raise InputError("portfolio needs n >= 1")
    C = sorted(set(int(i) for i in C))
    if any(i < 0 or i >= n for i in C):
        raise InputError(f"preferred index set {C} out of range for n={n}")
    A = [-np.eye(n)]
    a = [np.zeros(n)]
    if C:
        row = np.zeros(n)
        row[C] = -1.0
        A.append(row[None, :])
        a.append([-float(delta)])
    elif delta > 0:
        raise InfeasibleError("empty preferred set cannot hold a positive weight")
    return new_polytope(np.vstack(A), np.concatenate(a), np.ones((1, n)), [1.0])


def matching_constraints(d1, d2, alpha):
    """Row-major vectorized partial-matching inequality system (A, a)."""
    if d1 < 1 or d2 < 1:
        raise InputError("matching dimensions must be >= 1")
    if alpha < 0:
        raise InputError("alpha must be nonnegative")
    A = np.vstack([
        np.kron(np.eye(d1), np.ones((1, d2))),
        np.kron(np.ones((1, d1)), np.eye(d2)),
        np.ones((1, d1 * d2)),
        -np.eye(d1 * d2),
    ])
    a = np.concatenate([np.ones(d1), np.ones(d2), [float(alpha)], np.zeros(d1 * d2)])
    return A, a


def make_matching(d1, d2, alpha):
    A, a = matching_constraints(d1, d2, alpha)
    return new_polytope(A, a, np.zeros((0, d1 * d2)), [], n=d1 * d2)


def birkhoff_equalities(c):
    """Full (rank 2c-1) row-sum then column-sum system on row-major vec(H)."""
    B = np.vstack([np.kron(np.eye(c), np.ones((1, c))),
                   np.kron(np.ones((1, c)), np.eye(c))])
    return B, np.ones(2 * c)


def make_birkhoff(c):
    if c < 1:
        raise InputError("Birkhoff order must be >= 1")
    B, b = birkhoff_equalities(c)
    return new_polytope(-np.eye(c * c), np.zeros(c * c), B, b,
                        reduce_equalities=True)


def feasibility_violation(P, y):
    y = as_vector(y, "y", P.n)
    v_ineq = float(np.sum(np.maximum(P.a_mat @ y - P.a_vec, 0.0) ** 2)) if P.m else 0.0
    v_eq = float(np.sum((P.b_mat @ y - P.b_vec) ** 2)) if P.l else 0.0
    return ViolationReport(v_ineq, v_eq, max(v_ineq, v_eq))


def contains(P, y, tol=1e-9):
    y = as_vector(y, "y", P.n)
    if P.m and np.max(P.a_mat @ y - P.a_vec) > tol:
        return False
    if P.l and np.max(np.abs(P.b_mat @ y - P.b_vec)) > tol:
        return False
    return True


def _fmt(values):
    # adding 0.0 turns -0.0 into 0.0
    return " ".join("%.17g" % (v + 0.0) for v in values)


def dumps(P):
    lines = [FORMAT_HEADER, f"{P.n} {P.m} {P.l}"]
    lines += [_fmt(row) for row in P.a_mat]
    if P.m:
        lines.append(_fmt(P.a_vec))
    lines += [_fmt(row) for row in P.b_mat]
    if P.l:
        lines.append(_fmt(P.b_vec))
    return "\n".join(lines) + "\n"


def loads(text):
    """Parse the ``polytope v1`` format.  ``#`` starts a comment."""
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != FORMAT_HEADER:
        raise InputError(f"missing '{FORMAT_HEADER}' header")
    try:
        n, m, l = (int(tok) for tok in lines[1].split())
    except (IndexError, ValueError):
        raise InputError("second line must be 'n m l'") from None
    if min(n, m, l) < 0 or n == 0:
        raise InputError(f"bad dimensions n={n} m={m} l={l}")
    tokens = " ".join(lines[2:]).split()
    need = m * n + m + l * n + l
    if len(tokens) != need:
        raise InputError(f"expected {need} numbers after the header, got {len(tokens)}")
    vals = []
    for tok in tokens:
        try:
            vals.append(float(tok))
        except ValueError:
            raise InputError(f"bad number {tok!r} in polytope file") from None
    vals = np.array(vals)
    pos = 0

    def take(k):
        nonlocal pos
        out = vals[pos:pos + k]
        pos += k
        return out

    A = take(m * n).reshape(m, n)
    a = take(m)
    B = take(l * n).reshape(l, n)
    b = take(l)
    return new_polytope(A, a, B, b, n=n)


def save(P, path):
    with open(path, "w") as fh:
        fh.write(dumps(P))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
