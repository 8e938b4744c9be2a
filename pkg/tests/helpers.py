"""Random instance generators shared by the test modules."""

import numpy as np

from polyproj.polytope import new_polytope


def random_polytope(rng, n_max=8, m_max=10, l_max=3, tight=0.3):
    """Random nonempty polytope built around a known feasible point.

    A fraction ``tight`` of inequalities pass exactly through that point, so
    projections often land on faces of several constraints.
    """
    n = int(rng.integers(1, n_max + 1))
    l = int(rng.integers(0, min(l_max, n - 1) + 1)) if n > 1 else 0
    m = int(rng.integers(0, m_max + 1))
    y0 = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    slack = rng.exponential(1.0, size=m)
    slack[rng.random(m) < tight] = 0.0
    a = A @ y0 + slack
    B = rng.normal(size=(l, n))
    b = B @ y0
    return new_polytope(A, a, B, b, n=n), y0


def degenerate_instance(rng, n_max=6, extra_active=2):
    """Polytope and input x whose projection is a known point y_star.

    Active constraints may outnumber the free dimensions (LICQ fails) and
    some active constraints carry zero multipliers (no strict
    complementarity).  Returns ``(P, x, y_star)``.
    """
    n = int(rng.integers(2, n_max + 1))
    l = int(rng.integers(0, min(2, n - 1) + 1))
    y_star = rng.normal(size=n)
    k = int(rng.integers(1, n - l + extra_active + 1))
    A_act = rng.normal(size=(k, n))
    if k >= 2 and rng.random() < 0.5:
        # exact linear combination of two others: a dependent active row
        w = rng.uniform(0.2, 1.0, size=2)
        A_act[-1] = w[0] * A_act[0] + w[1] * A_act[1]
    m_in = int(rng.integers(0, 4))
    A_in = rng.normal(size=(m_in, n))
    A = np.vstack([A_act, A_in])
    a = np.concatenate([A_act @ y_star, A_in @ y_star + rng.exponential(1.0, m_in)])
    perm = rng.permutation(k + m_in)
    A, a = A[perm], a[perm]
    B = rng.normal(size=(l, n))
    b = B @ y_star
    lam = np.zeros(k + m_in)
    act_pos = np.flatnonzero(perm < k)
    lam[act_pos] = rng.exponential(1.0, size=k) * (rng.random(k) < 0.7)
    mu = rng.normal(size=l)
    x = y_star + A.T @ lam + B.T @ mu
    return new_polytope(A, a, B, b, n=n), x, y_star


def strict_point(rng, P, margin=1e-4, tries=200):
    """Input x whose projection has every active multiplier > margin and every
    inactive slack > margin, so the projection is affine near x."""
    from polyproj.qp import project

    for _ in range(tries):
        x = P.witness + rng.normal(scale=2.0, size=P.n)
        res = project(P, x)
        lam_act = res.lam[res.active]
        inactive = np.setdiff1d(np.arange(P.m), res.active)
        slack = P.a_vec[inactive] - P.a_mat[inactive] @ res.y
        if (lam_act.size == 0 or lam_act.min() > margin) and \
                (slack.size == 0 or slack.min() > margin):
            return x, res
    raise RuntimeError("no strictly complementary point found")


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail):
    line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
