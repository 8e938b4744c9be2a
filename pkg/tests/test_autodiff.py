import numpy as np
import pytest

from polyproj.autodiff import Tape, gradcheck
from polyproj.errors import InputError
from polyproj.hs import dense_jacobian, random_segment
from polyproj.polytope import make_birkhoff, make_portfolio, make_simplex
from polyproj.tasks import toy

from helpers import random_polytope, strict_point


def test_product_forward_and_reverse():
    t = toy.product_tape()
    assert t.forward([2.0, 3.0]) == 6.0
    np.testing.assert_array_equal(t.reverse(), [3.0, 2.0])


def test_relu_values():
    t = toy.relu_tape()
    assert t.forward([0.0]) == 0.0
    t.forward([-1.0])
    np.testing.assert_array_equal(t.reverse(), [0.0])


def test_projected_norm_forward_and_gradient():
    t = toy.projected_norm_tape()
    theta = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
    val = t.forward(theta)
    assert val == pytest.approx(0.5, abs=1e-15)
    proj = next(n for n in t.nodes if n.op == "projection")
    np.testing.assert_allclose(proj.value, [0.5, 0.5], atol=1e-15)
    g = t.reverse()
    # (1, 1) lies in the range of the equality normal, which J annihilates
    np.testing.assert_allclose(g[4:], [0.0, 0.0], atol=1e-14)


def test_gradcheck_quadratic():
    rep = gradcheck(toy.quadratic_tape(), [3.0], h=1e-6)
    assert rep.rows[0].grad == 6.0
    assert rep.max_error <= 1e-8


def test_gradcheck_flags_relu_kink():
    rep = gradcheck(toy.relu_tape(), [0.0])
    assert rep.flagged == 1 and rep.rows[0].flagged


def test_gradcheck_projected_norm_at_strict_point():
    t = toy.projected_norm_tape(x=(0.4, -0.7), y=0.2)
    rep = gradcheck(t, [1.0, 0.2, -0.3, 1.0, 0.1, 0.05], h=1e-6)
    assert rep.flagged == 0
    assert rep.max_error <= 1e-5


def test_forward_rejects_bad_parameters():
    t = toy.product_tape()
    with pytest.raises(InputError):
        t.forward([1.0])
    with pytest.raises(InputError):
        t.forward([np.nan, 1.0])


def test_projection_vjp_matches_dense_jacobian():
    rng = np.random.default_rng(0)
    for k in range(100):
        P, _ = random_polytope(rng, n_max=16) if k % 2 else (make_birkhoff(4), None)
        t = Tape()
        th = t.parameter(P.n)
        c = rng.normal(size=P.n)
        y = t.projection(th, P)
        t.set_output(t.sum(t.mul(t.constant(c), y)))
        t.forward(P.witness + rng.normal(scale=2.0, size=P.n))
        g = t.reverse()
        J = dense_jacobian(t.nodes[y].attrs["factor"])
        np.testing.assert_allclose(g, J.T @ c, atol=1e-12)


def _mlp_pair_tapes(P, which):
    t = Tape()
    w = t.parameter(P.n * 3)
    x = t.constant(np.array([0.3, -1.0, 0.5]))
    y = t.projection(t.affine(w, x), P)
    parts = [t.sum(t.square(y)), t.sum(t.tanh(y))]
    if which == "both":
        t.set_output(t.add(*parts))
    else:
        t.set_output(parts[which])
    return t


def test_reverse_is_linear_in_outputs():
    rng = np.random.default_rng(1)
    P = make_simplex(4)
    for _ in range(50):
        theta = rng.normal(scale=2.0, size=12)
        grads = []
        for which in (0, 1, "both"):
            t = _mlp_pair_tapes(P, which)
            t.forward(theta)
            grads.append(t.reverse())
        np.testing.assert_allclose(grads[2], grads[0] + grads[1], atol=1e-12)


def test_gradients_are_deterministic():
    rng = np.random.default_rng(2)
    t, theta, _ = toy.simplex_mlp_tape(rng)
    t.forward(theta)
    g1 = t.reverse()
    t2, _, _ = toy.simplex_mlp_tape(np.random.default_rng(2))
    t2.forward(theta)
    t.forward(theta)
    np.testing.assert_array_equal(g1, t.reverse())
    np.testing.assert_array_equal(g1, t2.reverse())


def test_gradcheck_on_projection_tapes():
    rng = np.random.default_rng(3)
    for _ in range(20):
        t, theta, _ = toy.simplex_mlp_tape(rng)
        assert gradcheck(t, theta).max_error <= 1e-5


def test_composite_of_two_projections_is_conservative():
    rng = np.random.default_rng(4)
    P1 = make_simplex(4)
    P2 = make_portfolio(3, [0], 0.4)
    # unit spectral norm and unit c keep the composite 1-Lipschitz, like a
    # single projection, so the trapezoid error at kinks stays comparable
    mix = rng.normal(size=(3, 4))
    mix /= np.linalg.norm(mix, 2)
    c = rng.normal(size=3)
    c /= np.linalg.norm(c)
    t = toy.two_projection_tape(P1, P2, mix, c)
    samples = 2000
    s = np.linspace(0.0, 1.0, samples)
    for _ in range(100):
        x0, x1 = random_segment(P1, rng)
        d = x1 - x0
        vals = np.empty(samples)
        for i, si in enumerate(s):
            t.forward(x0 + si * d)
            vals[i] = t.reverse() @ d
        integral = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(s))
        delta = t.forward(x1) - t.forward(x0)
        assert abs(integral - delta) <= 1e-4


def test_strict_point_gradcheck_random_polytopes():
    rng = np.random.default_rng(5)
    for _ in range(20):
        # no constraints tight at the seed point: avoids lower-dimensional sets
        P, _ = random_polytope(rng, tight=0.0)
        x, _ = strict_point(rng, P)
        t = Tape()
        th = t.parameter(P.n)
        c = t.constant(rng.normal(size=P.n))
        t.set_output(t.sum(t.mul(c, t.projection(th, P))))
        rep = gradcheck(t, x)
        assert rep.flagged == 0 and rep.max_error <= 1e-5

