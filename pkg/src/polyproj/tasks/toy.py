"""Small tapes used by gradient checks, the CLI and the test suite."""

import numpy as np

from ..autodiff import Tape, mlp_init, mlp_parameters, mlp_apply
from ..polytope import make_simplex, new_polytope


def bounded_line_polytope():
    """``{x1 + x2 = 1, x1 >= 0.3}`` in R^2."""
    return new_polytope([[-1.0, 0.0]], [-0.3], [[1.0, 1.0]], [1.0])


def projected_norm_tape(x=(0.0, 0.0), y=0.0, polytope=None):
    """``|  ||Pi(W x + beta)||^2 - y  |`` with theta = (w11, w21, w12, w22, b1, b2).

    W is stored column by column, so theta[:4] is W in Fortran order.
    Inputs ``x`` and ``y`` may be rebound by name at forward time.
    """
    P = bounded_line_polytope() if polytope is None else polytope
    t = Tape()
    w = t.parameter(4, "W")
    beta = t.parameter(2, "beta")
    xn = t.constant(x, "x")
    yn = t.constant(y, "y")
    z = t.affine(w, xn, beta, order="F")
    p = t.projection(z, P)
    f = t.sum(t.square(p))
    t.set_output(t.abs(t.sub(f, yn)))
    return t


def quadratic_tape():
    """``Phi(theta) = theta^2`` for a single parameter."""
    t = Tape()
    th = t.parameter(1)
    t.set_output(t.sum(t.square(th)))
    return t


def product_tape():
    """``Phi(theta) = theta_1 * theta_2``."""
    t = Tape()
    a = t.parameter(1)
    b = t.parameter(1)
    t.set_output(t.mul(a, b))
    return t


def relu_tape():
    """``Phi(theta) = relu(theta)`` for a single parameter."""
    t = Tape()
    th = t.parameter(1)
    t.set_output(t.sum(t.relu(th)))
    return t


def projection_mlp_tape(rng, polytope, hidden=8, n_in=3):
    """Random one-hidden-layer tanh net feeding a projection and an MSE loss.

    Returns ``(tape, theta, inputs)`` with inputs drawn at random; the
    projection target is a random point of the polytope's neighbourhood.
    """
    n = polytope.n
    sizes = [n_in, hidden, n]
    t = Tape()
    layers = mlp_parameters(t, sizes)
    x = t.constant(rng.normal(size=n_in), "x")
    target = t.constant(polytope.witness + 0.1 * rng.normal(size=n), "target")
    out = mlp_apply(t, layers, x)
    p = t.projection(out, polytope)
    t.set_output(t.mse_loss(p, target))
    theta = mlp_init(rng, sizes, gain=2.0)
    # random biases so the projection lands on varied faces
    off = 0
    for n_a, n_b in zip(sizes[:-1], sizes[1:]):
        off += n_a * n_b
        theta[off:off + n_b] = rng.normal(size=n_b)
        off += n_b
    return t, theta, {}


def simplex_mlp_tape(rng, n=4, hidden=8):
    return projection_mlp_tape(rng, make_simplex(n), hidden=hidden)


def two_projection_tape(P1, P2, mix, c):
    """``c . Pi2(mix @ Pi1(theta))``: a composite of two projection layers.

    ``theta`` plays the role of the input point, so the tape's gradient is
    the composite VJP field ``J1^T mix^T J2^T c``.
    """
    mix = np.asarray(mix, dtype=float)
    t = Tape()
    th = t.parameter(P1.n)
    m = t.constant(mix.ravel(), "mix")
    cn = t.constant(c, "c")
    y1 = t.projection(th, P1, warm_start=True)
    y2 = t.projection(t.affine(m, y1), P2, warm_start=True)
    t.set_output(t.sum(t.mul(cn, y2)))
    return t
