"""Synthetic portfolio allocation with a group-weight constraint.

A small MLP reads a window of past returns and emits two heads: a forecast
of the mean future return of every asset (scored by MSE) and allocation
logits that a projection layer maps onto the portfolio polytope (scored by
the negative Sharpe ratio over the following horizon).
"""

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Tape, TapeModel, mlp_init, mlp_parameters
from ..errors import InputError
from ..optim import train
from ..polytope import make_portfolio
from ..autodiff import SQRT_FLOOR
from .common import NetSpec


def gen_portfolio_data(n, periods, seed, window=10, phi=0.2, vol=0.05, corr=0.3):
    """Zero-mean stationary AR(1) returns with equicorrelated innovations.

    Asset volatilities are drawn in ``vol * [0.5, 1.5]``; ``phi`` is the
    lag-one autocorrelation and ``corr`` the pairwise innovation correlation.
    Returns a ``periods x n`` matrix.
    """
    if n < 2:
        raise InputError("need at least 2 assets")
    if periods < 2 * window:
        raise InputError(f"periods={periods} is shorter than 2*window={2 * window}")
    if not -1.0 < phi < 1.0:
        raise InputError("phi must lie in (-1, 1)")
    if not -1.0 / (n - 1) < corr < 1.0:
        raise InputError("corr does not give a positive definite correlation")
    rng = np.random.default_rng(seed)
    sd = vol * rng.uniform(0.5, 1.5, size=n)
    R = (1.0 - corr) * np.eye(n) + corr * np.ones((n, n))
    L = np.linalg.cholesky(R) * sd[:, None]
    eps = rng.standard_normal((periods, n)) @ L.T
    out = np.empty((periods, n))
    out[0] = eps[0]
    k = np.sqrt(1.0 - phi * phi)
    for t in range(1, periods):
        out[t] = phi * out[t - 1] + k * eps[t]
    return out


def sharpe_ratio(portfolio_returns, risk_free=0.03):
    """Plain-array Sharpe ratio with the same std guard as the tape version."""
    r = np.asarray(portfolio_returns, dtype=float)
    var = np.mean((r - r.mean()) ** 2)
    return (r.mean() - risk_free) / np.sqrt(max(var, SQRT_FLOOR))


def sharpe_from_returns(tape, r_p, risk_free):
    """Tape nodes for ``-(mean(r_p) - rf) / std(r_p)``."""
    mu = tape.mean(r_p)
    var = tape.mean(tape.square(tape.sub(r_p, mu)))
    excess = tape.sub(mu, tape.constant(risk_free))
    return tape.mul(tape.div(excess, tape.sqrt(var)), tape.constant(-1.0))


def sharpe_loss(tape, weights, future_returns, risk_free):
    """Negative Sharpe ratio of the allocation ``weights`` (a tape node).

    ``future_returns`` is a tape node holding the ``horizon x n`` matrix in
    row-major order, so ``affine`` yields the per-period portfolio returns.
    """
    r_p = tape.affine(future_returns, weights)
    return sharpe_from_returns(tape, r_p, risk_free)


@dataclass
class PortfolioTask:
    returns: np.ndarray
    C: tuple = ()
    delta: float = 0.0
    window: int = 10
    horizon: int = 10
    risk_free: float = 0.03
    loss_weight: float = 1.0
    # spacing between consecutive sample start dates
    stride: int = 1
    _scale: float = field(init=False, repr=False, default=1.0)

    def __post_init__(self):
        self.returns = np.asarray(self.returns, dtype=float)
        if self.returns.ndim != 2 or self.returns.shape[1] < 2:
            raise InputError("returns must be a periods x n matrix with n >= 2")
        if self.returns.shape[0] < self.window + self.horizon:
            raise InputError("not enough periods for one window plus horizon")
        if min(self.window, self.horizon, self.stride) < 1:
            raise InputError("window, horizon and stride must be >= 1")
        self.C = tuple(sorted(set(int(i) for i in self.C)))
        self._scale = float(self.returns.std()) or 1.0

    @property
    def n_assets(self):
        return self.returns.shape[1]

    def polytope(self):
        return make_portfolio(self.n_assets, self.C, self.delta)

    def samples(self):
        """List of ``{"x", "future", "target"}`` dicts, one per start date."""
        out = []
        T, w, h = self.returns.shape[0], self.window, self.horizon
        for t in range(w, T - h + 1, self.stride):
            past = self.returns[t - w:t]
            future = self.returns[t:t + h]
            out.append({"x": (past / self._scale).ravel(),
                        "future": future.ravel(),
                        "target": future.mean(axis=0)})
        return out


def portfolio_tape(task, net):
    """Tape and parameter layout for the two-head allocation network."""
    n, d_in = task.n_assets, task.window * task.n_assets
    t = Tape()
    body = mlp_parameters(t, [d_in, net.hidden])
    head_r = mlp_parameters(t, [net.hidden, n])
    head_w = mlp_parameters(t, [net.hidden, n])
    x = t.constant(np.zeros(d_in), "x")
    future = t.constant(np.zeros(task.horizon * n), "future")
    target = t.constant(np.zeros(n), "target")
    (w1, b1), = body
    h = getattr(t, net.activation)(t.affine(w1, x, b1))
    pred = t.affine(head_r[0][0], h, head_r[0][1])
    logits = t.affine(head_w[0][0], h, head_w[0][1])
    weights = t.projection(logits, task.polytope(), warm_start=True)
    mse = t.mse_loss(pred, target)
    loss = t.add(t.mul(t.constant(task.loss_weight), mse),
                 sharpe_loss(t, weights, future, task.risk_free))
    t.set_output(loss)
    sizes = [(d_in, net.hidden), (net.hidden, n), (net.hidden, n)]
    return t, sizes


def init_portfolio_theta(rng, sizes, gain):
    """Glorot init, except the return head starts at zero.

    Per-period returns are of order 1e-2, so a zero forecast is already at
    the right scale; a random head would spend most of training shrinking.
    """
    blocks = [mlp_init(rng, list(s), gain) for s in sizes]
    blocks[1][:] = 0.0
    return np.concatenate(blocks)


def train_portfolio(task, net, adam_cfg, steps, seed=0, objective=True):
    """Train the allocation network with Adam; returns the trace."""
    net = net or NetSpec()
    tape, sizes = portfolio_tape(task, net)
    rng = np.random.default_rng(seed)
    theta0 = init_portfolio_theta(rng, sizes, net.gain)
    model = TapeModel(tape, lambda s: s)
    return train(model, task.samples(), adam_cfg, steps, seed=seed,
                 theta0=theta0, objective=objective)
