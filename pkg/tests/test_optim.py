import io
import math

import numpy as np
import pytest

from polyproj.errors import DivergenceError, InputError
from polyproj.optim import (TRACE_COLUMNS, AdamConfig, AdamState, adam_step,
                            final_window_oscillation, scaling_params, train)


class Quadratic:
    """``(theta - 1)^2`` for every sample; the dataset content is ignored."""

    def __call__(self, theta, sample):
        r = theta - 1.0
        return float(r @ r), 2.0 * r, []

    def loss(self, theta, sample):
        r = theta - 1.0
        return float(r @ r), []


class Push:
    """Constant gradient -1: drives theta upwards without bound."""

    def __call__(self, theta, sample):
        return float(-theta.sum()), -np.ones_like(theta), []


def test_single_step_by_hand():
    cfg = AdamConfig(tau1=1.0, tau2=1.0, eta0=0.1, eps=1e-8, bias_correction=False)
    s = adam_step(AdamState.init([1.0]), [2.0], cfg)
    assert s.m[0] == pytest.approx(0.2, rel=1e-15)
    assert s.v[0] == pytest.approx(0.4, rel=1e-15)
    expected = 1.0 - 0.1 * 0.2 / math.sqrt(0.4 + 1e-8)
    assert abs(s.theta[0] - expected) <= 1e-15 * abs(expected)
    assert abs(s.theta[0] - 0.9683772) < 1e-7


def test_zero_gradient_keeps_state():
    cfg = AdamConfig()
    s = adam_step(AdamState.init([0.5, -2.0]), [0.0, 0.0], cfg)
    np.testing.assert_array_equal(s.theta, [0.5, -2.0])
    np.testing.assert_array_equal(s.m, [0.0, 0.0])
    np.testing.assert_array_equal(s.v, [0.0, 0.0])


def test_config_validation():
    with pytest.raises(InputError):
        AdamConfig(tau1=1.0, tau2=5.0)
    AdamConfig(tau1=1.0, tau2=4.0)
    for bad in ({"eta0": 0.0}, {"eps": -1.0}, {"step_exponent": 0.0},
                {"step_exponent": 1.5}):
        with pytest.raises(InputError):
            AdamConfig(**bad)


def test_step_is_capped():
    cfg = AdamConfig(tau1=10.0, tau2=10.0, eta0=1.0)
    assert cfg.eta(0) == 0.05
    assert cfg.eta(10 ** 6) == pytest.approx(1e6 ** -0.6 * (1 + 1e-6) ** -0.6)


def test_step_rejects_bad_gradients():
    s = AdamState.init([1.0, 2.0])
    with pytest.raises(InputError):
        adam_step(s, [1.0], AdamConfig())
    with pytest.raises(InputError):
        adam_step(s, [np.inf, 0.0], AdamConfig())


def test_second_moment_stays_nonnegative():
    rng = np.random.default_rng(0)
    cfg = AdamConfig(tau1=1.0, tau2=4.0, eta0=0.1)
    s = AdamState.init(rng.normal(size=5))
    for _ in range(200):
        s = adam_step(s, rng.normal(size=5) * 10.0, cfg)
        assert np.all(s.v >= 0.0)


def test_scaling_params():
    off = AdamConfig(bias_correction=False)
    assert all(scaling_params(t, off) == (1.0, 1.0) for t in (0, 5, 1000))
    cfg = AdamConfig(tau1=1.0, tau2=1.0, eta0=0.1)
    rho_m, rho_v = scaling_params(0, cfg)
    assert rho_m == pytest.approx(10.0, rel=1e-14) and rho_v == pytest.approx(10.0, rel=1e-14)
    # run until the product falls below 1e-6, then check one step later
    prod, t = 1.0, 0
    while prod > 1e-6:
        prod *= 1.0 - cfg.eta(t)
        t += 1
    rho_m, rho_v = scaling_params(t, cfg)
    assert abs(rho_m - 1.0) <= 1e-6 and abs(rho_v - 1.0) <= 1e-6


def test_step_uses_product_form_correction():
    cfg = AdamConfig(tau1=2.0, tau2=0.5, eta0=0.1)
    rng = np.random.default_rng(1)
    s = AdamState.init([0.3])
    for t in range(5):
        g = rng.normal(size=1)
        rho_m, rho_v = scaling_params(t, cfg)
        eta = cfg.eta(t)
        m = (1 - 2.0 * eta) * s.m + 2.0 * eta * g
        v = (1 - 0.5 * eta) * s.v + 0.5 * eta * g * g
        expected = s.theta - eta * (rho_v * v + cfg.eps) ** -0.5 * rho_m * m
        s = adam_step(s, g, cfg)
        np.testing.assert_allclose(s.theta, expected, rtol=1e-14)


def test_schedule_contract_for_default_exponent():
    cfg = AdamConfig()
    assert cfg.log_step_decreasing_from() <= 10
    t = np.unique(np.geomspace(10, 1e6, 2000).astype(int))
    f = cfg.eta0 * (1.0 + t) ** -cfg.step_exponent * np.log(t + 2.0)
    assert np.all(np.diff(f) < 0)
    assert f[-1] < 1e-3
    assert AdamConfig(step_exponent=1.0).log_step_decreasing_from() == 0


def test_quadratic_converges():
    # moment averaging rates tau * eta are 0.5 at the start; with tau = 1 the
    # momentum lags so much that theta overshoots by ~0.08 after 2000 steps
    cfg = AdamConfig(eta0=0.1, tau1=5.0, tau2=5.0)
    tr = train(Quadratic(), [None], cfg, 2000, theta0=np.zeros(1))
    assert abs(tr.theta[0] - 1.0) <= 1e-2
    assert tr.loss[-1] < tr.loss[0]


def test_training_is_deterministic():
    cfg = AdamConfig(eta0=0.1)
    data = list(range(5))
    a = train(Quadratic(), data, cfg, 100, seed=3, theta0=np.zeros(2), objective=True)
    b = train(Quadratic(), data, cfg, 100, seed=3, theta0=np.zeros(2), objective=True)
    assert a.loss == b.loss and a.objective == b.objective
    np.testing.assert_array_equal(a.theta, b.theta)


def test_trace_csv():
    tr = train(Quadratic(), [None], AdamConfig(), 3, theta0=np.zeros(1))
    buf = io.StringIO()
    tr.write_csv(buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 4 and lines[1].startswith("0,")
    assert float(lines[2].split(",")[4]) == AdamConfig().eta(1)


def test_divergence_becomes_an_error():
    cfg = AdamConfig(eta0=0.1, norm_cap=1e-3)
    with pytest.raises(DivergenceError, match="step 0"):
        train(Push(), [None], cfg, 10, theta0=np.zeros(1))


def test_train_rejects_empty_dataset():
    with pytest.raises(InputError):
        train(Quadratic(), [], AdamConfig(), 10, theta0=np.zeros(1))


def test_final_window_oscillation():
    vals = np.r_[np.linspace(5.0, 1.0, 80), [1.0, 1.2, 0.9] * 6 + [1.1, 1.0]]
    assert final_window_oscillation(vals) == pytest.approx(0.3)
    assert final_window_oscillation(np.ones(10)) == 0.0
