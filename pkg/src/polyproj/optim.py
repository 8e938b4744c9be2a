"""Adam with decaying step sizes and the convergence-relevant contracts.

Update (elementwise)::

    m <- (1 - tau1 eta_t) m + tau1 eta_t g
    v <- (1 - tau2 eta_t) v + tau2 eta_t g*g
    theta <- theta - eta_t (rho_v |v| + eps)^(-1/2) * rho_m m

with ``eta_t = eta0 (1 + t)^(-step_exponent)`` capped so that
``max(tau1, tau2) eta_t <= 0.5``, and ``tau2 <= 4 tau1``.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError, InputError, PolyprojError


@dataclass(frozen=True)
class AdamConfig:
    tau1: float = 1.0
    tau2: float = 1.0
    eps: float = 1e-8
    eta0: float = 1e-2
    step_exponent: float = 0.6
    bias_correction: bool = True
    norm_cap: float = 1e6

    def __post_init__(self):
        for name in ("tau1", "tau2", "eps", "eta0", "norm_cap"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if self.tau2 > 4.0 * self.tau1:
            raise InputError(f"tau2={self.tau2} violates tau2 <= 4*tau1 "
                             f"(tau1={self.tau1})")
        # exponent in (0, 1]: sum eta_t diverges and eta_t log t -> 0
        if not 0.0 < self.step_exponent <= 1.0:
            raise InputError("step_exponent must lie in (0, 1]")

    def eta(self, t):
        raw = self.eta0 * (1.0 + t) ** (-self.step_exponent)
        return min(raw, 0.5 / max(self.tau1, self.tau2))

    def log_step_decreasing_from(self):
        """Smallest integer t0 with ``eta0 (1+t)^-p log(t+2)`` decreasing on [t0, inf).

        The derivative has the sign of ``g(t) = p (t+2) log(t+2) - (1+t)``;
        ``g`` is convex, so once ``g > 0`` and ``g' > 0`` it stays positive.
        The step cap is ignored: it only lowers the early steps.
        """
        p = self.step_exponent
        t = 0
        while True:
            g = p * (t + 2) * math.log(t + 2) - (1 + t)
            slope = p * (math.log(t + 2) + 1.0) - 1.0
            if g > 0 and slope > 0:
                return t
            t += 1


@dataclass
class AdamState:
    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    # running products prod_{s < t} (1 - tau eta_s) for the bias correction
    prod_m: float = 1.0
    prod_v: float = 1.0

    @classmethod
    def init(cls, theta):
        theta = np.array(theta, dtype=float)
        return cls(theta, np.zeros_like(theta), np.zeros_like(theta))


def scaling_params(t, cfg):
    """``(rho_m, rho_v)`` used by the step taken at time ``t``."""
    if not cfg.bias_correction:
        return 1.0, 1.0
    pm = pv = 1.0
    for s in range(t + 1):
        eta = cfg.eta(s)
        pm *= 1.0 - cfg.tau1 * eta
        pv *= 1.0 - cfg.tau2 * eta
    return 1.0 / (1.0 - pm), 1.0 / (1.0 - pv)


def adam_step(state, g, cfg):
    g = np.asarray(g, dtype=float)
    if g.shape != state.theta.shape:
        raise InputError(f"gradient shape {g.shape} != parameter shape {state.theta.shape}")
    if not np.all(np.isfinite(g)):
        raise InputError("non-finite gradient")
    eta = cfg.eta(state.t)
    a1, a2 = cfg.tau1 * eta, cfg.tau2 * eta
    m = (1.0 - a1) * state.m + a1 * g
    v = (1.0 - a2) * state.v + a2 * g * g
    prod_m = state.prod_m * (1.0 - a1)
    prod_v = state.prod_v * (1.0 - a2)
    if cfg.bias_correction:
        rho_m, rho_v = 1.0 / (1.0 - prod_m), 1.0 / (1.0 - prod_v)
    else:
        rho_m = rho_v = 1.0
    theta = state.theta - eta * (rho_v * np.abs(v) + cfg.eps) ** -0.5 * (rho_m * m)
    return AdamState(theta, m, v, state.t + 1, prod_m, prod_v)


TRACE_COLUMNS = ("step", "loss", "grad_norm", "feas_violation_max", "eta")


@dataclass
class Trace:
    """Per-step training record.

    ``objective`` (full-dataset mean loss at the step's parameters) is only
    filled when :func:`train` runs with ``objective=True``.
    """

    step: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    feas_violation_max: list = field(default_factory=list)
    eta: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    theta: np.ndarray = None

    def columns(self):
        return TRACE_COLUMNS + (("objective",) if self.objective else ())

    def write_csv(self, fh):
        cols = self.columns()
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for i in range(len(self.step)):
            w.writerow([self.step[i]] + [repr(float(getattr(self, c)[i])) for c in cols[1:]])


def final_window_oscillation(values, frac=0.2):
    """``max - min`` of ``values`` over the trailing ``frac`` of the run."""
    values = np.asarray(values, dtype=float)
    k = max(1, int(math.ceil(frac * values.size)))
    tail = values[-k:]
    return float(tail.max() - tail.min())


def train(model, dataset, cfg, steps, seed=0, theta0=None, objective=False):
    """Run Adam with one uniformly sampled example per step.

    ``model(theta, sample)`` returns ``(loss, grad, violations)`` where
    ``violations`` lists the ``v_all`` of every projection output.  With
    ``objective`` the mean loss over the whole dataset (and its worst
    projection violation) is evaluated at every step as well.
    """
    if len(dataset) == 0:
        raise InputError("empty dataset")
    if theta0 is None:
        raise InputError("theta0 is required")
    rng = np.random.default_rng(seed)
    state = AdamState.init(theta0)
    trace = Trace()
    for t in range(steps):
        sample = dataset[int(rng.integers(len(dataset)))]
        try:
            loss, g, viol = model(state.theta, sample)
            worst = max(viol, default=0.0)
            if objective:
                total = 0.0
                for other in dataset:
                    lo, vo = model.loss(state.theta, other)
                    total += lo
                    worst = max(worst, max(vo, default=0.0))
                trace.objective.append(total / len(dataset))
        except PolyprojError as exc:
            exc.step = t
            exc.args = (f"step {t}: {exc}",)
            raise
        trace.step.append(t)
        trace.loss.append(loss)
        trace.grad_norm.append(float(np.linalg.norm(g)))
        trace.feas_violation_max.append(worst)
        trace.eta.append(cfg.eta(t))
        state = adam_step(state, g, cfg)
        if not np.max(np.abs(state.theta)) <= cfg.norm_cap:
            raise DivergenceError(f"step {t}: |theta|_inf exceeded {cfg.norm_cap}")
    trace.theta = state.theta
    return trace

