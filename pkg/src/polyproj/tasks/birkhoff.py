"""Exact Birkhoff projection against finite-step Sinkhorn normalization."""

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import InputError
from ..polytope import make_birkhoff
from ..qp import project


@dataclass(frozen=True)
class SinkhornConfig:
    iterations: int = 20
    entry_floor: float = 1e-30

    def __post_init__(self):
        if self.iterations < 1:
            raise InputError("Sinkhorn needs at least one iteration")
        if not self.entry_floor > 0:
            raise InputError("entry_floor must be positive")


def sinkhorn_iterates(m0, cfg=SinkhornConfig()):
    """Yield ``("row", M)`` and ``("col", M)`` after every half sweep.

    Zero entries are lifted to ``cfg.entry_floor``; negative or non-finite
    entries are rejected.  The yielded matrices are copies.
    """
    M = np.array(m0, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.size == 0:
        raise InputError(f"expected a nonempty square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)) or M.min() < 0.0:
        raise InputError("Sinkhorn input must be finite and nonnegative")
    M = np.maximum(M, cfg.entry_floor)
    for _ in range(cfg.iterations):
        M /= M.sum(axis=1, keepdims=True)
        yield "row", M.copy()
        M /= M.sum(axis=0, keepdims=True)
        yield "col", M.copy()


def sinkhorn(m0, cfg=SinkhornConfig()):
    """``cfg.iterations`` sweeps of row then column normalization."""
    M = None
    for _, M in sinkhorn_iterates(m0, cfg):
        pass
    return M


def birkhoff_violation(H):
    """Per-sample ``max(V1_eq, V2_eq, V_ineq)`` with all ``2c`` sum rows."""
    H = np.asarray(H, dtype=float)
    v_rows = float(np.sum((H.sum(axis=1) - 1.0) ** 2))
    v_cols = float(np.sum((H.sum(axis=0) - 1.0) ** 2))
    v_neg = float(np.sum(np.minimum(H, 0.0) ** 2))
    return max(v_rows, v_cols, v_neg)


def random_positive_matrix(rng, c, spread=2.5):
    """``exp(spread * Z)`` with standard normal Z: positive with a wide range."""
    return np.exp(spread * rng.standard_normal((c, c)))


@dataclass
class BirkhoffComparison:
    c: int
    # rows (trial, method, iterations, v_all); iterations is 0 for projection
    rows: list

    def values(self, method, iterations=0):
        return np.array([r[3] for r in self.rows if r[1] == method and r[2] == iterations])

    def median(self, method, iterations=0):
        return float(np.median(self.values(method, iterations)))

    def win_rate(self, iterations):
        """Fraction of trials where projection is strictly more feasible."""
        proj = self.values("projection")
        sk = self.values("sinkhorn", iterations)
        return float(np.mean(sk > proj))

    def sinkhorn_iterations(self):
        return sorted({r[2] for r in self.rows if r[1] == "sinkhorn"})

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "method", "iterations", "v_all"])
        for trial, method, iters, v in self.rows:
            w.writerow([trial, method, iters, repr(float(v))])

    def write_summary(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "iterations", "median_v_all", "max_v_all", "projection_win_rate"])
        proj = self.values("projection")
        w.writerow(["projection", 0, repr(float(np.median(proj))), repr(float(proj.max())), ""])
        for k in self.sinkhorn_iterations():
            sk = self.values("sinkhorn", k)
            w.writerow(["sinkhorn", k, repr(float(np.median(sk))), repr(float(sk.max())),
                        repr(self.win_rate(k))])


def compare_birkhoff(c, trials, sinkhorn_iters=(20,), seed=0, spread=2.5):
    """Feasibility of exact projection vs Sinkhorn on random positive matrices."""
    if c < 2:
        raise InputError("Birkhoff comparison needs c >= 2")
    if trials < 1:
        raise InputError("trials must be >= 1")
    iters = sorted({int(k) for k in sinkhorn_iters})
    if not iters or iters[0] < 1:
        raise InputError("Sinkhorn iteration counts must be >= 1")
    P = make_birkhoff(c)
    rng = np.random.default_rng(seed)
    rows = []
    for trial in range(trials):
        M = random_positive_matrix(rng, c, spread)
        H = project(P, M.ravel()).y.reshape(c, c)
        rows.append((trial, "projection", 0, birkhoff_violation(H)))
        for k in iters:
            rows.append((trial, "sinkhorn", k,
                         birkhoff_violation(sinkhorn(M, SinkhornConfig(iterations=k)))))
    return BirkhoffComparison(c, rows)
