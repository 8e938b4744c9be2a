"""Command-line entry point.

Index sets are 1-based on the command line and in every output file.  Data
goes to ``--out`` (or stdout), summaries to stderr.  Exit codes: 0 success,
1 input or configuration error, 2 numerical or convergence failure.
"""

import argparse
import dataclasses
import json
import sys
from contextlib import contextmanager

import numpy as np

from . import __version__
from .autodiff import gradcheck
from .errors import InputError, NumericalError
from .hs import dense_jacobian, hs_element, path_integral_error, random_segment
from .optim import AdamConfig
from .polytope import load
from .qp import DEFAULT_TOL, project
from .tasks.birkhoff import compare_birkhoff
from .tasks.common import NetSpec
from .tasks.matching import gen_matching_task, train_matching
from .tasks.portfolio import PortfolioTask, gen_portfolio_data, train_portfolio
from .tasks import toy

GRADCHECK_PASS = 1e-4
CONSERVATIVITY_PASS = 1e-4


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def parse_vector(text, name="x"):
    vals = []
    for tok in text.replace(",", " ").split():
        try:
            vals.append(float(tok))
        except ValueError:
            raise InputError(f"bad number {tok!r} in {name}") from None
    if not vals:
        raise InputError(f"{name} is empty")
    return np.array(vals)


def _one_based(idx):
    return [int(i) + 1 for i in idx]


@contextmanager
def _output(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _dump_json(obj, fh):
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")


def _manifest(args, command, config):
    man = {"command": command, "version": f"v{__version__}", "seed": args.seed,
           "tol": args.tol, "config": config}
    if args.out is None:
        _dump_json(man, sys.stderr)
    else:
        with open(args.out + ".manifest.json", "w") as fh:
            _dump_json(man, fh)


def _floats(arr):
    return [float(v) for v in np.asarray(arr).ravel()]


# -- subcommands -------------------------------------------------------------

def cmd_project(args):
    P = load(args.polytope)
    res = project(P, parse_vector(args.x), tol=args.tol)
    with _output(args.out) as fh:
        _dump_json({"y": _floats(res.y), "lambda": _floats(res.lam), "mu": _floats(res.mu),
                    "active": _one_based(res.active), "residual": res.kkt_residual,
                    "iterations": res.iterations}, fh)
    _manifest(args, "project", {"polytope": args.polytope, "x": args.x})
    return 0


def cmd_jacobian(args):
    P = load(args.polytope)
    res = project(P, parse_vector(args.x), tol=args.tol)
    f = hs_element(P, res)
    with _output(args.out) as fh:
        _dump_json({"J": dense_jacobian(f).tolist(), "active": _one_based(res.active),
                    "rank": f.rank}, fh)
    _manifest(args, "jacobian", {"polytope": args.polytope, "x": args.x})
    return 0


def _gradcheck_task(name, rng):
    """``(tape, theta)`` for a named gradient-check task."""
    if name == "quadratic":
        return toy.quadratic_tape(), np.array([3.0])
    if name == "product":
        return toy.product_tape(), np.array([2.0, 3.0])
    if name == "relu-kink":
        return toy.relu_tape(), np.array([0.0])
    if name == "projected-norm":
        # W x + beta projects to (1.14, -0.14): x1 >= 0.3 is slack, J != 0
        tape = toy.projected_norm_tape(x=(0.4, -0.7), y=0.2)
        return tape, np.array([1.0, 0.2, -0.3, 1.0, 0.1, 0.05])
    if name == "simplex-mlp":
        tape, theta, _ = toy.simplex_mlp_tape(rng)
        return tape, theta
    raise InputError(f"unknown gradcheck task {name!r}")


GRADCHECK_TASKS = ("quadratic", "product", "relu-kink", "projected-norm", "simplex-mlp")


def cmd_gradcheck(args):
    if not 1e-8 <= args.h <= 1e-4:
        raise InputError(f"h={args.h} outside [1e-8, 1e-4]")
    tape, theta = _gradcheck_task(args.task, np.random.default_rng(args.seed))
    report = gradcheck(tape, theta, h=args.h)
    with _output(args.out) as fh:
        fh.write("index,grad,fd,rel_error,flagged\n")
        for r in report.rows:
            fh.write(f"{r.index + 1},{r.grad!r},{r.fd!r},{r.rel_error!r},{int(r.flagged)}\n")
    ok = report.max_error <= GRADCHECK_PASS
    print(f"max_rel_error={report.max_error:.3e} flagged={report.flagged} "
          f"{'PASS' if ok else 'FAIL'}", file=sys.stderr)
    _manifest(args, "gradcheck", {"task": args.task, "h": args.h})
    return 0 if ok else 2


def cmd_conservativity(args):
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    if args.samples < 2:
        raise InputError("samples must be >= 2")
    P = load(args.polytope)
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    with _output(args.out) as fh:
        fh.write("segment,error_inf,crossings\n")
        for k in range(args.trials):
            x0, x1 = random_segment(P, rng, length=args.length)
            err, cross = path_integral_error(P, x0, x1, samples=args.samples, tol=args.tol)
            worst = max(worst, err)
            fh.write(f"{k + 1},{err!r},{cross}\n")
    ok = worst <= CONSERVATIVITY_PASS
    print(f"max_error={worst:.3e} {'PASS' if ok else 'FAIL'}", file=sys.stderr)
    _manifest(args, "conservativity", {"polytope": args.polytope, "trials": args.trials,
                                       "samples": args.samples, "length": args.length})
    return 0 if ok else 2


def cmd_compare_sinkhorn(args):
    if args.trials < 1:
        raise InputError("trials must be >= 1")
    cmp = compare_birkhoff(args.c, args.trials, args.iters, seed=args.seed, spread=args.spread)
    with _output(args.out) as fh:
        cmp.write_csv(fh)
    cmp.write_summary(sys.stderr)
    _manifest(args, "compare-sinkhorn", {"c": args.c, "trials": args.trials,
                                         "iters": sorted(set(args.iters)),
                                         "spread": args.spread})
    return 0


# -- training configs --------------------------------------------------------

def _int(v):
    return int(v)


def _bool(v):
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _index_list(v):
    return tuple(int(tok) for tok in v.replace(",", " ").split())


_COMMON_KEYS = {
    "task": str, "steps": _int, "seed": _int, "data_seed": _int, "samples": _int,
    "eta0": float, "step_exponent": float, "tau1": float, "tau2": float, "eps": float,
    "bias_correction": _bool, "norm_cap": float,
    "hidden": _int, "activation": str, "gain": float,
}
_TASK_KEYS = {
    "portfolio": {"n_assets": _int, "window": _int, "horizon": _int, "C": _index_list,
                  "delta": float, "risk_free": float, "loss_weight": float},
    "matching": {"d1": _int, "d2": _int, "alpha": _int, "feat_dim": _int, "noise": float},
}
_REQUIRED = ("task", "steps")


def read_config(text):
    """Parse ``key=value`` lines (``#`` comments) into a typed dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in raw:
            raise InputError(f"config line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for key in _REQUIRED:
        if key not in raw:
            raise InputError(f"config is missing required key {key!r}")
    task = raw["task"]
    if task not in _TASK_KEYS:
        raise InputError(f"unknown task {task!r}; expected one of {sorted(_TASK_KEYS)}")
    known = {**_COMMON_KEYS, **_TASK_KEYS[task]}
    cfg = {}
    for key, value in raw.items():
        if key not in known:
            raise InputError(f"unknown config key {key!r} for task {task!r}")
        try:
            cfg[key] = known[key](value)
        except ValueError:
            raise InputError(f"bad value {value!r} for config key {key!r}") from None
    return cfg


_TASK_DEFAULTS = {
    "portfolio": {"n_assets": 8, "window": 10, "horizon": 10, "C": (), "delta": 0.0,
                  "risk_free": 0.03, "loss_weight": 1.0},
    "matching": {"d1": 4, "d2": 4, "alpha": 3, "feat_dim": 2, "noise": 0.1},
}


def resolve_config(cfg, seed):
    """Fill defaults: task keys, seeds, and every Adam and network field."""
    full = {"seed": seed, "samples": 16, **_TASK_DEFAULTS[cfg["task"]], **cfg}
    full.setdefault("data_seed", full["seed"])
    adam = AdamConfig(**{k: full[k] for k in ("eta0", "step_exponent", "tau1", "tau2", "eps",
                                              "bias_correction", "norm_cap") if k in full})
    net = NetSpec(**{k: full[k] for k in ("hidden", "activation", "gain") if k in full})
    full.update(dataclasses.asdict(adam))
    full.update(dataclasses.asdict(net))
    return full, adam, net


def run_config(cfg, seed):
    """Build the task described by ``cfg`` and train it.

    Returns ``(trace, resolved)`` where ``resolved`` is the config with all
    defaults filled in.
    """
    full, adam, net = resolve_config(cfg, seed)
    if full["task"] == "portfolio":
        n, window, horizon = full["n_assets"], full["window"], full["horizon"]
        if any(i < 1 or i > n for i in full["C"]):
            raise InputError(f"C entries must lie in 1..{n}")
        returns = gen_portfolio_data(n, window + horizon + full["samples"] - 1,
                                     full["data_seed"], window=window)
        task = PortfolioTask(returns, C=tuple(i - 1 for i in full["C"]), delta=full["delta"],
                             window=window, horizon=horizon, risk_free=full["risk_free"],
                             loss_weight=full["loss_weight"])
        trace = train_portfolio(task, net, adam, full["steps"], seed=full["seed"])
    else:
        task = gen_matching_task(full["d1"], full["d2"], full["alpha"], full["samples"],
                                 full["data_seed"], feat_dim=full["feat_dim"],
                                 noise=full["noise"])
        trace = train_matching(task, net, adam, full["steps"], seed=full["seed"])
    return trace, full


def cmd_train(args):
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None
    cfg = read_config(text)
    if cfg["steps"] < 1:
        raise InputError("steps must be >= 1")
    trace, full = run_config(cfg, args.seed)
    with _output(args.out) as fh:
        trace.write_csv(fh)
    print(f"final_loss={trace.loss[-1]:.6g} "
          f"max_feas_violation={max(trace.feas_violation_max):.3e}", file=sys.stderr)
    resolved = {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(full.items())}
    _manifest(args, "train", resolved)
    return 0


# -- entry point -------------------------------------------------------------

def build_parser():
    p = _Parser(prog="polyproj", description=__doc__.splitlines()[0])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file (default stdout)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="projection tolerance")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("project", help="project a point onto a polytope file")
    s.add_argument("polytope")
    s.add_argument("--x", required=True, help="point, whitespace or comma separated")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("jacobian", help="dense HS-Jacobian element at a point")
    s.add_argument("polytope")
    s.add_argument("--x", required=True)
    s.set_defaults(func=cmd_jacobian)

    s = sub.add_parser("gradcheck", help="reverse mode vs central differences")
    s.add_argument("--task", choices=GRADCHECK_TASKS, default="projected-norm")
    s.add_argument("--h", type=float, default=1e-6)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("conservativity", help="path-integral check along random segments")
    s.add_argument("polytope")
    s.add_argument("--trials", type=int, default=50)
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--length", type=float, default=0.25)
    s.set_defaults(func=cmd_conservativity)

    s = sub.add_parser("train", help="train a task from a key=value config")
    s.add_argument("config")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("compare-sinkhorn", help="Birkhoff projection vs Sinkhorn feasibility")
    s.add_argument("--c", type=int, default=8)
    s.add_argument("--trials", type=int, default=100)
    s.add_argument("--iters", type=int, nargs="+", default=[20])
    s.add_argument("--spread", type=float, default=2.5)
    s.set_defaults(func=cmd_compare_sinkhorn)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
