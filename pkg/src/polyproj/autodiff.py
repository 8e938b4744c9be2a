"""Tape-based reverse-mode nonsmooth AD.

A :class:`Tape` is a static computation graph.  Leading nodes are trainable
parameter blocks; every other node applies one elementary operation to
earlier nodes.  :meth:`Tape.forward` evaluates the graph for a flat parameter
vector and bound inputs, :meth:`Tape.reverse` sweeps adjoints back and
returns the flat gradient.

Nodes are vector-valued (one projection node instead of n scalar rows).  At
nonsmooth points each rule returns a fixed Clarke element: relu'(0) = 0,
abs'(0) = 0, the guarded sqrt has slope 0 below its floor, the BCE clamp has
slope 0 on the clamped plateaus.  Projection nodes back-propagate through the
HS-Jacobian element of the active set found in the forward solve.
"""

from dataclasses import dataclass, field

import numpy as np

from . import hs
from .errors import ConvergenceError, InputError
from .polytope import feasibility_violation
from .qp import DEFAULT_TOL, project

SQRT_FLOOR = 1e-12
BCE_CLAMP = 1e-3


@dataclass
class Node:
    op: str
    parents: tuple = ()
    size: int = 1
    attrs: dict = field(default_factory=dict)
    value: np.ndarray = None
    adjoint: np.ndarray = None


def _unbroadcast(g, size):
    return np.array([g.sum()]) if size == 1 and g.size != 1 else g


class Tape:
    def __init__(self):
        self.nodes = []
        self.output = None
        self._param_nodes = []
        self._slices = {}
        self.param_count = 0

    # -- graph definition ---------------------------------------------------

    def _add(self, op, parents=(), size=1, **attrs):
        parents = tuple(int(p) for p in parents)
        for p in parents:
            if not 0 <= p < len(self.nodes):
                raise InputError(f"parent {p} is not an earlier node")
        self.nodes.append(Node(op, parents, int(size), attrs))
        return len(self.nodes) - 1

    def parameter(self, size, name=None):
        if len(self._param_nodes) != len(self.nodes):
            raise InputError("parameters must be declared before other nodes")
        k = self._add("parameter", (), size, name=name)
        self._param_nodes.append(k)
        self._slices[k] = slice(self.param_count, self.param_count + size)
        self.param_count += size
        return k

    def param_slice(self, node):
        return self._slices[node]

    def constant(self, value, name=None):
        """Constant node; a ``name`` lets :meth:`forward` rebind it per call."""
        value = np.atleast_1d(np.asarray(value, dtype=float)).ravel()
        return self._add("constant", (), value.size, value=value, name=name)

    def _size(self, k):
        return self.nodes[k].size

    def _binary(self, op, a, b):
        sa, sb = self._size(a), self._size(b)
        if sa != sb and 1 not in (sa, sb):
            raise InputError(f"{op}: sizes {sa} and {sb} do not broadcast")
        return self._add(op, (a, b), max(sa, sb))

    def add(self, a, b):
        return self._binary("add", a, b)

    def sub(self, a, b):
        return self._binary("sub", a, b)

    def mul(self, a, b):
        return self._binary("mul", a, b)

    def div(self, a, b):
        return self._binary("div", a, b)

    def affine(self, w, x, b=None, order="C"):
        """``W x + b`` where node ``w`` holds W flattened in ``order``."""
        n_in = self._size(x)
        if self._size(w) % n_in:
            raise InputError("weight size is not a multiple of the input size")
        n_out = self._size(w) // n_in
        parents = (w, x) if b is None else (w, x, b)
        if b is not None and self._size(b) != n_out:
            raise InputError(f"bias size {self._size(b)} != {n_out}")
        return self._add("affine", parents, n_out, shape=(n_out, n_in), order=order)

    def _unary(self, op, a, **attrs):
        return self._add(op, (a,), self._size(a), **attrs)

    def relu(self, a):
        return self._unary("relu", a)

    def sigmoid(self, a):
        return self._unary("sigmoid", a)

    def tanh(self, a):
        return self._unary("tanh", a)

    def sqrt(self, a):
        return self._unary("sqrt", a)

    def square(self, a):
        return self._unary("square", a)

    def abs(self, a):
        return self._unary("abs", a)

    def sum(self, a):
        return self._add("sum", (a,), 1)

    def mean(self, a):
        return self._add("mean", (a,), 1)

    def mse_loss(self, a, target):
        if self._size(a) != self._size(target):
            raise InputError("mse_loss operands differ in size")
        return self._add("mse", (a, target), 1)

    def bce_loss(self, p, target, eps=BCE_CLAMP):
        if self._size(p) != self._size(target):
            raise InputError("bce_loss operands differ in size")
        return self._add("bce", (p, target), 1, eps=float(eps))

    def projection(self, a, polytope, tol=DEFAULT_TOL, warm_start=False):
        if polytope.n != self._size(a):
            raise InputError(f"projection input has size {self._size(a)}, "
                             f"polytope dimension is {polytope.n}")
        return self._add("projection", (a,), polytope.n, polytope=polytope,
                         tol=tol, warm_start=warm_start)

    def set_output(self, k):
        if self._size(k) != 1:
            raise InputError("output node must be scalar")
        self.output = k
        return k

    # -- evaluation ---------------------------------------------------------

    def forward(self, theta, inputs=None):
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.param_count:
            raise InputError(f"expected {self.param_count} parameters, got {theta.size}")
        if not np.all(np.isfinite(theta)):
            raise InputError("non-finite parameter values")
        if self.output is None:
            raise InputError("tape has no output node")
        inputs = inputs or {}
        for k, node in enumerate(self.nodes):
            if node.op == "parameter":
                node.value = theta[self._slices[k]].copy()
            elif node.op == "constant":
                name = node.attrs["name"]
                if name is not None and name in inputs:
                    val = np.atleast_1d(np.asarray(inputs[name], dtype=float)).ravel()
                    if val.size != node.size:
                        raise InputError(f"input {name!r} has size {val.size}, "
                                         f"expected {node.size}")
                    node.attrs["value"] = val
                node.value = node.attrs["value"]
            else:
                args = [self.nodes[p].value for p in node.parents]
                try:
                    node.value = _FORWARD[node.op](node, *args)
                except ConvergenceError as exc:
                    exc.node = k
                    raise
        return float(self.nodes[self.output].value[0])

    def reverse(self):
        """Gradient of the output w.r.t. the flat parameter vector."""
        for node in self.nodes:
            node.adjoint = np.zeros(node.size)
        self.nodes[self.output].adjoint[:] = 1.0
        for k in range(len(self.nodes) - 1, -1, -1):
            node = self.nodes[k]
            if not node.parents:
                continue
            args = [self.nodes[p].value for p in node.parents]
            grads = _VJP[node.op](node, node.adjoint, *args)
            for p, g in zip(node.parents, grads):
                self.nodes[p].adjoint += _unbroadcast(g, self.nodes[p].size)
        out = np.zeros(self.param_count)
        for k in self._param_nodes:
            out[self._slices[k]] = self.nodes[k].adjoint
        return out

    def signature(self):
        """Which smooth piece every nonsmooth node is on (for gradcheck)."""
        sig = []
        for node in self.nodes:
            if node.op in ("relu", "abs"):
                sig.append(tuple(np.sign(self.nodes[node.parents[0]].value)))
            elif node.op == "sqrt":
                sig.append(tuple(self.nodes[node.parents[0]].value > SQRT_FLOOR))
            elif node.op == "bce":
                p = self.nodes[node.parents[0]].value
                eps = node.attrs["eps"]
                sig.append(tuple(np.where(p <= eps, -1, np.where(p >= 1 - eps, 1, 0))))
            elif node.op == "projection":
                sig.append(tuple(node.attrs["result"].active.tolist()))
        return tuple(sig)

    def projection_violations(self):
        """``v_all`` of every projection node output from the last forward."""
        return [feasibility_violation(node.attrs["polytope"], node.value).v_all
                for node in self.nodes if node.op == "projection"]


# -- forward rules ----------------------------------------------------------

def _affine_fwd(node, w, x, b=None):
    W = w.reshape(node.attrs["shape"], order=node.attrs["order"])
    out = W @ x
    return out if b is None else out + b


def _sqrt_fwd(node, a):
    return np.sqrt(np.maximum(a, SQRT_FLOOR))


def _bce_fwd(node, p, t):
    eps = node.attrs["eps"]
    c = np.clip(p, eps, 1.0 - eps)
    return np.array([-np.mean(t * np.log(c) + (1.0 - t) * np.log(1.0 - c))])


def _projection_fwd(node, a):
    P = node.attrs["polytope"]
    warm = node.attrs.get("working") if node.attrs["warm_start"] else None
    res = project(P, a, tol=node.attrs["tol"], warm_start=warm)
    node.attrs["result"] = res
    node.attrs["working"] = res.working
    node.attrs["factor"] = hs.hs_element(P, res)
    return res.y


_FORWARD = {
    "add": lambda node, a, b: a + b,
    "sub": lambda node, a, b: a - b,
    "mul": lambda node, a, b: a * b,
    "div": lambda node, a, b: a / b,
    "affine": _affine_fwd,
    "relu": lambda node, a: np.maximum(a, 0.0),
    "sigmoid": lambda node, a: 0.5 * (1.0 + np.tanh(0.5 * a)),
    "tanh": lambda node, a: np.tanh(a),
    "sqrt": _sqrt_fwd,
    "square": lambda node, a: a * a,
    "abs": lambda node, a: np.abs(a),
    "sum": lambda node, a: np.array([a.sum()]),
    "mean": lambda node, a: np.array([a.mean()]),
    "mse": lambda node, a, t: np.array([np.mean((a - t) ** 2)]),
    "bce": _bce_fwd,
    "projection": _projection_fwd,
}


# -- vector-Jacobian rules --------------------------------------------------

def _affine_vjp(node, g, w, x, b=None):
    shape, order = node.attrs["shape"], node.attrs["order"]
    W = w.reshape(shape, order=order)
    gw = np.outer(g, x).ravel(order=order)
    grads = [gw, W.T @ g]
    if b is not None:
        grads.append(g)
    return grads


def _sqrt_vjp(node, g, a):
    live = a > SQRT_FLOOR
    return [np.where(live, 0.5 * g / np.sqrt(np.maximum(a, SQRT_FLOOR)), 0.0)]


def _bce_vjp(node, g, p, t):
    eps = node.attrs["eps"]
    c = np.clip(p, eps, 1.0 - eps)
    inside = (p > eps) & (p < 1.0 - eps)
    k = p.size
    dc = -(t / c - (1.0 - t) / (1.0 - c)) / k
    dt = -(np.log(c) - np.log(1.0 - c)) / k
    return [g[0] * dc * inside, g[0] * dt]


def _mse_vjp(node, g, a, t):
    d = 2.0 * g[0] * (a - t) / a.size
    return [d, -d]


def _sigmoid_vjp(node, g, a):
    s = node.value
    return [g * s * (1.0 - s)]


_VJP = {
    "add": lambda node, g, a, b: [g, g],
    "sub": lambda node, g, a, b: [g, -g],
    "mul": lambda node, g, a, b: [g * b, g * a],
    "div": lambda node, g, a, b: [g / b, -g * a / (b * b)],
    "affine": _affine_vjp,
    "relu": lambda node, g, a: [g * (a > 0.0)],
    "sigmoid": _sigmoid_vjp,
    "tanh": lambda node, g, a: [g * (1.0 - node.value ** 2)],
    "sqrt": _sqrt_vjp,
    "square": lambda node, g, a: [2.0 * g * a],
    "abs": lambda node, g, a: [g * np.sign(a)],
    "sum": lambda node, g, a: [np.full(a.size, g[0])],
    "mean": lambda node, g, a: [np.full(a.size, g[0] / a.size)],
    "mse": _mse_vjp,
    "bce": _bce_vjp,
    "projection": lambda node, g, a: [hs.vjp(node.attrs["factor"], g)],
}


# -- finite-difference validation ---------------------------------------------

@dataclass
class GradcheckRow:
    index: int
    grad: float
    fd: float
    rel_error: float
    flagged: bool


@dataclass
class GradcheckReport:
    rows: list

    @property
    def max_error(self):
        errs = [r.rel_error for r in self.rows if not r.flagged]
        return max(errs) if errs else 0.0

    @property
    def flagged(self):
        return sum(r.flagged for r in self.rows)


def gradcheck(tape, theta, h=1e-6, skip_nonsmooth=True, inputs=None):
    """Compare :meth:`Tape.reverse` with central differences.

    The relative error is ``|g - fd| / max(1, |g|, |fd|)``.  With
    ``skip_nonsmooth`` a coordinate is flagged (and excluded from
    :attr:`GradcheckReport.max_error`) when a perturbation of ``+-h`` moves
    any relu/abs/sqrt/clamp input across its kink or changes any projection
    active set, or when the base point already sits on a kink.
    """
    theta = np.asarray(theta, dtype=float).ravel().copy()
    tape.forward(theta, inputs)
    g = tape.reverse()
    base = tape.signature()
    rows = []
    for i in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fp = tape.forward(tp, inputs)
        sp = tape.signature()
        fm = tape.forward(tm, inputs)
        sm = tape.signature()
        fd = (fp - fm) / (2.0 * h)
        err = abs(g[i] - fd) / max(1.0, abs(g[i]), abs(fd))
        flagged = skip_nonsmooth and (sp != base or sm != base)
        rows.append(GradcheckRow(i, float(g[i]), float(fd), float(err), bool(flagged)))
    tape.forward(theta, inputs)
    return GradcheckReport(rows)


# -- model wrapper and networks ---------------------------------------------

class TapeModel:
    """Callable ``(theta, sample) -> (loss, grad, violations)`` over a tape.

    ``bind`` maps a dataset sample to the ``inputs`` dict of
    :meth:`Tape.forward`.
    """

    def __init__(self, tape, bind):
        self.tape = tape
        self.bind = bind

    def __call__(self, theta, sample):
        loss = self.tape.forward(theta, self.bind(sample))
        grad = self.tape.reverse()
        return loss, grad, self.tape.projection_violations()

    def loss(self, theta, sample):
        loss = self.tape.forward(theta, self.bind(sample))
        return loss, self.tape.projection_violations()


def mlp_parameters(tape, sizes):
    """Declare weight/bias parameter blocks for layer widths ``sizes``."""
    return [(tape.parameter(n_out * n_in), tape.parameter(n_out))
            for n_in, n_out in zip(sizes[:-1], sizes[1:])]


def mlp_apply(tape, layers, x, activation="tanh"):
    """Affine layers with ``activation`` between them (none after the last)."""
    act = getattr(tape, activation)
    for i, (w, b) in enumerate(layers):
        x = tape.affine(w, x, b)
        if i < len(layers) - 1:
            x = act(x)
    return x


def mlp_init(rng, sizes, gain=1.0):
    """Glorot-uniform weights and zero biases, in :func:`mlp_parameters` order."""
    parts = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = gain * np.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-bound, bound, size=n_out * n_in))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)
