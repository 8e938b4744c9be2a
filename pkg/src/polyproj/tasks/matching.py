"""Toy partial graph matching.

Each sample has ``d1`` source and ``d2`` target nodes with random features.
Exactly ``alpha`` source nodes have a partner among the targets whose
features are a noisy copy of their own; the remaining nodes are outliers.
An MLP scores all ``d1 * d2`` pairs, a projection layer maps the scores onto
the partial-matching polytope and the loss is the clamped binary
cross-entropy against the ground-truth partial permutation.
"""

from dataclasses import dataclass

import numpy as np

from ..autodiff import BCE_CLAMP, Tape, TapeModel, mlp_apply, mlp_init, mlp_parameters
from ..errors import InputError
from ..optim import train
from ..polytope import make_matching
from .common import NetSpec


@dataclass
class MatchingTask:
    d1: int
    d2: int
    alpha: int
    # per sample: concatenated node features and the d1 x d2 0/1 matrix
    features: list
    ground_truth: list
    clamp: float = BCE_CLAMP

    def __post_init__(self):
        if len(self.features) != len(self.ground_truth):
            raise InputError("features and ground_truth differ in length")
        for gt in self.ground_truth:
            gt = np.asarray(gt)
            if gt.shape != (self.d1, self.d2):
                raise InputError(f"ground truth of shape {gt.shape}, "
                                 f"expected {(self.d1, self.d2)}")
            if int(gt.sum()) != self.alpha:
                raise InputError("alpha must equal the ground-truth match count")

    @property
    def n_features(self):
        return len(self.features[0]) if self.features else 0

    def polytope(self):
        return make_matching(self.d1, self.d2, self.alpha)

    def samples(self):
        return [{"x": np.asarray(f, dtype=float), "target": np.asarray(g, dtype=float).ravel()}
                for f, g in zip(self.features, self.ground_truth)]


def random_partial_permutation(rng, d1, d2, alpha):
    if not 0 <= alpha <= min(d1, d2):
        raise InputError(f"alpha={alpha} must lie in [0, min(d1, d2)]")
    gt = np.zeros((d1, d2))
    rows = rng.choice(d1, size=alpha, replace=False)
    cols = rng.choice(d2, size=alpha, replace=False)
    gt[rows, cols] = 1.0
    return gt


def gen_matching_task(d1, d2, alpha, n_samples, seed, feat_dim=2, noise=0.1):
    """Synthetic matching samples; features are ``[u_1..u_d1, v_1..v_d2]``."""
    if n_samples < 1:
        raise InputError("need at least one sample")
    rng = np.random.default_rng(seed)
    feats, gts = [], []
    for _ in range(n_samples):
        gt = random_partial_permutation(rng, d1, d2, alpha)
        u = rng.normal(size=(d1, feat_dim))
        v = rng.normal(size=(d2, feat_dim))
        i, j = np.nonzero(gt)
        v[j] = u[i] + noise * rng.normal(size=(i.size, feat_dim))
        feats.append(np.concatenate([u.ravel(), v.ravel()]))
        gts.append(gt)
    return MatchingTask(d1, d2, int(alpha), feats, gts)


def matching_tape(task, net):
    sizes = [task.n_features, net.hidden, task.d1 * task.d2]
    t = Tape()
    layers = mlp_parameters(t, sizes)
    x = t.constant(np.zeros(task.n_features), "x")
    target = t.constant(np.zeros(task.d1 * task.d2), "target")
    scores = mlp_apply(t, layers, x, activation=net.activation)
    X = t.projection(scores, task.polytope(), warm_start=True)
    t.set_output(t.bce_loss(X, target, eps=task.clamp))
    return t, sizes


def train_matching(task, net, adam_cfg, steps, seed=0, objective=True):
    net = net or NetSpec()
    tape, sizes = matching_tape(task, net)
    theta0 = mlp_init(np.random.default_rng(seed), sizes, net.gain)
    model = TapeModel(tape, lambda s: s)
    return train(model, task.samples(), adam_cfg, steps, seed=seed,
                 theta0=theta0, objective=objective)
