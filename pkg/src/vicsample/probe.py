"""Linear evaluation: an L2-regularized softmax probe on frozen representations."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .graph import Graph
from .nn import GcnEncoderParams, encode


@dataclass(frozen=True)
class SplitSpec:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    seed: int = 0

    @classmethod
    def random(cls, n: int, train_frac: float = 0.1, val_frac: float = 0.1,
               test_frac: float = 0.8, seed: int = 0) -> "SplitSpec":
        if min(train_frac, val_frac, test_frac) <= 0 or train_frac + val_frac + test_frac > 1 + 1e-12:
            raise ValueError("split fractions must be positive and sum to at most 1")
        perm = np.random.default_rng([seed, 7]).permutation(n)
        n_train = max(1, int(round(train_frac * n)))
        n_val = max(1, int(round(val_frac * n)))
        n_test = min(n - n_train - n_val, max(1, int(round(test_frac * n))))
        if n_test < 1:
            raise ValueError(f"{n} nodes are too few for the requested split")
        return cls(
            np.sort(perm[:n_train]),
            np.sort(perm[n_train:n_train + n_val]),
            np.sort(perm[n_train + n_val:n_train + n_val + n_test]),
            seed,
        )


@dataclass
class ProbeResult:
    mean: float
    std: float
    accuracies: list[float]
    l2: float
    l2_per_trial: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ProbeFit:
    weights: np.ndarray
    bias: np.ndarray
    loss: float
    iterations: int
    grad_norm: float
    test_accuracy: float
    val_accuracy: float


def _softmax(logits):
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    return e / e.sum(axis=1, keepdims=True)


def _objective(w, b, x, y_onehot, l2):
    p = _softmax(x @ w + b)
    n = x.shape[0]
    loss = -np.sum(y_onehot * np.log(np.clip(p, 1e-300, None))) / n + 0.5 * l2 * np.sum(w * w)
    r = (p - y_onehot) / n
    return loss, x.T @ r + l2 * w, r.sum(axis=0)


def fit_logistic(x, y, num_classes, l2=1e-4, max_iters=5000, tol=1e-6, init=None):
    """Full-batch accelerated gradient descent on the multinomial logistic loss.

    The bias is left unregularized. Stops once the gradient norm drops below
    ``tol``. Nesterov momentum with gradient restarts; weights and bias get
    separate fixed steps from the block bound [X 1]^T [X 1] <= 2 diag(X^T X, n).
    """
    n, f = x.shape
    y1 = np.eye(num_classes)[y]
    # softmax cross-entropy Hessian is bounded by 0.5 * [X 1]^T [X 1] / n
    step_w = 1.0 / (np.linalg.norm(x, 2) ** 2 / n + l2)
    step_b = 1.0
    if init is None:
        w = np.zeros((f, num_classes))
        b = np.zeros(num_classes)
    else:
        w, b = (np.array(a, dtype=np.float64) for a in init)
    w_prev, b_prev = w, b
    t = 1.0
    it = 0
    gnorm = np.inf
    for it in range(1, max_iters + 1):
        t_next = (1 + np.sqrt(1 + 4 * t * t)) / 2
        beta = (t - 1) / t_next
        yw, yb = w + beta * (w - w_prev), b + beta * (b - b_prev)
        _, gw, gb = _objective(yw, yb, x, y1, l2)
        w_prev, b_prev = w, b
        w, b = yw - step_w * gw, yb - step_b * gb
        # restart momentum when the step opposes the gradient
        if np.sum(gw * (w - w_prev)) + np.sum(gb * (b - b_prev)) > 0:
            t_next = 1.0
        t = t_next
        _, gw_now, gb_now = _objective(w, b, x, y1, l2)
        gnorm = float(np.sqrt(np.sum(gw_now ** 2) + np.sum(gb_now ** 2)))
        if gnorm < tol:
            break
    loss, _, _ = _objective(w, b, x, y1, l2)
    return w, b, float(loss), it, gnorm


def _standardize(h, train):
    mu = h[train].mean(axis=0)
    sd = h[train].std(axis=0)
    sd[sd < 1e-12] = 1.0
    return (h - mu) / sd


def train_probe(h, labels, split: SplitSpec, l2: float = 1e-4, max_iters: int = 5000,
                tol: float = 1e-6, init=None, standardize: bool = True) -> ProbeFit:
    """Train on ``split.train`` and report test and validation accuracy."""
    h = np.asarray(h, dtype=np.float64)
    labels = np.asarray(labels)
    if labels.shape[0] != h.shape[0]:
        raise ValueError("need one label per representation row")
    classes = np.unique(labels[split.train])
    if len(classes) < 2:
        raise ValueError("training split contains a single class")
    num_classes = int(labels.max()) + 1
    x = _standardize(h, split.train) if standardize else h
    w, b, loss, it, gnorm = fit_logistic(x[split.train], labels[split.train], num_classes,
                                         l2, max_iters, tol, init)

    def acc(idx):
        if len(idx) == 0:
            return float("nan")
        pred = np.argmax(x[idx] @ w + b, axis=1)
        return float(np.mean(pred == labels[idx]))

    return ProbeFit(w, b, loss, it, gnorm, acc(split.test), acc(split.val))


def evaluate_representations(h, labels, n_trials: int = 10, seed: int = 0, l2: float = 1e-4,
                             l2_grid=None, fractions=(0.1, 0.1, 0.8), max_iters: int = 5000,
                             seeds=None) -> ProbeResult:
    """Run ``n_trials`` probes, each on a split drawn with its own seed.

    With ``l2_grid`` the coefficient is chosen per trial on the validation split.
    """
    if labels is None:
        raise ValueError("graph has no labels to evaluate against")
    n = h.shape[0]
    seeds = list(seeds) if seeds is not None else [seed + t for t in range(n_trials)]
    accs, chosen = [], []
    for s in seeds:
        split = SplitSpec.random(n, *fractions, seed=s)
        if l2_grid:
            fits = [(train_probe(h, labels, split, c, max_iters), c) for c in l2_grid]
            fit, c = max(fits, key=lambda fc: fc[0].val_accuracy)
        else:
            fit, c = train_probe(h, labels, split, l2, max_iters), l2
        accs.append(fit.test_accuracy)
        chosen.append(c)
    accs_arr = np.array(accs)
    return ProbeResult(float(accs_arr.mean()), float(accs_arr.std()), accs, l2, chosen)


def evaluate(encoder_params: GcnEncoderParams, g: Graph, n_trials: int = 10, seed: int = 0,
             **kwargs) -> ProbeResult:
    """Encode the clean graph with frozen weights and probe the representations."""
    h = encode(g, encoder_params.copy())
    return evaluate_representations(h, g.labels, n_trials, seed, **kwargs)
