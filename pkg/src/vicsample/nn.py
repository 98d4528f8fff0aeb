"""GCN encoder, MLP expander, optimizers and parameter checkpoints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .graph import Graph


def normalize_adjacency(g: Graph, dtype=np.float64) -> sp.csr_matrix:
    """Symmetrically normalized adjacency with self-loops, D^-1/2 (A + I) D^-1/2."""
    n = g.num_nodes
    data = np.ones(len(g.indices), dtype=dtype)
    a = sp.csr_matrix((data, g.indices, g.indptr), shape=(n, n))
    a = a + sp.identity(n, dtype=dtype, format="csr")
    d_inv_sqrt = 1.0 / np.sqrt(np.asarray(a.sum(axis=1)).ravel())
    scale = sp.diags(d_inv_sqrt.astype(dtype))
    out = (scale @ a @ scale).tocsr()
    out.sort_indices()
    return out.astype(dtype)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass
class GcnEncoderParams:
    w1: np.ndarray
    w2: np.ndarray

    @classmethod
    def init(cls, in_dim: int, hidden_dim: int = 256, out_dim: int = 256, seed: int = 0):
        rng = np.random.default_rng([seed, 1])
        return cls(glorot(rng, in_dim, hidden_dim), glorot(rng, hidden_dim, out_dim))

    def named(self) -> dict[str, np.ndarray]:
        return {"encoder.w1": self.w1, "encoder.w2": self.w2}

    def copy(self):
        return GcnEncoderParams(self.w1.copy(), self.w2.copy())


@dataclass
class ExpanderParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, in_dim: int, out_dim: int = 512, hidden_dim: int | None = None, seed: int = 0):
        hidden_dim = out_dim if hidden_dim is None else hidden_dim
        if out_dim < 1 or hidden_dim < 1:
            raise ValueError("expander dimensions must be positive")
        rng = np.random.default_rng([seed, 2])
        return cls(
            glorot(rng, in_dim, hidden_dim), np.zeros(hidden_dim),
            glorot(rng, hidden_dim, out_dim), np.zeros(out_dim),
        )

    def named(self) -> dict[str, np.ndarray]:
        return {"expander.w1": self.w1, "expander.b1": self.b1,
                "expander.w2": self.w2, "expander.b2": self.b2}

    def copy(self):
        return ExpanderParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def _check_chain(x_cols: int, w: np.ndarray, what: str):
    if x_cols != ad.value(w).shape[0]:
        raise ValueError(f"{what}: input has {x_cols} columns, weight expects {ad.value(w).shape[0]}")


def encode(g: Graph, params, adj: sp.spmatrix | None = None):
    """Two-layer GCN: H = Â · ReLU(Â · X · W1) · W2.

    ``params`` may be a :class:`GcnEncoderParams` or a ``(w1, w2)`` pair of
    tape tensors. Pass ``adj`` to reuse a precomputed normalized adjacency.
    """
    w1, w2 = (params.w1, params.w2) if isinstance(params, GcnEncoderParams) else params
    _check_chain(g.num_features, w1, "encode layer 1")
    _check_chain(ad.value(w1).shape[1], w2, "encode layer 2")
    if adj is None:
        adj = normalize_adjacency(g, dtype=g.features.dtype)
    hidden = ad.relu(ad.spmm(adj, ad.matmul(g.features, w1)))
    return ad.spmm(adj, ad.matmul(hidden, w2))


def expand(h, params):
    """Affine, ReLU, affine. Accepts arrays or tape tensors."""
    if isinstance(params, ExpanderParams):
        w1, b1, w2, b2 = params.w1, params.b1, params.w2, params.b2
    else:
        w1, b1, w2, b2 = params
    _check_chain(ad.value(h).shape[1], w1, "expand layer 1")
    hidden = ad.relu(ad.matmul(h, w1) + b1)
    return ad.matmul(hidden, w2) + b2


class NonFiniteGradient(FloatingPointError):
    pass


def _check_finite(grads: dict[str, np.ndarray]):
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteGradient(f"gradient of {name!r} has {bad} non-finite entries")


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float):
    _check_finite(grads)
    return {k: v - lr * grads[k] for k, v in params.items()}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One bias-corrected Adam update. Mutates ``state``; returns new params."""
    _check_finite(grads)
    state.step += 1
    t = state.step
    out = {}
    for k, p in params.items():
        g = grads[k]
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[k], state.v[k] = m, v
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        out[k] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return out


def save_checkpoint(path, tensors: dict[str, np.ndarray]):
    """Write named arrays to an ``.npz`` file. Round-trips bit-exactly."""
    with open(path, "wb") as fh:
        np.savez(fh, **tensors)


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as data:
        return {k: data[k].copy() for k in data.files}
