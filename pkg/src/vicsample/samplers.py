"""Per-epoch node and embedding-dimension selection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)

NODE_METHODS = ("uniform", "ricci")


def sample_size(total: int, ratio: float) -> int:
    """``max(1, round(ratio * total))`` after validating the ratio."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {ratio}")
    if total < 1:
        raise ValueError("cannot sample from an empty set")
    return max(1, int(round(ratio * total)))


@dataclass(frozen=True)
class SamplingPlan:
    """Node and dimension subsets used by the loss in one epoch.

    ``None`` for either index array means "use everything".
    """

    node_indices: np.ndarray | None = None
    dim_indices: np.ndarray | None = None
    node_ratio: float = 1.0
    dim_ratio: float = 1.0
    method: str = "uniform"
    epoch: int = 0

    def validate(self, num_nodes: int, num_dims: int):
        for idx, total, ratio, what in (
            (self.node_indices, num_nodes, self.node_ratio, "node"),
            (self.dim_indices, num_dims, self.dim_ratio, "dim"),
        ):
            if idx is None:
                continue
            if len(idx) != sample_size(total, ratio):
                raise ValueError(f"{what} plan has {len(idx)} indices, expected "
                                 f"{sample_size(total, ratio)}")
            if len(idx) and (idx[0] < 0 or idx[-1] >= total or np.any(np.diff(idx) <= 0)):
                raise ValueError(f"{what} indices must be sorted, unique and in range")


def uniform_node_sample(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    k = sample_size(n, p)
    if k == n:
        return np.arange(n)
    return np.sort(rng.choice(n, size=k, replace=False))


def uniform_dim_sample(d: int, q: float, rng: np.random.Generator) -> np.ndarray:
    return uniform_node_sample(d, q, rng)


def rotating_partition(d: int, m: int, epoch: int) -> np.ndarray:
    """Dimensions of split ``epoch mod (d/m)`` in a fixed contiguous partition."""
    if m < 1 or d % m:
        raise ValueError(f"split size {m} must divide dimension {d}")
    k = epoch % (d // m)
    return np.arange(k * m, (k + 1) * m)


@dataclass(frozen=True)
class RicciScores:
    edges: np.ndarray            # (E, 2), u < v
    edge_curvature: np.ndarray   # (E,)
    node_flow: np.ndarray        # (N,)
    probs: np.ndarray | None = None

    def to_csv(self, edge_path, node_path):
        with open(edge_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "curvature"])
            for (u, v), c in zip(self.edges, self.edge_curvature):
                w.writerow([int(u), int(v), repr(float(c))])
        probs = self.probs if self.probs is not None else ricci_node_probs(self)
        with open(node_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "flow", "prob"])
            for i, (f, p) in enumerate(zip(self.node_flow, probs)):
                w.writerow([i, repr(float(f)), repr(float(p))])


def forman_ricci(g: Graph) -> RicciScores:
    """Triangle-augmented Forman curvature ``4 - deg(u) - deg(v) + 3 t(u, v)``.

    Node flow is the sum of curvatures over incident edges.
    """
    deg = g.degrees()
    edges = g.edge_array()
    curv = np.empty(len(edges), dtype=np.float64)
    for e, (u, v) in enumerate(edges):
        tri = len(np.intersect1d(g.neighbors(u), g.neighbors(v), assume_unique=True))
        curv[e] = 4 - deg[u] - deg[v] + 3 * tri
    flow = np.zeros(g.num_nodes)
    np.add.at(flow, edges[:, 0], curv)
    np.add.at(flow, edges[:, 1], curv)
    scores = RicciScores(edges, curv, flow)
    return RicciScores(edges, curv, flow, ricci_node_probs(scores))


def ricci_node_probs(scores) -> np.ndarray:
    """Shift flows so the minimum is zero and normalize by the shifted sum.

    Falls back to uniform when all flows are equal. Accepts a
    :class:`RicciScores` or a raw flow vector.
    """
    flow = np.asarray(scores.node_flow if isinstance(scores, RicciScores) else scores,
                      dtype=np.float64)
    n = flow.size
    if n == 0:
        raise ValueError("no nodes to score")
    if not np.all(np.isfinite(flow)):
        raise ValueError("node flows must be finite")
    shifted = flow - flow.min()
    total = shifted.sum()
    if total <= 0:
        return np.full(n, 1.0 / n)
    return shifted / total


def ricci_node_sample(probs: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Draw ``round(p N)`` distinct nodes, successively proportional to ``probs``.

    If fewer nodes carry positive probability than requested, all of them
    are taken and the remainder is filled uniformly from the rest.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    k = sample_size(n, p)
    support = np.flatnonzero(probs > 0)
    if len(support) <= k:
        if len(support) < k:
            log.info("ricci sampling: %d nodes with positive probability, padding %d uniformly",
                     len(support), k - len(support))
        rest = np.setdiff1d(np.arange(n), support, assume_unique=True)
        pad = rng.choice(rest, size=k - len(support), replace=False) if k > len(support) else []
        return np.sort(np.concatenate([support, np.asarray(pad, dtype=np.int64)]))
    return np.sort(rng.choice(n, size=k, replace=False, p=probs / probs.sum()))


def make_plan(
    num_nodes: int,
    num_dims: int,
    *,
    node_ratio: float = 1.0,
    dim_ratio: float = 1.0,
    method: str = "uniform",
    epoch: int = 0,
    rng: np.random.Generator,
    ricci_probs: np.ndarray | None = None,
    sample_nodes: bool = True,
    sample_dims: bool = True,
) -> SamplingPlan:
    """Build the epoch's plan. Ratios of 1 leave the corresponding axis unsampled."""
    if method not in NODE_METHODS:
        raise ValueError(f"unknown node sampling method {method!r}")
    nodes = dims = None
    if sample_nodes and node_ratio < 1.0:
        if method == "ricci":
            if ricci_probs is None:
                raise ValueError("ricci sampling requires precomputed probabilities")
            nodes = ricci_node_sample(ricci_probs, node_ratio, rng)
        else:
            nodes = uniform_node_sample(num_nodes, node_ratio, rng)
    if sample_dims and dim_ratio < 1.0:
        dims = uniform_dim_sample(num_dims, dim_ratio, rng)
    return SamplingPlan(nodes, dims, node_ratio, dim_ratio, method, epoch)
