"""Graph container, synthetic SBM generation, file loading and view augmentation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class GraphFormatError(ValueError):
    """Malformed input file. Carries the offending line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph in CSR form with dense node features.

    ``indptr``/``indices`` hold sorted, duplicate-free neighbor lists. Every
    edge is stored in both directions and self-loops are never stored.
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise ValueError(
                f"features must have {self.num_nodes} rows, got shape {self.features.shape}"
            )
        if self.indptr.shape != (self.num_nodes + 1,):
            raise ValueError("indptr must have num_nodes + 1 entries")
        if self.labels is not None and self.labels.shape != (self.num_nodes,):
            raise ValueError("labels must have one entry per node")
        for arr in (self.indptr, self.indices, self.features, self.labels):
            if arr is not None:
                arr.flags.writeable = False

    @classmethod
    def from_edges(cls, num_nodes: int, edges, features, labels=None) -> "Graph":
        """Build a graph from an (E, 2) array of node pairs.

        Edges are symmetrized, duplicates collapsed and self-loops dropped.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            raise IndexError(f"edge endpoint outside [0, {num_nodes})")
        u, v = edges[:, 0], edges[:, 1]
        keep = u != v
        u, v = u[keep], v[keep]
        src = np.concatenate([u, v])
        dst = np.concatenate([v, u])
        key = np.unique(src * num_nodes + dst)
        src, dst = key // num_nodes, key % num_nodes
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)
        features = np.array(features, dtype=np.float64, copy=True)
        if features.ndim == 1:
            features = features[:, None]
        if labels is not None:
            labels = np.array(labels, dtype=np.int64, copy=True)
        return cls(num_nodes, indptr, dst.astype(np.int64), features, labels)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges."""
        return len(self.indices) // 2

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def neighbors(self, i: int) -> np.ndarray:
        return self.indices[self.indptr[i]:self.indptr[i + 1]]

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, lexicographically sorted."""
        src = np.repeat(np.arange(self.num_nodes), self.degrees())
        mask = src < self.indices
        return np.stack([src[mask], self.indices[mask]], axis=1)

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.num_nodes, self.indptr, self.indices, features, self.labels)

    def astype(self, dtype) -> "Graph":
        return self.with_features(self.features.astype(dtype))

    def is_symmetric(self) -> bool:
        pairs = set()
        for i in range(self.num_nodes):
            for j in self.neighbors(i):
                pairs.add((i, int(j)))
        return all((j, i) in pairs for i, j in pairs)


@dataclass(frozen=True)
class SbmConfig:
    nodes_per_block: int = 100
    num_blocks: int = 2
    p_intra: float = 0.2
    p_inter: float = 0.01
    feature_dim: int = 64
    feature_noise: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ("p_intra", "p_inter"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.nodes_per_block < 1 or self.num_blocks < 1:
            raise ValueError("block counts must be positive")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be nonnegative")


def generate_sbm(cfg: SbmConfig) -> Graph:
    """Sample a planted-partition graph whose labels are the block ids.

    Node features are the one-hot vector of the block id (wrapped modulo
    ``feature_dim``) plus isotropic Gaussian noise.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n, k = cfg.nodes_per_block, cfg.num_blocks
    edges = []
    for a in range(k):
        for b in range(a, k):
            if a == b:
                draw = rng.random((n, n)) < cfg.p_intra
                iu, ju = np.nonzero(np.triu(draw, k=1))
            else:
                iu, ju = np.nonzero(rng.random((n, n)) < cfg.p_inter)
            edges.append(np.stack([iu + a * n, ju + b * n], axis=1))
    edges = np.concatenate(edges) if edges else np.zeros((0, 2), dtype=np.int64)
    labels = np.repeat(np.arange(k), n)
    features = np.zeros((n * k, cfg.feature_dim))
    features[np.arange(n * k), labels % cfg.feature_dim] = 1.0
    features += cfg.feature_noise * rng.standard_normal(features.shape)
    return Graph.from_edges(n * k, edges, features, labels)


def load_graph(edge_list_path, features_path, labels_path=None) -> Graph:
    """Read an edge list, a headerless feature CSV and an optional label file."""
    features = []
    with open(features_path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                features.append([float(c) for c in row])
            except ValueError as exc:
                raise GraphFormatError(str(exc), str(features_path), lineno) from None
            if len(features[-1]) != len(features[0]):
                raise GraphFormatError(
                    f"expected {len(features[0])} columns, got {len(features[-1])}",
                    str(features_path), lineno,
                )
    n = len(features)
    features = np.array(features, dtype=np.float64).reshape(n, -1)

    edges = []
    with open(edge_list_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError("expected two node ids", str(edge_list_path), lineno)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise GraphFormatError(f"non-integer node id in {line!r}",
                                       str(edge_list_path), lineno) from None
            if not (0 <= u < n and 0 <= v < n):
                raise IndexError(
                    f"{edge_list_path}:{lineno}: node id out of range for {n} nodes"
                )
            edges.append((u, v))

    labels = None
    if labels_path is not None:
        labels = []
        with open(labels_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    labels.append(int(line))
                except ValueError:
                    raise GraphFormatError(f"bad label {line!r}", str(labels_path), lineno) from None
        if len(labels) != n:
            raise ValueError(f"label file has {len(labels)} entries, features have {n} rows")
    return Graph.from_edges(n, edges, features, labels)


def save_graph(g: Graph, edge_list_path, features_path, labels_path=None):
    """Write ``g`` in the same text formats that :func:`load_graph` reads."""
    with open(edge_list_path, "w", encoding="utf-8") as fh:
        for u, v in g.edge_array():
            fh.write(f"{u} {v}\n")
    np.savetxt(features_path, g.features, delimiter=",", fmt="%.17g")
    if labels_path is not None and g.labels is not None:
        np.savetxt(labels_path, g.labels, fmt="%d")


@dataclass(frozen=True)
class AugmentationConfig:
    feature_mask_prob: float = 0.2
    edge_drop_prob: float = 0.2
    seed: int = 0
    # "column" masks whole feature dimensions, "row" masks individual entries per node
    mask_mode: str = "column"

    def validate(self):
        for name in ("feature_mask_prob", "edge_drop_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        if self.mask_mode not in ("column", "row"):
            raise ValueError(f"unknown mask_mode {self.mask_mode!r}")


@dataclass(frozen=True)
class ViewPair:
    view1: Graph
    view2: Graph


def _augment_one(g: Graph, cfg: AugmentationConfig, rng: np.random.Generator) -> Graph:
    if cfg.mask_mode == "column":
        keep = rng.random(g.num_features) >= cfg.feature_mask_prob
        features = g.features * keep[None, :].astype(g.features.dtype)
    else:
        keep = rng.random(g.features.shape) >= cfg.feature_mask_prob
        features = g.features * keep.astype(g.features.dtype)

    edges = g.edge_array()
    kept = edges[rng.random(len(edges)) >= cfg.edge_drop_prob]
    if len(kept) == len(edges):
        return Graph(g.num_nodes, g.indptr, g.indices, features, g.labels)
    out = Graph.from_edges(g.num_nodes, kept, features, g.labels)
    return out.with_features(features)


def augment(g: Graph, cfg: AugmentationConfig, epoch: int) -> ViewPair:
    """Produce two stochastic views of ``g``.

    The RNG stream for view k is seeded from ``(cfg.seed, epoch, k)``, so the
    pair is a pure function of the arguments.
    """
    cfg.validate()
    views = []
    for k in (1, 2):
        rng = np.random.default_rng([cfg.seed, epoch, k])
        views.append(_augment_one(g, cfg, rng))
    return ViewPair(*views)
