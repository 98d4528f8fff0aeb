"""VICReg invariance, variance and covariance terms with node/dimension sampling.

Every function accepts plain arrays or tape tensors (see :mod:`autodiff`),
so the same code computes values for logging and gradients for training.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .samplers import SamplingPlan

MODES = ("full", "node_sampled", "dim_sampled_cov_only", "dim_sampled_all", "joint")


class SelectionTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    lambda_inv: float = 25.0
    mu_var: float = 25.0
    nu_cov: float = 1.0
    epsilon: float = 1e-4

    def validate(self):
        vals = (self.lambda_inv, self.mu_var, self.nu_cov, self.epsilon)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("loss weights must be finite")
        if min(self.lambda_inv, self.mu_var, self.nu_cov) < 0:
            raise ValueError("loss coefficients must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    invariance: float
    variance_view1: float
    variance_view2: float
    covariance_view1: float
    covariance_view2: float
    total: float
    nodes_used: int
    dims_used: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **extra) -> str:
        return json.dumps({**self.to_dict(), **extra})


def _select(z, node_indices, dim_indices):
    z = ad.take(z, node_indices, axis=0)
    return ad.take(z, dim_indices, axis=1)


def _check_shapes(z1, z2):
    if ad.value(z1).shape != ad.value(z2).shape:
        raise ValueError(f"view shapes differ: {ad.value(z1).shape} vs {ad.value(z2).shape}")


def _centered(z, node_indices, dim_indices):
    z = _select(z, node_indices, dim_indices)
    n = ad.value(z).shape[0]
    if n < 2:
        raise SelectionTooSmall(
            f"variance/covariance need at least 2 selected nodes, got {n}; raise the node ratio"
        )
    return z - ad.mean(z, axis=0), n


def invariance_loss(z1, z2, node_indices=None, dim_indices=None):
    """Mean over selected nodes of the squared distance between the two views."""
    _check_shapes(z1, z2)
    diff = _select(z1, node_indices, dim_indices) - _select(z2, node_indices, dim_indices)
    return ad.mean(ad.tsum(ad.square(diff), axis=1))


def variance_loss(z, eps=1e-4, node_indices=None, dim_indices=None):
    """Mean over dims of ``max(0, 1 - sqrt(var + eps))`` with an unbiased variance."""
    zc, n = _centered(z, node_indices, dim_indices)
    var = ad.tsum(ad.square(zc), axis=0) / (n - 1)
    std = ad.sqrt(var + eps)
    return ad.mean(ad.relu(1.0 - std))


def covariance_matrix(z, node_indices=None, dim_indices=None):
    zc, n = _centered(z, node_indices, dim_indices)
    return ad.matmul(ad.transpose(zc), zc) / (n - 1)


def covariance_loss(z, node_indices=None, dim_indices=None):
    """Sum of squared off-diagonal covariance entries divided by the dimension count."""
    cov = covariance_matrix(z, node_indices, dim_indices)
    d = ad.value(cov).shape[0]
    off = ad.tsum(ad.square(cov)) - ad.tsum(ad.square(ad.diagonal(cov)))
    return off / d


def mode_indices(plan: SamplingPlan | None, mode: str):
    """Node/dim index sets per term: returns ``{term: (nodes, dims)}``."""
    if mode not in MODES:
        raise ValueError(f"unknown loss mode {mode!r}; expected one of {MODES}")
    nodes = plan.node_indices if plan is not None else None
    dims = plan.dim_indices if plan is not None else None
    if mode == "full":
        sel = {"inv": (None, None), "var": (None, None), "cov": (None, None)}
    elif mode == "node_sampled":
        sel = {"inv": (nodes, None), "var": (nodes, None), "cov": (nodes, None)}
    elif mode == "dim_sampled_cov_only":
        sel = {"inv": (None, None), "var": (None, None), "cov": (None, dims)}
    elif mode == "dim_sampled_all":
        sel = {"inv": (None, dims), "var": (None, dims), "cov": (None, dims)}
    else:  # joint: nodes everywhere, dims on the covariance term
        sel = {"inv": (nodes, None), "var": (nodes, None), "cov": (nodes, dims)}
    return sel


def vicreg_terms(z1, z2, weights: LossWeights, plan: SamplingPlan | None = None,
                 mode: str = "full"):
    """Weighted total and the individual terms (arrays or tensors)."""
    _check_shapes(z1, z2)
    sel = mode_indices(plan, mode)
    inv = invariance_loss(z1, z2, *sel["inv"])
    var1 = variance_loss(z1, weights.epsilon, *sel["var"])
    var2 = variance_loss(z2, weights.epsilon, *sel["var"])
    cov1 = covariance_loss(z1, *sel["cov"])
    cov2 = covariance_loss(z2, *sel["cov"])
    total = (weights.lambda_inv * inv + weights.mu_var * (var1 + var2)
             + weights.nu_cov * (cov1 + cov2))
    return total, (inv, var1, var2, cov1, cov2)


def breakdown(total, terms, z_shape, plan: SamplingPlan | None, mode: str) -> LossBreakdown:
    sel = mode_indices(plan, mode)
    n, d = z_shape
    nodes, dims = sel["cov"]
    return LossBreakdown(
        *(float(ad.value(t)) for t in terms),
        total=float(ad.value(total)),
        nodes_used=n if nodes is None else len(nodes),
        dims_used=d if dims is None else len(dims),
    )


def vicreg_loss(z1, z2, weights: LossWeights | None = None, plan: SamplingPlan | None = None,
                mode: str = "full") -> LossBreakdown:
    """Evaluate the combined objective and return its breakdown.

    ``nodes_used``/``dims_used`` describe the covariance term, the one whose
    cost dominates.
    """
    weights = weights or LossWeights()
    weights.validate()
    total, terms = vicreg_terms(ad.value(z1), ad.value(z2), weights, plan, mode)
    return breakdown(total, terms, ad.value(z1).shape, plan, mode)
