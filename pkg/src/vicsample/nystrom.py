"""Block-partitioned covariance tools: Nystrom reconstruction, the
``Cov^2 = 2 Cov`` fixed-point check and the rotating-split whitening run."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .objective import covariance_loss, variance_loss
from .samplers import rotating_partition


@dataclass(frozen=True)
class CovBlocks:
    a: np.ndarray                 # landmark block, M x M
    b: np.ndarray                 # landmark x rest, M x (D - M)
    c_exact: np.ndarray | None    # rest block, (D - M) x (D - M)
    landmark_indices: np.ndarray
    rest_indices: np.ndarray


def split_blocks(cov: np.ndarray, landmark_indices) -> CovBlocks:
    cov = np.asarray(cov)
    d = cov.shape[0]
    if cov.shape != (d, d):
        raise ValueError("covariance must be square")
    lm = np.unique(np.asarray(landmark_indices, dtype=np.int64))
    if len(lm) != len(landmark_indices):
        raise ValueError("landmark indices must be unique")
    if len(lm) == 0 or len(lm) >= d:
        raise ValueError(f"need 0 < M < D landmarks, got M={len(lm)}, D={d}")
    if lm[0] < 0 or lm[-1] >= d:
        raise ValueError("landmark index out of range")
    rest = np.setdiff1d(np.arange(d), lm, assume_unique=True)
    return CovBlocks(
        a=cov[np.ix_(lm, lm)],
        b=cov[np.ix_(lm, rest)],
        c_exact=cov[np.ix_(rest, rest)],
        landmark_indices=lm,
        rest_indices=rest,
    )


def sym_pinv(a: np.ndarray, rel_cutoff: float = 1e-10, asym_tol: float = 1e-8) -> np.ndarray:
    """Pseudo-inverse of a symmetric matrix through its eigendecomposition."""
    a = np.asarray(a, dtype=np.float64)
    scale = max(np.abs(a).max(), 1.0)
    if np.abs(a - a.T).max() > asym_tol * scale:
        raise ValueError("matrix is not symmetric")
    w, u = np.linalg.eigh((a + a.T) / 2)
    top = np.abs(w).max() if w.size else 0.0
    keep = np.abs(w) > rel_cutoff * top
    inv_w = np.zeros_like(w)
    inv_w[keep] = 1.0 / w[keep]
    return (u * inv_w) @ u.T


def nystrom_reconstruct(blocks: CovBlocks, rel_cutoff: float = 1e-10) -> np.ndarray:
    """Approximate the non-landmark block as ``B^T A^+ B``."""
    return blocks.b.T @ sym_pinv(blocks.a, rel_cutoff) @ blocks.b


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    denom = np.linalg.norm(exact)
    err = np.linalg.norm(exact - approx)
    return float(err / denom) if denom > 0 else float(err)


@dataclass(frozen=True)
class FixedPointReport:
    preconditions_met: bool
    a_identity_error: float
    b_orthonormal_error: float
    residual: float
    cov_norm: float
    passed: bool
    eigenvalues: np.ndarray
    message: str = ""


def assemble_cov(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``[[A, B], [B^T, I]]``."""
    a, b = np.atleast_2d(a), np.atleast_2d(b)
    rest = b.shape[1]
    return np.block([[a, b], [b.T, np.eye(rest)]])


def check_cov_fixed_point(a, b, tol: float = 1e-12) -> FixedPointReport:
    """Check ``Cov^2 = 2 Cov`` for the assembled matrix ``[[A, B], [B^T, I]]``.

    Preconditions (``A = I``, ``B B^T = I`` within ``tol``) are reported
    rather than raised, so failing configurations still get a residual.
    """
    a, b = np.atleast_2d(np.asarray(a, float)), np.atleast_2d(np.asarray(b, float))
    m = a.shape[0]
    a_err = float(np.linalg.norm(a - np.eye(m)))
    b_err = float(np.linalg.norm(b @ b.T - np.eye(m)))
    pre = a_err <= tol and b_err <= tol
    cov = assemble_cov(a, b)
    residual = float(np.linalg.norm(cov @ cov - 2 * cov))
    cov_norm = float(np.linalg.norm(cov))
    passed = residual < tol * cov_norm
    notes = []
    if not pre:
        notes.append("precondition failed: "
                     + ", ".join(x for x, bad in (("A != I", a_err > tol),
                                                  ("B B^T != I", b_err > tol)) if bad))
    if not passed:
        notes.append(f"residual {residual:.3e} exceeds {tol:.1e} * ||Cov||")
    return FixedPointReport(pre, a_err, b_err, residual, cov_norm, passed,
                            np.linalg.eigvalsh(cov), "; ".join(notes))


@dataclass
class TrajectoryRow:
    epoch: int
    split_id: int
    split_whiteness: float
    offdiag_energy: float
    b_orthonormality: float


@dataclass
class WhiteningTrajectory:
    rows: list[TrajectoryRow] = field(default_factory=list)
    final_split_whiteness: list[float] = field(default_factory=list)
    initial_offdiag_energy: float = float("nan")
    final_b_orthonormality: float = float("nan")
    final_z: np.ndarray | None = None
    diverged: bool = False

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "split_id", "split_whiteness", "offdiag_energy",
                        "b_orthonormality"])
            for r in self.rows:
                w.writerow([r.epoch, r.split_id, repr(r.split_whiteness),
                            repr(r.offdiag_energy), repr(r.b_orthonormality)])


def _cov(z):
    zc = z - z.mean(axis=0)
    return zc.T @ zc / (z.shape[0] - 1)


def split_whiteness(z: np.ndarray, dims) -> float:
    """``||Cov(z[:, dims]) - I||_F``."""
    return float(np.linalg.norm(_cov(z[:, dims]) - np.eye(len(dims))))


def offdiag_energy(z: np.ndarray) -> float:
    cov = _cov(z)
    return float((cov ** 2).sum() - (np.diag(cov) ** 2).sum())


def b_orthonormality(z: np.ndarray, dims) -> float:
    """``||B B^T - c I||_F`` for the cross block of ``dims`` against the rest.

    ``c`` is the least-squares scalar, ``trace(B B^T) / M``.
    """
    cov = _cov(z)
    rest = np.setdiff1d(np.arange(z.shape[1]), dims)
    if len(rest) == 0:
        return 0.0
    b = cov[np.ix_(dims, rest)]
    bbt = b @ b.T
    c = np.trace(bbt) / len(dims)
    return float(np.linalg.norm(bbt - c * np.eye(len(dims))))


def rotating_whiten_experiment(z0: np.ndarray, m: int, epochs: int, lr: float = 0.2,
                               mu_var: float = 25.0, nu_cov: float = 1.0,
                               eps: float = 1e-4) -> WhiteningTrajectory:
    """Gradient descent on a free embedding matrix, whitening one split per epoch.

    At epoch ``i`` only the variance and covariance terms restricted to
    split ``i mod (D/M)`` are minimized.
    """
    z = np.array(z0, dtype=np.float64, copy=True)
    d = z.shape[1]
    if d % m:
        raise ValueError(f"split size {m} must divide dimension {d}")
    if epochs < d // m:
        raise ValueError("need at least one pass over all splits")
    traj = WhiteningTrajectory(initial_offdiag_energy=offdiag_energy(z))
    for epoch in range(epochs):
        dims = rotating_partition(d, m, epoch)
        tape = ad.GradTape()
        zt = tape.param(z, "z")
        loss = (mu_var * variance_loss(zt, eps, dim_indices=dims)
                + nu_cov * covariance_loss(zt, dim_indices=dims))
        grad = tape.backward(loss)["z"]
        z = z - lr * grad
        if not np.all(np.isfinite(z)):
            traj.diverged = True
            break
        traj.rows.append(TrajectoryRow(
            epoch, epoch % (d // m), split_whiteness(z, dims), offdiag_energy(z),
            b_orthonormality(z, dims),
        ))
    traj.final_z = z
    traj.final_split_whiteness = [
        split_whiteness(z, rotating_partition(d, m, k)) for k in range(d // m)
    ]
    if traj.rows:
        traj.final_b_orthonormality = traj.rows[-1].b_orthonormality
    return traj


def low_rank_embedding(n: int, d: int, rank: int, rng: np.random.Generator) -> np.ndarray:
    """Random ``n x d`` matrix whose columns span a ``rank``-dimensional space."""
    basis = rng.standard_normal((n, rank))
    mix = rng.standard_normal((rank, d - rank))
    return np.hstack([basis, basis @ mix])


def whitened_embedding(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """Centered ``n x d`` matrix with covariance exactly ``I`` (up to rounding)."""
    g = rng.standard_normal((n, d))
    g -= g.mean(axis=0)
    q, _ = np.linalg.qr(g)
    return q * np.sqrt(n - 1)


def verification_suite(seed: int = 0, epochs: int = 2000, lr: float = 0.2) -> dict:
    """Run the block-covariance checks and return a flat result dict."""
    rng = np.random.default_rng(seed)
    z = low_rank_embedding(64, 8, 3, rng)
    cov = _cov(z)
    lm = np.sort(rng.choice(8, size=3, replace=False))
    blocks = split_blocks(cov, lm)
    nys_err = relative_error(nystrom_reconstruct(blocks), blocks.c_exact)

    theta = rng.uniform(0, 2 * np.pi)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    fp = check_cov_fixed_point(np.eye(2), rot)
    fp_zero_b = check_cov_fixed_point(np.eye(2), np.zeros((2, 2)))

    g = rng.standard_normal((64, 8))
    z0 = 0.45 * (g + 1.2 * rng.standard_normal((64, 1)))
    traj = rotating_whiten_experiment(z0, 4, epochs, lr)
    return {
        "nystrom_relative_error": nys_err,
        "fixed_point_residual": fp.residual,
        "fixed_point_passed": fp.passed,
        "fixed_point_zero_b_residual": fp_zero_b.residual,
        "fixed_point_zero_b_passed": fp_zero_b.passed,
        "rotating_initial_offdiag": traj.initial_offdiag_energy,
        "rotating_final_offdiag": traj.rows[-1].offdiag_energy if traj.rows else float("nan"),
        "rotating_final_split_whiteness": traj.final_split_whiteness,
        "rotating_final_b_orthonormality": traj.final_b_orthonormality,
        "trajectory": traj,
    }
