"""Wall-clock scaling of the covariance term in the number of nodes and dimensions."""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .objective import covariance_loss, covariance_matrix

# per-sample floor; smaller cells get more inner loops
MIN_SAMPLE_SECONDS = 5e-3

# analytical loss/encoder costs for comparison, in passes of each module
COMPLEXITY_TABLE = {
    "BGRL": {"encoder": "6(N+E)", "prediction": "4N", "ssl_loss": "N"},
    "GRACE": {"encoder": "3(N+E)", "prediction": "4N", "ssl_loss": "N^2"},
    "VICReg (non-Siamese)": {"encoder": "4(N+E)", "prediction": "4N", "ssl_loss": "N D^2"},
    "VICReg (Siamese)": {"encoder": "3(N+E)", "prediction": "4N", "ssl_loss": "N D^2"},
}


@dataclass
class TimingCell:
    n: int
    d: int
    median_s: float
    reps: int
    inner: int
    buffer_entries: int
    buffer_bytes: int
    gather_s: float = float("nan")
    samples: list[float] = field(default_factory=list)


def median_time(fn, reps: int = 20, warmup: int = 3) -> tuple[float, int, list[float]]:
    """Median seconds per call over ``reps`` samples after ``warmup`` calls.

    Calls too short for the clock are batched ``inner`` times per sample.
    """
    for _ in range(warmup):
        fn()
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        if time.perf_counter() - t0 >= MIN_SAMPLE_SECONDS or inner >= 1 << 16:
            break
        inner *= 2
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - t0) / inner)
    return statistics.median(samples), inner, samples


def time_cell(z: np.ndarray, dims: np.ndarray, reps: int = 20, warmup: int = 3) -> TimingCell:
    """Time the covariance term on the selected block of ``z``.

    The column gather ``z[:, dims]`` is timed separately: it is O(N M)
    sampling overhead, not part of the covariance computation.
    """
    block = np.ascontiguousarray(z[:, dims])
    med, inner, samples = median_time(lambda: covariance_loss(block), reps, warmup)
    gather, _, _ = median_time(lambda: z[:, dims], max(3, reps // 4), 1)
    cov = covariance_matrix(block)
    return TimingCell(z.shape[0], len(dims), med, reps, inner, cov.size, cov.nbytes,
                      gather, samples)


@dataclass
class ScalingTable:
    cells: list[TimingCell]

    def lookup(self, n: int, d: int) -> TimingCell:
        for c in self.cells:
            if c.n == n and c.d == d:
                return c
        raise KeyError((n, d))

    def dim_ratios(self, n: int) -> list[tuple[int, float]]:
        """``time(2M) / time(M)`` at fixed ``n`` for every measured doubling."""
        ds = sorted(c.d for c in self.cells if c.n == n)
        return [(d, self.lookup(n, 2 * d).median_s / self.lookup(n, d).median_s)
                for d in ds if 2 * d in ds]

    def node_ratios(self, d: int) -> list[tuple[int, float]]:
        ns = sorted(c.n for c in self.cells if c.d == d)
        return [(n, self.lookup(2 * n, d).median_s / self.lookup(n, d).median_s)
                for n in ns if 2 * n in ns]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "d", "median_ms", "gather_ms", "reps", "inner",
                        "buffer_entries", "buffer_bytes"])
            for c in self.cells:
                w.writerow([c.n, c.d, c.median_s * 1e3, c.gather_s * 1e3, c.reps, c.inner,
                            c.buffer_entries, c.buffer_bytes])


def bench_loss_scaling(n_list, d_total: int, m_list, reps: int = 20, warmup: int = 3,
                       seed: int = 0, dtype=np.float64, threads: int = 1) -> ScalingTable:
    """Time the covariance term for every (N, M) with M dims sampled out of ``d_total``.

    Kernels run with ``threads`` BLAS threads (1 by default) so that ratios
    reflect arithmetic cost rather than parallel speed-up.
    """
    if not n_list or not m_list:
        raise ValueError("need at least one N and one M")
    rng = np.random.default_rng(seed)
    cells = []
    with threadpool_limits(limits=threads):
        for n in n_list:
            z = rng.standard_normal((n, d_total)).astype(dtype)
            for m in m_list:
                if m > d_total:
                    raise ValueError(f"M={m} exceeds D={d_total}")
                dims = np.sort(rng.choice(d_total, size=m, replace=False))
                cells.append(time_cell(z, dims, reps, warmup))
    return ScalingTable(cells)
