import numpy as np


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Numerical gradient of scalar ``f`` at ``x`` by central differences."""
    x = np.array(x, dtype=np.float64, copy=True)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor: float = 1e-6) -> float:
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``, maximized.

    The floor keeps entries that are zero in both from dividing by zero.
    """
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def dense_normalized_adjacency(n, edges):
    """Brute-force D^-1/2 (A + I) D^-1/2 with dense arrays."""
    a = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            a[u, v] = a[v, u] = 1.0
    a += np.eye(n)
    d = a.sum(axis=1)
    return a / np.sqrt(np.outer(d, d))


def inclusion_chi_square(counts, draws: int, k: int):
    """Uniformity p-value for per-item inclusion counts of k-of-n sampling without replacement.

    Each draw's inclusion indicators have variance pi(1 - pi) and pairwise
    covariance -pi(1 - pi)/(n - 1), so the scaled statistic below is
    chi-square with n - 1 degrees of freedom under uniformity.
    """
    from scipy import stats

    counts = np.asarray(counts, dtype=np.float64)
    n = len(counts)
    pi = k / n
    scale = draws * pi * (1 - pi) * n / (n - 1)
    stat = float(np.sum((counts - draws * pi) ** 2) / scale)
    return stat, float(stats.chi2.sf(stat, n - 1))
