"""Model-free two-sample diagnostics: energy distance and MMD.

Both statistics are U-statistics over pairwise distances, O(n^2): inputs
larger than ``max_points`` rows are subsampled with a fixed seed. Rows are
first put in a canonical (lexicographic) order so that permuting either
sample leaves the result bit-identical, subsampling included.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import as_matrix

DEFAULT_MAX_POINTS = 4000


def _canonical(x, max_points, seed):
    order = np.lexsort(x.T[::-1])
    x = x[order]
    if x.shape[0] > max_points:
        idx = np.random.default_rng(seed).choice(x.shape[0], size=max_points, replace=False)
        x = x[np.sort(idx)]
    return x


def _pairwise_distances(a, b):
    d2 = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    return np.sqrt(np.maximum(d2, 0.0))


def _prepare(a, b, max_points, seed, min_rows=2):
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"samples have different dimensions: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] < min_rows or b.shape[0] < min_rows:
        raise ValueError(f"both samples need at least {min_rows} points")
    return _canonical(a, max_points, seed), _canonical(b, max_points, seed)


def _offdiag_mean(mat):
    n = mat.shape[0]
    return (mat.sum() - np.trace(mat)) / (n * (n - 1))


def energy_distance(a, b, max_points=DEFAULT_MAX_POINTS, seed=0):
    """2 E||A-B|| - E||A-A'|| - E||B-B'|| with unbiased within-sample terms."""
    a, b = _prepare(a, b, max_points, seed)
    cross = _pairwise_distances(a, b)
    cross_mean = (np.sum(cross) + np.sum(cross.T)) / (2.0 * cross.size)
    return float(
        2.0 * cross_mean
        - _offdiag_mean(_pairwise_distances(a, a))
        - _offdiag_mean(_pairwise_distances(b, b))
    )


def mmd_rbf(a, b, bandwidth="median", max_points=DEFAULT_MAX_POINTS, seed=0):
    """Unbiased MMD^2 estimate with the RBF kernel exp(-||x-y||^2 / (2 bw^2)).

    ``bandwidth="median"`` uses the pooled median pairwise distance divided
    by sqrt(2 log(n+1)), the same convention as the SVGD kernel.
    """
    return _mmd_with_bandwidth(a, b, bandwidth, max_points, seed)[0]


def _mmd_with_bandwidth(a, b, bandwidth, max_points, seed):
    a, b = _prepare(a, b, max_points, seed)
    d_aa = _pairwise_distances(a, a)
    d_bb = _pairwise_distances(b, b)
    d_ab = _pairwise_distances(a, b)
    if bandwidth == "median":
        pooled = np.concatenate(
            [
                d_aa[np.triu_indices(a.shape[0], k=1)],
                d_bb[np.triu_indices(b.shape[0], k=1)],
                d_ab.ravel(),
            ]
        )
        bw = float(np.median(pooled)) / np.sqrt(2.0 * np.log(a.shape[0] + b.shape[0] + 1.0))
        if bw == 0.0:
            raise ValueError("all points coincide; median bandwidth is degenerate")
    else:
        bw = float(bandwidth)
        if bw <= 0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    denom = 2.0 * bw * bw
    k_aa = np.exp(-(d_aa**2) / denom)
    k_bb = np.exp(-(d_bb**2) / denom)
    k_ab = np.exp(-(d_ab**2) / denom)
    cross_mean = (np.sum(k_ab) + np.sum(k_ab.T)) / (2.0 * k_ab.size)
    return float(_offdiag_mean(k_aa) + _offdiag_mean(k_bb) - 2.0 * cross_mean), bw


@dataclass(frozen=True)
class TwoSampleReport:
    energy_distance: float
    mmd_rbf: float
    sample_sizes: tuple
    bandwidth: float


def two_sample_report(a, b, bandwidth="median", max_points=DEFAULT_MAX_POINTS, seed=0):
    a_m = as_matrix(a, "a")
    b_m = as_matrix(b, "b")
    mmd, bw = _mmd_with_bandwidth(a_m, b_m, bandwidth, max_points, seed)
    return TwoSampleReport(
        energy_distance=energy_distance(a_m, b_m, max_points=max_points, seed=seed),
        mmd_rbf=mmd,
        sample_sizes=(a_m.shape[0], b_m.shape[0]),
        bandwidth=bw,
    )


def mode_shares(samples, centers):
    """Fraction of samples nearest each center (mode assignment)."""
    x = as_matrix(samples, "samples")
    c = as_matrix(centers, "centers", dim=x.shape[1])
    d2 = np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=-1)
    nearest = np.argmin(d2, axis=1)
    return np.bincount(nearest, minlength=c.shape[0]) / x.shape[0]


def modes_covered(samples, centers, min_share=0.05):
    """Number of centers holding at least ``min_share`` of the sample mass."""
    return int(np.count_nonzero(mode_shares(samples, centers) >= min_share))
