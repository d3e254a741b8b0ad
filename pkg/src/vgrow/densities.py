"""Analytic reference and target distributions.

Each model exposes exact log-density, score (gradient of the log-density)
and sampling, and serves as ground truth for ratio estimation and flow
convergence checks. All methods are batch-oriented: points are arrays of
shape (n, d); a single point of shape (d,) is promoted.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from ._validation import as_matrix, check_count, check_rng

NEG_INF = -np.inf


class DensityModel:
    """Base class: exact log-density, score, and sampling in R^dim."""

    dim: int

    def log_density(self, x):
        raise NotImplementedError

    def score(self, x):
        raise NotImplementedError

    def sample(self, rng, count):
        raise NotImplementedError

    def _check(self, x):
        return as_matrix(x, "x", dim=self.dim)


class Gaussian(DensityModel):
    """Multivariate normal with diagonal covariance."""

    def __init__(self, mean, variance):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.variance = np.atleast_1d(np.asarray(variance, dtype=np.float64))
        if self.mean.ndim != 1 or self.mean.shape != self.variance.shape:
            raise ValueError("mean and variance must be vectors of equal length")
        if np.any(self.variance <= 0) or not np.all(np.isfinite(self.variance)):
            raise ValueError(f"variances must be positive, got {self.variance}")
        self.dim = self.mean.shape[0]
        self._log_norm = -0.5 * (self.dim * np.log(2.0 * np.pi) + np.sum(np.log(self.variance)))

    def log_density(self, x):
        x = self._check(x)
        z = (x - self.mean) ** 2 / self.variance
        return self._log_norm - 0.5 * np.sum(z, axis=1)

    def score(self, x):
        x = self._check(x)
        return -(x - self.mean) / self.variance

    def sample(self, rng, count):
        rng = check_rng(rng)
        count = check_count(count, "count", minimum=0)
        return self.mean + np.sqrt(self.variance) * rng.standard_normal((count, self.dim))


class GaussianMixture(DensityModel):
    """Mixture of diagonal-covariance Gaussians.

    ``components`` is a list of (weight, mean, variance) triples; weights
    must be positive and sum to 1 within 1e-9.
    """

    def __init__(self, components):
        if not components:
            raise ValueError("mixture needs at least one component")
        self.weights = np.array([float(w) for w, _, _ in components])
        if np.any(self.weights <= 0):
            raise ValueError("mixture weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {self.weights.sum()!r}")
        self.parts = [Gaussian(m, v) for _, m, v in components]
        self.dim = self.parts[0].dim
        if any(p.dim != self.dim for p in self.parts):
            raise ValueError("all components must share one dimension")
        self._log_w = np.log(self.weights)

    def _component_log_densities(self, x):
        return np.stack([p.log_density(x) for p in self.parts], axis=1)  # (n, k)

    def log_density(self, x):
        x = self._check(x)
        return logsumexp(self._log_w + self._component_log_densities(x), axis=1)

    def score(self, x):
        x = self._check(x)
        log_joint = self._log_w + self._component_log_densities(x)  # (n, k)
        resp = np.exp(log_joint - logsumexp(log_joint, axis=1, keepdims=True))
        scores = np.stack([p.score(x) for p in self.parts], axis=1)  # (n, k, d)
        return np.sum(resp[:, :, None] * scores, axis=1)

    def sample(self, rng, count):
        rng = check_rng(rng)
        count = check_count(count, "count", minimum=0)
        picks = rng.choice(len(self.parts), size=count, p=self.weights)
        out = np.empty((count, self.dim))
        for k, part in enumerate(self.parts):
            mask = picks == k
            n_k = int(mask.sum())
            if n_k:
                out[mask] = part.sample(rng, n_k)
        return out


class UniformBox(DensityModel):
    """Uniform density on an axis-aligned box.

    The score is defined as 0 on the interior; the log-density is -inf
    outside the support. Flows never evaluate the score at the boundary:
    the uniform serves only as a sampler for the reference distribution.
    """

    def __init__(self, lo, hi):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if self.lo.shape != self.hi.shape or self.lo.ndim != 1:
            raise ValueError("lo and hi must be vectors of equal length")
        if np.any(self.hi <= self.lo):
            raise ValueError(f"box is degenerate: lo={self.lo}, hi={self.hi}")
        self.dim = self.lo.shape[0]
        self._log_dens = -float(np.sum(np.log(self.hi - self.lo)))

    def log_density(self, x):
        x = self._check(x)
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=1)
        return np.where(inside, self._log_dens, NEG_INF)

    def score(self, x):
        x = self._check(x)
        return np.zeros_like(x)

    def sample(self, rng, count):
        rng = check_rng(rng)
        count = check_count(count, "count", minimum=0)
        return rng.uniform(self.lo, self.hi, size=(count, self.dim))


class Banana(DensityModel):
    """2-D curved Gaussian: x0 ~ N(0, spread^2), x1 | x0 ~ N(b (x0^2 - spread^2), 1)."""

    def __init__(self, curvature=0.2, spread=2.0):
        self.b = float(curvature)
        self.spread = float(spread)
        if self.spread <= 0:
            raise ValueError("spread must be positive")
        self.dim = 2
        self._var0 = self.spread**2
        self._log_norm = -np.log(2.0 * np.pi) - 0.5 * np.log(self._var0)

    def _residual(self, x):
        return x[:, 1] - self.b * (x[:, 0] ** 2 - self._var0)

    def log_density(self, x):
        x = self._check(x)
        u = self._residual(x)
        return self._log_norm - 0.5 * (x[:, 0] ** 2 / self._var0 + u**2)

    def score(self, x):
        x = self._check(x)
        u = self._residual(x)
        g = np.empty_like(x)
        g[:, 0] = -x[:, 0] / self._var0 + 2.0 * self.b * x[:, 0] * u
        g[:, 1] = -u
        return g

    def sample(self, rng, count):
        rng = check_rng(rng)
        count = check_count(count, "count", minimum=0)
        z = rng.standard_normal((count, 2))
        x0 = self.spread * z[:, 0]
        x1 = z[:, 1] + self.b * (x0**2 - self._var0)
        return np.column_stack([x0, x1])


def ring_mixture(n_modes=8, radius=5.0, variance=1.0):
    """Equal-weight Gaussians on a circle: the standard 2-D multimodal benchmark."""
    n_modes = check_count(n_modes, "n_modes", minimum=1)
    angles = 2.0 * np.pi * np.arange(n_modes) / n_modes
    comps = [
        (1.0 / n_modes, radius * np.array([np.cos(a), np.sin(a)]), [variance, variance])
        for a in angles
    ]
    return GaussianMixture(comps)


def grid_mixture(side=5, spacing=2.0, variance=0.04):
    """Equal-weight Gaussians on a centered side x side grid."""
    side = check_count(side, "side", minimum=1)
    offsets = spacing * (np.arange(side) - (side - 1) / 2.0)
    weight = 1.0 / side**2
    comps = [
        (weight, np.array([cx, cy]), [variance, variance]) for cx in offsets for cy in offsets
    ]
    return GaussianMixture(comps)


def exact_log_ratio(q, p, x):
    """log q(x) - log p(x), defined only where p is positive."""
    if q.dim != p.dim:
        raise ValueError(f"q and p dimensions differ: {q.dim} vs {p.dim}")
    x = as_matrix(x, "x", dim=p.dim)
    log_p = p.log_density(x)
    if np.any(np.isneginf(log_p)):
        i = int(np.argmax(np.isneginf(log_p)))
        raise ValueError(f"point {x[i]} lies outside the support of p; ratio undefined")
    return q.log_density(x) - log_p
