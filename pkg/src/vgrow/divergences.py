"""The f-divergence family and its estimators.

An f-divergence D_f(q||p) = integral of p(x) * f(q(x)/p(x)) dx for a convex
f with f(1) = 0. Four members are built in:

    name      f(u)                              f''(u)
    kl        u log u                           1/u
    js        -(u+1) log((u+1)/2) + u log u     1/(u (u+1))
    logd      (u+1) log(u+1) - 2 log 2          1/(u+1)
    jeffrey   (u-1) log u                       (u+1)/u^2

All three callables are vectorized over numpy arrays. Inputs must be
strictly positive except where the limit at u -> 0+ is finite (kl, js,
logd); jeffrey diverges at 0 and rejects it. Arguments u < 0, or u = 0
where the limit is infinite, raise ValueError: a non-positive ratio always
signals an estimator failure upstream and must not be silently absorbed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._validation import as_matrix

LOG2 = np.log(2.0)


def _check_domain(u, allow_zero):
    scalar = np.isscalar(u) or (isinstance(u, np.ndarray) and u.ndim == 0)
    u = np.atleast_1d(np.asarray(u, dtype=np.float64))
    bad = (u < 0) if allow_zero else (u <= 0)
    if np.any(bad):
        raise ValueError(
            f"divergence argument must be positive, got {float(u[bad].flat[0])}"
        )
    return u, scalar


def _unwrap(out, scalar):
    return float(out[0]) if scalar else out


def _xlogx(u):
    # u log u with the continuous extension 0 log 0 = 0
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = u[pos] * np.log(u[pos])
    return out


def _f_kl(u):
    u, scalar = _check_domain(u, allow_zero=True)
    return _unwrap(_xlogx(u), scalar)


def _f_js(u):
    u, scalar = _check_domain(u, allow_zero=True)
    return _unwrap(-(u + 1.0) * np.log((u + 1.0) / 2.0) + _xlogx(u), scalar)


def _f_logd(u):
    u, scalar = _check_domain(u, allow_zero=True)
    return _unwrap((u + 1.0) * np.log(u + 1.0) - 2.0 * LOG2, scalar)


def _f_jeffrey(u):
    u, scalar = _check_domain(u, allow_zero=False)
    return _unwrap((u - 1.0) * np.log(u), scalar)


def _strict(fn):
    def wrapped(u):
        u, scalar = _check_domain(u, allow_zero=False)
        return _unwrap(fn(u), scalar)

    return wrapped


@dataclass(frozen=True)
class FDivergence:
    """A member of the f-divergence family: f with its first two derivatives."""

    name: str
    f: Callable = field(repr=False)
    f_prime: Callable = field(repr=False)
    f_second: Callable = field(repr=False)


_REGISTRY = {}


def register_divergence(div):
    """Register a custom FDivergence under its name (programmatic only)."""
    if not isinstance(div, FDivergence):
        raise TypeError("expected an FDivergence")
    _REGISTRY[div.name.lower()] = div
    return div


register_divergence(
    FDivergence(
        name="kl",
        f=_f_kl,
        f_prime=_strict(lambda u: np.log(u) + 1.0),
        f_second=_strict(lambda u: 1.0 / u),
    )
)
register_divergence(
    FDivergence(
        name="js",
        f=_f_js,
        f_prime=_strict(lambda u: np.log(2.0 * u / (u + 1.0))),
        f_second=_strict(lambda u: 1.0 / (u * (u + 1.0))),
    )
)
register_divergence(
    FDivergence(
        name="logd",
        f=_f_logd,
        f_prime=_strict(lambda u: np.log(u + 1.0) + 1.0),
        f_second=_strict(lambda u: 1.0 / (u + 1.0)),
    )
)
register_divergence(
    FDivergence(
        name="jeffrey",
        f=_f_jeffrey,
        f_prime=_strict(lambda u: np.log(u) + (u - 1.0) / u),
        f_second=_strict(lambda u: (u + 1.0) / (u * u)),
    )
)


def divergence_names():
    return sorted(_REGISTRY)


def get_divergence(name):
    """Look up a divergence by name (case-insensitive)."""
    key = str(name).lower()
    try:
        return _REGISTRY[key]
    except KeyError:
        raise ValueError(
            f"unknown divergence {name!r}; valid names are {', '.join(divergence_names())}"
        ) from None


def divergence_mc(div, ratio_at, samples_from_p):
    """Monte-Carlo divergence estimate: mean of f(ratio) over samples from p.

    ``ratio_at`` maps a batch of points (n, d) to the density ratio q/p at
    each point. Non-finite or non-positive ratios raise, naming the sample.
    """
    x = as_matrix(samples_from_p, "samples_from_p")
    ratios = np.asarray(ratio_at(x), dtype=np.float64).reshape(-1)
    if ratios.shape[0] != x.shape[0]:
        raise ValueError(
            f"ratio_at returned {ratios.shape[0]} values for {x.shape[0]} samples"
        )
    bad = ~np.isfinite(ratios) | (ratios <= 0)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"ratio is not finite and positive at sample {i} (x={x[i]}, ratio={ratios[i]})"
        )
    return float(np.mean(div.f(ratios)))


def _check_grid(grid):
    lo, hi, n = grid
    lo, hi, n = float(lo), float(hi), int(n)
    if not (hi > lo and n >= 2):
        raise ValueError(f"grid must satisfy hi > lo and n >= 2, got {grid}")
    return np.linspace(lo, hi, n)


def _require_1d(model, name):
    if model.dim != 1:
        raise ValueError(f"{name} must be one-dimensional, got dim={model.dim}")


def divergence_quadrature_1d(div, q, p, grid):
    """Composite-trapezoid estimate of the divergence between 1-D densities."""
    _require_1d(q, "q")
    _require_1d(p, "p")
    x = _check_grid(grid)[:, None]
    log_q = q.log_density(x)
    log_p = p.log_density(x)
    if np.any(np.isneginf(log_p) & ~np.isneginf(log_q)):
        i = int(np.argmax(np.isneginf(log_p) & ~np.isneginf(log_q)))
        raise ValueError(f"p vanishes where q does not (x={float(x[i, 0])}); ratio undefined")
    integrand = np.zeros(x.shape[0])
    ok = ~np.isneginf(log_p)
    integrand[ok] = np.exp(log_p[ok]) * div.f(np.exp(log_q[ok] - log_p[ok]))
    return float(np.trapezoid(integrand, x[:, 0]))


def logd_gan_objective_1d(q, p, grid):
    """Generator loss of the log-trick GAN at the optimal discriminator.

    With D*(x) = p(x) / (p(x) + q(x)), returns
    -int p log D* - int q log D* by the trapezoid rule. Equals the logd
    divergence plus 2 log 2.
    """
    _require_1d(q, "q")
    _require_1d(p, "p")
    x = _check_grid(grid)[:, None]
    log_q = q.log_density(x)
    log_p = p.log_density(x)
    # log D* = log p - log(p + q), computed in log space
    log_dstar = log_p - np.logaddexp(log_p, log_q)
    integrand = -(np.exp(log_p) + np.exp(log_q)) * log_dstar
    return float(np.trapezoid(integrand, x[:, 0]))
