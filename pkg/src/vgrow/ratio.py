"""Density-ratio estimation r(x) = q(x)/p(x) and its spatial gradient.

Two routes: the exact oracle (both densities known analytically) and a
binary classifier d(x) trained with the logistic loss on samples labeled
+1 for p and -1 for q, from which r(x) = exp(-d(x)). Balanced minibatches
(equal counts from each side) keep the classifier consistent for the
ratio.

Estimated ratios are clamped to [ratio_floor, ratio_ceiling] before use:
an undertrained classifier can emit extreme logits, and some second
derivatives (jeffrey's in particular) blow up as the ratio approaches 0,
which would produce unbounded particle velocities. Clamp counts are
reported so saturation is never silent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from ._validation import as_matrix, check_count, check_rng
from .densities import exact_log_ratio
from .nets import Mlp, RmsPropConfig


class RatioAndGrad(NamedTuple):
    """Clamped ratios with gradients, plus the raw ratios and clamp count."""

    ratio: np.ndarray
    grad: np.ndarray
    raw_ratio: np.ndarray
    n_clamped: int


def logistic_loss(d_values_real, d_values_generated):
    """Mean log(1+exp(-d)) over real points plus mean log(1+exp(d)) over
    generated points, in the overflow-safe softplus form."""
    d_real = np.asarray(d_values_real, dtype=np.float64).reshape(-1)
    d_gen = np.asarray(d_values_generated, dtype=np.float64).reshape(-1)
    if d_real.size == 0 or d_gen.size == 0:
        raise ValueError("logistic_loss needs at least one value on each side")
    return float(np.mean(np.logaddexp(0.0, -d_real)) + np.mean(np.logaddexp(0.0, d_gen)))


@dataclass(frozen=True)
class ClassifierTrainSpec:
    steps: int = 100
    batch_size: int = 64
    optimizer: RmsPropConfig = field(default_factory=RmsPropConfig)
    warm_start: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        check_count(self.batch_size, "batch_size", minimum=1)


def _sample_indices(rng, n, k):
    # separate helper so tests can instrument the balanced draw
    return rng.integers(0, n, size=k)


def train_classifier(classifier, real_samples, generated_samples, spec, rng):
    """Run ``spec.steps`` RMSProp steps of the logistic loss on the classifier.

    Each step draws ``spec.batch_size`` points from each side (equal counts
    enforce the label-balance condition the ratio identity needs), with
    fresh draws every step. The classifier is updated in place; returns the
    final minibatch loss (nan when steps == 0).
    """
    real = as_matrix(real_samples, "real_samples")
    gen = as_matrix(generated_samples, "generated_samples")
    if real.shape[1] != gen.shape[1]:
        raise ValueError(
            f"real and generated dimensions differ: {real.shape[1]} vs {gen.shape[1]}"
        )
    rng = check_rng(rng)
    b = spec.batch_size
    loss = float("nan")
    for _ in range(spec.steps):
        xr = real[_sample_indices(rng, real.shape[0], b)]
        xg = gen[_sample_indices(rng, gen.shape[0], b)]
        d = classifier.forward(np.vstack([xr, xg]))[:, 0]
        d_real, d_gen = d[:b], d[b:]
        loss = logistic_loss(d_real, d_gen)
        upstream = np.concatenate([-expit(-d_real) / b, expit(d_gen) / b])[:, None]
        grad = classifier.grad_params(np.vstack([xr, xg]), upstream)
        classifier.rmsprop_step(grad, spec.optimizer)
    return loss


def _clamp(raw, floor, ceiling):
    clamped = np.clip(raw, floor, ceiling)
    return clamped, int(np.count_nonzero(clamped != raw))


class ExactDensityRatio(BaseEstimator):
    """Oracle ratio backed by two analytic densities."""

    def __init__(self, q, p, ratio_floor=1e-8, ratio_ceiling=1e8):
        self.q = q
        self.p = p
        self.ratio_floor = ratio_floor
        self.ratio_ceiling = ratio_ceiling

    @property
    def dim(self):
        return self.p.dim

    def fit(self, X=None, y=None):
        return self

    def predict(self, X):
        """Clamped ratio q/p at each row of X."""
        return self.ratio_and_grad(X).ratio

    def ratio_and_grad(self, X):
        x = as_matrix(X, "X", dim=self.dim)
        log_r = exact_log_ratio(self.q, self.p, x)
        with np.errstate(over="ignore"):
            raw = np.exp(log_r)
        ratio, n_clamped = _clamp(raw, self.ratio_floor, self.ratio_ceiling)
        grad = ratio[:, None] * (self.q.score(x) - self.p.score(x))
        return RatioAndGrad(ratio, grad, raw, n_clamped)


class ClassifierDensityRatio(BaseEstimator):
    """Classifier-backed ratio estimator, r(x) = exp(-d(x)).

    ``fit(X, y)`` takes labels y = +1 for samples of the denominator p
    (the data distribution) and y = -1 for samples of the numerator q (the
    moving distribution). With ``warm_start`` (the default) each fit call
    continues training the same network; otherwise the network is
    reinitialized first.
    """

    def __init__(
        self,
        hidden=(64, 64),
        steps=100,
        batch_size=64,
        learning_rate=1e-4,
        decay=0.9,
        epsilon=1e-8,
        warm_start=True,
        ratio_floor=1e-8,
        ratio_ceiling=1e8,
        random_state=0,
    ):
        self.hidden = hidden
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.decay = decay
        self.epsilon = epsilon
        self.warm_start = warm_start
        self.ratio_floor = ratio_floor
        self.ratio_ceiling = ratio_ceiling
        self.random_state = random_state

    def _spec(self):
        return ClassifierTrainSpec(
            steps=self.steps,
            batch_size=self.batch_size,
            optimizer=RmsPropConfig(self.learning_rate, self.decay, self.epsilon),
            warm_start=self.warm_start,
        )

    def _ensure_net(self, dim, rng):
        fresh = not hasattr(self, "classifier_") or not self.warm_start
        if not fresh and self.classifier_.dim_in != dim:
            raise ValueError(
                f"classifier was built for dimension {self.classifier_.dim_in}, got {dim}"
            )
        if fresh:
            self.classifier_ = Mlp([dim, *self.hidden, 1], rng=rng)
        return self.classifier_

    def fit(self, X, y, rng=None):
        x = as_matrix(X, "X")
        y = np.asarray(y).reshape(-1)
        if set(np.unique(y)) - {-1, 1}:
            raise ValueError("labels must be +1 (samples of p) or -1 (samples of q)")
        return self.fit_two_sample(x[y == 1], x[y == -1], rng=rng)

    def fit_two_sample(self, p_samples, q_samples, rng=None):
        """Train on two sample sets directly (p = data side, q = moving side)."""
        p_samples = as_matrix(p_samples, "p_samples")
        q_samples = as_matrix(q_samples, "q_samples")
        rng = check_rng(self.random_state if rng is None else rng)
        net = self._ensure_net(p_samples.shape[1], rng)
        self.loss_ = train_classifier(net, p_samples, q_samples, self._spec(), rng)
        return self

    @property
    def dim(self):
        return self.classifier_.dim_in

    def decision_function(self, X):
        """Raw classifier logits d(x)."""
        x = as_matrix(X, "X", dim=self.dim)
        d = self.classifier_.forward(x)[:, 0]
        if np.any(np.isnan(d)):
            i = int(np.argmax(np.isnan(d)))
            raise ValueError(f"classifier produced NaN at row {i} (x={x[i]})")
        return d

    def predict(self, X):
        """Clamped ratio exp(-d(x)) at each row of X."""
        return self.ratio_and_grad(X).ratio

    def ratio_and_grad(self, X):
        x = as_matrix(X, "X", dim=self.dim)
        d = self.decision_function(x)
        with np.errstate(over="ignore"):
            raw = np.exp(-d)
        ratio, n_clamped = _clamp(raw, self.ratio_floor, self.ratio_ceiling)
        grad_d = self.classifier_.grad_input(x, np.ones((x.shape[0], 1)))
        grad = -ratio[:, None] * grad_d
        return RatioAndGrad(ratio, grad, raw, n_clamped)
