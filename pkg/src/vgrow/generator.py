"""Generator distillation: the full outer training loop.

Each outer loop samples fresh latents W, pushes them through the sampler
network G to get particles Z = G(W), transports Z toward the data by the
flow inner loop, then refits G to the moved pairs (W, Z) by least squares.
The ratio classifier is warm-started across outer loops.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_matrix, check_count, check_rng
from .divergences import get_divergence
from .flow import FlowConfig, inner_loop
from .nets import Mlp, RmsPropConfig
from .ratio import ClassifierDensityRatio
from .seeding import substream


@dataclass(frozen=True)
class GeneratorFitSpec:
    steps: int = 500
    batch_size: int = 64
    optimizer: RmsPropConfig = field(default_factory=RmsPropConfig)

    def __post_init__(self):
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        check_count(self.batch_size, "batch_size", minimum=1)


def generator_push(gen, latents):
    """Z = G(W) for a batch of latent rows."""
    w = as_matrix(latents, "latents", dim=gen.dim_in, allow_empty=True)
    return gen.forward(w)


def full_batch_mse(gen, latents, targets):
    w = as_matrix(latents, "latents", dim=gen.dim_in)
    z = as_matrix(targets, "targets", dim=gen.dim_out)
    if w.shape[0] != z.shape[0]:
        raise ValueError(f"latent count {w.shape[0]} != target count {z.shape[0]}")
    resid = gen.forward(w) - z
    return float(np.mean(np.sum(resid * resid, axis=1)))


def fit_generator(gen, latents, targets, spec, rng):
    """Minibatch RMSProp on mean squared error over index-paired rows.

    The network is updated in place; returns the final full-batch MSE.
    """
    w = as_matrix(latents, "latents", dim=gen.dim_in)
    z = as_matrix(targets, "targets", dim=gen.dim_out)
    if w.shape[0] != z.shape[0]:
        raise ValueError(f"latent count {w.shape[0]} != target count {z.shape[0]}")
    rng = check_rng(rng)
    b = min(spec.batch_size, w.shape[0])
    for _ in range(spec.steps):
        idx = rng.integers(0, w.shape[0], size=b)
        out = gen.forward(w[idx])
        upstream = 2.0 * (out - z[idx]) / b
        gen.rmsprop_step(gen.grad_params(w[idx], upstream), spec.optimizer)
    return full_batch_mse(gen, w, z)


def sample_latents(rng, count, latent_dim, kind="normal"):
    rng = check_rng(rng)
    count = check_count(count, "count", minimum=0)
    if kind == "normal":
        return rng.standard_normal((count, latent_dim))
    if kind == "uniform":
        return rng.uniform(-1.0, 1.0, size=(count, latent_dim))
    raise ValueError(f"latent kind must be 'normal' or 'uniform', got {kind!r}")


def sample_generator(gen, count, rng, kind="normal"):
    """Draw latents and push them through the network."""
    return generator_push(gen, sample_latents(rng, count, gen.dim_in, kind))


class VGrow(BaseEstimator):
    """Deterministic sampler trained by particle transport and distillation.

    ``fit(X)`` treats the rows of X as samples of the target distribution
    and alternates flow phases with least-squares refits of the sampler
    network; ``sample(n)`` then draws from the learned pushforward. All
    randomness is derived from ``random_state`` through named substreams,
    so a run is bit-reproducible.

    Learning rates default to desk-scale values that converge within tens
    of outer loops on low-dimensional targets; the shipped preset configs
    pin them explicitly.
    """

    def __init__(
        self,
        divergence="kl",
        latent_dim=2,
        outer_loops=30,
        particles_per_loop=2000,
        step_size=0.5,
        inner_loops=20,
        velocity_clip=None,
        latent="normal",
        generator_hidden=(64, 64),
        generator_output="identity",
        fit_steps=500,
        fit_batch_size=64,
        fit_learning_rate=1e-2,
        classifier_hidden=(64, 64),
        classifier_steps=100,
        classifier_batch_size=64,
        classifier_learning_rate=1e-2,
        classifier_warm_start=True,
        ratio_floor=1e-8,
        ratio_ceiling=1e8,
        random_state=0,
    ):
        self.divergence = divergence
        self.latent_dim = latent_dim
        self.outer_loops = outer_loops
        self.particles_per_loop = particles_per_loop
        self.step_size = step_size
        self.inner_loops = inner_loops
        self.velocity_clip = velocity_clip
        self.latent = latent
        self.generator_hidden = generator_hidden
        self.generator_output = generator_output
        self.fit_steps = fit_steps
        self.fit_batch_size = fit_batch_size
        self.fit_learning_rate = fit_learning_rate
        self.classifier_hidden = classifier_hidden
        self.classifier_steps = classifier_steps
        self.classifier_batch_size = classifier_batch_size
        self.classifier_learning_rate = classifier_learning_rate
        self.classifier_warm_start = classifier_warm_start
        self.ratio_floor = ratio_floor
        self.ratio_ceiling = ratio_ceiling
        self.random_state = random_state

    def _flow_config(self):
        return FlowConfig(
            divergence=get_divergence(self.divergence),
            step_size=self.step_size,
            inner_loops=self.inner_loops,
            velocity_clip=self.velocity_clip,
        )

    def fit(self, X, y=None, callback=None):
        """Train the sampler on target samples X of shape (n, d).

        ``callback(outer, latents, particles, model)`` is invoked after
        each outer loop (artifact emission hooks in here and cannot
        perturb the run's random streams).
        """
        data = as_matrix(X, "X")
        check_count(self.outer_loops, "outer_loops", minimum=0)
        check_count(self.particles_per_loop, "particles_per_loop", minimum=1)
        seed = self.random_state
        flow_config = self._flow_config()

        self.generator_ = Mlp(
            [self.latent_dim, *self.generator_hidden, data.shape[1]],
            output_activation=self.generator_output,
            rng=substream(seed, "generator-init"),
        )
        self.ratio_estimator_ = ClassifierDensityRatio(
            hidden=self.classifier_hidden,
            steps=self.classifier_steps,
            batch_size=self.classifier_batch_size,
            learning_rate=self.classifier_learning_rate,
            warm_start=self.classifier_warm_start,
            ratio_floor=self.ratio_floor,
            ratio_ceiling=self.ratio_ceiling,
            random_state=seed,
        )
        fit_spec = GeneratorFitSpec(
            steps=self.fit_steps,
            batch_size=self.fit_batch_size,
            optimizer=RmsPropConfig(learning_rate=self.fit_learning_rate),
        )
        rng_latents = substream(seed, "latents")
        rng_flow = substream(seed, "flow")
        rng_fit = substream(seed, "generator-fit")

        self.telemetry_ = []
        self.fit_mse_ = []
        for outer in range(self.outer_loops):
            latents = sample_latents(rng_latents, self.particles_per_loop, self.latent_dim, self.latent)
            particles = generator_push(self.generator_, latents)
            try:
                particles, flow_tel = inner_loop(
                    particles, data, self.ratio_estimator_, flow_config, rng_flow
                )
            except Exception as exc:
                raise RuntimeError(f"run aborted at outer loop {outer}: {exc}") from exc
            for rec in flow_tel:
                self.telemetry_.append(
                    {
                        "outer": outer,
                        "inner": rec.inner,
                        "mean_sq_velocity": rec.mean_sq_velocity,
                        "divergence_estimate": rec.divergence_estimate,
                        "classifier_loss": rec.classifier_loss,
                        "clamp_count": rec.clamp_count,
                    }
                )
            pre_mse = full_batch_mse(self.generator_, latents, particles)
            post_mse = fit_generator(self.generator_, latents, particles, fit_spec, rng_fit)
            self.fit_mse_.append((pre_mse, post_mse))
            if callback is not None:
                callback(outer, latents, particles, self)
        return self

    def sample(self, count, rng=None):
        """Draw ``count`` samples from the trained pushforward."""
        if rng is None:
            rng = substream(self.random_state, "sample")
        return sample_generator(self.generator_, count, rng, kind=self.latent)
