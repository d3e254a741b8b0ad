"""Run orchestration: bind a validated config to flow or training runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .artifacts import (
    TELEMETRY_FIELDS,
    CsvAppender,
    SnapshotWriter,
    read_points_csv,
    write_manifest,
    write_points_csv,
)
from .config import ConfigError, build_density
from .divergences import get_divergence
from .flow import FlowConfig, inner_loop
from .generator import VGrow
from .metrics import mode_shares, two_sample_report
from .ratio import ClassifierDensityRatio, ExactDensityRatio
from .seeding import substream

REPORT_FIELDS = (
    "loop",
    "source",
    "energy_distance",
    "mmd_rbf",
    "n_a",
    "n_b",
    "bandwidth",
)
MODE_FIELDS = ("modes_covered", "n_modes", "min_mode_share")


def _velocity_clip(cfg):
    clip = cfg["flow"]["velocity_clip"]
    return None if clip == 0.0 else clip


def _resolve_target(cfg, base_dir, seed):
    """Return (density or None, target sample pool, list of input files)."""
    section = cfg["target"]
    density = build_density(section, "target")
    if density is None:
        path = Path(section["path"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.exists():
            raise ConfigError(f"target sample file not found: {path}")
        return None, read_points_csv(path), [path]
    pool = density.sample(substream(seed, "target-pool"), section["sample_count"])
    return density, pool, []


def _classifier_from(cfg, seed):
    c = cfg["classifier"]
    e = cfg["estimator"]
    return ClassifierDensityRatio(
        hidden=tuple(c["hidden"]),
        steps=c["steps"],
        batch_size=c["batch_size"],
        learning_rate=c["learning_rate"],
        warm_start=c["warm_start"],
        ratio_floor=e["ratio_floor"],
        ratio_ceiling=e["ratio_ceiling"],
        random_state=seed,
    )


def _target_centers(cfg, density):
    if hasattr(density, "parts"):
        return np.stack([part.mean for part in density.parts])
    return None


def _report_row(loop, source, points, reference, centers):
    rep = two_sample_report(points, reference)
    row = {
        "loop": loop,
        "source": source,
        "energy_distance": rep.energy_distance,
        "mmd_rbf": rep.mmd_rbf,
        "n_a": rep.sample_sizes[0],
        "n_b": rep.sample_sizes[1],
        "bandwidth": rep.bandwidth,
    }
    if centers is not None:
        shares = mode_shares(points, centers)
        row["modes_covered"] = int(np.count_nonzero(shares >= 0.05))
        row["n_modes"] = centers.shape[0]
        row["min_mode_share"] = float(shares.min())
    return row


def run_flow(cfg, base_dir=None):
    """Particle transport without generator distillation; returns the out dir."""
    seed = cfg["run"]["seed"]
    out = Path(cfg["run"]["out_dir"])
    density, pool, inputs = _resolve_target(cfg, base_dir, seed)
    write_manifest(out, "flow", cfg, inputs)

    reference = build_density(cfg["reference"], "reference")
    if reference is None:
        raise ConfigError("[reference] must be an analytic distribution, not samples")
    particles = reference.sample(substream(seed, "reference"), cfg["flow"]["particles"])
    if particles.shape[1] != pool.shape[1]:
        raise ConfigError(
            f"reference dimension {particles.shape[1]} != target dimension {pool.shape[1]}"
        )

    mode = cfg["estimator"]["mode"]
    if mode == "learned":
        estimator = _classifier_from(cfg, seed)
    elif mode == "exact":
        if density is None:
            raise ConfigError("estimator mode 'exact' needs an analytic target")
        estimator = ExactDensityRatio(
            reference,
            density,
            ratio_floor=cfg["estimator"]["ratio_floor"],
            ratio_ceiling=cfg["estimator"]["ratio_ceiling"],
        )
    else:
        raise ConfigError(f"estimator mode must be 'learned' or 'exact', got {mode!r}")

    flow_config = FlowConfig(
        divergence=get_divergence(cfg["divergence"]["name"]),
        step_size=cfg["flow"]["step_size"],
        inner_loops=cfg["flow"]["inner_loops"],
        velocity_clip=_velocity_clip(cfg),
    )
    telemetry = CsvAppender(out / "telemetry.csv", TELEMETRY_FIELDS)
    snapshots = SnapshotWriter(out / "snapshots.csv", particles.shape[1])
    rng = substream(seed, "flow")
    every = cfg["run"]["snapshot_every"]
    outer_loops = cfg["flow"]["outer_loops"]
    snapshots.write(0, particles)
    for outer in range(outer_loops):
        particles, tel = inner_loop(particles, pool, estimator, flow_config, rng)
        telemetry.extend(
            {
                "outer": outer,
                "inner": rec.inner,
                "mean_sq_velocity": rec.mean_sq_velocity,
                "divergence_estimate": rec.divergence_estimate,
                "classifier_loss": rec.classifier_loss,
                "clamp_count": rec.clamp_count,
            }
            for rec in tel
        )
        if (outer + 1) % every == 0 or outer == outer_loops - 1:
            snapshots.write(outer + 1, particles)
    write_points_csv(out / "particles.csv", particles)
    return out


def run_train(cfg, base_dir=None):
    """Full training run: flow phases plus generator distillation."""
    seed = cfg["run"]["seed"]
    out = Path(cfg["run"]["out_dir"])
    if cfg["estimator"]["mode"] != "learned":
        raise ConfigError("training requires estimator mode 'learned'")
    density, pool, inputs = _resolve_target(cfg, base_dir, seed)
    write_manifest(out, "train", cfg, inputs)

    g = cfg["generator"]
    model = VGrow(
        divergence=cfg["divergence"]["name"],
        latent_dim=g["latent_dim"],
        outer_loops=g["outer_loops"],
        particles_per_loop=g["particles"],
        step_size=cfg["flow"]["step_size"],
        inner_loops=cfg["flow"]["inner_loops"],
        velocity_clip=_velocity_clip(cfg),
        latent=g["latent"],
        generator_hidden=tuple(g["hidden"]),
        generator_output=g["output_activation"],
        fit_steps=g["fit_steps"],
        fit_batch_size=g["fit_batch_size"],
        fit_learning_rate=g["fit_learning_rate"],
        classifier_hidden=tuple(cfg["classifier"]["hidden"]),
        classifier_steps=cfg["classifier"]["steps"],
        classifier_batch_size=cfg["classifier"]["batch_size"],
        classifier_learning_rate=cfg["classifier"]["learning_rate"],
        classifier_warm_start=cfg["classifier"]["warm_start"],
        ratio_floor=cfg["estimator"]["ratio_floor"],
        ratio_ceiling=cfg["estimator"]["ratio_ceiling"],
        random_state=seed,
    )

    telemetry = CsvAppender(out / "telemetry.csv", TELEMETRY_FIELDS)
    report_fields = REPORT_FIELDS + (MODE_FIELDS if _target_centers(cfg, density) is not None else ())
    report = CsvAppender(out / "report.csv", report_fields)
    centers = _target_centers(cfg, density)
    state = {"written": 0, "snapshots": None}
    every = cfg["run"]["snapshot_every"]

    def reference_points(loop, count):
        if density is not None:
            return density.sample(substream(seed, "metrics", loop), count)
        idx = substream(seed, "metrics", loop).choice(pool.shape[0], size=min(count, pool.shape[0]), replace=False)
        return pool[idx]

    def callback(outer, latents, particles, m):
        telemetry.extend(m.telemetry_[state["written"] :])
        state["written"] = len(m.telemetry_)
        if state["snapshots"] is None:
            state["snapshots"] = SnapshotWriter(out / "snapshots.csv", particles.shape[1])
        final = outer == g["outer_loops"] - 1
        if (outer + 1) % every == 0 or final:
            state["snapshots"].write(outer + 1, particles)
            m.generator_.save(out / f"generator_{outer + 1:05d}.mlp")
            m.ratio_estimator_.classifier_.save(out / f"classifier_{outer + 1:05d}.mlp")
            report.extend(
                [
                    _report_row(
                        outer + 1,
                        "particles",
                        particles,
                        reference_points(outer + 1, particles.shape[0]),
                        centers,
                    )
                ]
            )

    model.fit(pool, callback=callback)

    n_final = g["particles"]
    generated = model.sample(n_final)
    write_points_csv(out / "generated.csv", generated)
    model.generator_.save(out / "generator_final.mlp")
    if hasattr(model.ratio_estimator_, "classifier_"):
        model.ratio_estimator_.classifier_.save(out / "classifier_final.mlp")
    if g["outer_loops"] > 0:
        report.extend(
            [
                _report_row(
                    g["outer_loops"],
                    "generator",
                    generated,
                    reference_points(-1, n_final),
                    centers,
                )
            ]
        )
    return out
