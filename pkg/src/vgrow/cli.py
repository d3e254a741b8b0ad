"""Command-line entry point: flow runs, training runs, verification, metrics."""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click

from .artifacts import CsvAppender, read_points_csv
from .config import ConfigError, load_config
from .metrics import two_sample_report
from .runs import run_flow, run_train
from .verify import ALL_SUITES, run_suite


def _resolve_threads(threads):
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get("VGROW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise click.ClickException(f"VGROW_THREADS must be an integer, got {env!r}")
    return 1


def _load(config, out, seed):
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        raise click.ClickException(str(exc))
    if seed is not None:
        cfg["run"]["seed"] = int(seed)
    if out is not None:
        cfg["run"]["out_dir"] = str(out)
    return cfg


def _run_options(fn):
    fn = click.option("--config", required=True, help="Config file path or preset name.")(fn)
    fn = click.option("--out", default=None, help="Output directory (overrides config).")(fn)
    fn = click.option("--seed", default=None, type=int, help="Seed (overrides config).")(fn)
    fn = click.option(
        "--threads",
        default=None,
        type=int,
        help="Worker threads for independent verification cases (VGROW_THREADS fallback).",
    )(fn)
    return fn


@click.group()
def main():
    """Particle gradient flows with classifier density ratios and a distilled sampler."""


@main.command()
@_run_options
def flow(config, out, seed, threads):
    """Transport particles toward the target; no generator distillation."""
    cfg = _load(config, out, seed)
    base = Path(config).parent if Path(config).exists() else None
    try:
        out_dir = run_flow(cfg, base_dir=base)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"flow run complete: {out_dir}")


@main.command()
@_run_options
def train(config, out, seed, threads):
    """Run the full outer loop and distill the sampler network."""
    cfg = _load(config, out, seed)
    base = Path(config).parent if Path(config).exists() else None
    try:
        out_dir = run_train(cfg, base_dir=base)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"training run complete: {out_dir}")


@main.command()
@click.argument("suite", type=click.Choice(ALL_SUITES + ("all",)))
@click.option("--threads", default=None, type=int, help="Run independent cases concurrently.")
def verify(suite, threads):
    """Run a numerical verification suite and print pass/fail per assertion."""
    names = ALL_SUITES if suite == "all" else (suite,)
    n_threads = _resolve_threads(threads)
    all_passed = True
    for name in names:
        report = run_suite(name, threads=n_threads)
        click.echo(f"suite {name}:")
        for check in report.checks:
            click.echo(f"  {check.describe()}")
        all_passed = all_passed and report.passed
    if not all_passed:
        sys.exit(1)


@main.command()
@click.argument("samples_a", type=click.Path())
@click.argument("samples_b", type=click.Path())
@click.option("--out", default=None, help="Directory for the report CSV (default: alongside A).")
def eval(samples_a, samples_b, out):
    """Two-sample report (energy distance, MMD) between two point CSVs."""
    try:
        a = read_points_csv(samples_a)
        b = read_points_csv(samples_b)
        report = two_sample_report(a, b)
    except (ValueError, OSError) as exc:
        raise click.ClickException(str(exc))
    click.echo(f"energy_distance: {report.energy_distance!r}")
    click.echo(f"mmd_rbf: {report.mmd_rbf!r}")
    click.echo(f"sample_sizes: {report.sample_sizes[0]}, {report.sample_sizes[1]}")
    click.echo(f"bandwidth: {report.bandwidth!r}")
    out_dir = Path(out) if out is not None else Path(samples_a).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = CsvAppender(
        out_dir / "eval_report.csv",
        ("energy_distance", "mmd_rbf", "n_a", "n_b", "bandwidth"),
    )
    writer.extend(
        [
            {
                "energy_distance": report.energy_distance,
                "mmd_rbf": report.mmd_rbf,
                "n_a": report.sample_sizes[0],
                "n_b": report.sample_sizes[1],
                "bandwidth": report.bandwidth,
            }
        ]
    )
