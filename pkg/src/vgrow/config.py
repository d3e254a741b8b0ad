"""Run configuration: TOML documents validated against a strict schema.

Unknown keys are rejected with the offending table and key named, so a
typo never silently falls back to a default. Presets shipped with the
package can be addressed by bare name (``gauss2d``, ``ring8``, ``grid25``,
``banana``).
"""

from __future__ import annotations

import sys
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .densities import Banana, Gaussian, GaussianMixture, UniformBox, grid_mixture, ring_mixture

PRESET_NAMES = ("gauss2d", "ring8", "grid25", "banana")


class ConfigError(ValueError):
    """A configuration document violates the schema."""


def _is_number(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(v, where):
    if not _is_number(v):
        raise ConfigError(f"{where} must be a number, got {v!r}")
    return float(v)


def _integer(v, where):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where} must be an integer, got {v!r}")
    return v


def _boolean(v, where):
    if not isinstance(v, bool):
        raise ConfigError(f"{where} must be true or false, got {v!r}")
    return v


def _string(v, where):
    if not isinstance(v, str):
        raise ConfigError(f"{where} must be a string, got {v!r}")
    return v


def _number_list(v, where):
    if not isinstance(v, list) or not v or not all(_is_number(e) for e in v):
        raise ConfigError(f"{where} must be a non-empty list of numbers, got {v!r}")
    return [float(e) for e in v]


def _int_list(v, where):
    if not isinstance(v, list) or not v or any(isinstance(e, bool) or not isinstance(e, int) for e in v):
        raise ConfigError(f"{where} must be a non-empty list of integers, got {v!r}")
    return list(v)


def _matrix(v, where):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where} must be a non-empty list of rows, got {v!r}")
    return [_number_list(row, f"{where}[{i}]") for i, row in enumerate(v)]


_DISTRIBUTION_KEYS = {
    "type": _string,
    "mean": _number_list,
    "variance": _number_list,
    "weights": _number_list,
    "means": _matrix,
    "variances": _matrix,
    "lo": _number_list,
    "hi": _number_list,
    "radius": _number,
    "modes": _integer,
    "side": _integer,
    "spacing": _number,
    "curvature": _number,
    "spread": _number,
    "path": _string,
    "sample_count": _integer,
}

_SCHEMA = {
    "run": {
        "seed": _integer,
        "out_dir": _string,
        "snapshot_every": _integer,
    },
    "divergence": {
        "name": _string,
    },
    "estimator": {
        "mode": _string,
        "ratio_floor": _number,
        "ratio_ceiling": _number,
    },
    "classifier": {
        "hidden": _int_list,
        "steps": _integer,
        "batch_size": _integer,
        "learning_rate": _number,
        "warm_start": _boolean,
    },
    "flow": {
        "step_size": _number,
        "inner_loops": _integer,
        "velocity_clip": _number,
        "outer_loops": _integer,
        "particles": _integer,
    },
    "target": _DISTRIBUTION_KEYS,
    "reference": _DISTRIBUTION_KEYS,
    "generator": {
        "latent_dim": _integer,
        "outer_loops": _integer,
        "particles": _integer,
        "hidden": _int_list,
        "output_activation": _string,
        "latent": _string,
        "fit_steps": _integer,
        "fit_batch_size": _integer,
        "fit_learning_rate": _number,
    },
}

_DEFAULTS = {
    "run": {"seed": 0, "out_dir": "runs/out", "snapshot_every": 10},
    "divergence": {"name": "kl"},
    "estimator": {"mode": "learned", "ratio_floor": 1e-8, "ratio_ceiling": 1e8},
    "classifier": {
        "hidden": [64, 64],
        "steps": 100,
        "batch_size": 64,
        "learning_rate": 1e-2,
        "warm_start": True,
    },
    "flow": {
        "step_size": 0.5,
        "inner_loops": 20,
        "velocity_clip": 0.0,  # 0 disables clipping
        "outer_loops": 1,
        "particles": 2000,
    },
    "target": {"sample_count": 10000},
    "reference": {},
    "generator": {
        "latent_dim": 2,
        "outer_loops": 30,
        "particles": 2000,
        "hidden": [64, 64],
        "output_activation": "identity",
        "latent": "normal",
        "fit_steps": 500,
        "fit_batch_size": 64,
        "fit_learning_rate": 1e-2,
    },
}


def validate_config(doc):
    """Validate a parsed TOML document and fill defaults; returns a dict."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a table")
    out = {}
    for table, value in doc.items():
        if table not in _SCHEMA:
            raise ConfigError(
                f"unknown table [{table}]; valid tables: {', '.join(sorted(_SCHEMA))}"
            )
        if not isinstance(value, dict):
            raise ConfigError(f"[{table}] must be a table of key = value pairs")
        allowed = _SCHEMA[table]
        cleaned = {}
        for key, v in value.items():
            if key not in allowed:
                raise ConfigError(
                    f"unknown key '{key}' in [{table}]; valid keys: {', '.join(sorted(allowed))}"
                )
            cleaned[key] = allowed[key](v, f"[{table}] {key}")
        out[table] = cleaned
    for table, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        merged.update(out.get(table, {}))
        out[table] = merged
    return out


def _preset_path(name):
    return resources.files("vgrow").joinpath("presets", f"{name}.toml")


def load_config(spec):
    """Load and validate a config from a path or a bare preset name."""
    text_source = str(spec)
    if text_source in PRESET_NAMES and not Path(text_source).exists():
        raw = _preset_path(text_source).read_bytes()
    else:
        path = Path(text_source)
        if not path.exists():
            raise ConfigError(
                f"config not found: {text_source!r} is neither a file nor a preset "
                f"({', '.join(PRESET_NAMES)})"
            )
        raw = path.read_bytes()
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {text_source}: {exc}") from exc
    return validate_config(doc)


def build_density(section, where, base_dir=None):
    """Instantiate the analytic distribution described by a config table.

    Returns None for type="samples" (an empirical target); the caller loads
    the file instead.
    """
    kind = section.get("type")
    if kind is None:
        raise ConfigError(f"[{where}] needs a 'type' key")

    def require(*names):
        missing = [n for n in names if n not in section]
        if missing:
            raise ConfigError(f"[{where}] type={kind!r} needs keys: {', '.join(missing)}")
        return [section[n] for n in names]

    if kind == "gaussian":
        mean, variance = require("mean", "variance")
        return Gaussian(mean, variance)
    if kind == "mixture":
        weights, means, variances = require("weights", "means", "variances")
        if not len(weights) == len(means) == len(variances):
            raise ConfigError(f"[{where}] weights, means and variances must have equal lengths")
        return GaussianMixture(list(zip(weights, means, variances)))
    if kind == "uniform":
        lo, hi = require("lo", "hi")
        return UniformBox(lo, hi)
    if kind == "ring8":
        return ring_mixture(
            n_modes=section.get("modes", 8),
            radius=section.get("radius", 5.0),
            variance=section.get("variance", [1.0])[0] if "variance" in section else 1.0,
        )
    if kind == "grid25":
        return grid_mixture(
            side=section.get("side", 5),
            spacing=section.get("spacing", 2.0),
            variance=section.get("variance", [0.04])[0] if "variance" in section else 0.04,
        )
    if kind == "banana":
        return Banana(curvature=section.get("curvature", 0.2), spread=section.get("spread", 2.0))
    if kind == "samples":
        require("path")
        return None
    raise ConfigError(
        f"[{where}] unknown distribution type {kind!r}; valid: gaussian, mixture, "
        "uniform, ring8, grid25, banana, samples"
    )
