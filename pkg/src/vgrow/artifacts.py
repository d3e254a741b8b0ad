"""Run artifacts: manifest, telemetry and point CSVs, checkpoints.

All tabular artifacts are CSV with mandatory headers, '.' decimal
separator, UTF-8. Floats are written with repr(), the shortest
round-tripping form, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

TELEMETRY_FIELDS = (
    "outer",
    "inner",
    "mean_sq_velocity",
    "divergence_estimate",
    "classifier_loss",
    "clamp_count",
)


def _cell(value):
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    return str(value)


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, command, config, input_files=()):
    """Create the run directory and write manifest.json before anything else."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    manifest = {
        "command": command,
        "seed": config.get("run", {}).get("seed"),
        "config": config,
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "input_files": {str(p): file_sha256(p) for p in input_files},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class CsvAppender:
    """Header-first CSV file appended to incrementally and flushed per batch,
    so partial artifacts survive an aborted run."""

    def __init__(self, path, fieldnames):
        self.path = Path(path)
        self.fieldnames = tuple(fieldnames)
        with open(self.path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerow(self.fieldnames)

    def extend(self, rows):
        with open(self.path, "a", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            for row in rows:
                writer.writerow([_cell(row[k]) for k in self.fieldnames])


class SnapshotWriter:
    """Cumulative particle snapshots: loop,index,x0,...,x{d-1}."""

    def __init__(self, path, dim):
        self.appender = CsvAppender(path, ("loop", "index") + tuple(f"x{i}" for i in range(dim)))
        self.dim = dim

    def write(self, loop, positions):
        rows = []
        for i, row in enumerate(np.asarray(positions)):
            record = {"loop": loop, "index": i}
            record.update({f"x{j}": row[j] for j in range(self.dim)})
            rows.append(record)
        self.appender.extend(rows)


def write_points_csv(path, points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i}" for i in range(points.shape[1])])
        for row in points:
            writer.writerow([_cell(v) for v in row])
    return Path(path)


def read_points_csv(path):
    """Read a CSV of numeric rows; an optional non-numeric first row is a header.

    Raises ValueError naming the 1-based line number of any ragged row.
    """
    path = Path(path)
    rows = []
    width = None
    with open(path, newline="", encoding="utf-8") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                values = [float(v) for v in row]
            except ValueError:
                if line_no == 1:
                    continue  # header
                raise ValueError(f"{path}: row {line_no} contains a non-numeric value") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}: row {line_no} has {len(values)} values, expected {width}"
                )
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)
