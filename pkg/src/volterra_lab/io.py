"""Ensemble export and reproducible run archives.

The archive is a small zip holding the exact configuration text plus named
statistics of the generated ensemble (content hashes of the process arrays
and hex-encoded scalar summaries).  Replaying an archive re-runs the
simulation from the stored configuration and requires every statistic to
match bit for bit.
"""
from __future__ import annotations

import hashlib
import json
import platform
import zipfile
from typing import Optional

import numpy as np

from .engine import Ensemble
from .errors import ArchiveCorrupt, ReplayMismatch

ARCHIVE_SCHEMA = "volterra-lab/archive.v1"
_MANIFEST = "manifest.json"
_CONFIG = "config.toml"


def export_csv(ensemble: Ensemble, path) -> None:
    """One row per grid point per path: path_id, t, X, A, M, Z, dB.

    dB on a row is the Brownian increment over [t, t + dt); the final grid
    row of each path leaves it empty.
    """
    import csv

    cols = {
        "X": ensemble.X,
        "A": ensemble.A,
        "M": ensemble.M,
        "Z": ensemble.Z,
    }
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["path_id", "t", "X", "A", "M", "Z", "dB"])
        n_steps = ensemble.n_steps
        for p in range(ensemble.n_paths):
            for i, t in enumerate(ensemble.grid):
                row = [p, repr(float(t))]
                for name, arr in cols.items():
                    row.append("" if arr is None else repr(float(arr[p, i])))
                if ensemble.dB is not None and i < n_steps:
                    row.append(repr(float(ensemble.dB[p, i])))
                else:
                    row.append("")
                writer.writerow(row)


def ensemble_statistics(ensemble: Ensemble) -> dict:
    """Named statistics for exact replay verification, in a fixed order.

    Array contents are folded into SHA-256 digests; scalar summaries are
    stored as C double hex strings so comparison is bitwise, not textual.
    """
    stats: dict[str, str] = {}
    for name in ("X", "A", "M", "Z", "dB"):
        arr = getattr(ensemble, name)
        if arr is not None:
            stats[f"sha256_{name}"] = hashlib.sha256(np.ascontiguousarray(arr).tobytes()).hexdigest()
    xT = ensemble.X[:, -1]
    stats["mean_X_T"] = float(np.mean(xT)).hex()
    stats["var_X_T"] = float(np.var(xT)).hex()
    stats["n_paths"] = str(ensemble.n_paths)
    stats["n_steps"] = str(ensemble.n_steps)
    stats["seed"] = str(ensemble.seed)
    return stats


def write_archive(path, config_text: str, statistics: dict,
                  extra_meta: Optional[dict] = None) -> None:
    manifest = {
        "schema": ARCHIVE_SCHEMA,
        "statistics": statistics,
        "versions": {
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
    }
    if extra_meta:
        manifest["meta"] = extra_meta
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(_CONFIG, config_text)
        zf.writestr(_MANIFEST, json.dumps(manifest, indent=2, sort_keys=True))


def read_archive(path) -> tuple[str, dict]:
    """Return (config_text, manifest); raises ArchiveCorrupt on any defect."""
    try:
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
            if _CONFIG not in names or _MANIFEST not in names:
                raise ArchiveCorrupt(f"{path}: missing {_CONFIG} or {_MANIFEST}")
            config_text = zf.read(_CONFIG).decode("utf-8")
            manifest = json.loads(zf.read(_MANIFEST).decode("utf-8"))
    except (zipfile.BadZipFile, OSError, ValueError, KeyError) as exc:
        raise ArchiveCorrupt(f"cannot read archive {path}: {exc}") from exc
    if manifest.get("schema") != ARCHIVE_SCHEMA:
        raise ArchiveCorrupt(f"{path}: unknown archive schema {manifest.get('schema')!r}")
    if "statistics" not in manifest:
        raise ArchiveCorrupt(f"{path}: manifest has no statistics")
    return config_text, manifest


def compare_statistics(stored: dict, fresh: dict) -> None:
    """Raise ReplayMismatch naming the first statistic that differs."""
    for key, value in stored.items():
        if key not in fresh:
            raise ReplayMismatch(f"statistic {key!r} missing from replay")
        if fresh[key] != value:
            raise ReplayMismatch(
                f"statistic {key!r} differs: archive {value} vs replay {fresh[key]}"
            )
