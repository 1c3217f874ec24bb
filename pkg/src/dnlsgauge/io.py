"""Bulk arrays as raw little-endian float64 with a JSON sidecar; reports as JSON and CSV."""

from __future__ import annotations

import csv
import json
from importlib import metadata
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def provenance(config: dict, seed) -> dict:
    return {"config": config, "seed": seed, "code_version": code_version(), "format_version": FORMAT_VERSION}


def _stem(path) -> Path:
    p = Path(path)
    return p.with_suffix("") if p.suffix in (".bin", ".json") else p


def save_array(path, values: np.ndarray, meta: dict, log_weights=None) -> Path:
    """Write ``values`` (complex, sample-major) to <stem>.bin and metadata to <stem>.json.

    Complex entries are stored as interleaved (re, im) float64 pairs.  Optional
    log-weights go to <stem>.logw.bin.
    """
    stem = _stem(path)
    stem.parent.mkdir(parents=True, exist_ok=True)
    values = np.ascontiguousarray(values, dtype=np.complex128)
    values.astype("<c16").tofile(stem.with_suffix(".bin"))
    side = dict(meta)
    side.update(shape=list(values.shape), dtype="<f8", layout="sample-major, interleaved re/im",
                format_version=FORMAT_VERSION, code_version=side.get("code_version", code_version()))
    if log_weights is not None:
        np.ascontiguousarray(log_weights, dtype="<f8").tofile(stem.with_suffix(".logw.bin"))
        side["log_weights"] = stem.with_suffix(".logw.bin").name
    stem.with_suffix(".json").write_text(json.dumps(side, indent=2, sort_keys=True))
    return stem


def load_array(path):
    """Inverse of save_array: (values, meta, log_weights or None)."""
    stem = _stem(path)
    meta = json.loads(stem.with_suffix(".json").read_text())
    if meta.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported format_version {meta.get('format_version')!r}")
    values = np.fromfile(stem.with_suffix(".bin"), dtype="<c16").reshape(meta["shape"])
    lw = None
    if "log_weights" in meta:
        lw = np.fromfile(stem.parent / meta["log_weights"], dtype="<f8")
    return values, meta, lw


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None if np.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def write_json(path, report: dict) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(_plain(report), indent=2, sort_keys=True))
    return p


def write_csv(path, rows: list, fields: list | None = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    fields = fields or list(rows[0]) if rows else (fields or [])
    with p.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(_plain(r))
    return p
