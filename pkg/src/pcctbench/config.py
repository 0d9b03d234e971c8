"""Top-level run configuration: one JSON artifact drives every command."""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from pcctbench.errors import ConfigurationError
from pcctbench.phantom import kappa_at_energies
from pcctbench.projector import FanBeamGeometry
from pcctbench.spectral import SpectralModel, DEFAULT_BINS, DEFAULT_WEIGHTS

DEFAULT_CONFIG = {
    "seed": 1234,
    "geometry": {
        "source_to_origin": 142.0,
        "source_to_detector": 180.0,
        "num_detectors": 512,
        "detector_pitch": 0.1,
        "num_views": 512,
        "angular_range": 2.0 * math.pi,
    },
    "spectral": {
        "bins": [list(b) for b in DEFAULT_BINS],
        "weights": list(DEFAULT_WEIGHTS),
        "n0_total": 1.0e5,
        # filled from the bundled water table at bin centres when absent
        "kappa_ref": None,
        "kappa_sum": None,
    },
    "phantom": {
        "count": 4,
        "field_of_view": 51.2,
        "insert_count_range": [3, 10],
        "insert_density_range": [0.2, 1.8],
    },
    "recon": {
        "grid_size": 512,
        "fov": 51.2,
        "filter": "ramlak",
    },
    "dataset": {
        "ratios": [8, 1, 1],
        "realizations": 2,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(raw: dict | None = None) -> dict:
    """Defaults + user config; derives missing conversion coefficients."""
    cfg = _deep_merge(DEFAULT_CONFIG, raw or {})
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigurationError(f"unknown config sections: {sorted(unknown)}")
    sp = cfg["spectral"]
    if sp.get("kappa_ref") is None:
        centers = [(lo + hi) / 2.0 for lo, hi in sp["bins"]]
        sp["kappa_ref"] = [float(k) for k in kappa_at_energies("water", centers)]
    if sp.get("kappa_sum") is None:
        sp["kappa_sum"] = float(sum(w * k for w, k in zip(sp["weights"], sp["kappa_ref"])))
    return cfg


def load_config(path=None, overrides: dict | None = None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigurationError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config file {path} is not valid JSON: {exc}") from exc
    if overrides:
        raw = _deep_merge(raw, overrides)
    return resolve_config(raw)


def build_geometry(cfg: dict) -> FanBeamGeometry:
    return FanBeamGeometry(**cfg["geometry"])


def build_spectral(cfg: dict) -> SpectralModel:
    sp = cfg["spectral"]
    return SpectralModel(
        bins=tuple(tuple(b) for b in sp["bins"]),
        weights=tuple(sp["weights"]),
        n0_total=float(sp["n0_total"]),
        kappa_ref=tuple(sp["kappa_ref"]),
        kappa_sum=float(sp["kappa_sum"]),
    )


def save_run_config(cfg: dict, path) -> None:
    Path(path).write_text(json.dumps(cfg, sort_keys=True, indent=1) + "\n")


def load_run_config(path):
    """Read the resolved config written into a run directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"run config not found: {path}")
    cfg = resolve_config(json.loads(path.read_text()))
    return cfg, build_geometry(cfg), build_spectral(cfg)
