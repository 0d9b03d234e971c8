"""Training-sample assembly for the three supervision modes, and S2T datasets.

Modes:
  s2ms  multi-channel input: the E-1 other single-channel density images plus
        the channel-sum density image; target = the held-out channel.
  n2n   one noisy realization in, an independently drawn realization out.
  n2c   noisy in, noiseless reconstruction out.

Datasets are split at phantom granularity so no phantom leaks across splits.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pcctbench.errors import ConfigurationError
from pcctbench.image import UNITS_DENSITY
from pcctbench.recon import SpectralImageSet
from pcctbench import s2t

MODES = ("n2c", "n2n", "s2ms")
SPLITS = ("train", "val", "test")

MANIFEST_FORMAT = "pcct-dataset/1"


@dataclass
class SampleRecord:
    record_id: str
    mode: str
    phantom_id: str
    target_bin: int
    inputs: np.ndarray  # (C, n, n) density images
    target: np.ndarray  # (n, n) density image
    input_channels: list
    seeds: list
    pitch_cm: float

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.inputs.ndim != 3 or self.target.ndim != 2:
            raise ValueError("inputs must be (C, n, n) and target (n, n)")
        if self.inputs.shape[1:] != self.target.shape:
            raise ValueError("input and target sizes differ")


def _require_density(imgset: SpectralImageSet) -> None:
    for img in imgset.images:
        if img.units != UNITS_DENSITY:
            raise ConfigurationError(
                f"dataset samples must be density images, got {img.units!r}")


def assemble_s2ms(imgset: SpectralImageSet, target_bin: int) -> SampleRecord:
    """Inputs = [single channels except target, ascending] + [channel-sum];
    target = the held-out single channel."""
    _require_density(imgset)
    e = imgset.num_bins
    if imgset.sum_image is None:
        raise ValueError("image set has no channel-sum image")
    if not 0 <= target_bin < e:
        raise ValueError(f"target_bin {target_bin} out of range for {e} bins")
    channels = [f"bin{k}" for k in range(e) if k != target_bin] + ["sum"]
    stack = np.stack(
        [imgset.bin_images[k].data for k in range(e) if k != target_bin]
        + [imgset.sum_image.data])
    return SampleRecord(
        record_id=f"{imgset.phantom_id}_b{target_bin}",
        mode="s2ms",
        phantom_id=imgset.phantom_id,
        target_bin=target_bin,
        inputs=stack,
        target=imgset.bin_images[target_bin].data.copy(),
        input_channels=channels,
        seeds=list(imgset.seed),
        pitch_cm=imgset.bin_images[0].pitch_cm,
    )


def assemble_n2n(imgset_a: SpectralImageSet, imgset_b: SpectralImageSet,
                 bin_index: int) -> SampleRecord:
    """Input = realization A of one channel, target = realization B."""
    _require_density(imgset_a)
    _require_density(imgset_b)
    if imgset_a.phantom_id != imgset_b.phantom_id:
        raise ValueError("n2n pairs must come from the same phantom")
    if tuple(imgset_a.seed) == tuple(imgset_b.seed):
        raise ValueError("n2n realizations must use different seeds")
    if not 0 <= bin_index < imgset_a.num_bins:
        raise ValueError(f"bin {bin_index} out of range")
    return SampleRecord(
        record_id=f"{imgset_a.phantom_id}_b{bin_index}",
        mode="n2n",
        phantom_id=imgset_a.phantom_id,
        target_bin=bin_index,
        inputs=imgset_a.bin_images[bin_index].data[None, :, :].copy(),
        target=imgset_b.bin_images[bin_index].data.copy(),
        input_channels=[f"bin{bin_index}"],
        seeds=list(imgset_a.seed) + list(imgset_b.seed),
        pitch_cm=imgset_a.bin_images[0].pitch_cm,
    )


def assemble_n2c(imgset_noisy: SpectralImageSet, imgset_clean: SpectralImageSet,
                 bin_index: int) -> SampleRecord:
    """Input = noisy channel, target = noiseless reconstruction of it."""
    _require_density(imgset_noisy)
    _require_density(imgset_clean)
    if imgset_noisy.phantom_id != imgset_clean.phantom_id:
        raise ValueError("n2c pairs must come from the same phantom")
    if not 0 <= bin_index < imgset_noisy.num_bins:
        raise ValueError(f"bin {bin_index} out of range")
    return SampleRecord(
        record_id=f"{imgset_noisy.phantom_id}_b{bin_index}",
        mode="n2c",
        phantom_id=imgset_noisy.phantom_id,
        target_bin=bin_index,
        inputs=imgset_noisy.bin_images[bin_index].data[None, :, :].copy(),
        target=imgset_clean.bin_images[bin_index].data.copy(),
        input_channels=[f"bin{bin_index}"],
        seeds=list(imgset_noisy.seed),
        pitch_cm=imgset_noisy.bin_images[0].pitch_cm,
    )


# ----------------------------------------------------------------------
# Phantom-level splitting
# ----------------------------------------------------------------------

def split_counts(n: int, ratios) -> tuple:
    """Largest-remainder apportionment of n phantoms over (train, val, test).

    Leftover seats go first to evaluation splits that would otherwise be
    empty (test before val on ties), then by largest remainder; this keeps
    the test split populated for small n (3 phantoms at 8:1:1 -> 2/0/1).
    """
    ratios = np.asarray(ratios, dtype=float)
    if ratios.shape != (3,) or ratios.min() < 0 or ratios.sum() <= 0:
        raise ConfigurationError(f"bad split ratios {ratios}")
    frac = ratios / ratios.sum()
    quota = n * frac
    base = np.floor(quota).astype(int)
    rem = quota - base
    left = int(n - base.sum())
    extra = [0, 0, 0]
    zero_eval = sorted((i for i in (2, 1) if base[i] == 0 and frac[i] > 0),
                       key=lambda i: (-rem[i], i != 2))
    for i in zero_eval:
        if left > 0:
            extra[i] += 1
            left -= 1
    rest = sorted((i for i in range(3) if extra[i] == 0), key=lambda i: (-rem[i], i))
    for i in rest:
        if left > 0:
            extra[i] += 1
            left -= 1
    counts = tuple(int(b + e) for b, e in zip(base, extra))
    if counts[1] == 0 and n > 0:
        warnings.warn(f"validation split is empty for {n} phantoms at ratios {list(ratios)}")
    return counts


def split_phantom_ids(phantom_ids, ratios, seed) -> dict:
    """Deterministic split map id -> train/val/test via a seeded shuffle."""
    ids = sorted(phantom_ids)
    n_train, n_val, n_test = split_counts(len(ids), ratios)
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 3)))
    perm = list(rng.permutation(len(ids)))
    out = {}
    for pos, idx in enumerate(perm):
        if pos < n_train:
            out[ids[idx]] = "train"
        elif pos < n_train + n_val:
            out[ids[idx]] = "val"
        else:
            out[ids[idx]] = "test"
    return out


# ----------------------------------------------------------------------
# Dataset build from a simulation run directory
# ----------------------------------------------------------------------

def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def _load_image_set(run_dir: Path, phantom_id: str, realization, model):
    """Read one reconstruction set (attenuation) and convert to density."""
    from pcctbench.image import ImageGrid
    from pcctbench.convert import image_set_to_density

    if realization is None:
        base = run_dir / "recon_clean"
        stem = phantom_id
        seed = ()
    else:
        base = run_dir / "recon"
        stem = f"{phantom_id}_r{realization}"
        seed = (int(realization),)
    bins = []
    for k in range(model.num_bins):
        path = base / f"{stem}_bin{k}.s2t"
        meta = s2t.read_sidecar(path)
        bins.append(ImageGrid(s2t.read_s2t(path), meta["pitch_cm"],
                              meta["units"], meta["channel"]))
    path = base / f"{stem}_sum.s2t"
    meta = s2t.read_sidecar(path)
    total = ImageGrid(s2t.read_s2t(path), meta["pitch_cm"], meta["units"], meta["channel"])
    imgset = SpectralImageSet(bins, total, phantom_id=phantom_id, seed=seed)
    return image_set_to_density(imgset, model)


def build_dataset(run_dir, mode: str, ratios=(8, 1, 1), out_dir=None) -> dict:
    """Assemble per-phantom samples for one mode from a reconstructed run.

    Produces out_dir/<mode>/manifest.json plus one S2T file per array under
    files/. Every phantom contributes one sample per target bin. Rebuilding
    from the same run is byte-identical.
    """
    from pcctbench.config import load_run_config

    run_dir = Path(run_dir)
    if mode not in MODES:
        raise ConfigurationError(f"unknown dataset mode {mode!r}")
    cfg, geom, model = load_run_config(run_dir / "config.json")
    seed = cfg["seed"]

    phantom_ids = sorted(p.stem for p in (run_dir / "phantoms").glob("p*.json"))
    if not phantom_ids:
        raise FileNotFoundError(f"no phantoms found under {run_dir}")
    realizations = int(cfg["dataset"].get("realizations", 2))
    if mode == "n2n" and realizations < 2:
        raise ConfigurationError("n2n needs at least two noise realizations")

    split_map = split_phantom_ids(phantom_ids, ratios, seed)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "datasets"
    mode_dir = out_dir / mode
    files_dir = mode_dir / "files"
    files_dir.mkdir(parents=True, exist_ok=True)

    records = []
    pitch_cm = 0.0
    for pid in phantom_ids:
        set_a = _load_image_set(run_dir, pid, 0, model)
        if mode == "s2ms":
            samples = [assemble_s2ms(set_a, k) for k in range(model.num_bins)]
        elif mode == "n2n":
            set_b = _load_image_set(run_dir, pid, 1, model)
            samples = [assemble_n2n(set_a, set_b, k) for k in range(model.num_bins)]
        else:
            set_clean = _load_image_set(run_dir, pid, None, model)
            samples = [assemble_n2c(set_a, set_clean, k) for k in range(model.num_bins)]
        for rec in samples:
            pitch_cm = rec.pitch_cm
            in_rel = f"files/{rec.record_id}_in.s2t"
            tg_rel = f"files/{rec.record_id}_tg.s2t"
            s2t.write_s2t(mode_dir / in_rel, rec.inputs.astype(np.float32))
            s2t.write_s2t(mode_dir / tg_rel, rec.target.astype(np.float32))
            records.append({
                "id": rec.record_id,
                "phantom_id": rec.phantom_id,
                "split": split_map[rec.phantom_id],
                "target_bin": rec.target_bin,
                "input_channels": rec.input_channels,
                "seeds": rec.seeds,
                "inputs": in_rel,
                "target": tg_rel,
            })

    manifest = {
        "format": MANIFEST_FORMAT,
        "mode": mode,
        "N": len(records),
        "num_bins": model.num_bins,
        "split_ratios": [float(r) for r in ratios],
        "split_counts": dict(zip(SPLITS, split_counts(len(phantom_ids), ratios))),
        "seed": seed,
        "units": UNITS_DENSITY,
        "pitch_cm": pitch_cm,
        "geometry_hash": config_hash(geom.to_dict()),
        "spectral_hash": config_hash(model.to_dict()),
        "spectral": model.to_dict(),
        "records": records,
    }
    (mode_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return manifest


def load_manifest(path) -> dict:
    """Read and validate a dataset manifest (N matches records and files exist)."""
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("format") != MANIFEST_FORMAT:
        raise ConfigurationError(f"unknown manifest format {manifest.get('format')!r}")
    records = manifest["records"]
    if manifest["N"] != len(records):
        raise ConfigurationError(
            f"manifest N={manifest['N']} but {len(records)} records listed")
    for rec in records:
        for key in ("inputs", "target"):
            f = path.parent / rec[key]
            if not f.exists():
                raise ConfigurationError(f"manifest references missing file {f}")
    return manifest
