"""Command-line pipeline driver.

Commands: simulate, reconstruct, make-dataset, evaluate, plot. All randomness
flows from a single --seed; reruns with the same seed are byte-identical and
independent of --threads. Exit codes: 0 ok, 2 configuration, 3 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from pcctbench import config as config_mod
from pcctbench import dataset as dataset_mod
from pcctbench import metrics as metrics_mod
from pcctbench import s2t
from pcctbench import spectral as spectral_mod
from pcctbench.errors import ConfigurationError, S2TFormatError
from pcctbench.image import ImageGrid
from pcctbench.phantom import random_phantom, save_phantom
from pcctbench.projector import phantom_chords, project_phantom_analytic, Sinogram
from pcctbench.recon import fbp, reconstruct_all_channels

log = logging.getLogger("pcctbench")

# Display-window widths (cm^-1) used as SSIM dynamic range per channel.
DEFAULT_DYNAMIC_RANGE = {"bin0": 0.4, "bin1": 0.4, "bin2": 0.35, "bin3": 0.35, "sum": 0.4}
FALLBACK_DYNAMIC_RANGE = 0.4


def _thread_count(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PCCT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"bad PCCT_THREADS value {env!r}") from exc
    return os.cpu_count() or 1


def _load_cfg(args):
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "phantoms", None) is not None:
        overrides["phantom"] = {"count": args.phantoms}
    return config_mod.load_config(args.config, overrides)


# ----------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    geom = config_mod.build_geometry(cfg)
    model = config_mod.build_spectral(cfg)
    seed = int(cfg["seed"])
    run = Path(args.out)
    (run / "phantoms").mkdir(parents=True, exist_ok=True)
    (run / "clean_sino").mkdir(exist_ok=True)
    (run / "counts").mkdir(exist_ok=True)
    config_mod.save_run_config(cfg, run / "config.json")

    pc = cfg["phantom"]
    n_phantoms = int(pc["count"])
    realizations = int(cfg["dataset"]["realizations"])

    def simulate_one(p_idx: int) -> str:
        pid = f"p{p_idx:04d}"
        rng = np.random.default_rng(np.random.SeedSequence((seed, 1, p_idx)))
        ph = random_phantom(
            rng, field_of_view=float(pc["field_of_view"]),
            insert_count_range=tuple(pc["insert_count_range"]),
            insert_density_range=tuple(pc["insert_density_range"]))
        save_phantom(ph, run / "phantoms" / f"{pid}.json")

        chords = phantom_chords(ph, geom)
        sinos = []
        for k in range(model.num_bins):
            sino = project_phantom_analytic(ph, geom, k, model, chords=chords)
            sinos.append(sino)
            path = run / "clean_sino" / f"{pid}_bin{k}.s2t"
            s2t.write_s2t(path, sino.data.astype(np.float32))
            s2t.write_sidecar(path, {
                "kind": "sinogram", "channel": f"bin{k}", "phantom_id": pid,
                "units": "lineintegral", "noiseless": True,
                "geometry": geom.to_dict()})
        for r in range(realizations):
            for k in range(model.num_bins):
                lam = spectral_mod.expected_counts(sinos[k], model, k)
                frame = spectral_mod.draw_counts(
                    lam, (seed, 2, p_idx, r, k), channel=k, geometry=geom)
                path = run / "counts" / f"{pid}_r{r}_bin{k}.s2t"
                s2t.write_s2t(path, frame.counts.astype(np.int32))
                s2t.write_sidecar(path, {
                    "kind": "counts", "channel": f"bin{k}", "phantom_id": pid,
                    "realization": r, "seed": list(frame.seed),
                    "n0_total": model.n0_total})
        return pid

    with ThreadPoolExecutor(max_workers=_thread_count(args)) as pool:
        for pid in pool.map(simulate_one, range(n_phantoms)):
            log.info("simulated %s", pid)
    log.info("simulate: %d phantoms -> %s", n_phantoms, run)
    return 0


# ----------------------------------------------------------------------
# reconstruct
# ----------------------------------------------------------------------

def _read_sino(path, geom, channel) -> Sinogram:
    return Sinogram(s2t.read_s2t(path).astype(np.float64), geom, channel=channel)


def cmd_reconstruct(args) -> int:
    run = Path(args.run)
    cfg, geom, model = config_mod.load_run_config(run / "config.json")
    rc = cfg["recon"]
    grid_size, fov, filter_name = int(rc["grid_size"]), float(rc["fov"]), rc["filter"]
    realizations = int(cfg["dataset"]["realizations"])

    phantom_ids = sorted(p.stem for p in (run / "phantoms").glob("p*.json"))
    if not phantom_ids:
        raise FileNotFoundError(f"no phantoms under {run}")
    (run / "recon").mkdir(exist_ok=True)
    (run / "recon_clean").mkdir(exist_ok=True)

    def write_image(path, img: ImageGrid, pid: str, extra=None):
        s2t.write_s2t(path, img.data.astype(np.float32))
        meta = {"kind": "image", "channel": img.channel, "phantom_id": pid,
                "units": img.units, "pitch_cm": img.pitch_cm,
                "n0_total": model.n0_total}
        meta.update(extra or {})
        s2t.write_sidecar(path, meta)

    def recon_noisy(task) -> str:
        pid, r = task
        frames = []
        for k in range(model.num_bins):
            path = run / "counts" / f"{pid}_r{r}_bin{k}.s2t"
            meta = s2t.read_sidecar(path)
            frames.append(spectral_mod.CountsFrame(
                s2t.read_s2t(path), tuple(meta.get("seed", ())), k, geom))
        imgset = reconstruct_all_channels(
            frames, model, geom, grid_size, fov, filter_name,
            phantom_id=pid, seed=(r,))
        for k, img in enumerate(imgset.bin_images):
            write_image(run / "recon" / f"{pid}_r{r}_bin{k}.s2t", img, pid,
                        {"realization": r})
        write_image(run / "recon" / f"{pid}_r{r}_sum.s2t", imgset.sum_image, pid,
                    {"realization": r})
        return f"{pid} r{r}"

    def recon_clean(pid: str) -> str:
        sinos = [
            _read_sino(run / "clean_sino" / f"{pid}_bin{k}.s2t", geom, f"bin{k}")
            for k in range(model.num_bins)
        ]
        for k, sino in enumerate(sinos):
            img = fbp(sino, geom, grid_size, fov, filter_name)
            write_image(run / "recon_clean" / f"{pid}_bin{k}.s2t", img, pid,
                        {"noiseless": True})
        sum_sino = spectral_mod.noiseless_sum_projection(sinos, model)
        img = fbp(sum_sino, geom, grid_size, fov, filter_name)
        write_image(run / "recon_clean" / f"{pid}_sum.s2t", img, pid,
                    {"noiseless": True})
        return f"{pid} clean"

    tasks = [(pid, r) for pid in phantom_ids for r in range(realizations)]
    with ThreadPoolExecutor(max_workers=_thread_count(args)) as pool:
        for done in pool.map(recon_noisy, tasks):
            log.info("reconstructed %s", done)
        for done in pool.map(recon_clean, phantom_ids):
            log.info("reconstructed %s", done)
    log.info("reconstruct: %d phantoms x (%d noisy + clean) -> %s",
             len(phantom_ids), realizations, run)
    return 0


# ----------------------------------------------------------------------
# make-dataset
# ----------------------------------------------------------------------

def cmd_make_dataset(args) -> int:
    run = Path(args.run)
    modes = dataset_mod.MODES if args.mode == "all" else (args.mode,)
    ratios = tuple(float(r) for r in args.ratios.split(":"))
    if len(ratios) != 3:
        raise ConfigurationError(f"ratios must be train:val:test, got {args.ratios!r}")
    for mode in modes:
        if mode == "n2n" and not list((run / "recon").glob("*_r1_bin0.s2t")):
            raise ConfigurationError(
                "n2n needs two noise realizations; rerun simulate with "
                "dataset.realizations >= 2")
        manifest = dataset_mod.build_dataset(run, mode, ratios, args.out)
        log.info("dataset %s: N=%d (train/val/test = %s)", mode, manifest["N"],
                 manifest["split_counts"])
    return 0


# ----------------------------------------------------------------------
# evaluate
# ----------------------------------------------------------------------

def _index_images(root: Path) -> dict:
    """Map (phantom_id, channel) -> path for every S2T image under root."""
    out = {}
    for path in sorted(root.rglob("*.s2t")):
        meta = s2t.read_sidecar(path)
        pid = meta.get("phantom_id", path.stem)
        channel = meta.get("channel", "")
        out[(pid, channel)] = path
    return out


def _method_dirs(pred_root: Path) -> dict:
    subdirs = [d for d in sorted(pred_root.iterdir()) if d.is_dir()]
    if subdirs and not list(pred_root.glob("*.s2t")):
        return {d.name: d for d in subdirs}
    return {pred_root.name: pred_root}


def cmd_evaluate(args) -> int:
    pred_root = Path(args.pred)
    ref_root = Path(args.ref)
    if not pred_root.exists() or not ref_root.exists():
        raise FileNotFoundError(f"missing directory: {pred_root if not pred_root.exists() else ref_root}")
    roi_spec = None
    if args.roi:
        parts = [int(v) for v in args.roi.split(",")]
        if len(parts) != 4:
            raise ConfigurationError("--roi must be x0,y0,w,h")
        roi_spec = tuple(parts)

    ref_index = _index_images(ref_root)
    if not ref_index:
        raise FileNotFoundError(f"no reference images under {ref_root}")

    report = {"channels": {}, "roi": roi_spec, "dynamic_range": {}}
    for method, mdir in _method_dirs(pred_root).items():
        pred_index = _index_images(mdir)
        if not pred_index:
            raise FileNotFoundError(f"no prediction images under {mdir}")
        per_channel = {}
        for (pid, channel), ppath in sorted(pred_index.items()):
            key = (pid, channel)
            if key not in ref_index:
                log.warning("no reference for %s/%s; skipped", pid, channel)
                continue
            pred = s2t.read_s2t(ppath).astype(np.float64)
            ref = s2t.read_s2t(ref_index[key]).astype(np.float64)
            if roi_spec is not None:
                pred = metrics_mod.roi(pred, *roi_spec)
                ref = metrics_mod.roi(ref, *roi_spec)
            dr = args.dynamic_range or DEFAULT_DYNAMIC_RANGE.get(channel, FALLBACK_DYNAMIC_RANGE)
            report["dynamic_range"][channel] = dr
            stats = per_channel.setdefault(channel, {"ssim": [], "rmse": []})
            stats["ssim"].append(metrics_mod.ssim(pred, ref, dynamic_range=dr))
            stats["rmse"].append(metrics_mod.rmse(pred, ref))
        for channel, stats in per_channel.items():
            entry = report["channels"].setdefault(channel, {})
            entry[method] = {
                "ssim": float(np.mean(stats["ssim"])),
                "rmse": float(np.mean(stats["rmse"])),
                "n": len(stats["ssim"]),
            }

    text = json.dumps(report, sort_keys=True, indent=1)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
        log.info("report -> %s", args.out)
    print(text)
    return 0


# ----------------------------------------------------------------------
# plot
# ----------------------------------------------------------------------

def cmd_plot(args) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run = Path(args.run)
    cfg, geom, model = config_mod.load_run_config(run / "config.json")
    out = Path(args.out or (run / "plots"))
    out.mkdir(parents=True, exist_ok=True)
    phantom_ids = sorted(p.stem for p in (run / "phantoms").glob("p*.json"))
    if not phantom_ids:
        raise FileNotFoundError(f"no phantoms under {run}")

    for pid in phantom_ids[: args.limit]:
        sino_path = run / "clean_sino" / f"{pid}_bin0.s2t"
        if sino_path.exists():
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.imshow(s2t.read_s2t(sino_path), aspect="auto", cmap="gray")
            ax.set_xlabel("detector")
            ax.set_ylabel("view")
            ax.set_title(f"{pid} clean sinogram, bin0")
            fig.tight_layout()
            fig.savefig(out / f"{pid}_sino_bin0.png", dpi=120)
            plt.close(fig)

        channels = [f"bin{k}" for k in range(model.num_bins)] + ["sum"]
        rows = []
        for base, tag in ((run / "recon", f"{pid}_r0"), (run / "recon_clean", pid)):
            row = []
            for ch in channels:
                path = base / f"{tag}_{ch}.s2t"
                row.append(s2t.read_s2t(path) if path.exists() else None)
            rows.append(row)
        if any(img is not None for row in rows for img in row):
            fig, axes = plt.subplots(2, len(channels), figsize=(3 * len(channels), 6))
            for i, (row, label) in enumerate(zip(rows, ("noisy r0", "clean"))):
                for j, (ch, img) in enumerate(zip(channels, row)):
                    ax = axes[i, j]
                    if img is not None:
                        window = DEFAULT_DYNAMIC_RANGE.get(ch, FALLBACK_DYNAMIC_RANGE)
                        ax.imshow(img, cmap="gray", vmin=0, vmax=window, origin="lower")
                    ax.set_title(f"{label} {ch}", fontsize=9)
                    ax.axis("off")
            fig.tight_layout()
            fig.savefig(out / f"{pid}_recon.png", dpi=120)
            plt.close(fig)
        log.info("plotted %s", pid)
    return 0


# ----------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcctbench",
        description="Spectral photon-counting CT simulation and denoising workbench")
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate phantoms, sinograms and counts")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--out", "-o", required=True, help="run directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--phantoms", type=int, default=None, help="override phantom count")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="FBP all channels of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("make-dataset", help="assemble training datasets")
    p.add_argument("--run", required=True)
    p.add_argument("--mode", choices=dataset_mod.MODES + ("all",), default="all")
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--out", default=None, help="dataset output dir (default run/datasets)")
    p.set_defaults(func=cmd_make_dataset)

    p = sub.add_parser("evaluate", help="SSIM/RMSE of predictions vs references")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--roi", default=None, help="x0,y0,w,h")
    p.add_argument("--dynamic-range", type=float, default=None)
    p.add_argument("--out", default=None, help="write JSON report here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="PNG previews of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--limit", type=int, default=4)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except S2TFormatError as exc:
        log.error("bad S2T file: %s", exc)
        return 3
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
