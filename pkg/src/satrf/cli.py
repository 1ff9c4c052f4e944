"""Command-line entry point: scene generation, training, rendering, BRF
plots, DSM extraction, and evaluation.

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or
configuration error.  Every command is deterministic for a fixed config and
seed at a fixed thread count.
"""

from __future__ import annotations

import argparse
import os
import re
import sys

import numpy as np

from . import brfplot
from . import config as config_mod
from . import field as field_mod
from . import imgio
from . import metrics
from . import rpv
from . import scene as scene_mod
from . import training

USAGE_ERROR = 2
RUNTIME_ERROR = 1


class UsageError(ValueError):
    pass


def _config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "config keys", "every key=value config entry, overridable here (flags win)")
    for key, default in config_mod.defaults_table():
        group.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}",
                           metavar="V", help=f"default {default}")


def _collect_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for name, value in vars(args).items():
        if name.startswith("cfg_") and value is not None:
            out[name[4:]] = value
    return out


def _run_config(args: argparse.Namespace) -> config_mod.RunConfig:
    overrides = _collect_overrides(args)
    if getattr(args, "config", None):
        return config_mod.load_run_config(args.config, overrides)
    return config_mod.make_run_config({}, overrides)


def cmd_gen_scene(args) -> int:
    ds = scene_mod.gen_scene(seed=args.seed, dims=args.dims,
                             roughness=args.roughness, n_views=args.views)
    scene_mod.save_dataset(ds, args.out)
    print(f"wrote dataset ({len(ds.views)} train / {len(ds.test_views)} test "
          f"views) to {args.out}")
    return 0


def _resume_step(path: str) -> int:
    m = re.search(r"checkpoint_(\d+)\.rfld$", os.path.basename(path))
    return int(m.group(1)) if m else 0


def cmd_train(args) -> int:
    rc = _run_config(args)
    if not rc.dataset:
        raise UsageError("train: a dataset is required (--dataset)")
    ds = scene_mod.load_dataset(rc.dataset)
    os.makedirs(rc.out, exist_ok=True)
    start_step = 0
    if rc.resume:
        cfg, params = field_mod.load_field(rc.resume)
        rf = field_mod.RadianceField(cfg, params)
        start_step = _resume_step(rc.resume)
    else:
        rf = field_mod.RadianceField(config_mod.field_config(rc))
    rows = training.train(ds, rf, config_mod.train_config(rc), workdir=rc.out,
                          start_step=start_step)
    field_mod.save_field(os.path.join(rc.out, "checkpoint.rfld"), rf.cfg, rf.params)
    training.save_log(os.path.join(rc.out, "trainlog.csv"), rows)
    config_mod.save_run_config(os.path.join(rc.out, "run_config.txt"), rc)
    last = rows[-1] if rows else None
    if last is not None:
        print(f"finished step {last.step} colour_loss {last.colour_loss:.6f} "
              f"depth_loss {last.depth_loss:.6f} ({last.seconds:.1f}s)")
    return 0


def _load_field_arg(path: str) -> field_mod.RadianceField:
    cfg, params = field_mod.load_field(path)
    return field_mod.RadianceField(cfg, params)


def cmd_render(args) -> int:
    ds = scene_mod.load_dataset(args.dataset)
    rf = _load_field_arg(args.checkpoint)
    match = [v for v in ds.all_views() if v.name == args.view]
    if not match:
        names = ", ".join(v.name for v in ds.all_views())
        raise UsageError(f"unknown view {args.view!r}; available: {names}")
    view = match[0]
    zmin = float(ds.meta.get("height_min", ds.gt_dsm.min()))
    zmax = float(ds.meta.get("height_max", ds.gt_dsm.max()))
    image, depth, acc = metrics.render_view(rf, view.spec, ds.transform,
                                            mode=args.mode, zmin=zmin, zmax=zmax)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"render_{args.view}_{args.mode}")
    imgio.write_pfm(stem + ".pfm", image)
    imgio.write_ppm(stem + ".ppm", image)
    imgio.write_pfm(stem + "_depth.pfm", depth)
    print(f"wrote {stem}.pfm (+preview, +depth)")
    return 0


def _parse_floats(text: str, n: int, what: str) -> np.ndarray:
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"{what}: expected {n} comma-separated values, got {text!r}")
    try:
        return np.array([float(p) for p in parts])
    except ValueError as exc:
        raise UsageError(f"{what}: cannot parse {text!r}") from exc


def cmd_brf_plot(args) -> int:
    sun_za = _parse_floats(args.sun, 2, "--sun")
    if args.checkpoint:
        if args.at is None:
            raise UsageError("--checkpoint needs --at x,y,z")
        rf = _load_field_arg(args.checkpoint)
        point = _parse_floats(args.at, 3, "--at")
        sample = rf.query(point)
        params = sample.params
    else:
        if args.rho0 is None:
            raise UsageError("give either --checkpoint with --at, or explicit "
                             "--rho0/--k/--theta/--rhoc")
        rho0 = _parse_floats(args.rho0, 3, "--rho0")
        params = rpv.RpvParams(tuple(rho0), k=args.k, theta=args.theta,
                               rhoc=args.rhoc)
    sun = rpv.direction_from_angles(np.radians(sun_za[0]), np.radians(sun_za[1]))
    sweep = rpv.brf_sweep(params, rpv.FLAT_NORMAL, sun,
                          zenith_steps=args.zenith_steps,
                          azimuth_steps=args.azimuth_steps)
    os.makedirs(args.out, exist_ok=True)
    brfplot.write_csv(os.path.join(args.out, "brf.csv"), sweep)
    brfplot.write_svg(os.path.join(args.out, "brf.svg"), sweep, args.channel)
    print(f"wrote brf.csv and brf.svg to {args.out}")
    return 0


def cmd_dsm(args) -> int:
    ds = scene_mod.load_dataset(args.dataset)
    rf = _load_field_arg(args.checkpoint)
    resolution = ds.gt_dsm.shape[0]
    zmin = float(ds.meta.get("height_min", ds.gt_dsm.min()))
    zmax = float(ds.meta.get("height_max", ds.gt_dsm.max()))
    dsm = metrics.extract_dsm(rf, ds.transform, resolution, zmin=zmin, zmax=zmax)
    os.makedirs(args.out, exist_ok=True)
    imgio.write_pfm(os.path.join(args.out, "dsm.pfm"), dsm.grid)
    imgio.write_pfm(os.path.join(args.out, "dsm_valid.pfm"),
                    dsm.valid.astype(float))
    gt = metrics.Dsm(grid=ds.gt_dsm, valid=np.ones_like(ds.gt_dsm, dtype=bool))
    err = metrics.mae(dsm, gt)
    print(f"wrote dsm.pfm; MAE vs ground truth {err:.6f} scene units")
    return 0


def cmd_eval(args) -> int:
    ds = scene_mod.load_dataset(args.dataset)
    os.makedirs(args.out, exist_ok=True)
    if args.self_check:
        rows = []
        for view in ds.test_views:
            img = np.clip(view.image, 0.0, 1.0)
            rows.append({"name": view.name, "psnr_db": metrics.psnr(img, img),
                         "ssim": metrics.ssim(img, img)})
        gt = metrics.Dsm(grid=ds.gt_dsm, valid=np.ones_like(ds.gt_dsm, dtype=bool))
        rows.append({"name": "dsm", "mae": metrics.mae(gt, gt),
                     "valid_fraction": 1.0})
    else:
        if not args.checkpoint:
            raise UsageError("eval: --checkpoint required (or --self-check)")
        rf = _load_field_arg(args.checkpoint)
        rows = metrics.evaluate(rf, ds, mode=args.mode,
                                dsm_resolution=ds.gt_dsm.shape[0])
    metrics.write_report(os.path.join(args.out, "report.csv"), rows)
    for r in rows:
        bits = [f"{key}={r[key]:.4f}" for key in ("psnr_db", "ssim", "mae",
                                                  "valid_fraction")
                if r.get(key) is not None]
        print(f"{r['name']}: " + " ".join(bits))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satrf",
        description="Depth-supervised radiance fields with an anisotropic "
                    "reflectance model, at desk scale.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scene", help="write a synthetic dataset directory",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--roughness", type=float, default=0.55)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("train", help="train a field on a dataset")
    p.add_argument("--config", help="key=value config file")
    _config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render one dataset view from a checkpoint",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--view", required=True)
    p.add_argument("--mode", choices=("sur", "vol"), default="sur")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("brf-plot", help="polar reflectance sweep to CSV + SVG",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint", help="query a trained field")
    p.add_argument("--at", help="x,y,z normalized point (with --checkpoint)")
    p.add_argument("--rho0", help="r,g,b explicit parameters")
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--rhoc", type=float, default=1.0)
    p.add_argument("--sun", default="52.1,142.5", help="zenith,azimuth degrees")
    p.add_argument("--zenith-steps", type=int, default=45)
    p.add_argument("--azimuth-steps", type=int, default=90)
    p.add_argument("--channel", choices=brfplot.CHANNELS, default="lum")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_brf_plot)

    p = sub.add_parser("dsm", help="extract a DSM from a checkpoint",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_dsm)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a dataset",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mode", choices=("sur", "vol"), default="sur")
    p.add_argument("--self-check", action="store_true",
                   help="score ground truth against itself (sanity run)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, config_mod.ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (training.TrainingAborted, scene_mod.DatasetError,
            field_mod.CheckpointError, imgio.ImageFormatError,
            metrics.MetricError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main(argv=sys.argv[1:]))
