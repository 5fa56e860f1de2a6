"""Command-line interface.

Subcommands: ``decompose`` (separate one capture), ``render`` (synthetic
scenes), ``suite`` (full synthetic evaluation) and ``metrics`` (compare two
images).  Exit codes: 0 ok, 2 usage, 3 data error, 4 solver did not converge
(artifacts are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import image_io, metrics
from .decomposer import MODES, SolverConfig
from .pipeline import DataError, PipelineConfig, run_pipeline, run_suite
from .synth import load_scene, render, scene_suite

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NOCONV = 4


def _add_pipeline_args(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--mode", choices=MODES, default=None)
    p.add_argument("--block-size", type=int, default=None)
    p.add_argument("--n4", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--lam", type=float, default=None,
                   help="sparsity weight (default: auto formula)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)


def _build_config(args) -> PipelineConfig:
    if args.config:
        with open(args.config) as f:
            cfg = PipelineConfig.from_dict(json.load(f))
    else:
        cfg = PipelineConfig()
    cfg.output_dir = args.out
    for attr in ("mode", "block_size", "n4", "threshold", "seed"):
        v = getattr(args, attr)
        if v is not None:
            setattr(cfg, attr, v)
    for attr, dst in (("lam", "lam"), ("tol", "tol"), ("max_iters", "max_iters")):
        v = getattr(args, attr)
        if v is not None:
            setattr(cfg.solver, dst, v)
    cfg.solver.mode = cfg.mode
    return cfg


def cmd_decompose(args) -> int:
    cfg = _build_config(args)
    if args.mosaic:
        cfg.mosaic = args.mosaic
        cfg.inputs = None
    elif args.images:
        if len(args.images) != 4:
            print("decompose: need exactly four images (0/45/90/135)",
                  file=sys.stderr)
            return EXIT_USAGE
        cfg.inputs = list(args.images)
    elif not (cfg.inputs or cfg.mosaic):
        print("decompose: no input images given", file=sys.stderr)
        return EXIT_USAGE
    if args.diffuse_gt:
        cfg.diffuse_gt = args.diffuse_gt
    res = run_pipeline(cfg)
    if res.report is not None:
        print(res.report.to_json())
    if not res.converged:
        print(f"warning: solver stopped after {res.iterations} iterations "
              "without reaching tolerance", file=sys.stderr)
        return EXIT_NOCONV
    return EXIT_OK


def cmd_render(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scenes = [render(load_scene(args.scene))] if args.scene \
        else scene_suite(args.size)
    for scene in scenes:
        d = out / scene.spec.name
        d.mkdir(parents=True, exist_ok=True)
        for i, angle in enumerate((0, 45, 90, 135)):
            image_io.write_pfm(d / f"angle{angle:03d}.pfm",
                               scene.stack.images[i])
            image_io.write_png(d / f"angle{angle:03d}.png",
                               scene.stack.images[i])
        image_io.write_pfm(d / "diffuse_gt.pfm", scene.diffuse_gt)
        image_io.write_png(d / "diffuse_gt.png", scene.diffuse_gt)
        np.save(d / "saturation.npy", scene.saturation)
    print(f"rendered {len(scenes)} scene(s) into {out}")
    return EXIT_OK


def cmd_suite(args) -> int:
    cfg = _build_config(args)
    modes = [args.only_mode] if args.only_mode else MODES
    rows = run_suite(args.out, size=args.size, modes=modes, cfg=cfg)
    failures = [r for r in rows if "error" in r]
    for row in rows:
        if "error" in row:
            print(f"{row['scene']}/{row['mode']}: FAILED {row['error']}")
        else:
            print(f"{row['scene']}/{row['mode']}: ssim={row['ssim']:.4f} "
                  f"psnr={row['psnr']:.2f}")
    return EXIT_DATA if failures else EXIT_OK


def cmd_metrics(args) -> int:
    try:
        a = image_io.read_image(args.image)
        b = image_io.read_image(args.reference)
        report = metrics.compare(a, b)
    except (image_io.ImageIOError, ValueError) as exc:
        print(f"metrics: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(report.to_json())
    if args.out:
        with open(args.out, "w") as f:
            f.write(report.to_json())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polarsep",
        description="Diffuse/specular separation for polarization images")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="separate one polarization capture")
    p.add_argument("images", nargs="*",
                   help="four angle images in 0/45/90/135 order")
    p.add_argument("--mosaic", help="single 2x2-superpixel mosaic image")
    p.add_argument("--diffuse-gt", help="ground-truth diffuse image for metrics")
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("render", help="render synthetic polarization scenes")
    p.add_argument("--scene", help="JSON scene description (default: suite)")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--out", default="rendered")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("suite", help="synthetic evaluation over all modes")
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--only-mode", choices=MODES)
    _add_pipeline_args(p)
    p.set_defaults(func=cmd_suite)

    p = sub.add_parser("metrics", help="PSNR/SSIM between two images")
    p.add_argument("image")
    p.add_argument("reference")
    p.add_argument("--out", help="also write the JSON report here")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
