"""Command-line entry point wiring the toolkit into workflows.

Report-producing commands (fit, metrics, loss-report) write delimited/JSON
output plus a matplotlib figure next to it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .cameras import OrthoCamera, PerspectiveCamera
from .config import load_settings
from .fusion import HeightMap, SplatDefaults, heightmap_to_gaussians
from .gaussians import GaussianSet
from .geodesy import GeoPose, camera_pose, geo_to_local
from .geometry import Pose
from .losses import LossWeights, SkyMask, total_loss
from .rendering import render
from .sat_tiles import ProviderConfig, SatMosaic, fetch_mosaic, resample_to_extent, rotate_to_heading
from .view_selection import perturb_geopose, select_splits


def _save_image(path, array) -> None:
    from PIL import Image
    arr = (np.clip(np.asarray(array), 0, 1) * 255).round().astype(np.uint8)
    Image.fromarray(arr).save(path)


def _load_image(path) -> np.ndarray:
    from PIL import Image
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0


def _figure_path(out_path, suffix=".png") -> Path:
    out = Path(out_path)
    return out.with_suffix(out.suffix + suffix) if out.suffix != ".png" else out


def _plot(fig, out_path) -> None:
    fig.savefig(out_path, dpi=120, bbox_inches="tight")


def _matplotlib():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


# ---------------------------------------------------------------------------
# subcommands


def cmd_fetch_sat(args) -> int:
    settings = load_settings(args.config, {
        "cache_dir": args.cache_dir, "provider_file": args.provider_file,
        "provider": args.provider, "ppm": args.ppm, "size": args.size,
    })
    if settings.provider_file is None:
        print("error: no provider config (use --provider-file or GEOSPLAT_PROVIDER_FILE)",
              file=sys.stderr)
        return 2
    provider = ProviderConfig.from_file(settings.provider_file, settings.provider)
    center = GeoPose(args.lat, args.lon, args.heading)
    mosaic = fetch_mosaic(center, settings.ppm, settings.size, provider,
                          cache_dir=settings.expanded_cache_dir())
    if args.heading:
        mosaic = rotate_to_heading(mosaic, args.heading)
    if args.extent:
        mosaic = resample_to_extent(mosaic, args.extent)
    mosaic.save(args.out)
    print(f"wrote {args.out} ({mosaic.size}x{mosaic.size}, "
          f"{mosaic.resolution:.3f} px/m, extent {mosaic.extent_m:.1f} m)")
    return 0


def _camera_from_json(spec: dict):
    if spec.get("type", "perspective") == "ortho":
        return OrthoCamera(resolution=spec["resolution_ppm"], width=spec["width"],
                           height=spec["height"],
                           center_offset=spec.get("center_offset"))
    pose = Pose.from_matrix(np.array(spec["pose"])) if "pose" in spec else \
        camera_pose(*spec.get("local", [0.0, 0.0, 0.0]))
    return PerspectiveCamera(fx=spec["fx"], fy=spec["fy"], cx=spec["cx"], cy=spec["cy"],
                             width=spec["width"], height=spec["height"], pose=pose)


def cmd_render(args) -> int:
    gaussians = GaussianSet.load_ply(args.splats)
    camera = _camera_from_json(json.loads(Path(args.camera).read_text()))
    out = render(gaussians, camera, background=tuple(args.background))
    _save_image(args.out, out.color)
    if args.depth_out:
        d = out.depth
        span = d.max() - d.min()
        _save_image(args.depth_out, np.stack([(d - d.min()) / span if span > 0 else d] * 3, -1))
    print(f"rendered {len(gaussians)} splats to {args.out} "
          f"(skipped {out.n_skipped} degenerate)")
    return 0


def cmd_fit(args) -> int:
    from .fitting import FitConfig, FitTarget, fit_scene

    scene = json.loads(Path(args.scene).read_text())
    base = Path(args.scene).parent
    targets = []
    for entry in scene["targets"]:
        image = _load_image(base / entry["image"])
        camera = _camera_from_json(entry["camera"])
        sky = depth = None
        if entry.get("sky_mask"):
            sky = SkyMask((_load_image(base / entry["sky_mask"])[:, :, 0] > 0.5).astype(float))
        if entry.get("depth"):
            depth = np.load(base / entry["depth"])
        targets.append(FitTarget(camera, image, sky, depth))

    init = GaussianSet.load_ply(args.init)
    config = FitConfig(steps=args.steps, seed=args.seed)
    result = fit_scene(targets, init, config)
    result.gaussians.save_ply(args.out)

    trace_path = Path(args.trace)
    with open(trace_path, "w") as fh:
        fh.write("step,total,rgb,depth,sky\n")
        for i, value in enumerate(result.trace):
            fh.write(f"{i},{value:.9g},{result.term_trace['rgb'][i]:.9g},"
                     f"{result.term_trace['depth'][i]:.9g},{result.term_trace['sky'][i]:.9g}\n")

    plt = _matplotlib()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(result.trace, label="total")
    for name, values in result.term_trace.items():
        if np.any(values):
            ax.semilogy(values, label=name, alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend()
    ax.set_title(f"fit: {len(init)} splats, {len(targets)} views")
    _plot(fig, _figure_path(trace_path))
    print(f"fit {args.steps} steps: loss {result.trace[0]:.4g} -> {result.trace[-1]:.4g}; "
          f"wrote {args.out}, {trace_path}, {_figure_path(trace_path)}")
    return 0


def cmd_select_views(args) -> int:
    from .colmap import parse_sparse

    scene = parse_sparse(args.scene)
    split = select_splits(scene, args.n_context, args.context_iou,
                          [float(x) for x in args.target_ious.split(",")],
                          greedy_against_first=not args.greedy_all_context)
    Path(args.out).write_text(split.to_json(indent=2))
    print(f"context {split.context}, targets "
          f"{[(i, round(v, 4)) for i, v in split.targets]} -> {args.out}")
    return 0


def cmd_metrics(args) -> int:
    from .metrics import psnr, ssim

    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    names = sorted(p.name for p in pred_dir.iterdir()
                   if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    if not names:
        print(f"error: no images in {pred_dir}", file=sys.stderr)
        return 2
    rows = []
    for name in names:
        gt_path = gt_dir / name
        if not gt_path.exists():
            print(f"warning: no ground truth for {name}, skipped", file=sys.stderr)
            continue
        a, b = _load_image(pred_dir / name), _load_image(gt_path)
        rows.append({"name": name, "psnr": psnr(a, b), "ssim": ssim(a, b)})
    finite = [r["psnr"] for r in rows if math.isfinite(r["psnr"])]
    report = {
        "per_image": [{**r, "psnr": "inf" if math.isinf(r["psnr"]) else r["psnr"]}
                      for r in rows],
        "mean": {"psnr": float(np.mean(finite)) if finite else "inf",
                 "ssim": float(np.mean([r["ssim"] for r in rows]))},
        "lpips": "n/a",
    }
    out = Path(args.out)
    out.write_text(json.dumps(report, indent=2))
    csv_path = out.with_suffix(".csv")
    with open(csv_path, "w") as fh:
        fh.write("name,psnr,ssim\n")
        for r in rows:
            fh.write(f"{r['name']},{r['psnr']:.6g},{r['ssim']:.6g}\n")

    plt = _matplotlib()
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    idx = np.arange(len(rows))
    axes[0].bar(idx, [min(r["psnr"], 99.0) for r in rows])
    axes[0].set_title("PSNR (dB)")
    axes[1].bar(idx, [r["ssim"] for r in rows], color="tab:orange")
    axes[1].set_title("SSIM")
    for ax in axes:
        ax.set_xticks(idx)
        ax.set_xticklabels([r["name"] for r in rows], rotation=45, ha="right", fontsize=7)
    _plot(fig, _figure_path(out))
    print(json.dumps(report["mean"]))
    return 0


def cmd_loss_report(args) -> int:
    from .losses import (consistency_loss, depth_loss, height_loss, mse,
                         rgb_loss, sky_losses)

    manifest = json.loads(Path(args.manifest).read_text())
    base = Path(args.manifest).parent
    weights = LossWeights(**manifest.get("weights", {}))

    def img(key):
        return _load_image(base / manifest[key])

    def arr(key):
        return np.load(base / manifest[key])

    terms = {}
    if "render" in manifest and "target" in manifest:
        terms["rgb_ground"] = rgb_loss(img("render"), img("target"),
                                       weights.perceptual_gamma)
    if "combined_render" in manifest and "target" in manifest:
        terms["rgb_combined"] = mse(img("combined_render"), img("target"))
    if "sat_render" in manifest and "target" in manifest:
        terms["rgb_sat"] = mse(img("sat_render"), img("target"))
    if "bev_render" in manifest and "satellite" in manifest:
        terms["bev"] = mse(img("bev_render"), img("satellite"))
    if "pred_depth" in manifest and "gt_depth" in manifest:
        conf = arr("depth_confidence") if "depth_confidence" in manifest else None
        terms["depth"] = depth_loss(arr("pred_depth"), arr("gt_depth"), conf,
                                    weights.conf_alpha)
    if "pred_depth" in manifest and "rendered_depth" in manifest:
        terms["consistency"] = consistency_loss(arr("pred_depth"), arr("rendered_depth"))
    if "pred_height" in manifest and "gt_height" in manifest:
        conf = arr("height_confidence") if "height_confidence" in manifest else None
        terms["height"] = height_loss(arr("pred_height"), arr("gt_height"), conf,
                                      weights.conf_alpha)
    if "sky_mask" in manifest and "rendered_depth" in manifest and "rendered_alpha" in manifest:
        mask = SkyMask(arr("sky_mask"))
        sd, sa = sky_losses(arr("rendered_depth"), arr("rendered_alpha"), mask,
                            weights.sky_tau)
        terms["sky_depth"], terms["sky_alpha"] = sd, sa

    total, breakdown = total_loss(terms, weights)
    report = {"total": total, "terms": breakdown}
    print(json.dumps(report, indent=2))
    if args.out:
        Path(args.out).write_text(json.dumps(report, indent=2))
        plt = _matplotlib()
        fig, ax = plt.subplots(figsize=(7, 4))
        names = [k for k, v in breakdown.items() if v["weighted"] != 0]
        ax.bar(names, [breakdown[k]["weighted"] for k in names])
        ax.set_ylabel("weighted loss")
        ax.tick_params(axis="x", rotation=45)
        _plot(fig, _figure_path(Path(args.out)))
    return 0


def cmd_splat_from_height(args) -> int:
    heightmap = HeightMap.load(args.height)
    if args.mosaic:
        mosaic = SatMosaic.load(args.mosaic)
        colors = mosaic.pixels
    else:
        colors = np.full(heightmap.heights.shape + (3,), 0.5)
    defaults = SplatDefaults(scale_factor=args.scale_factor, opacity=args.opacity)
    gaussians = heightmap_to_gaussians(heightmap, colors, defaults)
    gaussians.save_ply(args.out)
    print(f"wrote {len(gaussians)} splats to {args.out}")
    return 0


def cmd_serve_align(args) -> int:
    from .server import serve_align

    serve_align(args.scene, args.mosaic, port=args.port, images_dir=args.images_dir,
                alignment_path=args.alignment, ui_dir=args.ui_dir, host=args.host)
    return 0


def cmd_perturb_gps(args) -> int:
    pose = GeoPose(args.lat, args.lon, args.heading)
    out = []
    for i in range(args.count):
        noisy = perturb_geopose(pose, args.sigma_trans, args.sigma_rot, args.seed + i)
        east, north, dh = geo_to_local(pose, noisy)
        out.append({"lat": noisy.latitude, "lon": noisy.longitude,
                    "heading": noisy.heading,
                    "offset_east_m": east, "offset_north_m": north,
                    "delta_heading_deg": ((dh + 180) % 360) - 180})
    print(json.dumps(out if args.count > 1 else out[0], indent=2))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="geosplat",
        description="ground + satellite Gaussian splatting toolkit")
    parser.add_argument("--config", help="TOML settings file (flags > env > file)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch-sat", help="fetch a satellite mosaic around a GPS pose")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--heading", type=float, default=0.0)
    p.add_argument("--ppm", type=float, default=None, help="pixels per meter (default 2)")
    p.add_argument("--size", type=int, default=None, help="mosaic size in px (default 512)")
    p.add_argument("--extent", type=float, default=None,
                   help="resample so the mosaic covers this many meters")
    p.add_argument("--provider", default=None)
    p.add_argument("--provider-file", default=None)
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch_sat)

    p = sub.add_parser("render", help="render a splat PLY from a camera JSON")
    p.add_argument("--splats", required=True)
    p.add_argument("--camera", required=True)
    p.add_argument("--background", type=float, nargs=3, default=[0.0, 0.0, 0.0])
    p.add_argument("--out", required=True)
    p.add_argument("--depth-out")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("fit", help="per-scene gradient fit of a splat set")
    p.add_argument("--scene", required=True, help="scene JSON listing target views")
    p.add_argument("--init", required=True, help="initial splats (PLY)")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", required=True, help="per-step loss CSV (figure rides along)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select-views", help="context/target split from a COLMAP model")
    p.add_argument("--scene", required=True, help="COLMAP sparse model directory")
    p.add_argument("--n-context", type=int, default=2)
    p.add_argument("--context-iou", type=float, default=0.15)
    p.add_argument("--target-ious", default="0.02,0.05,0.07,0.1")
    p.add_argument("--greedy-all-context", action="store_true",
                   help="measure context IoU against all prior context frames")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_views)

    p = sub.add_parser("metrics", help="PSNR/SSIM over paired image directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True, help="report JSON (CSV + figure ride along)")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("loss-report", help="itemized weighted loss from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss_report)

    p = sub.add_parser("splat-from-height", help="height map + mosaic -> splat PLY")
    p.add_argument("--height", required=True, help=".npy or float TIFF with JSON sidecar")
    p.add_argument("--mosaic", help="mosaic PNG with JSON sidecar (colors)")
    p.add_argument("--scale-factor", type=float, default=0.7)
    p.add_argument("--opacity", type=float, default=0.9)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_splat_from_height)

    p = sub.add_parser("serve-align", help="run the geoalignment HTTP service")
    p.add_argument("--scene", required=True, help="COLMAP sparse model directory")
    p.add_argument("--mosaic", required=True)
    p.add_argument("--images-dir")
    p.add_argument("--alignment", help="persisted alignment JSON path")
    p.add_argument("--ui-dir", help="static UI bundle directory")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8040)
    p.set_defaults(func=cmd_serve_align)

    p = sub.add_parser("perturb-gps", help="inject Gaussian noise into a GPS pose")
    p.add_argument("--lat", type=float, required=True)
    p.add_argument("--lon", type=float, required=True)
    p.add_argument("--heading", type=float, default=0.0)
    p.add_argument("--sigma-trans", type=float, default=0.0, help="meters")
    p.add_argument("--sigma-rot", type=float, default=0.0, help="degrees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.set_defaults(func=cmd_perturb_gps)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
