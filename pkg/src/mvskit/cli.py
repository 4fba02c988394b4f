"""Command-line pipeline driver.

Subcommands mirror the pipeline stages: ``synth`` renders a dataset
directory, ``depth`` runs the plane sweep per view, ``ensemble``
produces the sampled mean / uncertainty / certainty maps, ``loss``
evaluates the consistency objectives, ``selftrain`` compares
augmented-input depth against the pseudo label, ``fuse`` filters and
merges depth maps into a point cloud, ``eval`` scores a reconstruction
against a reference cloud, and ``sparsify`` writes the confidence
ranking curve.

Flags win over ``--config`` JSON entries, which win over defaults.
Every run prints a JSON report carrying the resolved configuration,
with numbers at 9 significant digits.  Exit codes: 0 success, 1
invalid usage or configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import fusion_eval, losses, matcher, scene_io, synth, uncertainty
from .geometry import DepthMap, camera_from_file, depth_to_flow


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _round_sig(x, digits=9):
    if isinstance(x, float):
        if not math.isfinite(x):
            return x
        return float(f"{x:.{digits}g}")
    if isinstance(x, dict):
        return {k: _round_sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round_sig(v, digits) for v in x]
    return x


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(_round_sig(report), indent=2)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    cfg = json.loads(Path(path).read_text())
    if not isinstance(cfg, dict):
        raise _UsageError("--config must hold a JSON object")
    return cfg


_INPUT_FLAGS = {
    "scene": "--scene",
    "depth_dir": "--depth-dir",
    "log_variance_dir": "--log-variance-dir",
    "ensemble": "--ensemble",
    "recon": "--recon",
    "reference": "--reference",
    "uncertainty": "--uncertainty",
    "depth": "--depth",
    "gt_depth": "--gt-depth",
    "config": "--config",
}


def _check_inputs(args) -> None:
    for dest, flag in _INPUT_FLAGS.items():
        value = getattr(args, dest, None)
        if value is not None and not Path(value).exists():
            raise _UsageError(f"{flag}: path {value!r} does not exist")


def _dataset(path: str) -> scene_io.SceneDataset:
    return scene_io.load_scene_dir(path)


def _cameras(ds: scene_io.SceneDataset):
    return [camera_from_file(cf) for cf in ds.cameras]


def _sweep_sources(ds, cams, ref):
    pairs = ds.pairs.neighbors[ref]
    if not pairs:
        raise ValueError(f"view {ref} has no source views in pair.txt")
    return [(ds.images[src], cams[src]) for src, _ in pairs]


def _estimate_view(ds, cams, ref, args):
    volume = matcher.build_cost_volume(
        ds.images[ref], _sweep_sources(ds, cams, ref), cams[ref], args.hypotheses
    )
    return matcher.soft_argmin_depth(volume, args.temperature), volume


def cmd_synth(args) -> dict:
    kwargs = dict(width=args.size, height=args.size, views=args.views, seed=args.seed)
    spec = synth.scene_preset(args.preset, **kwargs)
    renders = synth.render(spec)
    ds = synth.make_dataset(spec, renders, with_flows=not args.no_flows)
    scene_io.write_scene_dir(args.out, ds)
    return {
        "preset": args.preset,
        "views": len(renders),
        "size": [spec.width, spec.height],
        "gt_points": len(ds.gt_cloud) if ds.gt_cloud else 0,
        "flows": sorted(f"{a}->{b}" for a, b in ds.flows),
    }


def cmd_depth(args) -> dict:
    ds = _dataset(args.scene)
    cams = _cameras(ds)
    out = Path(args.out)
    depths, sigmas = [], []
    for ref in range(ds.num_views):
        (dm, s2), _ = _estimate_view(ds, cams, ref, args)
        depths.append(np.where(dm.valid, dm.values, 0.0))
        sigmas.append(s2)
    scene_io.write_view_maps(out / "depth", depths)
    scene_io.write_view_maps(out / "sigma2", sigmas)
    report = {"views": ds.num_views, "out": str(out)}
    if ds.depths is not None:
        errs = []
        for ref in range(ds.num_views):
            gt = ds.depths[ref]
            sel = (gt > 0) & (depths[ref] > 0)
            errs.append(float(np.sqrt(np.mean((depths[ref][sel] - gt[sel]) ** 2))))
        report["rmse_vs_gt"] = errs
    return report


def cmd_ensemble(args) -> dict:
    ds = _dataset(args.scene)
    cams = _cameras(ds)
    out = Path(args.out)
    means, umaps, cmasks = [], [], []
    spec = matcher.SamplerSpec(args.samples, args.drop_rate, args.seed)
    for ref in range(ds.num_views):
        stack = matcher.mc_sample(
            ds.images[ref],
            _sweep_sources(ds, cams, ref),
            cams[ref],
            args.hypotheses,
            spec,
            args.temperature,
        )
        mean_d, u = uncertainty.ensemble_stats(stack)
        certain = uncertainty.certainty_mask(u, args.certainty_threshold) & stack.valid
        means.append(np.where(mean_d.valid, mean_d.values, 0.0))
        umaps.append(u)
        cmasks.append(certain)
    scene_io.write_view_maps(out / "mean", means)
    scene_io.write_view_maps(out / "uncertainty", umaps)
    (out / "certain").mkdir(parents=True, exist_ok=True)
    for i, certain in enumerate(cmasks):
        (out / "certain" / f"{scene_io.view_name(i)}.pgm").write_bytes(
            scene_io.write_image(certain.astype(np.float64))
        )
    return {
        "views": ds.num_views,
        "samples": spec.samples,
        "drop_rate": spec.drop_rate,
        "seed": spec.seed,
        "certainty_threshold": args.certainty_threshold,
        "certain_fraction": [float(c.mean()) for c in cmasks],
        "out": str(out),
    }


def cmd_loss(args) -> dict:
    ds = _dataset(args.scene)
    cams = _cameras(ds)
    ref = args.view
    if not 0 <= ref < ds.num_views:
        raise ValueError(f"--view {ref} out of range for {ds.num_views} views")
    if args.depth_dir:
        depth_vals = scene_io.load_view_maps(args.depth_dir, ds.num_views)[ref]
    elif ds.depths is not None:
        depth_vals = ds.depths[ref]
    else:
        raise ValueError("no depth source: pass --depth-dir or a dataset with depths/")
    depth = DepthMap(np.where(depth_vals > 0, depth_vals, 1.0), depth_vals > 0)
    sources = _sweep_sources(ds, cams, ref)
    photo = losses.photometric_loss(ds.images[ref], sources, depth, cams[ref])
    virtual, measured, masks, jacs = [], [], [], []
    for src, _ in ds.pairs.neighbors[ref]:
        fhat, mask, jac = depth_to_flow(depth, cams[ref], cams[src])
        if args.flows == "block":
            fwd = matcher.block_match_flow(ds.images[ref], ds.images[src])
            bwd = matcher.block_match_flow(ds.images[src], ds.images[ref])
        else:
            try:
                fwd = ds.flows[(ref, src)]
                bwd = ds.flows[(src, ref)]
            except KeyError:
                raise ValueError(f"dataset has no flow pair {ref}->{src}") from None
        usable = losses.occlusion_mask(fwd, bwd, args.occlusion_eps) & mask
        virtual.append(fhat)
        measured.append(fwd)
        masks.append(usable)
        jacs.append(jac)
    flow = losses.flow_depth_loss(virtual, measured, masks, jacs)
    combined = losses.combined_loss(photo, flow, args.flow_weight)
    report = {
        "view": ref,
        "flow_weight": args.flow_weight,
        "occlusion_eps": args.occlusion_eps,
        "losses": [photo.to_json_dict(), flow.to_json_dict(), combined.to_json_dict()],
    }
    if args.log_variance_dir:
        logv = np.log(
            np.maximum(scene_io.load_view_maps(args.log_variance_dir, ds.num_views)[ref], 1e-12)
        )
        weighted = losses.aleatoric_photometric_loss(
            ds.images[ref], sources, depth, cams[ref], logv
        )
        report["losses"].append(weighted.to_json_dict())
    if args.maps_out:
        maps = Path(args.maps_out)
        maps.mkdir(parents=True, exist_ok=True)
        for rep in (photo, flow):
            (maps / f"{rep.name}_residual.pfm").write_bytes(scene_io.write_pfm(rep.residual))
            if rep.grad_depth is not None:
                (maps / f"{rep.name}_grad.pfm").write_bytes(scene_io.write_pfm(rep.grad_depth))
    return report


def cmd_selftrain(args) -> dict:
    ds = _dataset(args.scene)
    cams = _cameras(ds)
    ens = Path(args.ensemble)
    means = scene_io.load_view_maps(ens / "mean", ds.num_views)
    certs = [
        scene_io.read_image((ens / "certain" / f"{scene_io.view_name(i)}.pgm").read_bytes()) > 0.5
        for i in range(ds.num_views)
    ]
    rng_seeds = np.random.SeedSequence(args.seed).spawn(ds.num_views)
    aug_specs = [
        losses.sample_augmentation(int(s.generate_state(1)[0])) for s in rng_seeds
    ]
    aug_images = [
        losses.augment([img], spec)[0] for img, spec in zip(ds.images, aug_specs)
    ]
    aug_ds = scene_io.SceneDataset(aug_images, ds.cameras, ds.pairs)
    filtered, unfiltered = [], []
    for ref in range(ds.num_views):
        (d_aug, _), _ = _estimate_view(aug_ds, cams, ref, args)
        pseudo = DepthMap(np.where(means[ref] > 0, means[ref], 1.0), means[ref] > 0)
        support = pseudo.valid & d_aug.valid
        rep_f = losses.self_training_loss(d_aug, pseudo, certs[ref] & support)
        rep_u = losses.self_training_loss(d_aug, pseudo, support)
        filtered.append(rep_f.value)
        unfiltered.append(rep_u.value)
    return {
        "seed": args.seed,
        "hypotheses": args.hypotheses,
        "self_training_filtered": filtered,
        "self_training_unfiltered": unfiltered,
        "filtering_helps": [f < u for f, u in zip(filtered, unfiltered)],
    }


def cmd_fuse(args) -> dict:
    ds = _dataset(args.scene)
    cams = _cameras(ds)
    depth_vals = scene_io.load_view_maps(args.depth_dir, ds.num_views)
    depths = [DepthMap(np.where(d > 0, d, 1.0), d > 0) for d in depth_vals]
    cfg = fusion_eval.FusionConfig(
        geo_depth_tol=args.geo_depth_tol,
        geo_pix_tol=args.geo_pix_tol,
        min_consistent_views=args.min_consistent_views,
    )
    masks = fusion_eval.filter_depths(depths, cams, ds.pairs, cfg)
    merge_cell = args.merge_cell
    if merge_cell is None and ds.cameras:
        merge_cell = ds.cameras[0].depth_interval / 2.0
    cloud = fusion_eval.fuse(depths, masks, ds.images, cams, merge_cell)
    Path(args.out).write_bytes(scene_io.write_ply(cloud, binary=not args.ascii))
    return {
        "kept_fraction": [float(m.mean()) for m in masks],
        "points": len(cloud),
        "merge_cell": merge_cell,
        "geo_depth_tol": cfg.geo_depth_tol,
        "geo_pix_tol": cfg.geo_pix_tol,
        "min_consistent_views": cfg.min_consistent_views,
        "out": args.out,
    }


def cmd_eval(args) -> dict:
    recon = scene_io.read_ply(Path(args.recon).read_bytes())
    reference = scene_io.read_ply(Path(args.reference).read_bytes())
    acc, comp, overall = fusion_eval.dtu_metrics(recon, reference, args.max_dist)
    precision, recall, f = fusion_eval.f_score(recon, reference, args.threshold)
    return {
        "accuracy": acc,
        "completeness": comp,
        "overall": overall,
        "precision": precision,
        "recall": recall,
        "f": f,
        "threshold": args.threshold,
        "max_dist": args.max_dist,
        "recon_points": len(recon),
        "reference_points": len(reference),
    }


def cmd_sparsify(args) -> dict:
    u = scene_io.read_pfm(Path(args.uncertainty).read_bytes())[0]
    est = scene_io.read_pfm(Path(args.depth).read_bytes())[0]
    gt = scene_io.read_pfm(Path(args.gt_depth).read_bytes())[0]
    mask = (est > 0) & (gt > 0)
    curve = uncertainty.sparsification_curve(-u, np.abs(est - gt), mask, args.bins)
    rows = ["density,error"] + [f"{d:.9g},{e:.9g}" for d, e in curve.rows()]
    Path(args.out).write_text("\n".join(rows) + "\n")
    if args.oracle_out:
        rows = ["density,error"] + [
            f"{d:.9g},{e:.9g}" for d, e in zip(curve.density, curve.oracle_error)
        ]
        Path(args.oracle_out).write_text("\n".join(rows) + "\n")
    return {
        "bins": args.bins,
        "pixels": int(mask.sum()),
        "area_above_oracle": curve.area,
        "full_density_error": float(curve.error[-1]),
        "out": args.out,
    }


def build_parser() -> _Parser:
    parser = _Parser(prog="mvskit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--config", help="JSON file with per-subcommand defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene dataset")
    p.add_argument("--preset", default="acceptance",
                   choices=["acceptance", "acceptance-strip", "two-plane"])
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--views", type=int, default=3)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--no-flows", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def sweep_flags(p):
        p.add_argument("--hypotheses", type=int, default=matcher.DEFAULT_HYPOTHESIS_COUNT)
        p.add_argument("--temperature", type=float, default=matcher.DEFAULT_TEMPERATURE)

    p = sub.add_parser("depth", help="plane-sweep depth for every view")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    sweep_flags(p)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("ensemble", help="sampled depth ensemble and uncertainty maps")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    sweep_flags(p)
    p.add_argument("--samples", type=int, default=uncertainty.DEFAULT_SAMPLE_COUNT)
    p.add_argument("--drop-rate", type=float, default=matcher.DEFAULT_DROP_RATE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--certainty-threshold", type=float,
                   default=uncertainty.DEFAULT_CERTAINTY_THRESHOLD)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("loss", help="consistency losses for one reference view")
    p.add_argument("--scene", required=True)
    p.add_argument("--view", type=int, default=0)
    p.add_argument("--depth-dir", help="estimated depth maps (default: dataset depths/)")
    p.add_argument("--log-variance-dir",
                   help="sigma2 maps; adds the variance-weighted loss")
    p.add_argument("--flows", choices=["dataset", "block"], default="dataset")
    p.add_argument("--flow-weight", type=float, default=losses.DEFAULT_FLOW_WEIGHT)
    p.add_argument("--occlusion-eps", type=float, default=losses.DEFAULT_OCCLUSION_EPS)
    p.add_argument("--maps-out", help="directory for residual/gradient PFM maps")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("selftrain", help="augmented-input consistency vs pseudo labels")
    p.add_argument("--scene", required=True)
    p.add_argument("--ensemble", required=True, help="output directory of 'ensemble'")
    p.add_argument("--seed", type=int, default=0)
    sweep_flags(p)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_selftrain)

    p = sub.add_parser("fuse", help="filter depth maps and fuse a point cloud")
    p.add_argument("--scene", required=True)
    p.add_argument("--depth-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--geo-depth-tol", type=float, default=0.01)
    p.add_argument("--geo-pix-tol", type=float, default=1.0)
    p.add_argument("--min-consistent-views", type=int, default=3)
    p.add_argument("--merge-cell", type=float, default=None,
                   help="voxel size for deduplication (default: depth_interval / 2)")
    p.add_argument("--ascii", action="store_true")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="point-cloud benchmark metrics")
    p.add_argument("--recon", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--max-dist", type=float, default=fusion_eval.DEFAULT_MAX_DIST)
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sparsify", help="confidence sparsification curve as CSV")
    p.add_argument("--uncertainty", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--gt-depth", required=True)
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.add_argument("--oracle-out")
    p.set_defaults(func=cmd_sparsify)
    return parser


_REPORT_ONLY = {"loss", "eval", "selftrain"}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            if not Path(args.config).is_file():
                raise _UsageError(f"--config: path {args.config!r} does not exist")
            cfg = _load_config(args.config)
            section = cfg.get(args.command, {})
            sub = parser._subparsers._group_actions[0].choices[args.command]
            known = {a.dest for a in sub._actions}
            for key in section:
                if key not in known:
                    raise _UsageError(f"unknown config key {args.command}.{key}")
            # flags win: reparse with config values installed as defaults
            sub.set_defaults(**section)
            args = parser.parse_args(argv)
        _check_inputs(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        report = args.func(args)
    except (ValueError, FileNotFoundError, scene_io.FormatError, MemoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = {"command": args.command, **report}
    _emit(report, args.out if args.command in _REPORT_ONLY else None)
    return 0


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
