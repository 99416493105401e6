"""Command-line entry points tying the pieces together.

Exit codes: 1 configuration problem, 2 missing/unreadable files,
3 checkpoint or manifest version mismatch, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config as cfgmod
from . import network, probes, runstore, world
from .data import load_dataset, load_detections, save_dataset, save_detections
from .heatmaps import dense_map, sliding_window_map, write_hmap, write_pgm
from .network import (BASE, FULLY_CONV, CheckpointError,
                      CheckpointVersionError, load_checkpoint, save_checkpoint)
from .pipeline import (MISSING, OUT_OF_CONTEXT, evaluate_recall_at_k,
                       find_regions, match_regions, recall_curve)
from .runstore import RunFormatError
from .sampling import epoch_stream
from .training import train_network

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_VERSION = 3
EXIT_RUNTIME = 4


def _load_run_config(path):
    return cfgmod.load_config(path)


def cmd_generate_data(args):
    cfg = _load_run_config(args.config)
    for split, count, start in (("train", cfg.train_count, 0),
                                ("test", cfg.test_count, cfg.train_count)):
        out = os.path.join(args.out, split)
        images = world.generate_dataset(cfg.world, count, start_index=start)
        os.makedirs(out, exist_ok=True)
        save_dataset(images, out)
        dets = world.oracle_detect_dataset(images, cfg.detector)
        save_detections(dets, out)
        print(f"{split}: {count} scenes -> {out}")
    return 0


def cmd_train(args):
    cfg = _load_run_config(args.config)
    dataset = load_dataset(args.data)
    variant = FULLY_CONV if args.variant == "sfc" else BASE
    ckpt_dir = os.path.join(args.out, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)

    def on_epoch(net, entry, is_best):
        save_checkpoint(net, os.path.join(ckpt_dir, "last"))
        if is_best:
            save_checkpoint(net, os.path.join(ckpt_dir, "best"))

    def log(entry):
        msg = f"epoch {entry['epoch']}: train {entry['train_loss']:.4f}"
        if "val_loss" in entry:
            msg += f" val {entry['val_loss']:.4f}"
        print(msg)

    result = train_network(
        variant, cfg.network, dataset, epochs=cfg.epochs,
        samples_per_epoch=cfg.samples_per_epoch, lam=cfg.lam,
        val_fraction=cfg.val_fraction, patience=cfg.patience, seed=cfg.seed,
        mining=cfg.mining or args.mine, mine_fraction=cfg.mine_fraction,
        log=log, on_epoch=on_epoch)
    with open(os.path.join(args.out, "history.json"), "w") as fh:
        json.dump(result.history, fh, indent=1)
    print(f"best epoch {result.best_epoch}; checkpoints in {ckpt_dir}")
    return 0


def _compute_heatmaps(cfg, net, dataset, out_dir=None):
    maps = {}
    files = {}
    for img in dataset:
        if net.variant == FULLY_CONV:
            hm = dense_map(net, img.pixels, scales=cfg.scales, image_id=img.id)
        else:
            hm = sliding_window_map(net, img.pixels, stride=cfg.stride,
                                    mask_widths=cfg.effective_mask_widths(),
                                    image_id=img.id)
        maps[img.id] = hm
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            path = os.path.join(out_dir, f"{img.id}.hmap")
            write_hmap(hm, path)
            write_pgm(hm.scores, os.path.join(out_dir, f"{img.id}.pgm"))
            files[img.id] = os.path.relpath(path, out_dir)
    return maps, files


def cmd_heatmap(args):
    cfg = _load_run_config(args.config)
    net = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    _compute_heatmaps(cfg, net, dataset, out_dir=args.out)
    print(f"{len(dataset)} heat maps -> {args.out}")
    return 0


def _find(args, mode):
    cfg = _load_run_config(args.config)
    net = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    dets = load_detections(args.data)
    hm_dir = os.path.join(args.run, "heatmaps")
    maps, files = _compute_heatmaps(cfg, net, dataset, out_dir=hm_dir)
    size = (dataset[0].height, dataset[0].width)
    regions = find_regions(maps, dets, size, mode=mode,
                           threshold=cfg.threshold, d=cfg.region_side,
                           max_count=cfg.max_count,
                           det_score_threshold=cfg.det_score_threshold)
    if mode == MISSING:
        gt = {img.id: list(img.missing_boxes) for img in dataset}
    else:
        gt = {img.id: list(img.offsite_boxes) for img in dataset}
    flags = match_regions(regions, {k: list(v) for k, v in gt.items()})
    runstore.write_run(args.run, config_text=cfgmod.dump_config(cfg), mode=mode,
                       regions=regions, gt_by_image=gt, auto_flags=flags,
                       data_dir=args.data, heatmap_files=files)
    runstore.export_crops(args.run, regions, {img.id: img for img in dataset})
    print(f"{len(regions)} regions -> {args.run}")
    return 0


def cmd_find_missing(args):
    return _find(args, MISSING)


def cmd_find_out_of_context(args):
    return _find(args, OUT_OF_CONTEXT)


def cmd_evaluate(args):
    manifest = runstore.load_run(args.run)
    flags = manifest["auto_flags"]
    total = manifest["gt_total"]
    k_max = args.k_max or len(flags)
    curve = recall_curve(flags, total, range(1, k_max + 1))
    if curve is None:
        print("no ground truth: recall not applicable")
        return 0
    lines = [f"{k}\t{recall:.6f}" for k, recall in curve]
    text = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sensitivity(args):
    cfg = _load_run_config(args.config)
    net = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    pairs = epoch_stream(dataset, 2 * cfg.sensitivity_samples,
                         cfg.network.input_side,
                         np.random.default_rng([cfg.seed, 6]))
    raws = [p.raw for p in pairs if p.label == 1][:cfg.sensitivity_samples]
    smap = probes.sensitivity_map(net, raws, epsilon=cfg.sensitivity_epsilon,
                                  stride=cfg.sensitivity_stride)
    os.makedirs(args.out, exist_ok=True)
    peak = smap.grid.max() or 1.0
    from .heatmaps import HeatMap
    hm = HeatMap(scores=(smap.grid / peak).astype(np.float32), stride=1.0,
                 patch_side=1.0, scale=1.0)
    write_hmap(hm, os.path.join(args.out, "sensitivity.hmap"))
    write_pgm(hm.scores, os.path.join(args.out, "sensitivity.pgm"))
    report = [f"checkpoint={args.checkpoint} "
              f"mean_l_d={probes.mean_distance_loss(net, pairs):.6f}"]
    if args.compare_checkpoint:
        other = load_checkpoint(args.compare_checkpoint)
        report.append(f"checkpoint={args.compare_checkpoint} "
                      f"mean_l_d={probes.mean_distance_loss(other, pairs):.6f}")
    with open(os.path.join(args.out, "report.txt"), "w") as fh:
        fh.write("\n".join(report) + "\n")
    print("\n".join(report))
    return 0


def cmd_serve_gallery(args):
    import uvicorn

    from .server import create_app
    app = create_app(args.runs_root, frontend_dir=args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="contextscan",
        description="Train a context model and retrieve missing-object regions")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="render a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a context network")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=("sfc", "base"), default="sfc")
    p.add_argument("--mine", action="store_true",
                   help="hard negative mining between epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("heatmap", help="write context heat maps for a dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_heatmap)

    for name, func in (("find-missing", cmd_find_missing),
                       ("find-out-of-context", cmd_find_out_of_context)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--run", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="recall@k table for a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--k-max", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sensitivity", help="per-pixel perturbation probe")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--compare-checkpoint", default=None)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("serve-gallery", help="HTTP backend for verification")
    p.add_argument("--runs-root", required=True)
    p.add_argument("--frontend", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.set_defaults(func=cmd_serve_gallery)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (cfgmod.ConfigError, network.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CheckpointVersionError, RunFormatError) as exc:
        print(f"version error: {exc}", file=sys.stderr)
        return EXIT_VERSION
    except (CheckpointError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
