"""Run directories: the retrieval manifest, exported region thumbnails,
and the append-only human-verdict log."""

from __future__ import annotations

import json
import os
import time

from .data import load_image, save_image
from .pipeline import CandidateRegion, UNLABELED

RUN_VERSION = 1
VERDICTS = (UNLABELED, "true", "false")


class RunFormatError(IOError):
    pass


def write_run(run_dir, *, config_text, mode, regions, gt_by_image, auto_flags,
              data_dir, heatmap_files=None):
    os.makedirs(run_dir, exist_ok=True)
    manifest = {
        "version": RUN_VERSION,
        "mode": mode,
        "config": config_text,
        "data_dir": os.path.abspath(data_dir),
        "gt_total": sum(len(v) for v in gt_by_image.values()),
        "gt": {k: [list(b) for b in v] for k, v in gt_by_image.items()},
        "regions": [{"rank": r.rank, "score": r.score, "box": list(r.box),
                     "image_id": r.image_id} for r in regions],
        "auto_flags": [bool(f) for f in auto_flags],
        "heatmaps": heatmap_files or {},
    }
    with open(os.path.join(run_dir, "run.json"), "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest


def load_run(run_dir):
    path = os.path.join(run_dir, "run.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no run manifest at {path}")
    with open(path) as fh:
        manifest = json.load(fh)
    if manifest.get("version") != RUN_VERSION:
        raise RunFormatError(
            f"run manifest version {manifest.get('version')} != {RUN_VERSION}")
    return manifest


def run_regions(manifest):
    return [CandidateRegion(box=tuple(r["box"]), score=r["score"],
                            rank=r["rank"], image_id=r["image_id"])
            for r in manifest["regions"]]


def export_crops(run_dir, regions, images_by_id):
    """Write one PNG thumbnail per region, named by rank."""
    crops = os.path.join(run_dir, "crops")
    os.makedirs(crops, exist_ok=True)
    for region in regions:
        img = images_by_id[region.image_id]
        x, y, w, h = region.box
        save_image(img.pixels[y:y + h, x:x + w],
                   os.path.join(crops, f"rank_{region.rank:04d}.png"))


class LabelStore:
    """Append-only tab-separated verdict log; replay is last-write-wins
    per rank and tolerates a truncated final record."""

    def __init__(self, path, run_id=""):
        self.path = path
        self.run_id = run_id

    def append(self, rank, verdict, timestamp=None):
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {verdict!r}")
        ts = time.time() if timestamp is None else timestamp
        with open(self.path, "a") as fh:
            fh.write(f"{self.run_id}\t{int(rank)}\t{verdict}\t{ts:.6f}\n")

    def replay(self):
        verdicts = {}
        if not os.path.exists(self.path):
            return verdicts
        with open(self.path) as fh:
            for line in fh:
                if not line.endswith("\n"):
                    break  # truncated tail record
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    continue
                _, rank, verdict, _ = parts
                if verdict in VERDICTS:
                    try:
                        verdicts[int(rank)] = verdict
                    except ValueError:
                        continue
        return verdicts
