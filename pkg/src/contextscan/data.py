"""Annotated images, rectangle utilities and dataset file formats.

A dataset on disk is a directory of 8-bit PNG (or PGM) images plus one
``annotations.json`` listing records ``{file, objects, missing}``; boxes
are ``[x, y, w, h]`` integer pixel coordinates, origin top-left.
Detector output lives in a separate ``detections.json`` with records
``{file, detections: [{box, score}]}``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image


def rect_area(r):
    return r[2] * r[3]


def rect_center(r):
    return (r[0] + r[2] / 2.0, r[1] + r[3] / 2.0)


def rect_intersection(a, b):
    x1 = max(a[0], b[0])
    y1 = max(a[1], b[1])
    x2 = min(a[0] + a[2], b[0] + b[2])
    y2 = min(a[1] + a[3], b[1] + b[3])
    if x2 <= x1 or y2 <= y1:
        return 0.0
    return (x2 - x1) * (y2 - y1)


def jaccard(a, b):
    """Intersection-over-union of two (x, y, w, h) rectangles."""
    inter = rect_intersection(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (rect_area(a) + rect_area(b) - inter)


def rect_contains_point(r, x, y):
    return r[0] <= x < r[0] + r[2] and r[1] <= y < r[1] + r[3]


def clamp_rect(r, width, height):
    """Shift a rect to lie inside the image, shrinking only if it is
    larger than the image itself."""
    x, y, w, h = r
    w = min(w, width)
    h = min(h, height)
    x = min(max(x, 0), width - w)
    y = min(max(y, 0), height - h)
    return (x, y, w, h)


@dataclass
class AnnotatedImage:
    pixels: np.ndarray  # H x W x C float32 in [0, 1]
    object_boxes: list
    missing_boxes: list
    id: str
    offsite_boxes: list = field(default_factory=list)

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


def resize_bilinear(img, out_h, out_w):
    """Deterministic bilinear resize of an (H, W, C) array."""
    H, W = img.shape[:2]
    ys = np.clip((np.arange(out_h) + 0.5) * H / out_h - 0.5, 0, H - 1)
    xs = np.clip((np.arange(out_w) + 0.5) * W / out_w - 0.5, 0, W - 1)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]
    top = img[y0][:, x0] * (1 - wx) + img[y0][:, x1] * wx
    bot = img[y1][:, x0] * (1 - wx) + img[y1][:, x1] * wx
    return (top * (1 - wy) + bot * wy).astype(img.dtype)


def save_image(pixels, path):
    """Write float [0, 1] pixels as an 8-bit PNG/PGM."""
    arr = np.clip(np.round(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path)


def load_image(path):
    """Read an image back as H x W x C float32 in [0, 1]."""
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_dataset(images, directory):
    os.makedirs(os.path.join(directory, "images"), exist_ok=True)
    records = []
    for img in images:
        rel = os.path.join("images", f"{img.id}.png")
        save_image(img.pixels, os.path.join(directory, rel))
        rec = {
            "file": rel,
            "objects": [{"box": list(map(int, b))} for b in img.object_boxes],
            "missing": [{"box": list(map(int, b))} for b in img.missing_boxes],
        }
        if img.offsite_boxes:
            rec["offsite"] = [{"box": list(map(int, b))} for b in img.offsite_boxes]
        records.append(rec)
    with open(os.path.join(directory, "annotations.json"), "w") as fh:
        json.dump(records, fh, indent=1)


def load_dataset(directory):
    path = os.path.join(directory, "annotations.json")
    with open(path) as fh:
        records = json.load(fh)
    images = []
    for rec in records:
        pixels = load_image(os.path.join(directory, rec["file"]))
        img_id = os.path.splitext(os.path.basename(rec["file"]))[0]
        images.append(AnnotatedImage(
            pixels=pixels,
            object_boxes=[tuple(o["box"]) for o in rec.get("objects", [])],
            missing_boxes=[tuple(m["box"]) for m in rec.get("missing", [])],
            offsite_boxes=[tuple(m["box"]) for m in rec.get("offsite", [])],
            id=img_id))
    return images


def save_detections(dets_by_id, directory, name="detections.json"):
    """``dets_by_id`` maps image id -> list of ((x, y, w, h), score)."""
    records = []
    for img_id in sorted(dets_by_id):
        records.append({
            "file": os.path.join("images", f"{img_id}.png"),
            "detections": [{"box": list(map(int, box)), "score": float(score)}
                           for box, score in dets_by_id[img_id]],
        })
    with open(os.path.join(directory, name), "w") as fh:
        json.dump(records, fh, indent=1)


def load_detections(directory, name="detections.json"):
    with open(os.path.join(directory, name)) as fh:
        records = json.load(fh)
    out = {}
    for rec in records:
        img_id = os.path.splitext(os.path.basename(rec["file"]))[0]
        out[img_id] = [(tuple(d["box"]), float(d["score"]))
                       for d in rec["detections"]]
    return out
