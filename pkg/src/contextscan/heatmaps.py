"""Context heat maps over full images.

The base network slides a fixed-size masked window; the
fully-convolutional network runs densely over an image pyramid (output
stride 4) and the per-scale maps are max-fused onto the finest grid.
Cell (i, j) of a map scores the source patch centered at
``(stride * j + patch_side / 2, stride * i + patch_side / 2)``.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .data import resize_bilinear
from .network import BASE, FULLY_CONV, ConfigError, context_scores
from .sampling import normalize

HMAP_MAGIC = b"HMAP"
HMAP_VERSION = 1


class HeatMapFormatError(IOError):
    pass


@dataclass
class HeatMap:
    scores: np.ndarray  # H' x W' float32 in [0, 1]
    stride: float
    patch_side: float
    scale: float
    image_id: str = ""


def cell_centers(hm):
    """Source-pixel coordinates of every cell center: (xs, ys)."""
    h, w = hm.scores.shape
    xs = hm.stride * np.arange(w) + hm.patch_side / 2.0
    ys = hm.stride * np.arange(h) + hm.patch_side / 2.0
    return xs, ys


def sliding_window_map(net, pixels, stride=10, mask_widths=(50, 70, 100),
                       image_id=""):
    """Explicit-mask evaluation of the base network on a pixel grid,
    max-fused over the given centered mask widths."""
    if net.variant != BASE:
        raise ConfigError("sliding_window_map needs a base-variant network")
    patch = net.config.input_side
    img = normalize(pixels)
    H, W = img.shape[:2]
    if H < patch or W < patch:
        raise ValueError(f"image {H}x{W} smaller than patch {patch}")
    rows = (H - patch) // stride + 1
    cols = (W - patch) // stride + 1
    scores = np.zeros((rows, cols), dtype=np.float32)
    for i in range(rows):
        for j in range(cols):
            crop = img[i * stride:i * stride + patch,
                       j * stride:j * stride + patch]
            best = 0.0
            for width in mask_widths:
                masked = crop.copy()
                x0 = (patch - width) // 2
                masked[x0:x0 + width, x0:x0 + width] = 0.0
                out, _, _ = net.forward(masked, train=False)
                best = max(best, float(context_scores(out.reshape(1, 1, 2))[0, 0]))
            scores[i, j] = best
    return HeatMap(scores=scores, stride=float(stride), patch_side=float(patch),
                   scale=1.0, image_id=image_id)


def dense_map(net, pixels, scales=(0.5, 0.7, 1.0), image_id=""):
    """One dense fully-convolutional pass per pyramid scale, max-fused
    onto the finest scale's grid."""
    if net.variant != FULLY_CONV:
        raise ConfigError("dense_map needs a fully-convolutional network")
    patch = net.config.input_side
    img = normalize(pixels)
    H, W = img.shape[:2]
    per_scale = {}
    for s in scales:
        h, w = int(round(H * s)), int(round(W * s))
        if h < patch or w < patch:
            warnings.warn(f"scale {s} shrinks image below {patch}px; skipped")
            continue
        scaled = img if (h, w) == (H, W) else resize_bilinear(img, h, w)
        out, _, _ = net.forward(scaled, train=False)
        per_scale[s] = context_scores(out)
    if not per_scale:
        raise ValueError("no pyramid scale leaves the image at least patch-sized")

    finest = max(per_scale)
    fused = per_scale[finest].copy()
    for s, scores in per_scale.items():
        if s == finest:
            continue
        h, w = scores.shape
        for i in range(h):
            for j in range(w):
                cx = (4.0 * j + patch / 2.0) / s
                cy = (4.0 * i + patch / 2.0) / s
                jf = int(round((cx * finest - patch / 2.0) / 4.0))
                jf = min(max(jf, 0), fused.shape[1] - 1)
                if_ = int(round((cy * finest - patch / 2.0) / 4.0))
                if_ = min(max(if_, 0), fused.shape[0] - 1)
                fused[if_, jf] = max(fused[if_, jf], scores[i, j])
    return HeatMap(scores=fused, stride=4.0 / finest,
                   patch_side=patch / finest, scale=finest, image_id=image_id)


def write_hmap(hm, path):
    h, w = hm.scores.shape
    with open(path, "wb") as fh:
        fh.write(HMAP_MAGIC)
        fh.write(struct.pack("<BII", HMAP_VERSION, h, w))
        fh.write(struct.pack("<fff", hm.stride, hm.patch_side, hm.scale))
        fh.write(hm.scores.astype("<f4").tobytes())


def read_hmap(path, image_id=""):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != HMAP_MAGIC:
            raise HeatMapFormatError(f"{path}: bad magic {magic!r}")
        version, h, w = struct.unpack("<BII", fh.read(9))
        if version != HMAP_VERSION:
            raise HeatMapFormatError(f"{path}: unsupported version {version}")
        stride, patch_side, scale = struct.unpack("<fff", fh.read(12))
        data = np.frombuffer(fh.read(4 * h * w), dtype="<f4").reshape(h, w)
    return HeatMap(scores=data.copy(), stride=stride, patch_side=patch_side,
                   scale=scale, image_id=image_id)


def write_pgm(scores, path):
    """8-bit binary PGM rendering for eyeballing a score grid."""
    arr = np.clip(np.round(np.asarray(scores) * 255.0), 0, 255).astype(np.uint8)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(arr.tobytes())
