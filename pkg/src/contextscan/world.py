"""Deterministic synthetic benchmark scenes.

Each scene shows two dark bands crossing at a junction; the four
diagonal corners of the crossing are the only legal object sites (so
objects appear in pairs along each band side, and the surrounding
structure alone predicts where they belong).  A site receives a
textured, bright-rimmed object with probability ``placement_prob``;
empty sites are recorded as ground-truth missing regions.  Scenes can
also plant objects far away from any band for the out-of-context
experiments, and a configurable oracle detector stands in for a real
object detector.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .data import AnnotatedImage, clamp_rect, jaccard, rect_intersection


@dataclass(frozen=True)
class WorldConfig:
    image_size: int = 160
    channels: int = 1
    sites_per_image: int = 4
    placement_prob: float = 0.5
    object_size: int = 16
    size_jitter: int = 2
    texture_noise: float = 0.04
    band_width: int = 14
    junction_jitter: int = 16
    offsite_rate: float = 0.0  # expected planted off-site objects per image
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.placement_prob <= 1.0:
            raise ValueError("placement_prob must be in (0, 1]")
        if self.sites_per_image < 1 or self.sites_per_image > 4:
            raise ValueError("sites_per_image must be 1..4")


@dataclass(frozen=True)
class OracleDetectorConfig:
    false_negative_rate: float = 0.0
    false_positive_rate: float = 0.0  # expected spurious boxes per image
    localization_jitter: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.false_negative_rate <= 1.0:
            raise ValueError("false_negative_rate must be in [0, 1]")
        if self.false_positive_rate < 0.0:
            raise ValueError("false_positive_rate must be nonnegative")


def _draw_object(img, box, rng, noise):
    x, y, w, h = box
    patch = 0.42 + rng.normal(0.0, 6.0 * noise, size=(h, w))
    patch[0, :] = patch[-1, :] = 0.95  # bright rim keeps objects detectable
    patch[:, 0] = patch[:, -1] = 0.95
    img[y:y + h, x:x + w] = patch[:, :, None]


def _band_rects(jx, jy, bw, size):
    return [(0, jy - bw // 2, size, bw), (jx - bw // 2, 0, bw, size)]


def generate_scene(cfg, index):
    """Render scene ``index``; bit-identical for a given (seed, index)."""
    rng = np.random.default_rng([cfg.seed, index])
    n = cfg.image_size
    img = 0.78 + rng.normal(0.0, cfg.texture_noise, size=(n, n, 1))

    jitter = cfg.junction_jitter
    jx = n // 2 + int(rng.integers(-jitter, jitter + 1))
    jy = n // 2 + int(rng.integers(-jitter, jitter + 1))
    bw = cfg.band_width
    for (bx, by, bww, bwh) in _band_rects(jx, jy, bw, n):
        img[by:by + bwh, bx:bx + bww] = (
            0.25 + rng.normal(0.0, cfg.texture_noise, size=(bwh, bww, 1)))

    corners = [(-1, -1), (1, -1), (-1, 1), (1, 1)]
    if cfg.sites_per_image < 4:
        picks = rng.permutation(4)[:cfg.sites_per_image]
        corners = [corners[i] for i in sorted(picks)]

    objects, missing = [], []
    gap = 2
    for sx, sy in corners:
        size = cfg.object_size + int(rng.integers(-cfg.size_jitter,
                                                  cfg.size_jitter + 1))
        off = bw // 2 + gap + size // 2
        cx, cy = jx + sx * off, jy + sy * off
        box = (cx - size // 2, cy - size // 2, size, size)
        if rng.random() < cfg.placement_prob:
            _draw_object(img, box, rng, cfg.texture_noise)
            objects.append(box)
        else:
            missing.append(box)

    offsite = []
    n_planted = rng.poisson(cfg.offsite_rate) if cfg.offsite_rate > 0 else 0
    site_rects = objects + missing
    bands = _band_rects(jx, jy, bw, n)
    margin = 36  # keep retrieval crops and sample crops inside the image
    for _ in range(n_planted):
        size = cfg.object_size
        for _ in range(50):
            x = int(rng.integers(margin, n - margin - size))
            y = int(rng.integers(margin, n - margin - size))
            box = (x, y, size, size)
            clear = all(rect_intersection(box, r) == 0.0
                        for r in site_rects + bands + offsite)
            if clear:
                _draw_object(img, box, rng, cfg.texture_noise)
                offsite.append(box)
                break

    # quantize to 8-bit so a PNG round trip is lossless
    pixels = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.float32) / 255.0
    if cfg.channels == 3:
        pixels = np.repeat(pixels, 3, axis=2)
    return AnnotatedImage(pixels=pixels,
                          object_boxes=objects + offsite,
                          missing_boxes=missing,
                          offsite_boxes=offsite,
                          id=f"scene_{index:05d}")


def generate_dataset(cfg, count, start_index=0):
    return [generate_scene(cfg, i) for i in range(start_index, start_index + count)]


def oracle_detect(img, cfg):
    """Simulated detector output: list of ((x, y, w, h), score)."""
    rng = np.random.default_rng([cfg.seed, zlib.crc32(img.id.encode())])
    dets = []
    j = cfg.localization_jitter
    for box in img.object_boxes:
        if rng.random() < cfg.false_negative_rate:
            continue
        x, y, w, h = box
        if j > 0:
            x += int(rng.integers(-j, j + 1))
            y += int(rng.integers(-j, j + 1))
        dets.append((clamp_rect((x, y, w, h), img.width, img.height),
                     float(rng.uniform(0.7, 1.0))))
    for _ in range(rng.poisson(cfg.false_positive_rate)):
        size = 16
        for _ in range(50):
            x = int(rng.integers(0, img.width - size))
            y = int(rng.integers(0, img.height - size))
            box = (x, y, size, size)
            taken = img.object_boxes + img.missing_boxes
            if all(jaccard(box, r) <= 0.2 for r in taken):
                dets.append((box, float(rng.uniform(0.3, 0.7))))
                break
    return dets


def oracle_detect_dataset(images, cfg):
    return {img.id: oracle_detect(img, cfg) for img in images}
