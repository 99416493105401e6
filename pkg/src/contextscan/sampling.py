"""Masked/raw training-pair extraction.

Positive crops are centered on one object, rescaled so the object width
is close to 55/224 of the crop side, and the object (and only that
object) is zeroed out after normalization.  Negatives reuse the previous
positive's mask dimensions at a random location whose mask overlaps no
labelled object by more than Jaccard 0.2, so positives and negatives
share one mask-size distribution.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import jaccard, resize_bilinear

# object width target inside a crop, as a fraction of the crop side
MASK_FRACTION = 55.0 / 224.0


class SampleSkipped(Exception):
    """A particular (image, object) cannot produce a full crop."""


class SamplingError(Exception):
    """Rejection sampling for a negative exhausted its attempts."""


@dataclass
class SamplePair:
    raw: np.ndarray
    masked: np.ndarray
    label: int  # 1 positive, 2 negative
    mask_rect: tuple  # (x, y, w, h) in crop coordinates
    source: tuple  # (image id, (left, top, side) in source px, scale, flipped)


@dataclass(frozen=True)
class NegativeSpec:
    """A mined negative: where to cut the next epoch's extra crop."""
    image_id: str
    center: tuple  # (cx, cy) source pixels
    mask_dims: tuple  # (w, h) in crop pixels
    src_side: int
    score: float = 0.0


def normalize(img):
    """Per-channel zero-mean unit-std, computed over the whole image."""
    img = np.asarray(img, dtype=np.float32)
    mean = img.mean(axis=(0, 1), dtype=np.float64)
    std = img.std(axis=(0, 1), dtype=np.float64)
    if np.any(std < 1e-6):
        warnings.warn("constant channel during normalization; std clamped")
        std = np.maximum(std, 1e-6)
    return ((img - mean) / std).astype(np.float32)


def _cut_crop(pixels, left, top, src_side, input_side):
    crop = pixels[top:top + src_side, left:left + src_side]
    if src_side != input_side:
        crop = resize_bilinear(crop, input_side, input_side)
    return np.ascontiguousarray(crop)


def _mask_crop(raw, rect):
    x, y, w, h = rect
    masked = raw.copy()
    masked[y:y + h, x:x + w] = 0.0
    return masked


def extract_positive(img, norm_pixels, object_index, input_side):
    """Build the positive pair for one object of a normalized image."""
    ox, oy, ow, oh = img.object_boxes[object_index]
    target_w = MASK_FRACTION * input_side
    src_side = int(round(input_side * ow / target_w))
    if src_side < 1:
        raise SampleSkipped(f"{img.id}: object too large for crop geometry")
    cx, cy = ox + ow / 2.0, oy + oh / 2.0
    left = int(math.floor(cx - src_side / 2.0))
    top = int(math.floor(cy - src_side / 2.0))
    if left < 0 or top < 0 or left + src_side > img.width or top + src_side > img.height:
        raise SampleSkipped(f"{img.id}: object {object_index} too close to border")
    raw = _cut_crop(norm_pixels, left, top, src_side, input_side)
    s = input_side / src_side
    mx = int(math.floor((ox - left) * s))
    my = int(math.floor((oy - top) * s))
    mw = max(1, int(math.ceil((ox + ow - left) * s)) - mx)
    mh = max(1, int(math.ceil((oy + oh - top) * s)) - my)
    rect = (mx, my, mw, mh)
    return SamplePair(raw=raw, masked=_mask_crop(raw, rect), label=1,
                      mask_rect=rect,
                      source=(img.id, (left, top, src_side), s, False))


def extract_negative(img, norm_pixels, mask_dims, src_side, input_side, rng,
                     max_attempts=100):
    """Random crop whose centered mask stays clear of every object."""
    if src_side > img.width or src_side > img.height:
        raise SamplingError(f"{img.id}: image smaller than crop")
    mw, mh = mask_dims
    mx = (input_side - mw) // 2
    my = (input_side - mh) // 2
    s = input_side / src_side
    for _ in range(max_attempts):
        left = int(rng.integers(0, img.width - src_side + 1))
        top = int(rng.integers(0, img.height - src_side + 1))
        mask_src = (left + mx / s, top + my / s, mw / s, mh / s)
        if all(jaccard(mask_src, box) <= 0.2 for box in img.object_boxes):
            raw = _cut_crop(norm_pixels, left, top, src_side, input_side)
            rect = (mx, my, mw, mh)
            return SamplePair(raw=raw, masked=_mask_crop(raw, rect), label=2,
                              mask_rect=rect,
                              source=(img.id, (left, top, src_side), s, False))
    raise SamplingError(f"{img.id}: no valid negative in {max_attempts} attempts")


def flip_pair(pair):
    """Horizontal flip of raw and masked together (an involution)."""
    side = pair.raw.shape[1]
    x, y, w, h = pair.mask_rect
    img_id, crop, s, flipped = pair.source
    return SamplePair(raw=np.ascontiguousarray(pair.raw[:, ::-1]),
                      masked=np.ascontiguousarray(pair.masked[:, ::-1]),
                      label=pair.label,
                      mask_rect=(side - x - w, y, w, h),
                      source=(img_id, crop, s, not flipped))


def _pair_from_spec(spec, images_by_id, norm_cache, input_side, rng):
    img = images_by_id[spec.image_id]
    cx, cy = spec.center
    left = int(math.floor(cx - spec.src_side / 2.0))
    top = int(math.floor(cy - spec.src_side / 2.0))
    left = min(max(left, 0), img.width - spec.src_side)
    top = min(max(top, 0), img.height - spec.src_side)
    raw = _cut_crop(norm_cache(img), left, top, spec.src_side, input_side)
    mw, mh = spec.mask_dims
    rect = ((input_side - mw) // 2, (input_side - mh) // 2, mw, mh)
    return SamplePair(raw=raw, masked=_mask_crop(raw, rect), label=2,
                      mask_rect=rect,
                      source=(img.id, (left, top, spec.src_side),
                              input_side / spec.src_side, False))


def epoch_stream(dataset, n_samples, input_side, rng, extra_negatives=(),
                 flip_prob=0.5):
    """One epoch of interleaved P,N,P,N,... pairs plus mined extras.

    Deterministic given (dataset order, seed); raises SamplingError only
    after retries across many images fail.
    """
    with_objects = [img for img in dataset if img.object_boxes]
    if not with_objects:
        raise SamplingError("dataset has no labelled objects")
    norm = {}

    def norm_cache(img):
        if img.id not in norm:
            norm[img.id] = normalize(img.pixels)
        return norm[img.id]

    pairs = []
    for _ in range(n_samples // 2):
        pos = None
        for _ in range(200):
            img = with_objects[int(rng.integers(0, len(with_objects)))]
            oi = int(rng.integers(0, len(img.object_boxes)))
            try:
                pos = extract_positive(img, norm_cache(img), oi, input_side)
                break
            except SampleSkipped:
                continue
        if pos is None:
            raise SamplingError("no border-safe positive found in 200 draws")
        neg = None
        mask_dims = (pos.mask_rect[2], pos.mask_rect[3])
        for _ in range(20):
            img = dataset[int(rng.integers(0, len(dataset)))]
            try:
                neg = extract_negative(img, norm_cache(img), mask_dims,
                                       pos.source[1][2], input_side, rng)
                break
            except SamplingError:
                continue
        if neg is None:
            raise SamplingError("no valid negative found across 20 images")
        for pair in (pos, neg):
            if rng.random() < flip_prob:
                pair = flip_pair(pair)
            pairs.append(pair)
    images_by_id = {img.id: img for img in dataset}
    for spec in extra_negatives:
        pair = _pair_from_spec(spec, images_by_id, norm_cache, input_side, rng)
        if rng.random() < flip_prob:
            pair = flip_pair(pair)
        pairs.append(pair)
    return pairs


def mine_hard_negatives(net, dataset, top_k, input_side, scales=(1.0,)):
    """Harvest the highest-scoring clear-of-objects heat-map locations as
    negative specs for the next epoch."""
    from .heatmaps import cell_centers, dense_map

    if top_k <= 0:
        return []
    target = int(round(MASK_FRACTION * input_side))
    candidates = []
    for img in dataset:
        hm = dense_map(net, img.pixels, scales=scales, image_id=img.id)
        centers_x, centers_y = cell_centers(hm)
        scores = hm.scores
        for i in range(scores.shape[0]):
            for j in range(scores.shape[1]):
                cx, cy = centers_x[j], centers_y[i]
                half = input_side / 2.0
                if cx < half or cy < half or cx > img.width - half or cy > img.height - half:
                    continue
                mask_src = (cx - target / 2.0, cy - target / 2.0, target, target)
                if all(jaccard(mask_src, b) <= 0.2 for b in img.object_boxes):
                    candidates.append((float(scores[i, j]), img.id, cx, cy))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2], c[3]))
    kept = []
    radius = target / 2.0
    for score, img_id, cx, cy in candidates:
        if len(kept) >= top_k:
            break
        dup = any(k.image_id == img_id
                  and max(abs(k.center[0] - cx), abs(k.center[1] - cy)) < radius
                  for k in kept)
        if not dup:
            kept.append(NegativeSpec(image_id=img_id, center=(cx, cy),
                                     mask_dims=(target, target),
                                     src_side=input_side, score=score))
    return kept
