"""Missing-object retrieval: combine a context heat map with detector
output, pick peaks, and score the ranked regions against ground truth.

Missing mode: detections zero out their cells, peaks are taken in
descending combined score above a threshold.  Out-of-context mode
inverts the binary map and retrieves detector-positive cells in
ascending context order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .data import clamp_rect, rect_contains_point, rect_center
from .heatmaps import HeatMap, cell_centers

MISSING = "missing"
OUT_OF_CONTEXT = "out_of_context"

UNLABELED = "unlabeled"


@dataclass
class CandidateRegion:
    box: tuple  # (x, y, w, h) in source coordinates
    score: float
    rank: int
    image_id: str
    verdict: str = UNLABELED


@dataclass
class SpatialPrior:
    prior: np.ndarray  # image-size grid in [0, 1]
    kernel: np.ndarray


def detection_binary_map(dets, image_size, mode=MISSING, det_score_threshold=0.5):
    """Per-pixel detector occupancy: missing mode is 1 where nothing was
    detected, out-of-context mode is its exact complement."""
    H, W = image_size
    inside = np.zeros((H, W), dtype=np.uint8)
    for box, score in dets:
        if score < det_score_threshold:
            continue
        x, y, w, h = (int(round(v)) for v in box)
        inside[max(y, 0):y + h, max(x, 0):x + w] = 1
    return (1 - inside) if mode == MISSING else inside


def binary_on_grid(binary, hm):
    """Nearest-neighbor sample of a pixel grid at the heat map's cell
    centers."""
    xs, ys = cell_centers(hm)
    xi = np.clip(np.round(xs).astype(int), 0, binary.shape[1] - 1)
    yi = np.clip(np.round(ys).astype(int), 0, binary.shape[0] - 1)
    return binary[np.ix_(yi, xi)]


def combine(hm, binary):
    """Continuous AND: context score where the binary map allows, zero
    where it forbids."""
    return hm.scores * binary_on_grid(binary, hm).astype(hm.scores.dtype)


def select_peaks(combined, hm, candidate_mask, d, ascending=False):
    """Greedy peak picking with Chebyshev-radius d/2 suppression in
    source coordinates.  Returns (box, score) pairs, best first."""
    if d < 1:
        raise ValueError("region side d must be >= 1")
    xs, ys = cell_centers(hm)
    ii, jj = np.nonzero(candidate_mask)
    if len(ii) == 0:
        return []
    scores = combined[ii, jj]
    sign = 1.0 if ascending else -1.0
    order = np.lexsort((jj, ii, sign * scores))
    cx, cy = xs[jj[order]], ys[ii[order]]
    scores = scores[order]
    keep_x, keep_y, out = [], [], []
    radius = d / 2.0
    for k in range(len(scores)):
        if keep_x:
            dist = np.maximum(np.abs(np.array(keep_x) - cx[k]),
                              np.abs(np.array(keep_y) - cy[k]))
            if dist.min() <= radius:
                continue
        keep_x.append(cx[k])
        keep_y.append(cy[k])
        out.append(((cx[k], cy[k]), float(scores[k])))
    return out


def find_regions(heatmaps, dets_by_id, image_size, mode=MISSING, threshold=0.4,
                 d=48, max_count=500, det_score_threshold=0.5):
    """Run steps 2-4 over a whole split and return the global ranked list.

    ``heatmaps`` maps image id -> HeatMap; ``dets_by_id`` maps image id
    -> [(box, score)].
    """
    H, W = image_size
    ascending = mode == OUT_OF_CONTEXT
    pooled = []
    for img_id in sorted(heatmaps):
        hm = heatmaps[img_id]
        binary = detection_binary_map(dets_by_id.get(img_id, []), image_size,
                                      mode, det_score_threshold)
        bgrid = binary_on_grid(binary, hm)
        combined = hm.scores * bgrid.astype(hm.scores.dtype)
        if ascending:
            # low context among detector-positive cells
            mask = bgrid > 0
        else:
            mask = combined >= threshold
        for (cx, cy), score in select_peaks(combined, hm, mask, d, ascending):
            box = clamp_rect((int(round(cx - d / 2.0)), int(round(cy - d / 2.0)),
                              d, d), W, H)
            pooled.append((score, img_id, box))
    pooled.sort(key=lambda r: ((r[0] if ascending else -r[0]), r[1], r[2]))
    regions = [CandidateRegion(box=box, score=score, rank=rank + 1, image_id=img_id)
               for rank, (score, img_id, box) in enumerate(pooled[:max_count])]
    return regions


def match_regions(regions, gt_by_image):
    """Greedy one-to-one matching by rank: a region is a true positive
    iff it contains the center of a not-yet-matched ground-truth box of
    its image.  Returns one flag per region in rank order."""
    unmatched = {img_id: [rect_center(b) for b in boxes]
                 for img_id, boxes in gt_by_image.items()}
    flags = []
    for region in sorted(regions, key=lambda r: r.rank):
        centers = unmatched.get(region.image_id, [])
        hit = None
        for idx, (cx, cy) in enumerate(centers):
            if rect_contains_point(region.box, cx, cy):
                hit = idx
                break
        if hit is not None:
            centers.pop(hit)
            flags.append(True)
        else:
            flags.append(False)
    return flags


def recall_curve(flags, total_gt, k_grid):
    """(k, recall@k) rows; None when there is no ground truth."""
    if total_gt == 0:
        return None
    cum = np.cumsum(np.asarray(flags, dtype=int))
    rows = []
    for k in k_grid:
        matched = int(cum[min(k, len(cum)) - 1]) if len(cum) and k >= 1 else 0
        rows.append((int(k), matched / total_gt))
    return rows


def evaluate_recall_at_k(regions, gt_by_image, k_grid):
    flags = match_regions(regions, gt_by_image)
    total = sum(len(v) for v in gt_by_image.values())
    return recall_curve(flags, total, k_grid)


def gaussian_kernel(size=30, sigma=10.0):
    """Truncated square Gaussian, normalized to sum 1."""
    offsets = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def spatial_prior_map(train_images, image_size, kernel_size=30, sigma=10.0):
    """Gaussian-smoothed histogram of training-set object centers."""
    if not train_images:
        raise ValueError("spatial prior needs a nonempty training split")
    H, W = image_size
    counts = np.zeros((H, W), dtype=np.float64)
    for img in train_images:
        for box in img.object_boxes:
            cx, cy = rect_center(box)
            counts[min(int(cy), H - 1), min(int(cx), W - 1)] += 1.0
    kernel = gaussian_kernel(kernel_size, sigma)
    prior = fftconvolve(counts, kernel, mode="same")
    prior = np.clip(prior, 0.0, None)
    if prior.max() > 0:
        prior /= prior.max()
    return SpatialPrior(prior=prior.astype(np.float32), kernel=kernel)


def random_score_map(image_size, seed):
    """I.i.d. uniform [0, 1] scores over the image grid."""
    H, W = image_size
    return np.random.default_rng(seed).random((H, W)).astype(np.float32)


def image_map_as_heatmap(image_map, like, image_id=""):
    """Sample an image-resolution score map onto a reference heat-map
    grid, so baselines flow through the same retrieval code."""
    ref = HeatMap(scores=np.zeros_like(like.scores), stride=like.stride,
                  patch_side=like.patch_side, scale=like.scale, image_id=image_id)
    sampled = binary_on_grid(image_map, ref) if image_map.dtype == np.uint8 \
        else _sample_float(image_map, ref)
    return HeatMap(scores=sampled.astype(np.float32), stride=like.stride,
                   patch_side=like.patch_side, scale=like.scale, image_id=image_id)


def _sample_float(grid, hm):
    xs, ys = cell_centers(hm)
    xi = np.clip(np.round(xs).astype(int), 0, grid.shape[1] - 1)
    yi = np.clip(np.round(ys).astype(int), 0, grid.shape[0] - 1)
    return grid[np.ix_(yi, xi)]
