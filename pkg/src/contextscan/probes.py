"""Model characterization probes: per-pixel perturbation sensitivity and
the masked-vs-raw output distance on held-out pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import l1_distance


@dataclass
class SensitivityMap:
    grid: np.ndarray  # input-side x input-side, nonnegative
    sample_count: int
    epsilon: float
    stride: int = 1


def _flat_logits(net, crop):
    out, _, _ = net.forward(crop, train=False)
    return out.reshape(-1).astype(np.float64)


def sensitivity_map(net, samples, epsilon=0.1, stride=1):
    """Perturb one pixel (each channel separately) at a time and record
    the L2 output change, summed over channels and samples.

    ``stride`` > 1 probes every stride-th pixel for quick runs; skipped
    positions stay zero.
    """
    samples = [np.asarray(s) for s in samples]
    side_h, side_w, channels = samples[0].shape
    grid = np.zeros((side_h, side_w), dtype=np.float64)
    for crop in samples:
        base = _flat_logits(net, crop)
        probe = crop.copy()
        for y in range(0, side_h, stride):
            for x in range(0, side_w, stride):
                acc = 0.0
                for c in range(channels):
                    orig = probe[y, x, c]
                    probe[y, x, c] = orig + epsilon
                    delta = _flat_logits(net, probe) - base
                    probe[y, x, c] = orig
                    acc += float(np.sqrt((delta ** 2).sum()))
                grid[y, x] += acc
    return SensitivityMap(grid=grid, sample_count=len(samples),
                          epsilon=epsilon, stride=stride)


def center_surround_ratio(smap, window):
    """Mean sensitivity inside the centered window over the mean outside
    it (probed positions only)."""
    grid = smap.grid
    h, w = grid.shape
    y0 = (h - window) // 2
    x0 = (w - window) // 2
    inside = np.zeros((h, w), dtype=bool)
    inside[y0:y0 + window, x0:x0 + window] = True
    probed = np.zeros((h, w), dtype=bool)
    probed[::smap.stride, ::smap.stride] = True
    center = grid[inside & probed]
    surround = grid[~inside & probed]
    if center.size == 0 or surround.size == 0 or surround.mean() == 0:
        return np.inf
    return float(center.mean() / surround.mean())


def mean_distance_loss(net, pairs):
    """Average L1 distance between the network's masked and raw outputs
    (dropout in eval mode)."""
    if not pairs:
        raise ValueError("mean_distance_loss needs at least one pair")
    total = 0.0
    for pair in pairs:
        out_m, _, _ = net.forward(pair.masked, train=False)
        out_r, _, _ = net.forward(pair.raw, train=False)
        d, _ = l1_distance(out_m.reshape(-1), out_r.reshape(-1))
        total += d
    return total / len(pairs)
