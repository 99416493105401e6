"""Epoch loop for the base and fully-convolutional context networks:
Adadelta steps over interleaved masked/raw pairs, a held-out validation
split with early stopping, and optional per-epoch hard negative mining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network
from .network import FULLY_CONV, build, eval_loss, training_step
from .sampling import epoch_stream, mine_hard_negatives


@dataclass
class TrainResult:
    net: object
    history: list = field(default_factory=list)
    best_epoch: int = -1
    mined: list = field(default_factory=list)


def split_train_val(images, val_fraction, seed):
    rng = np.random.default_rng([seed, 2])
    order = rng.permutation(len(images))
    n_val = int(round(val_fraction * len(images)))
    if val_fraction > 0 and len(images) > 1:
        n_val = max(1, min(n_val, len(images) - 1))
    else:
        n_val = 0
    val_idx = set(order[:n_val].tolist())
    train = [img for i, img in enumerate(images) if i not in val_idx]
    val = [img for i, img in enumerate(images) if i in val_idx]
    return train, val


def classification_accuracy(net, pairs):
    hits = 0
    for pair in pairs:
        label, _ = network.classify(net, pair.masked)
        hits += int(label == pair.label)
    return hits / len(pairs)


def train_network(variant, config, dataset, *, epochs=20, samples_per_epoch=400,
                  lam=0.5, val_fraction=0.2, patience=5, seed=0, mining=False,
                  mine_fraction=0.1, mine_scales=(1.0,), rho=0.95,
                  epsilon=1e-6, log=None, on_epoch=None):
    """Train a fresh network on a dataset; deterministic given the seed.

    The fully-convolutional variant trains with the Siamese combined
    loss; the base variant with cross entropy on masked crops only.
    """
    net = build(config, variant, seed=seed)
    train_imgs, val_imgs = split_train_val(dataset, val_fraction, seed)
    side = config.input_side

    val_pairs = []
    if val_imgs:
        n_val = max(20, samples_per_epoch // 5)
        val_pairs = epoch_stream(val_imgs, n_val, side,
                                 np.random.default_rng([seed, 3]))

    drop_rng = np.random.default_rng([seed, 4])
    best_loss = np.inf
    best_state = None
    best_epoch = -1
    stale = 0
    mined = []
    history = []
    for epoch in range(epochs):
        stream = epoch_stream(train_imgs, samples_per_epoch, side,
                              np.random.default_rng([seed, 10 + epoch]),
                              extra_negatives=mined)
        tot = tot_d = tot_c = 0.0
        for pair in stream:
            loss, l_d, l_c = training_step(net, pair, lam=lam, rng=drop_rng,
                                           rho=rho, epsilon=epsilon)
            tot += loss
            tot_d += l_d
            tot_c += l_c
        n = len(stream)
        entry = {"epoch": epoch, "train_loss": tot / n,
                 "train_l_d": tot_d / n, "train_l_c": tot_c / n}

        if val_pairs:
            vals = [eval_loss(net, p, lam) for p in val_pairs]
            combined = float(np.mean([v[0] for v in vals]))
            l_c_only = float(np.mean([v[2] for v in vals]))
            val_loss = combined if variant == FULLY_CONV else l_c_only
            entry["val_loss"] = val_loss
            if val_loss < best_loss - 1e-6:
                best_loss = val_loss
                best_state = [p.value.copy() for p in net.params]
                best_epoch = epoch
                stale = 0
            else:
                stale += 1
        history.append(entry)
        if log:
            log(entry)
        if on_epoch:
            on_epoch(net, entry, best_epoch == epoch)
        if val_pairs and stale >= patience:
            break
        if mining and variant == FULLY_CONV:
            top_k = max(1, int(round(mine_fraction * samples_per_epoch / 2)))
            mined = mine_hard_negatives(net, train_imgs, top_k, side,
                                        scales=mine_scales)

    if best_state is not None:
        for p, v in zip(net.params, best_state):
            p.value[...] = v
    return TrainResult(net=net, history=history, best_epoch=best_epoch,
                       mined=mined)
