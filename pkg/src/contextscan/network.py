"""Context network: the explicit-mask base classifier and its
fully-convolutional twin, sharing one geometry.

The stack is four valid 3x3 convolutions with two 2x2 pools
(224 -> 222 -> 220 -> 110 -> 108 -> 106 -> 53 at the canonical scale),
then either two dense layers (base) or their convolutional substitutes
(fully-convolutional), which accept arbitrary input sizes and emit a
2-channel logit map with output stride 4.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass

import numpy as np

from .engine import (Conv2D, Dense, Dropout, Flatten, MaxPool2D, Parameter,
                     ReLU, ShapeError, adadelta_step, init_conv, init_dense,
                     l1_distance, softmax, softmax_cross_entropy)

CHECKPOINT_VERSION = 1

BASE = "base"
FULLY_CONV = "fully_convolutional"


class ConfigError(ValueError):
    """Raised when a network geometry cannot be realized."""


class CheckpointError(IOError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


@dataclass(frozen=True)
class NetworkConfig:
    input_side: int = 224
    channels: int = 3
    filters: tuple = (32, 32, 64, 64)
    head_width: int = 256
    name: str = "canonical"
    drop_block: float = 0.25
    drop_head: float = 0.5

    def stage_sides(self):
        """Spatial side after each layer of the conv trunk; raises
        ConfigError naming the first layer that fails."""
        s = self.input_side
        sides = []
        for block in (1, 2):
            for conv in (1, 2):
                if s < 3:
                    raise ConfigError(
                        f"conv{2 * (block - 1) + conv}: input side {s} < kernel 3")
                s -= 2
                sides.append(s)
            if s < 2:
                raise ConfigError(f"pool{block}: input side {s} < 2")
            s //= 2
            sides.append(s)
        if s < 1:
            raise ConfigError("flatten: empty feature map")
        return sides

    @property
    def flatten_side(self):
        return self.stage_sides()[-1]


DESK_CONFIG = NetworkConfig(input_side=64, channels=1, filters=(8, 8, 16, 16),
                            head_width=32, name="desk")


class ContextNet:
    """A sequential layer stack with named layers and a variant tag."""

    def __init__(self, layers, variant, config, seed=0):
        self.layers = layers  # list of (name, layer)
        self.variant = variant
        self.config = config
        self.seed = seed

    @property
    def params(self):
        out = []
        for _, layer in self.layers:
            out.extend(layer.params)
        return out

    def param_count(self):
        return sum(layer.param_count() for _, layer in self.layers)

    def layer_summary(self):
        return [(name, layer.param_count()) for name, layer in self.layers]

    def _dropouts(self):
        return [layer for _, layer in self.layers if isinstance(layer, Dropout)]

    def forward(self, x, train=False, rng=None, masks=None):
        """Run the stack.  Returns (out, caches, masks) where ``masks``
        lists the dropout masks actually used (for Siamese sharing)."""
        x = np.asarray(x)
        caches = []
        used = []
        di = 0
        for name, layer in self.layers:
            if isinstance(layer, Dropout):
                mask = masks[di] if masks is not None else None
                x, cache = layer.forward(x, train=train, rng=rng, mask=mask)
                used.append(cache)
                di += 1
            else:
                x, cache = layer.forward(x, train=train, rng=rng)
            caches.append(cache)
        return x, caches, used

    def backward(self, caches, dout):
        for (name, layer), cache in zip(reversed(self.layers), reversed(caches)):
            dout = layer.backward(cache, dout)
        return dout

    def logits(self, x, train=False, rng=None, masks=None):
        """Forward pass squeezed to a flat 2-vector (base output, or the
        single cell of a canonical-size fully-convolutional pass)."""
        out, caches, used = self.forward(x, train=train, rng=rng, masks=masks)
        return out.reshape(-1) if out.size == 2 else out, caches, used

    def clone(self):
        other = build(self.config, self.variant, self.seed)
        for dst, src in zip(other.params, self.params):
            dst.value[...] = src.value
            dst.acc_grad_sq[...] = src.acc_grad_sq
            dst.acc_update_sq[...] = src.acc_update_sq
        return other

    def state_arrays(self):
        return [p.value for p in self.params]


def build(config, variant=BASE, seed=0):
    """Construct a fresh network; weight init is seeded fan-in uniform."""
    if variant not in (BASE, FULLY_CONV):
        raise ConfigError(f"unknown variant {variant!r}")
    fside = config.flatten_side  # validates geometry
    f1, f2, f3, f4 = config.filters
    rng = np.random.default_rng(seed)
    layers = []

    def conv(name, kh, kw, cin, cout):
        k, b = init_conv(rng, kh, kw, cin, cout)
        layers.append((name, Conv2D(k, b)))

    conv("conv1", 3, 3, config.channels, f1)
    layers.append(("relu1", ReLU()))
    conv("conv2", 3, 3, f1, f2)
    layers.append(("relu2", ReLU()))
    layers.append(("pool1", MaxPool2D()))
    layers.append(("drop1", Dropout(config.drop_block)))
    conv("conv3", 3, 3, f2, f3)
    layers.append(("relu3", ReLU()))
    conv("conv4", 3, 3, f3, f4)
    layers.append(("relu4", ReLU()))
    layers.append(("pool2", MaxPool2D()))
    layers.append(("drop2", Dropout(config.drop_block)))

    if variant == BASE:
        layers.append(("flatten", Flatten()))
        w, b = init_dense(rng, fside * fside * f4, config.head_width)
        layers.append(("fc1", Dense(w, b)))
        layers.append(("relu5", ReLU()))
        layers.append(("drop3", Dropout(config.drop_head)))
        w, b = init_dense(rng, config.head_width, 2)
        layers.append(("fc2", Dense(w, b)))
    else:
        conv("convhead", fside, fside, f4, config.head_width)
        layers.append(("relu5", ReLU()))
        layers.append(("drop3", Dropout(config.drop_head)))
        conv("convout", 1, 1, config.head_width, 2)

    return ContextNet(layers, variant, config, seed)


def convert_to_fully_convolutional(base):
    """Reshape the dense head into convolutions; weights are copied."""
    if base.variant != BASE:
        raise ConfigError("only a base-variant network can be converted")
    cfg = base.config
    fside = cfg.flatten_side
    f4 = cfg.filters[3]
    net = build(cfg, FULLY_CONV, base.seed)
    by_name = dict(base.layers)
    for name, layer in net.layers:
        if name.startswith("conv") and name not in ("convhead", "convout"):
            src = by_name[name]
            layer.kernel.value[...] = src.kernel.value
            layer.bias.value[...] = src.bias.value
    fc1 = by_name["fc1"]
    fc2 = by_name["fc2"]
    head = dict(net.layers)["convhead"]
    out = dict(net.layers)["convout"]
    # dense rows are flattened (h, w, c) row-major, exactly im2col order
    head.kernel.value[...] = fc1.weight.value.reshape(fside, fside, f4,
                                                     cfg.head_width)
    head.bias.value[...] = fc1.bias.value
    out.kernel.value[...] = fc2.weight.value.reshape(1, 1, cfg.head_width, 2)
    out.bias.value[...] = fc2.bias.value
    return net


def siamese_forward(net, masked, raw, train=False, rng=None):
    """Two passes through one parameter set with shared dropout masks.

    Returns (logits_masked, logits_raw, caches_masked, caches_raw).
    """
    masked = np.asarray(masked)
    raw = np.asarray(raw)
    if masked.shape != raw.shape:
        raise ShapeError(
            f"siamese crops differ in shape: {masked.shape} vs {raw.shape}")
    out_m, caches_m, masks = net.forward(masked, train=train, rng=rng)
    out_r, caches_r, _ = net.forward(raw, train=train, rng=rng, masks=masks)
    return out_m, out_r, caches_m, caches_r


def combined_loss(logits_masked, logits_raw, label, lam=0.5):
    """Distance loss plus classification loss on the masked stream.

    Returns (loss, l_d, l_c, dlogits_masked, dlogits_raw).
    """
    if lam < 0:
        raise ValueError(f"loss weight must be nonnegative, got {lam}")
    lm = np.asarray(logits_masked).reshape(-1)
    lr = np.asarray(logits_raw).reshape(-1)
    l_d, dsign = l1_distance(lm, lr)
    l_c, dce = softmax_cross_entropy(lm, label)
    loss = lam * l_d + l_c
    dm = (lam * dsign + dce).reshape(np.asarray(logits_masked).shape)
    dr = (-lam * dsign).reshape(np.asarray(logits_raw).shape)
    return loss, l_d, l_c, dm, dr


def context_scores(logit_map):
    """Positive-class softmax probability per cell of an (h, w, 2) map."""
    probs = softmax(np.asarray(logit_map))
    return probs[..., 0].astype(np.float32)


def training_step(net, pair, lam=0.5, rng=None, rho=0.95, epsilon=1e-6):
    """One Siamese combined-loss step (fully-convolutional net) or one
    cross-entropy step on the masked crop (base net)."""
    label = pair.label
    if net.variant == FULLY_CONV:
        out_m, out_r, caches_m, caches_r = siamese_forward(
            net, pair.masked, pair.raw, train=True, rng=rng)
        loss, l_d, l_c, dm, dr = combined_loss(out_m, out_r, label, lam)
        net.backward(caches_m, dm)
        net.backward(caches_r, dr)
    else:
        out, caches, _ = net.forward(pair.masked, train=True, rng=rng)
        loss, dlogits = softmax_cross_entropy(out.reshape(-1), label)
        l_d, l_c = 0.0, loss
        net.backward(caches, dlogits.reshape(out.shape))
    adadelta_step(net.params, rho=rho, epsilon=epsilon)
    return loss, l_d, l_c


def eval_loss(net, pair, lam=0.5):
    """Combined loss in eval mode (no dropout, no gradients kept)."""
    out_m, out_r, _, _ = siamese_forward(net, pair.masked, pair.raw, train=False)
    loss, l_d, l_c, _, _ = combined_loss(
        out_m.reshape(-1), out_r.reshape(-1), pair.label, lam)
    for p in net.params:
        p.zero_grad()
    return loss, l_d, l_c


def classify(net, crop):
    """Predicted label (1 or 2) and positive-class probability."""
    out, _, _ = net.forward(np.asarray(crop), train=False)
    probs = softmax(out.reshape(-1))
    return (1 if probs[0] >= probs[1] else 2), float(probs[0])


def _config_to_manifest(cfg):
    return {
        "config.input_side": str(cfg.input_side),
        "config.channels": str(cfg.channels),
        "config.filters": ",".join(str(f) for f in cfg.filters),
        "config.head_width": str(cfg.head_width),
        "config.name": cfg.name,
        "config.drop_block": repr(cfg.drop_block),
        "config.drop_head": repr(cfg.drop_head),
    }


def _config_from_manifest(kv):
    return NetworkConfig(
        input_side=int(kv["config.input_side"]),
        channels=int(kv["config.channels"]),
        filters=tuple(int(f) for f in kv["config.filters"].split(",")),
        head_width=int(kv["config.head_width"]),
        name=kv["config.name"],
        drop_block=float(kv["config.drop_block"]),
        drop_head=float(kv["config.drop_head"]),
    )


def save_checkpoint(net, path):
    """Write ``<path>/manifest.txt`` plus ``<path>/weights.bin`` (one blob
    of little-endian float32 in manifest order)."""
    os.makedirs(path, exist_ok=True)
    lines = [f"format_version = {CHECKPOINT_VERSION}",
             f"variant = {net.variant}",
             f"rng_seed = {net.seed}",
             "dtype = float32"]
    for k, v in _config_to_manifest(net.config).items():
        lines.append(f"{k} = {v}")
    blob = io.BytesIO()
    offset = 0
    idx = 0
    for name, layer in net.layers:
        pnames = ("weight", "bias") if isinstance(layer, Dense) else ("kernel", "bias")
        for pname, param in zip(pnames, layer.params):
            data = param.value.astype("<f4").tobytes()
            shape = ",".join(str(s) for s in param.value.shape)
            lines.append(f"param.{idx} = {name}.{pname} {shape} {offset}")
            blob.write(data)
            offset += len(data)
            idx += 1
    with open(os.path.join(path, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(path, "weights.bin"), "wb") as fh:
        fh.write(blob.getvalue())


def load_checkpoint(path):
    manifest = os.path.join(path, "manifest.txt")
    if not os.path.exists(manifest):
        raise CheckpointError(f"no manifest at {manifest}")
    kv = {}
    params = []
    with open(manifest) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            key, _, value = line.partition(" = ")
            if key.startswith("param."):
                name, shape, offset = value.rsplit(" ", 2)
                shape = tuple(int(s) for s in shape.split(","))
                params.append((name, shape, int(offset)))
            else:
                kv[key] = value
    if int(kv.get("format_version", -1)) != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint version {kv.get('format_version')} != {CHECKPOINT_VERSION}")
    cfg = _config_from_manifest(kv)
    net = build(cfg, kv["variant"], seed=int(kv["rng_seed"]))
    blob = open(os.path.join(path, "weights.bin"), "rb").read()
    targets = net.params
    if len(targets) != len(params):
        raise CheckpointError(
            f"manifest lists {len(params)} parameters, network has {len(targets)}")
    for param, (name, shape, offset) in zip(targets, params):
        if param.value.shape != shape:
            raise CheckpointError(
                f"shape mismatch for {name}: manifest {shape}, "
                f"network {param.value.shape}")
        n = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        param.value[...] = arr.reshape(shape)
    return net
