"""Minimal reverse-mode differentiable layer set on numpy.

Layers are stateless between calls: ``forward`` returns ``(out, cache)``
and ``backward(cache, dout)`` returns the input gradient while
accumulating parameter gradients in place.  There is no general graph;
the networks that use these layers are plain sequential stacks and the
Siamese loop simply keeps two caches around.

Storage is float32; reductions accumulate in float64.  Everything is
deterministic given the ``numpy.random.Generator`` passed in.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes do not line up."""


class Tensor:
    """An n-d float array with an optional same-shape gradient buffer."""

    def __init__(self, data, grad=None):
        self.data = np.asarray(data, dtype=np.float32)
        self.shape = list(self.data.shape)
        if grad is not None:
            grad = np.asarray(grad, dtype=np.float32)
            if list(grad.shape) != self.shape:
                raise ShapeError(
                    f"grad shape {list(grad.shape)} != data shape {self.shape}")
        self.grad = grad

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, grad={'yes' if self.grad is not None else 'no'})"


class Parameter:
    """A learnable tensor with its gradient accumulator and Adadelta state.

    The gradient and optimizer buffers are allocated on first use so that
    inference-only networks stay at 1x parameter memory.
    """

    def __init__(self, value):
        self.value = np.asarray(value)
        self._grad = None
        self._acc_grad_sq = None
        self._acc_update_sq = None

    @property
    def grad(self):
        if self._grad is None:
            self._grad = np.zeros_like(self.value)
        return self._grad

    @grad.setter
    def grad(self, arr):
        self._grad = arr

    @property
    def acc_grad_sq(self):
        if self._acc_grad_sq is None:
            self._acc_grad_sq = np.zeros_like(self.value)
        return self._acc_grad_sq

    @acc_grad_sq.setter
    def acc_grad_sq(self, arr):
        self._acc_grad_sq = arr

    @property
    def acc_update_sq(self):
        if self._acc_update_sq is None:
            self._acc_update_sq = np.zeros_like(self.value)
        return self._acc_update_sq

    @acc_update_sq.setter
    def acc_update_sq(self, arr):
        self._acc_update_sq = arr

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self):
        return self.value.size

    def zero_grad(self):
        if self._grad is not None:
            self._grad[...] = 0.0


def as_array(x):
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x)


def _im2col(x, kh, kw):
    """View the (H, W, C) array as overlapping kh x kw patches, flattened
    row-major as (kh, kw, C).  Returns an (H', W', kh*kw*C) copy."""
    H, W, C = x.shape
    s0, s1, s2 = x.strides
    view = np.lib.stride_tricks.as_strided(
        x, shape=(H - kh + 1, W - kw + 1, kh, kw, C),
        strides=(s0, s1, s0, s1, s2), writeable=False)
    return np.ascontiguousarray(view).reshape(H - kh + 1, W - kw + 1, kh * kw * C)


class Conv2D:
    """Valid or same-padded 2D convolution over (H, W, C) inputs.

    Kernel layout is (kh, kw, C, F): a 3x3x3 -> 32 layer carries
    3*3*3*32 + 32 = 896 parameters.
    """

    def __init__(self, kernel, bias, padding="valid"):
        if padding not in ("valid", "same"):
            raise ValueError(f"unknown padding {padding!r}")
        self.kernel = kernel if isinstance(kernel, Parameter) else Parameter(kernel)
        self.bias = bias if isinstance(bias, Parameter) else Parameter(bias)
        if self.kernel.value.ndim != 4:
            raise ShapeError("conv kernel must be (kh, kw, C, F)")
        if self.bias.value.shape != (self.kernel.value.shape[3],):
            raise ShapeError("conv bias must have one entry per filter")
        self.padding = padding

    @property
    def params(self):
        return [self.kernel, self.bias]

    def param_count(self):
        return self.kernel.size + self.bias.size

    def forward(self, x, train=False, rng=None):
        kh, kw, C, F = self.kernel.value.shape
        if x.ndim != 3 or x.shape[2] != C:
            raise ShapeError(
                f"conv2d input {x.shape} incompatible with kernel {self.kernel.value.shape}")
        if self.padding == "same":
            pt, pl = (kh - 1) // 2, (kw - 1) // 2
            x = np.pad(x, ((pt, kh - 1 - pt), (pl, kw - 1 - pl), (0, 0)))
        H, W, _ = x.shape
        if kh > H or kw > W:
            raise ShapeError(
                f"conv2d kernel {kh}x{kw} larger than input {H}x{W}")
        cols = _im2col(x, kh, kw)
        wmat = self.kernel.value.reshape(kh * kw * C, F)
        out = cols @ wmat + self.bias.value
        return out, (cols, x.shape)

    def backward(self, cache, dout):
        cols, xshape = cache
        kh, kw, C, F = self.kernel.value.shape
        Ho, Wo, _ = dout.shape
        dmat = dout.reshape(Ho * Wo, F)
        self.kernel.grad += (cols.reshape(Ho * Wo, kh * kw * C).T @ dmat).reshape(
            self.kernel.value.shape)
        self.bias.grad += dmat.sum(axis=0)
        # full correlation of dout with the flipped kernel gives dx
        pad = np.pad(dout, ((kh - 1, kh - 1), (kw - 1, kw - 1), (0, 0)))
        flip = self.kernel.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(kh * kw * F, C)
        dx = _im2col(pad, kh, kw) @ flip
        if self.padding == "same":
            pt, pl = (kh - 1) // 2, (kw - 1) // 2
            H, W, _ = xshape
            dx = dx[pt:pt + H - (kh - 1), pl:pl + W - (kw - 1)]
        return dx


class MaxPool2D:
    """2x2 max pooling with floor semantics and first-index tie-break."""

    params = ()

    def param_count(self):
        return 0

    def forward(self, x, train=False, rng=None):
        H, W, C = x.shape
        if H < 2 or W < 2:
            raise ShapeError(f"maxpool2d needs at least 2x2 input, got {H}x{W}")
        h, w = H // 2, W // 2
        blocks = x[:2 * h, :2 * w].reshape(h, 2, w, 2, C).transpose(0, 2, 1, 3, 4)
        blocks = blocks.reshape(h, w, 4, C)
        idx = blocks.argmax(axis=2)  # argmax picks the first max: top-left wins ties
        out = np.take_along_axis(blocks, idx[:, :, None, :], axis=2)[:, :, 0, :]
        return out, (x.shape, idx)

    def backward(self, cache, dout):
        (H, W, C), idx = cache
        h, w = H // 2, W // 2
        dblocks = np.zeros((h, w, 4, C), dtype=dout.dtype)
        np.put_along_axis(dblocks, idx[:, :, None, :], dout[:, :, None, :], axis=2)
        dx = np.zeros((H, W, C), dtype=dout.dtype)
        dx[:2 * h, :2 * w] = dblocks.reshape(h, w, 2, 2, C).transpose(
            0, 2, 1, 3, 4).reshape(2 * h, 2 * w, C)
        return dx


class Dropout:
    """Inverted dropout; identity in eval mode.

    A precomputed mask can be passed to ``forward`` so that two Siamese
    streams drop the same units.
    """

    params = ()

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def param_count(self):
        return 0

    def make_mask(self, shape, rng):
        keep = 1.0 - self.rate
        return (rng.random(shape) < keep).astype(np.float32) / np.float32(keep)

    def forward(self, x, train=False, rng=None, mask=None):
        if not train or self.rate == 0.0:
            return x, None
        if mask is None:
            mask = self.make_mask(x.shape, rng)
        return x * mask, mask

    def backward(self, cache, dout):
        if cache is None:
            return dout
        return dout * cache


class Dense:
    """Fully connected layer over a flattened input."""

    def __init__(self, weight, bias):
        self.weight = weight if isinstance(weight, Parameter) else Parameter(weight)
        self.bias = bias if isinstance(bias, Parameter) else Parameter(bias)
        if self.weight.value.ndim != 2:
            raise ShapeError("dense weight must be 2-d")
        if self.bias.value.shape != (self.weight.value.shape[1],):
            raise ShapeError("dense bias length must match output width")

    @property
    def params(self):
        return [self.weight, self.bias]

    def param_count(self):
        return self.weight.size + self.bias.size

    def forward(self, x, train=False, rng=None):
        flat = x.reshape(-1)
        if flat.shape[0] != self.weight.value.shape[0]:
            raise ShapeError(
                f"dense input length {flat.shape[0]} != weight rows "
                f"{self.weight.value.shape[0]}")
        return flat @ self.weight.value + self.bias.value, (flat, x.shape)

    def backward(self, cache, dout):
        flat, xshape = cache
        self.weight.grad += np.outer(flat, dout)
        self.bias.grad += dout
        return (self.weight.value @ dout).reshape(xshape)


class ReLU:
    params = ()

    def param_count(self):
        return 0

    def forward(self, x, train=False, rng=None):
        keep = x > 0  # subgradient at 0 is 0
        return x * keep, keep

    def backward(self, cache, dout):
        return dout * cache


class Flatten:
    params = ()

    def param_count(self):
        return 0

    def forward(self, x, train=False, rng=None):
        return x.reshape(-1), x.shape

    def backward(self, cache, dout):
        return dout.reshape(cache)


def softmax(logits):
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Cross-entropy of a 2-way classifier; labels are 1 (positive) or
    2 (negative).  Returns ``(loss, dlogits)``."""
    logits = np.asarray(logits)
    if logits.shape != (2,):
        raise ShapeError(f"expected 2 logits, got shape {logits.shape}")
    if label not in (1, 2):
        raise ValueError(f"label must be 1 or 2, got {label}")
    z = logits.astype(np.float64)
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    loss = float(lse - z[label - 1])
    probs = softmax(z)
    dlogits = probs.astype(logits.dtype)
    dlogits[label - 1] -= 1.0
    return loss, dlogits


def l1_distance(a, b):
    """Sum of absolute differences; gradient w.r.t. ``a`` is sign(a - b)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"l1_distance shapes differ: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.abs(diff).sum()), np.sign(diff).astype(a.dtype)


def adadelta_step(params, rho=0.95, epsilon=1e-6, scale=1.0):
    """Apply one Adadelta update to every parameter and clear gradients."""
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must be in (0, 1), got {rho}")
    for p in params:
        g = p.grad
        p.acc_grad_sq[...] = rho * p.acc_grad_sq + (1.0 - rho) * g * g
        update = -np.sqrt(p.acc_update_sq + epsilon) / np.sqrt(p.acc_grad_sq + epsilon) * g
        p.acc_update_sq[...] = rho * p.acc_update_sq + (1.0 - rho) * update * update
        p.value += scale * update
        p.zero_grad()


def init_conv(rng, kh, kw, cin, cout, dtype=np.float32):
    """Fan-in scaled uniform kernel plus zero bias."""
    fan_in = kh * kw * cin
    limit = np.sqrt(6.0 / fan_in)
    kernel = rng.uniform(-limit, limit, size=(kh, kw, cin, cout)).astype(dtype)
    return Parameter(kernel), Parameter(np.zeros(cout, dtype=dtype))


def init_dense(rng, n, m, dtype=np.float32):
    limit = np.sqrt(6.0 / n)
    weight = rng.uniform(-limit, limit, size=(n, m)).astype(dtype)
    return Parameter(weight), Parameter(np.zeros(m, dtype=dtype))
