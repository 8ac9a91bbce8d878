"""Differentiable primitives.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to one gradient per input.
"""
from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .core import Tensor, as_tensor, make_result


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def _coerce(a, b):
    a = as_tensor(a) if isinstance(a, Tensor) else Tensor(a, dtype=b.dtype)
    b = as_tensor(b) if isinstance(b, Tensor) else Tensor(b, dtype=a.dtype)
    return a, b


def add(a, b):
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "add")
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "sub")
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data * b.data, (a, b), backward)


def div(a, b):
    a, b = _coerce(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(out, (a, b), backward)


def neg(a):
    return make_result(-a.data, (a,), lambda g: (-g,))


def scale(a, c):
    """Multiply by a Python scalar constant."""
    c = a.data.dtype.type(c)
    return make_result(a.data * c, (a,), lambda g: (g * c,))


def matmul(a, b):
    """Batched matrix product over the last two axes, broadcasting the rest."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def backward(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make_result(a.data @ b.data, (a, b), backward)


def transpose(a, axes=None):
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return make_result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, i, j):
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, axes)


def reshape(a, shape):
    shape = tuple(shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} into {shape}") from None
    return make_result(out, (a,), lambda g: (g.reshape(a.shape),))


def getitem(a, index):
    out = a.data[index]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, index, g)
        return (full,)

    return make_result(np.array(out, copy=True), (a,), backward)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(t.shape[i] != ref[i] for i in range(len(ref)) if i != ax):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=ax) for i in range(len(tensors)))

    return make_result(np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def sum(a, axis=None, keepdims=False):
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_result(np.asarray(out), (a,), backward)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return scale(sum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def exp(a):
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def log(a):
    return make_result(np.log(a.data), (a,), lambda g: (g / a.data,))


def relu(a):
    mask = a.data > 0
    return make_result(a.data * mask, (a,), lambda g: (g * mask,))


def softmax(a):
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return make_result(y, (a,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def log_softmax(a):
    z = a.data - a.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse

    def backward(g):
        return (g - np.exp(y) * g.sum(axis=-1, keepdims=True),)

    return make_result(y, (a,), backward)


def layer_norm(x, gain, bias, eps=1e-6):
    """Normalize over the last axis, then apply a learned gain and bias."""
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ShapeError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match last dim of {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data
    n = x.shape[-1]
    lead = tuple(range(x.ndim - 1))

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gain.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).sum(axis=-1, keepdims=True) / n)
        gg = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        gb = g.sum(axis=lead) if bias.requires_grad else None
        return gx, gg, gb

    return make_result(out, (x, gain, bias), backward)


def embedding_lookup(weight, ids):
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise ShapeError(f"embedding_lookup: ids outside [0, {weight.shape[0]})")

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (gw,)

    return make_result(weight.data[ids], (weight,), backward)


def dropout(x, rate, rng, training=True):
    """Inverted dropout: zero with probability ``rate``, rescale survivors."""
    if not training or rate <= 0.0:
        return x
    if rate >= 1.0:
        raise ValueError("dropout rate must be < 1")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


def masked_fill(x, mask, value):
    """Replace entries where ``mask`` (broadcastable, no gradient) is true."""
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    out = np.where(mask, x.dtype.type(value), x.data)
    return make_result(out, (x,), lambda g: (np.where(mask, 0, g),))


def _conv_geometry(size, k, stride):
    pad = (k - 1) // 2
    out = (size + 2 * pad - k) // stride + 1
    return pad, out


def _im2col(xp, kh, kw, stride, ho, wo):
    b, _, _, c = xp.shape
    sb, sh, sw, sc = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, shape=(b, ho, wo, kh, kw, c), strides=(sb, sh * stride, sw * stride, sh, sw, sc), writeable=False)
    return view.reshape(b * ho * wo, kh * kw * c)


def conv2d(x, kernel, bias=None, stride=1):
    """2-D convolution over NHWC input with zero "same" padding.

    ``kernel`` has shape ``(kh, kw, in_channels, out_channels)`` with odd
    spatial sizes; each output spatial dim is ``ceil(in / stride)``.
    """
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[-1] != kernel.shape[2]:
        raise ShapeError(f"conv2d: input {x.shape} and kernel {kernel.shape} are incompatible")
    kh, kw, cin, cout = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ShapeError(f"conv2d: kernel spatial dims must be odd, got {kh}x{kw}")
    b, h, w, _ = x.shape
    ph, ho = _conv_geometry(h, kh, stride)
    pw, wo = _conv_geometry(w, kw, stride)
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = kernel.data.reshape(kh * kw * cin, cout)
    out = (cols @ wmat).reshape(b, ho, wo, cout)
    parents = (x, kernel)
    if bias is not None:
        out = out + bias.data
        parents = parents + (bias,)

    def backward(g):
        g2 = g.reshape(-1, cout)
        gk = (cols.T @ g2).reshape(kernel.shape) if kernel.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(b, ho, wo, kh, kw, cin)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride, :] += gcols[:, :, :, i, j, :]
            gx = gxp[:, ph:ph + h, pw:pw + w, :]
        grads = (gx, gk)
        if bias is not None:
            grads = grads + (g2.sum(axis=0) if bias.requires_grad else None,)
        return grads

    return make_result(out, parents, backward)


def positional_encoding(length, dim, dtype=None):
    """Sinusoidal position table of shape ``(length, dim)``; not differentiable."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    half = dim // 2
    inv = np.exp(-np.log(10000.0) * np.arange(half, dtype=np.float64) / max(half - 1, 1))
    ang = pos * inv[None, :]
    table = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if dim % 2:
        table = np.concatenate([table, np.zeros((length, 1))], axis=1)
    return table.astype(dtype or np.float32)


def _bind_operators():
    def _r(fn):
        return lambda self, other: fn(other, self)

    Tensor.__add__ = lambda self, o: add(self, o)
    Tensor.__radd__ = _r(add)
    Tensor.__sub__ = lambda self, o: sub(self, o)
    Tensor.__rsub__ = _r(sub)
    Tensor.__mul__ = lambda self, o: mul(self, o)
    Tensor.__rmul__ = _r(mul)
    Tensor.__truediv__ = lambda self, o: div(self, o)
    Tensor.__rtruediv__ = _r(div)
    Tensor.__neg__ = neg
    Tensor.__matmul__ = matmul
    Tensor.__getitem__ = getitem
    Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
    Tensor.transpose = lambda self, *axes: transpose(self, axes or None)
    Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
    Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)


_bind_operators()
