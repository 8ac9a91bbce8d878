"""Parameter containers and Transformer building blocks."""
from __future__ import annotations

import math

import numpy as np

from ..tensor import Tensor, default_dtype, ops

NEG_INF = -1e9


def xavier_uniform(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Module:
    """Holds named parameters and child modules; names join with dots."""

    def __init__(self):
        self._params = {}
        self._children = {}
        self.training = True

    def add_param(self, name, value):
        t = Tensor(np.asarray(value, dtype=default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def named_parameters(self, prefix=""):
        out = {}
        for name, p in self._params.items():
            out[prefix + name] = p
        for name, child in self._children.items():
            out.update(child.named_parameters(prefix + name + "."))
        return out

    def modules(self):
        yield self
        for child in self._children.values():
            yield from child.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)


class Dense(Module):
    def __init__(self, rng, in_dim, out_dim, bias=True):
        super().__init__()
        self.kernel = self.add_param("kernel", xavier_uniform(rng, (in_dim, out_dim), in_dim, out_dim))
        self.bias = self.add_param("bias", np.zeros(out_dim)) if bias else None

    def __call__(self, x):
        y = ops.matmul(x, self.kernel)
        return ops.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-6):
        super().__init__()
        self.eps = eps
        self.gain = self.add_param("gain", np.ones(dim))
        self.bias = self.add_param("bias", np.zeros(dim))

    def __call__(self, x):
        return ops.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout:
    """Shared dropout helper; ``owner.training`` and ``rng`` decide whether it fires."""

    def __init__(self, rate, owner):
        self.rate = rate
        self.owner = owner

    def __call__(self, x):
        rng = getattr(self.owner, "rng", None)
        if not self.owner.training or self.rate <= 0 or rng is None:
            return x
        return ops.dropout(x, self.rate, rng)


class MultiHeadAttention(Module):
    """Scaled dot-product attention with separate q/k/v/o projections."""

    _PROJ = ("q", "k", "v", "o")

    def __init__(self, rng, d_model, num_heads, dropout_rate=0.0, root=None):
        super().__init__()
        self.d_model = d_model
        self.num_heads = num_heads
        self.head_dim = d_model // num_heads
        for p in self._PROJ:
            self.add_param(f"{p}_kernel", xavier_uniform(rng, (d_model, d_model), d_model, d_model))
            self.add_param(f"{p}_bias", np.zeros(d_model))
        self.dropout = Dropout(dropout_rate, root or self)

    def _project(self, x, p):
        return ops.add(ops.matmul(x, self._params[f"{p}_kernel"]), self._params[f"{p}_bias"])

    def _split(self, x):
        b, t, _ = x.shape
        return ops.transpose(ops.reshape(x, (b, t, self.num_heads, self.head_dim)), (0, 2, 1, 3))

    def _merge(self, x):
        b, _, t, _ = x.shape
        return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (b, t, self.d_model))

    def project_kv(self, memory):
        return self._split(self._project(memory, "k")), self._split(self._project(memory, "v"))

    def attend(self, query, k, v, bias=None):
        """``query`` is (B, Tq, d); ``k``/``v`` are already split (B, H, Tk, dh).

        ``bias`` is an additive constant broadcastable to (B, H, Tq, Tk).
        """
        q = ops.scale(self._split(self._project(query, "q")), 1.0 / math.sqrt(self.head_dim))
        scores = ops.matmul(q, ops.swapaxes(k, -1, -2))
        if bias is not None:
            scores = ops.add(scores, Tensor(bias, dtype=scores.dtype))
        probs = self.dropout(ops.softmax(scores))
        ctx = self._merge(ops.matmul(probs, v))
        return self._project(ctx, "o")

    def __call__(self, query, memory, bias=None):
        k, v = self.project_kv(memory)
        return self.attend(query, k, v, bias)


class FeedForward(Module):
    def __init__(self, rng, d_model, ffn_dim, dropout_rate=0.0, root=None):
        super().__init__()
        self.dense1 = self.add_child("dense1", Dense(rng, d_model, ffn_dim))
        self.dense2 = self.add_child("dense2", Dense(rng, ffn_dim, d_model))
        self.dropout = Dropout(dropout_rate, root or self)

    def __call__(self, x):
        return self.dense2(self.dropout(ops.relu(self.dense1(x))))


def padding_bias(valid):
    """(B, Tk) validity mask -> additive bias (B, 1, 1, Tk)."""
    valid = np.asarray(valid, dtype=bool)
    return np.where(valid, 0.0, NEG_INF)[:, None, None, :]


def causal_bias(length, offset=0):
    """(1, 1, L, offset + L) bias letting position i see keys <= offset + i."""
    q = np.arange(length)[:, None] + offset
    k = np.arange(offset + length)[None, :]
    return np.where(k <= q, 0.0, NEG_INF)[None, None]
