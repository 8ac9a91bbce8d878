"""Dense tensors with a reverse-mode differentiation graph."""
from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ContractError

_state = {"grad_enabled": True, "dtype": np.float32}


def default_dtype():
    return _state["dtype"]


def set_default_dtype(dtype):
    _state["dtype"] = np.dtype(dtype).type


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the default float type (``float64`` for gradient checks)."""
    old = _state["dtype"]
    set_default_dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = old


def is_grad_enabled():
    return _state["grad_enabled"]


@contextlib.contextmanager
def no_grad():
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


class Tensor:
    """A numpy array plus an optional gradient and the op that produced it."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, dtype=None, name=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is None:
            arr = np.asarray(data)
            dtype = arr.dtype if arr.dtype.kind == "f" else default_dtype()
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def __len__(self):
        return self.data.shape[0]

    # Operators are bound in ops.py to keep this module dependency-free.

    def backward(self):
        backprop(self)


def make_result(data, parents, backward):
    """Wrap ``data`` as the output of an op.

    ``backward(grad)`` must return one gradient (or ``None``) per parent.
    """
    out = Tensor(data, dtype=data.dtype if data.dtype.kind == "f" else None)
    if _state["grad_enabled"] and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype or default_dtype())


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backprop(loss: Tensor, params=None):
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable leaf.

    When ``params`` is given, any of them not reached by the graph receives
    an all-zero gradient, and the list of their gradients is returned.
    """
    if loss.size != 1:
        raise ContractError(f"backprop needs a scalar loss, got shape {loss.shape}")
    if loss.requires_grad:
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(_topological_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ContractError(f"gradient shape {pg.shape} does not match {parent.shape}")
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
    if params is None:
        return None
    out = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        out.append(p.grad)
    return out
