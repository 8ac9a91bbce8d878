"""Central finite-difference gradient checks, run in 64-bit precision."""
from __future__ import annotations

import numpy as np

from . import ops
from .core import Tensor, backprop, precision


def relative_error(analytic, numeric, floor=1e-6):
    """Max-abs discrepancy over the larger of the two gradients' max-abs (floored)."""
    analytic, numeric = np.asarray(analytic, np.float64), np.asarray(numeric, np.float64)
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_grad(fn, array, h=1e-6):
    """d fn() / d array by central differences; ``array`` is perturbed in place and restored."""
    grad = np.zeros_like(array, dtype=np.float64)
    flat, gflat = array.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = fn()
        flat[i] = old - h
        down = fn()
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def check_gradients(fn, inputs, seed=0, h=1e-6):
    """Compare backprop against finite differences for ``fn(*inputs)``.

    ``inputs`` are arrays; a non-scalar output is reduced with a fixed random
    projection. Returns the relative error per input.
    """
    with precision(np.float64):
        tensors = [Tensor(np.array(x, dtype=np.float64), requires_grad=True) for x in inputs]
        out = fn(*tensors)
        proj = np.random.default_rng(seed).normal(size=out.shape) if out.size != 1 else None

        def scalar(t):
            return ops.sum(ops.mul(t, Tensor(proj))) if proj is not None else ops.sum(t)

        backprop(scalar(out), tensors)
        errors = []
        for t in tensors:
            num = numeric_grad(lambda: float(scalar(fn(*tensors)).item()), t.data, h)
            errors.append(relative_error(t.grad, num))
    return errors


def check_parameter_gradients(loss_fn, params: dict, h=1e-6):
    """Relative error per named parameter for a scalar ``loss_fn()`` closing over ``params``."""
    for p in params.values():
        p.grad = None
    backprop(loss_fn(), list(params.values()))
    return {name: relative_error(p.grad, numeric_grad(lambda: float(loss_fn().item()), p.data, h))
            for name, p in params.items()}
