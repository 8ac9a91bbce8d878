from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from . import ops
from .core import Tensor


def label_smoothed_ce(logits: Tensor, targets, epsilon=0.1, mask=None):
    """Mean label-smoothed cross-entropy over unmasked positions.

    The target distribution puts ``1 - epsilon`` on the gold id and spreads
    ``epsilon`` uniformly over the remaining ``V - 1`` ids. Returns
    ``(loss, nll)`` where ``nll`` is the unsmoothed gold-token cross-entropy
    as a float, for logging.
    """
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"targets {targets.shape} do not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise ValueError(f"target ids must lie in [0, {vocab})")
    mask = np.ones(targets.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    count = max(int(mask.sum()), 1)
    dtype = logits.dtype
    q = np.full(logits.shape, epsilon / (vocab - 1) if vocab > 1 else 0.0, dtype=dtype)
    np.put_along_axis(q, targets[..., None], 1.0 - epsilon, axis=-1)
    q *= mask[..., None]
    logp = ops.log_softmax(logits)
    loss = ops.scale(ops.sum(ops.mul(logp, Tensor(q, dtype=dtype))), -1.0 / count)
    gold = np.take_along_axis(logp.data, targets[..., None], axis=-1)[..., 0]
    nll = float(-(gold * mask).sum() / count)
    return loss, nll
