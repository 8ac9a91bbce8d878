"""Length-bucketed batching under a padded frame/token budget."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..text import PAD


@dataclass
class Batch:
    src: np.ndarray
    src_lengths: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    tgt_mask: np.ndarray
    indices: np.ndarray

    @property
    def size(self):
        return len(self.indices)

    @property
    def padded_source(self):
        return int(self.src.shape[0] * self.src.shape[1])

    @property
    def num_target_tokens(self):
        return int(self.tgt_mask.sum())


def collate(examples) -> Batch:
    """Pad sources with zeros (features) or PAD (ids); targets are shifted for teacher forcing."""
    lengths = np.array([ex.src_len for ex in examples], dtype=np.int64)
    first = examples[0].src
    t = int(lengths.max())
    if first.ndim == 2:
        src = np.zeros((len(examples), t, first.shape[1]), dtype=np.float32)
    else:
        src = np.full((len(examples), t), PAD, dtype=np.int64)
    for i, ex in enumerate(examples):
        src[i, : ex.src_len] = ex.src
    lt = max(len(ex.tgt) for ex in examples) - 1
    tgt_in = np.full((len(examples), lt), PAD, dtype=np.int64)
    tgt_out = np.full((len(examples), lt), PAD, dtype=np.int64)
    for i, ex in enumerate(examples):
        n = len(ex.tgt) - 1
        tgt_in[i, :n] = ex.tgt[:-1]
        tgt_out[i, :n] = ex.tgt[1:]
    mask = np.zeros_like(tgt_out, dtype=bool)
    for i, ex in enumerate(examples):
        mask[i, : len(ex.tgt) - 1] = True
    return Batch(src, lengths, tgt_in, tgt_out, mask, np.array([ex.index for ex in examples], dtype=np.int64))


def bucket(examples, budget):
    """Group examples (sorted by source length) so that size * max_len <= budget.

    Returns lists of positions into ``examples``. An example longer than the
    budget on its own still forms a singleton group.
    """
    order = sorted(range(len(examples)), key=lambda i: (examples[i].src_len, i))
    groups, cur, cur_max = [], [], 0
    for i in order:
        n = examples[i].src_len
        new_max = max(cur_max, n)
        if cur and new_max * (len(cur) + 1) > budget:
            groups.append(cur)
            cur, new_max = [], n
        cur.append(i)
        cur_max = new_max
    if cur:
        groups.append(cur)
    return groups


def make_batches(examples, budget, seed=0, shuffle=True):
    """Bucket by length, then shuffle batch order deterministically from ``seed``."""
    if not examples:
        raise ValueError("make_batches needs at least one example")
    groups = bucket(examples, budget)
    if shuffle:
        perm = np.random.default_rng(seed).permutation(len(groups))
        groups = [groups[i] for i in perm]
    return [collate([examples[i] for i in g]) for g in groups]


def padding_waste(batches):
    return int(sum(b.padded_source - int(b.src_lengths.sum()) for b in batches))


def unbucketed_batches(examples, budget, seed=0):
    """Seed-shuffled order filled greedily under the same budget; the baseline for bucketing."""
    perm = np.random.default_rng(seed).permutation(len(examples))
    shuffled = [examples[i] for i in perm]
    groups, cur, cur_max = [], [], 0
    for ex in shuffled:
        new_max = max(cur_max, ex.src_len)
        if cur and new_max * (len(cur) + 1) > budget:
            groups.append(cur)
            cur, new_max = [], ex.src_len
        cur.append(ex)
        cur_max = new_max
    if cur:
        groups.append(cur)
    return [collate(g) for g in groups]
