"""Greedy and beam-search decoding over step-wise scorers, plus ensembling.

A scorer exposes ``vocab_size``, ``initial_state()``, ``step(state, tokens)
-> (log_probs (n, V), state)`` and ``reorder(state, index) -> state``. The
first ``step`` call receives the BOS token for a single hypothesis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError
from ..text import BOS, EOS


@dataclass
class BeamHypothesis:
    tokens: tuple
    score: float

    @property
    def body(self):
        """Tokens without the BOS/EOS framing."""
        toks = self.tokens[1:]
        return toks[:-1] if toks and toks[-1] == EOS else toks

    @property
    def finished(self):
        return len(self.tokens) > 1 and self.tokens[-1] == EOS


def _rank_key(score, tokens):
    return (-score, tokens)


class PrefixScorer:
    """Adapts ``fn(prefix tuple) -> log-probs (V,)`` to the scorer protocol; used for toy models."""

    def __init__(self, fn, vocab_size):
        self.fn = fn
        self.vocab_size = vocab_size

    def initial_state(self):
        return [()]

    def step(self, state, tokens):
        prefixes = [p + (int(t),) for p, t in zip(state, tokens)]
        return np.stack([np.asarray(self.fn(p), dtype=np.float64) for p in prefixes]), prefixes

    def reorder(self, state, index):
        return [state[i] for i in index]


class EnsembleScorer:
    """Per step, the log of the arithmetic mean of member probabilities."""

    def __init__(self, scorers):
        if not scorers:
            raise ContractError("an ensemble needs at least one model")
        sizes = {s.vocab_size for s in scorers}
        if len(sizes) != 1:
            raise ContractError(f"ensemble members disagree on target vocabulary size: {sorted(sizes)}")
        self.scorers = list(scorers)
        self.vocab_size = sizes.pop()

    def initial_state(self):
        return [s.initial_state() for s in self.scorers]

    def step(self, state, tokens):
        outs = [s.step(st, tokens) for s, st in zip(self.scorers, state)]
        logps = np.stack([o[0] for o in outs])
        if len(self.scorers) == 1:
            mixed = logps[0]
        else:
            peak = logps.max(axis=0)
            mixed = peak + np.log(np.exp(logps - peak).mean(axis=0))
        return mixed, [o[1] for o in outs]

    def reorder(self, state, index):
        return [s.reorder(st, index) for s, st in zip(self.scorers, state)]


def beam_search(scorer, beam=4, max_len=100, length_penalty=0.0, return_nbest=False):
    """Length-synchronous beam search.

    Hypotheses finish on EOS or when ``max_len`` tokens have been generated.
    Finished hypotheses are ranked by raw cumulative log-probability (the
    only supported length penalty is 0), ties going to the lower token-id
    sequence. Returns the best hypothesis, or ``(best, nbest)``.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    if length_penalty != 0.0:
        raise ValueError("only length_penalty=0 is supported")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    state = scorer.initial_state()
    alive = [((BOS,), 0.0)]
    last = np.array([BOS], dtype=np.int64)
    finished = []
    for t in range(max_len):
        logp, state = scorer.step(state, last)
        scores = np.array([s for _, s in alive])[:, None] + logp
        candidates = []
        for i, (prefix, _) in enumerate(alive):
            row = scores[i]
            # only the top (beam + 1) tokens of a row can survive the global cut;
            # a stable sort keeps equal scores in token-id order
            for v in np.argsort(-row, kind="stable")[: beam + 1]:
                candidates.append((float(row[v]), prefix + (int(v),), i))
        candidates.sort(key=lambda c: _rank_key(c[0], c[1]))
        new_alive, parents = [], []
        final_step = t == max_len - 1
        for rank, (score, tokens, parent) in enumerate(candidates):
            if tokens[-1] == EOS or final_step:
                if rank < beam:
                    finished.append(BeamHypothesis(tokens, score))
            elif len(new_alive) < beam:
                new_alive.append((tokens, score))
                parents.append(parent)
            if len(new_alive) >= beam and rank >= beam - 1:
                break
        if not new_alive:
            break
        finished.sort(key=lambda h: _rank_key(h.score, h.tokens))
        finished = finished[:beam]
        # extending can only lower a score, so a full finished list that beats
        # every alive prefix is final
        best_alive = max(s for _, s in new_alive)
        if len(finished) >= beam and finished[-1].score >= best_alive:
            break
        alive = new_alive
        state = scorer.reorder(state, parents)
        last = np.array([tok[-1] for tok, _ in alive], dtype=np.int64)
    finished.sort(key=lambda h: _rank_key(h.score, h.tokens))
    if not finished:
        raise ContractError("beam search produced no hypothesis")
    nbest = finished[:beam]
    return (nbest[0], nbest) if return_nbest else nbest[0]


def greedy_decode(scorer, max_len=100):
    """Argmax at each step (ties to the lower id) until EOS or ``max_len`` tokens."""
    state = scorer.initial_state()
    tokens = (BOS,)
    score = 0.0
    for _ in range(max_len):
        logp, state = scorer.step(state, np.array([tokens[-1]], dtype=np.int64))
        v = int(np.argmax(logp[0]))
        score += float(logp[0, v])
        tokens = tokens + (v,)
        if v == EOS:
            break
    return BeamHypothesis(tokens, score)


def default_max_len(memory_length, max_positions):
    return min(2 * int(memory_length) + 50, max_positions)


def model_scorer(model, src, src_len=None):
    """Encode one source (frames x dims features or 1-D ids) and wrap the model as a scorer."""
    from ..tensor import no_grad

    src = np.asarray(src)
    n = src.shape[0] if src_len is None else src_len
    model.eval()
    with no_grad():
        memory, valid = model.encode(src[None, :n], np.array([n]))
    return model.incremental_decoder(memory, valid), memory.shape[1]


def decode(models, src, beam=4, max_len=None, return_nbest=False):
    """Beam-decode one source with one model or an ensemble (list) of models."""
    models = models if isinstance(models, (list, tuple)) else [models]
    scorers, mem_len = [], 0
    for m in models:
        s, mem_len = model_scorer(m, src)
        scorers.append(s)
    scorer = scorers[0] if len(scorers) == 1 else EnsembleScorer(scorers)
    if max_len is None:
        max_len = default_max_len(mem_len, min(m.cfg.max_positions for m in models))
    if beam == 1 and not return_nbest:
        return greedy_decode(scorer, max_len)
    return beam_search(scorer, beam, max_len, return_nbest=return_nbest)


def ensemble_decode(models, src, beam=4, max_len=None):
    if len({m.cfg.tgt_vocab_size for m in models}) != 1:
        raise ContractError("ensemble members must share the target vocabulary")
    return decode(list(models), src, beam, max_len)
