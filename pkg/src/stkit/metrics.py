"""Corpus-level WER and BLEU."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass

from . import _kernels

MAX_ORDER = 4


def edit_distance(ref, hyp):
    """Word-level Levenshtein distance with unit costs."""
    ids = {}
    a = [ids.setdefault(w, len(ids)) for w in ref]
    b = [ids.setdefault(w, len(ids)) for w in hyp]
    return _kernels.edit_distance(a, b)


def _words(x):
    return x.split() if isinstance(x, str) else list(x)


def wer(refs, hyps):
    """Total word edits over total reference words; can exceed 1.

    No normalization is applied: case and punctuation count as written.
    """
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("WER of an empty corpus is undefined")
    edits = total = 0
    for r, h in zip(refs, hyps):
        r, h = _words(r), _words(h)
        edits += edit_distance(r, h)
        total += len(r)
    if total == 0:
        raise ValueError("WER needs at least one reference word")
    return edits / total


def tokenize_13a(line):
    """mteval-v13a style tokenization: isolate punctuation, keep decimal points and thousands commas."""
    norm = line.replace("<skipped>", "").replace("-\n", "").replace("\n", " ")
    norm = norm.replace("&quot;", '"').replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">")
    norm = f" {norm} "
    norm = re.sub(r"([\{-\~\[-\` -\&\(-\+\:-\@\/])", r" \1 ", norm)
    norm = re.sub(r"([^0-9])([\.,])", r"\1 \2 ", norm)
    norm = re.sub(r"([\.,])([^0-9])", r" \1 \2", norm)
    norm = re.sub(r"([0-9])(-)", r"\1 \2 ", norm)
    return norm.split()


@dataclass
class BleuMode:
    case_sensitive: bool = True
    tokenize: bool = True  # True: detokenized input, apply the 13a tokenizer; False: split on whitespace

    @classmethod
    def parse(cls, case="sensitive", tok="detok"):
        if case not in ("sensitive", "insensitive") or tok not in ("tok", "detok"):
            raise ValueError(f"unknown BLEU mode case={case!r} tok={tok!r}")
        return cls(case == "sensitive", tok == "detok")


@dataclass
class BleuResult:
    score: float
    precisions: list
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: list
    totals: list

    def __str__(self):
        return f"BLEU = {self.score:.2f}"


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def brevity_penalty(hyp_len, ref_len):
    if hyp_len == 0:
        return 0.0
    return math.exp(min(0.0, 1.0 - ref_len / hyp_len))


def corpus_bleu(refs, hyps, mode: BleuMode | None = None) -> BleuResult:
    """Unsmoothed corpus BLEU-4 against a single reference per hypothesis.

    Any zero n-gram precision gives a score of 0.
    """
    mode = mode or BleuMode()
    refs, hyps = list(refs), list(hyps)
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} references but {len(hyps)} hypotheses")
    if not refs:
        raise ValueError("BLEU needs at least one segment")
    matches = [0] * MAX_ORDER
    totals = [0] * MAX_ORDER
    hyp_len = ref_len = 0
    for r, h in zip(refs, hyps):
        if not mode.case_sensitive:
            r, h = r.lower(), h.lower()
        rt = tokenize_13a(r) if mode.tokenize else r.split()
        ht = tokenize_13a(h) if mode.tokenize else h.split()
        hyp_len += len(ht)
        ref_len += len(rt)
        for n in range(1, MAX_ORDER + 1):
            hc, rc = _ngrams(ht, n), _ngrams(rt, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(ht) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    bp = brevity_penalty(hyp_len, ref_len)
    # orders for which the hypotheses contain no n-grams at all are left out
    # of the geometric mean instead of zeroing it
    used = [p for p, t in zip(precisions, totals) if t]
    if not used or min(used) == 0.0:
        score = 0.0
    else:
        score = 100.0 * bp * math.exp(sum(math.log(p) for p in used) / len(used))
    return BleuResult(score, precisions, bp, hyp_len, ref_len, matches, totals)


def bleu(refs, hyps, mode: BleuMode | None = None) -> float:
    return corpus_bleu(refs, hyps, mode).score


def format_score(metric, value):
    if metric == "bleu":
        return f"BLEU = {value:.2f}"
    if metric == "wer":
        return f"WER = {value:.3f}"
    raise ValueError(f"unknown metric {metric!r}")
