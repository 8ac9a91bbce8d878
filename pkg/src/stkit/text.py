"""Tokenization, source normalization, BPE and the shared vocabulary."""
from __future__ import annotations

import hashlib
import re
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from . import _kernels

END_OF_WORD = "</w>"
CONTINUATION = "@@"

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Split on whitespace and isolate every punctuation/symbol character."""
    return _TOKEN_RE.findall(text)


def _is_punct(ch):
    return unicodedata.category(ch).startswith("P")


def normalize_source(text: str) -> str:
    """Drop punctuation, lowercase and collapse whitespace."""
    stripped = "".join(ch for ch in text if not _is_punct(ch))
    return " ".join(stripped.lower().split())


_NO_SPACE_BEFORE = set(".,!?;:%)]}»")
_NO_SPACE_AFTER = set("([{«¿¡")


def detokenize(tokens: list[str]) -> str:
    """Inverse of :func:`tokenize` for the common Western punctuation cases."""
    out = ""
    glue_next = False
    for tok in tokens:
        if not out:
            out = tok
        elif glue_next or tok in _NO_SPACE_BEFORE or tok in ("'",) or out.endswith("'"):
            out += tok
        else:
            out += " " + tok
        glue_next = tok in _NO_SPACE_AFTER
    return out


@dataclass
class BpeModel:
    merges: list[tuple[str, str]] = field(default_factory=list)
    end_of_word_marker: str = END_OF_WORD

    def __post_init__(self):
        self.merges = [tuple(m) for m in self.merges]
        if len(set(self.merges)) != len(self.merges):
            raise ValueError("duplicate merge pairs in BPE model")
        self.ranks = {pair: i for i, pair in enumerate(self.merges)}
        self._cache = {}

    def __len__(self):
        return len(self.merges)

    def segment_word(self, word: str) -> list[str]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        symbols = list(word[:-1]) + [word[-1] + self.end_of_word_marker]
        symbols = _kernels.bpe_merge(symbols, self.ranks)
        last = symbols[-1][: -len(self.end_of_word_marker)]
        pieces = [s + CONTINUATION for s in symbols[:-1]]
        if last:
            pieces.append(last)
        else:
            # a standalone end-of-word marker cannot occur with these merges
            pieces[-1] = pieces[-1][: -len(CONTINUATION)]
        self._cache[word] = pieces
        return pieces

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for left, right in self.merges:
                f.write(f"{left} {right}\n")

    @classmethod
    def load(cls, path):
        merges = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'left right', got {line!r}")
                merges.append((parts[0], parts[1]))
        return cls(merges)


def _initial_word(word):
    return tuple(word[:-1]) + (word[-1] + END_OF_WORD,)


def _pair_counts(vocab):
    counts = Counter()
    for word, freq in vocab.items():
        for pair in zip(word, word[1:]):
            counts[pair] += freq
    return counts


def learn_bpe(word_freqs: dict[str, int], num_merges: int, min_frequency: int = 2) -> BpeModel:
    """Learn BPE merges greedily from word frequencies.

    The most frequent adjacent symbol pair is merged at each step, ties going
    to the lexicographically smallest pair. Learning stops early once no pair
    occurs at least ``min_frequency`` times.
    """
    if num_merges < 0:
        raise ValueError("num_merges must be nonnegative")
    vocab = {_initial_word(w): c for w, c in word_freqs.items() if w and c > 0}
    if not vocab:
        raise ValueError("cannot learn BPE from an empty corpus")
    words = list(vocab.items())
    stats = _pair_counts(vocab)
    index = defaultdict(set)
    for i, (word, _) in enumerate(words):
        for pair in zip(word, word[1:]):
            index[pair].add(i)

    merges = []
    for _ in range(num_merges):
        if not stats:
            break
        best_count = max(stats.values())
        if best_count < max(min_frequency, 1):
            break
        best = min(p for p, c in stats.items() if c == best_count)
        merges.append(best)
        left, right = best
        for i in list(index[best]):
            word, freq = words[i]
            if best not in zip(word, word[1:]):
                continue
            new_word = _kernels.replace_pair(word, left, right)
            for pair in zip(word, word[1:]):
                stats[pair] -= freq
                if stats[pair] <= 0:
                    del stats[pair]
            for pair in zip(new_word, new_word[1:]):
                stats[pair] += freq
                index[pair].add(i)
            words[i] = (new_word, freq)
        stats.pop(best, None)
        index.pop(best, None)
    return BpeModel(merges)


def word_counts(sentences) -> Counter:
    counts = Counter()
    for sent in sentences:
        counts.update(sent if isinstance(sent, list) else sent.split())
    return counts


def apply_bpe(tokens: list[str], model: BpeModel) -> list[str]:
    out = []
    for tok in tokens:
        out.extend(model.segment_word(tok))
    return out


def de_bpe(subwords: list[str]) -> list[str]:
    """Join ``@@``-continued pieces back into whole tokens."""
    out = []
    buf = ""
    for piece in subwords:
        if piece.endswith(CONTINUATION):
            buf += piece[: -len(CONTINUATION)]
        else:
            out.append(buf + piece)
            buf = ""
    if buf:
        out.append(buf)
    return out


class Vocabulary:
    """Token/id mapping with fixed reserved ids PAD=0, BOS=1, EOS=2, UNK=3."""

    def __init__(self, tokens=()):
        self.itos = list(RESERVED)
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        for tok in tokens:
            if tok in self.stoi:
                raise ValueError(f"duplicate token {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def encode(self, tokens):
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids, strip_special=True):
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD, BOS, EOS):
                continue
            out.append(self.itos[i] if 0 <= i < len(self.itos) else RESERVED[UNK])
        return out

    def fingerprint(self) -> str:
        h = hashlib.sha256("\n".join(self.itos).encode("utf-8"))
        return h.hexdigest()[:16]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for i, tok in enumerate(self.itos):
                f.write(f"{tok}\t{i}\n")

    @classmethod
    def load(cls, path):
        entries = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                line = line.rstrip("\n")
                if not line:
                    continue
                tok, _, idx = line.rpartition("\t")
                if not _:
                    raise ValueError(f"{path}:{lineno}: expected 'token<TAB>id'")
                entries.append((int(idx), tok))
        entries.sort()
        if [i for i, _ in entries] != list(range(len(entries))):
            raise ValueError(f"{path}: ids are not dense from 0")
        if tuple(t for _, t in entries[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: reserved tokens missing or out of place")
        return cls(t for _, t in entries[len(RESERVED):])


def build_vocab(corpus) -> Vocabulary:
    """Vocabulary over subword sequences, by descending frequency then lexicographic."""
    counts = Counter()
    for seq in corpus:
        counts.update(seq)
    if not counts:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ordered = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary(tok for tok, _ in ordered if tok not in RESERVED)


@dataclass
class TextProcessor:
    """Tokenize, optionally normalize, BPE and map to ids; and the way back."""

    bpe: BpeModel
    vocab: Vocabulary
    source_side: bool = False

    def pieces(self, text: str) -> list[str]:
        if self.source_side:
            text = normalize_source(text)
        return apply_bpe(tokenize(text), self.bpe)

    def encode(self, text: str) -> list[int]:
        return self.vocab.encode(self.pieces(text))

    def decode(self, ids) -> str:
        return detokenize(de_bpe(self.vocab.decode(ids)))

    def decode_tokens(self, ids) -> list[str]:
        return de_bpe(self.vocab.decode(ids))
