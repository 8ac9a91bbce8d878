import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stkit.metrics import BleuMode, bleu, corpus_bleu, edit_distance, format_score, tokenize_13a, wer


def dp_edit_distance(a, b):
    """Textbook O(nm) table, written independently of the kernels."""
    d = [[i + j if i * j == 0 else 0 for j in range(len(b) + 1)] for i in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return d[-1][-1]


def test_wer_fixtures():
    assert wer(["a b c"], ["a b c"]) == 0.0
    assert wer(["a b c"], ["a c"]) == pytest.approx(1 / 3, abs=1e-6)
    assert wer(["a b c"], [""]) == 1.0
    assert wer(["a"], ["b c d"]) == 3.0


def test_wer_does_not_normalize():
    assert wer(["Hello world"], ["hello world"]) == 0.5


def test_wer_errors():
    with pytest.raises(ValueError):
        wer([], [])
    with pytest.raises(ValueError):
        wer([""], ["a"])
    with pytest.raises(ValueError):
        wer(["a"], ["a", "b"])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abcd"), max_size=12), st.lists(st.sampled_from("abcd"), max_size=12))
def test_edit_distance_matches_table(a, b):
    assert edit_distance(a, b) == dp_edit_distance(a, b)


def test_bleu_fixtures():
    assert bleu(["the cat sat on the mat"], ["the cat sat on the mat"]) == 100.0
    res = corpus_bleu(["the cat sat"], ["the cat sat down"])
    assert res.precisions == [3 / 4, 2 / 3, 1 / 2, 0.0]
    assert res.score == 0.0
    short = corpus_bleu(["the cat sat down"], ["the cat sat"])
    assert short.brevity_penalty == pytest.approx(math.exp(1 - 4 / 3), abs=1e-12)
    assert short.precisions[:3] == [1.0, 1.0, 1.0]


def test_bleu_hand_computed():
    refs = ["a b c d e f", "x y z w"]
    hyps = ["a b c d x f", "x y z w"]
    # 1-grams 9/10, 2-grams 6/8, 3-grams 4/6, 4-grams 2/4; lengths equal
    res = corpus_bleu(refs, hyps)
    expected = 100 * math.exp((math.log(0.9) + math.log(0.75) + math.log(2 / 3) + math.log(0.5)) / 4)
    assert res.score == pytest.approx(expected, abs=1e-6)
    assert res.brevity_penalty == 1.0


def test_bleu_zero_four_gram_matches():
    assert bleu(["a b c d e"], ["e d c b a"]) == 0.0


def test_bleu_length_mismatch():
    with pytest.raises(ValueError):
        bleu(["a"], ["a", "b"])
    with pytest.raises(ValueError):
        bleu([], [])


def test_13a_tokenizer():
    assert tokenize_13a("Hello, world!") == ["Hello", ",", "world", "!"]
    assert tokenize_13a("It costs 3.50 or 1,000.") == ["It", "costs", "3.50", "or", "1,000", "."]


def test_detok_mode_isolates_punctuation():
    tok = BleuMode.parse(tok="tok")
    assert bleu(["Bonjour , le monde ."], ["Bonjour, le monde."]) == 100.0
    assert bleu(["Bonjour , le monde ."], ["Bonjour, le monde."], tok) < 100.0


def test_identity_is_100_in_every_mode():
    refs = ["Un deux trois quatre.", "Cinq six, sept huit neuf!"]
    for case in ("sensitive", "insensitive"):
        for tok in ("tok", "detok"):
            assert bleu(refs, refs, BleuMode.parse(case, tok)) == 100.0
    with pytest.raises(ValueError):
        BleuMode.parse("upper")


words = st.sampled_from(["Le", "le", "chat", "Chat", "dort", "DORT", "ici", "."])
sentences = st.lists(words, min_size=4, max_size=10).map(" ".join)
corpus = st.lists(st.tuples(sentences, sentences), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(corpus, st.randoms(use_true_random=False))
def test_bleu_is_permutation_invariant(pairs, rnd):
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    a = bleu([r for r, _ in pairs], [h for _, h in pairs])
    b = bleu([r for r, _ in shuffled], [h for _, h in shuffled])
    assert a == pytest.approx(b, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(corpus)
def test_case_insensitive_bleu_is_not_lower(pairs):
    refs, hyps = [r for r, _ in pairs], [h for _, h in pairs]
    lower = bleu(refs, hyps, BleuMode.parse("insensitive"))
    assert lower >= bleu(refs, hyps, BleuMode.parse("sensitive")) - 1e-9


def test_format_score():
    assert format_score("bleu", 100) == "BLEU = 100.00"
    assert format_score("wer", 1 / 3) == "WER = 0.333"
    with pytest.raises(ValueError):
        format_score("ter", 1)
