import itertools

import numpy as np
import pytest

from stkit.errors import ContractError
from stkit.executor import EnsembleScorer, PrefixScorer, beam_search, decode, ensemble_decode, greedy_decode
from stkit.executor.decoding import default_max_len
from stkit.models import Transformer
from stkit.text import BOS, EOS

from conftest import tiny_config, toy_logprob_table


def toy_scorer(table, vocab):
    return PrefixScorer(lambda p: table[p[1:]], vocab)


def exhaustive_best(table, vocab, max_len):
    """Score every EOS-terminated or length-capped sequence; ties to the lower id sequence."""
    best = None
    for n in range(1, max_len + 1):
        for body in itertools.product(range(vocab), repeat=n):
            if EOS in body[:-1]:
                continue
            if n < max_len and body[-1] != EOS:
                continue
            score = sum(table[body[:i]][body[i]] for i in range(n))
            key = (-score, (BOS,) + body)
            if best is None or key < best:
                best = key
    return best


@pytest.mark.parametrize("seed", range(100))
def test_beam_one_is_greedy(seed):
    rng = np.random.default_rng(seed)
    table = toy_logprob_table(rng, 5, 3, peaked=bool(seed % 2))
    g = greedy_decode(toy_scorer(table, 5), max_len=4)
    b = beam_search(toy_scorer(table, 5), beam=1, max_len=4)
    assert b.tokens == g.tokens
    assert b.score == pytest.approx(g.score, abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_beam_four_matches_exhaustive_search(seed):
    rng = np.random.default_rng(1000 + seed)
    table = toy_logprob_table(rng, 5, 2, peaked=True)
    neg, tokens = exhaustive_best(table, 5, 3)
    hyp = beam_search(toy_scorer(table, 5), beam=4, max_len=3)
    assert hyp.tokens == tokens
    assert hyp.score == pytest.approx(-neg, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_wider_beam_never_scores_below_greedy(seed):
    rng = np.random.default_rng(seed)
    table = toy_logprob_table(rng, 5, 3, peaked=False)
    g = greedy_decode(toy_scorer(table, 5), max_len=4)
    b = beam_search(toy_scorer(table, 5), beam=4, max_len=4)
    assert b.score >= g.score - 1e-12


def test_nbest_is_sorted_and_bounded():
    table = toy_logprob_table(np.random.default_rng(3), 5, 3, peaked=False)
    best, nbest = beam_search(toy_scorer(table, 5), beam=4, max_len=4, return_nbest=True)
    assert 1 <= len(nbest) <= 4
    assert nbest[0] == best
    scores = [h.score for h in nbest]
    assert scores == sorted(scores, reverse=True)
    assert all(h.tokens[0] == BOS for h in nbest)


def test_ties_go_to_the_lower_ids():
    tied = lambda p: np.log(np.array([0.1, 0.0, 0.0, 0.45, 0.45]) + 1e-300)
    assert beam_search(PrefixScorer(tied, 5), beam=3, max_len=1).tokens == (BOS, 3)
    assert greedy_decode(PrefixScorer(tied, 5), max_len=1).tokens == (BOS, 3)
    flat = lambda p: np.log(np.full(5, 0.2))
    # all lengths tie per token, so the shortest finished sequence wins
    assert beam_search(PrefixScorer(flat, 5), beam=3, max_len=3).tokens == (BOS, EOS)


def test_eos_first_gives_empty_body():
    def fn(p):
        out = np.full(5, -20.0)
        out[EOS] = 0.0
        return out
    hyp = beam_search(PrefixScorer(fn, 5), beam=4, max_len=5)
    assert hyp.body == () and hyp.finished


def test_invalid_arguments():
    scorer = PrefixScorer(lambda p: np.zeros(5), 5)
    with pytest.raises(ValueError):
        beam_search(scorer, beam=0)
    with pytest.raises(ValueError):
        beam_search(scorer, length_penalty=1.0)
    with pytest.raises(ContractError):
        EnsembleScorer([])
    with pytest.raises(ContractError):
        EnsembleScorer([PrefixScorer(lambda p: np.zeros(5), 5), PrefixScorer(lambda p: np.zeros(6), 6)])


def test_ensemble_is_log_mean_probability():
    rng = np.random.default_rng(0)
    t1, t2 = (toy_logprob_table(rng, 5, 2, peaked=False) for _ in range(2))
    ens = EnsembleScorer([toy_scorer(t1, 5), toy_scorer(t2, 5)])
    logp, _ = ens.step(ens.initial_state(), np.array([BOS]))
    np.testing.assert_allclose(np.exp(logp[0]), (np.exp(t1[()]) + np.exp(t2[()])) / 2, rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_ensemble_of_identical_toy_models_is_the_single_model(seed):
    table = toy_logprob_table(np.random.default_rng(seed), 5, 3, peaked=False)
    single = beam_search(toy_scorer(table, 5), beam=4, max_len=4)
    ens = beam_search(EnsembleScorer([toy_scorer(table, 5)] * 3), beam=4, max_len=4)
    assert ens.tokens == single.tokens
    assert ens.score == pytest.approx(single.score, abs=1e-9)


@pytest.fixture(scope="module")
def mt_model():
    return Transformer(tiny_config("mt", 12), seed=4)


def test_ensemble_of_identical_models_matches_single(mt_model):
    src = np.array([5, 6, 7, 8])
    one = decode(mt_model, src, beam=3, max_len=6)
    two = ensemble_decode([mt_model, mt_model], src, beam=3, max_len=6)
    assert one.tokens == two.tokens
    assert one.score == pytest.approx(two.score, abs=1e-5)


def test_model_beam_one_equals_greedy(mt_model):
    src = np.array([4, 9, 10])
    g = decode(mt_model, src, beam=1, max_len=8)
    b = decode(mt_model, src, beam=1, max_len=8, return_nbest=True)[0]
    assert g.tokens == b.tokens


def test_ensemble_vocab_mismatch(mt_model):
    with pytest.raises(ContractError):
        ensemble_decode([mt_model, Transformer(tiny_config("mt", 13))], np.array([4]))


def test_default_max_len():
    assert default_max_len(10, 2048) == 70
    assert default_max_len(2000, 2048) == 2048
