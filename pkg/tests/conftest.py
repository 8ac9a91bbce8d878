import numpy as np
import pytest

from stkit import _kernels
from stkit.data import TaskSpec, synth_corpus, task_map
from stkit.models import Transformer, TransformerConfig
from stkit.text import apply_bpe, build_vocab, learn_bpe, normalize_source, tokenize, word_counts


@pytest.fixture(params=sorted(_kernels.implementations()))
def kernels(request):
    """Each available kernel backend in turn."""
    return _kernels.implementations()[request.param]


@pytest.fixture(scope="session")
def digit_records():
    return synth_corpus(0, 8)


@pytest.fixture(scope="session")
def digit_text(digit_records):
    sents = [normalize_source(r["transcription"]) for r in digit_records]
    sents += [" ".join(tokenize(r["translation"])) for r in digit_records]
    bpe = learn_bpe(word_counts(sents), 8000)
    vocab = build_vocab([apply_bpe(s.split(), bpe) for s in sents])
    return bpe, vocab


@pytest.fixture(scope="session")
def st_task(digit_text):
    return TaskSpec.for_task("st", *digit_text)


@pytest.fixture(scope="session")
def st_examples(digit_records, st_task):
    return [task_map(r, st_task, i) for i, r in enumerate(digit_records)]


def tiny_config(task="st", vocab=20, **kw):
    base = dict(num_encoder_layers=1, num_decoder_layers=1, d_model=16, ffn_dim=32, num_heads=2,
                frontend_channels=4, dropout=0.0)
    base.update(kw)
    return TransformerConfig.for_task(task, vocab, vocab, **base)


@pytest.fixture
def tiny_st(st_task):
    return Transformer(tiny_config("st", len(st_task.vocab)), seed=0)


def toy_logprob_table(rng, vocab, depth, peaked=True):
    """Random next-token log-probs for every prefix up to ``depth`` tokens (a toy model)."""
    table = {}

    def fill(prefix):
        if peaked:
            p = np.full(vocab, 1e-4)
            top = rng.choice(vocab, size=2, replace=False)
            p[top] = rng.uniform(0.05, 1.0, size=2)
        else:
            p = rng.dirichlet(np.ones(vocab))
        table[prefix] = np.log(p / p.sum())
        if len(prefix) < depth:
            for v in range(vocab):
                fill(prefix + (v,))

    fill(())
    return table


# -- acceptance reporting: one PASS/FAIL line per criterion at the end of the run

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): an acceptance criterion reported in the summary")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    name = mark.args[0]
    detail = getattr(item, "criterion_detail", "")
    if report.when == "call" or report.failed:
        item.config._criteria[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in criteria.items():
        terminalreporter.write_line(f"{status} {name}" + (f": {detail}" if detail else ""))
