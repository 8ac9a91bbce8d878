"""The training loop, validation during training and cascade decoding."""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..audio import FeatureMatrix, spec_augment
from ..data.batching import Batch, make_batches
from ..errors import ConfigError, TrainingError
from ..metrics import bleu, wer
from ..tensor import AdamState, adam_update, backprop, noam_lr
from ..text import detokenize
from .checkpoint import Checkpoint, load_checkpoint, prune_checkpoints, save_checkpoint
from .decoding import decode


@dataclass
class TrainOptions:
    """Loop control. ``stop_nll`` ends training once a step's gold-token NLL drops below it."""

    steps: int
    seed: int = 0
    label_smoothing: float = 0.1
    save_interval: int = 0
    keep_checkpoints: int = 10
    eval_interval: int = 0
    dev_max_examples: int = 64
    start_step: int = 0
    stop_nll: float | None = None
    spec_augment: bool = True
    output_dir: str | None = None
    assets: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.steps < 0 or self.start_step < 0:
            raise ValueError("steps and start_step must be >= 0")
        if self.keep_checkpoints < 10:
            raise ValueError("keep_checkpoints must be >= 10 so the latest 10 can be averaged")


@dataclass
class TrainResult:
    step: int
    losses: list
    nlls: list
    lrs: list
    best: dict | None = None
    stopped_early: bool = False

    @property
    def steps_run(self):
        return len(self.losses)


class MetricsLog:
    """Append-only JSON-lines log; a no-op without a path."""

    def __init__(self, path=None):
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, **event):
        if self.path:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(event, sort_keys=True) + "\n")


def read_metrics(path):
    with open(path, encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def check_fingerprints(expected: dict, ckpt: Checkpoint, what="checkpoint"):
    """Raise ConfigError if a fingerprint recorded on both sides disagrees."""
    for key, value in expected.items():
        other = ckpt.fingerprints.get(key)
        if other is not None and other != value:
            raise ConfigError(f"{what} {key} fingerprint {other} does not match the task's {value}")


def warm_start(model, checkpoint, name_filter=None, fingerprints=None):
    """init_from_pretrained after checking that shared vocabularies agree."""
    from ..data.transfer import init_from_pretrained  # deferred: data.transfer imports this package

    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    check_fingerprints(fingerprints or {}, ckpt, "warm-start checkpoint")
    return init_from_pretrained(model, ckpt, name_filter)


def augment_batch(batch: Batch, policy, rng) -> Batch:
    """SpecAugment each utterance over its valid frames only; padding stays zero."""
    src = batch.src.copy()
    for i, n in enumerate(batch.src_lengths):
        n = int(n)
        src[i, :n] = spec_augment(FeatureMatrix(src[i, :n]), policy, rng).data
    return Batch(src, batch.src_lengths, batch.tgt_in, batch.tgt_out, batch.tgt_mask, batch.indices)


def _batch_stream(examples, budget, seed):
    epoch = 0
    while True:
        yield from make_batches(examples, budget, seed + epoch)
        epoch += 1


def train(task, model, examples, schedule, options: TrainOptions, dev=None, fingerprints=None) -> TrainResult:
    """Teacher-forced training with Adam and the scaled Noam schedule.

    Steps are numbered ``start_step + 1 ...``; the learning rate of step s is
    ``noam_lr(s)``. Every ``save_interval`` steps a ``ckpt-<step>`` directory
    is written and only the latest ``keep_checkpoints`` survive; every
    ``eval_interval`` steps the model is validated on ``dev`` and the best
    one is kept in ``best/``.
    """
    if not examples:
        raise ValueError("train needs at least one example")
    fingerprints = dict(fingerprints or {"vocab": task.vocab.fingerprint()})
    out = Path(options.output_dir) if options.output_dir else None
    log = MetricsLog(out / "metrics.jsonl" if out else None)
    metric = "wer" if task.kind == "asr" else "bleu"
    rng = np.random.default_rng(options.seed)
    model.seed_dropout(options.seed)
    params = model.named_parameters()
    order = list(params)
    state = AdamState()
    augment = task.spec_augment if (options.spec_augment and task.is_speech) else None
    result = TrainResult(options.start_step, [], [], [])

    def save(step, directory):
        ckpt = Checkpoint.from_model(model, step, fingerprints, task=task.kind)
        save_checkpoint(ckpt, directory, options.assets)

    if out is not None and options.steps == 0:
        save(options.start_step, out / f"ckpt-{options.start_step}")

    t0 = time.perf_counter()
    stream = _batch_stream(examples, task.batch_budget, options.seed)
    step = options.start_step
    for _ in range(options.steps):
        step += 1
        batch = next(stream)
        if augment is not None:
            batch = augment_batch(batch, augment, rng)
        model.train()
        for p in params.values():
            p.grad = None
        loss, nll = model.forward_loss(batch, options.label_smoothing)
        value = float(loss.item())
        if not math.isfinite(value):
            raise TrainingError(f"non-finite loss {value} at step {step} on batch {batch.indices.tolist()}")
        grads = backprop(loss, [params[n] for n in order])
        lr = noam_lr(step, schedule)
        adam_update(params, dict(zip(order, grads)), state, lr)
        result.losses.append(value)
        result.nlls.append(float(nll))
        result.lrs.append(lr)
        log.write(step=step, loss=value, nll=float(nll), lr=lr, wall_ms=int(1000 * (time.perf_counter() - t0)))
        if out is not None and options.save_interval and step % options.save_interval == 0:
            save(step, out / f"ckpt-{step}")
            prune_checkpoints(out, options.keep_checkpoints)
        if dev and options.eval_interval and step % options.eval_interval == 0:
            value_m = validate(model, dev[: options.dev_max_examples], task)
            log.write(step=step, metric=metric, value=value_m)
            better = result.best is None or (value_m < result.best["value"] if metric == "wer"
                                             else value_m > result.best["value"])
            if better:
                result.best = {"step": step, "metric": metric, "value": value_m}
                if out is not None:
                    save(step, out / "best")
                    with open(out / "best" / "best.json", "w", encoding="utf-8") as f:
                        json.dump(result.best, f, sort_keys=True)
        if options.stop_nll is not None and nll < options.stop_nll:
            result.stopped_early = True
            break
    result.step = step
    if out is not None and options.steps and not (options.save_interval and step % options.save_interval == 0):
        save(step, out / f"ckpt-{step}")
        prune_checkpoints(out, options.keep_checkpoints)
    model.eval()
    return result


def hypothesis_text(task, ids):
    """Detokenized string for target ids (ASR hypotheses stay tokenized and lowercase)."""
    toks = task.target_text.decode_tokens(ids)
    return " ".join(toks) if task.kind == "asr" else detokenize(toks)


def predict(model, examples, task, beam=1):
    hyps = []
    for ex in examples:
        hyps.append(hypothesis_text(task, decode(model, ex.src, beam=beam).body))
    return hyps


def validate(model, dev, task) -> float:
    """Greedy-decode ``dev``; WER for ASR, case-sensitive detokenized BLEU otherwise.

    The model's train/eval mode is restored afterwards.
    """
    if not dev:
        raise ValueError("validation set is empty")
    was_training = model.training
    try:
        hyps = predict(model, dev, task, beam=1)
    finally:
        model.train(was_training)
    refs = [ex.reference for ex in dev]
    if task.kind == "asr":
        return wer([r.split() for r in refs], [h.split() for h in hyps])
    return bleu(refs, hyps)


@dataclass
class CascadeOutput:
    translation: str
    transcript: str


def cascade_decode(asr_model, mt_model, features, asr_task, mt_task, beam=4, transcript=None) -> CascadeOutput:
    """ASR then MT. ``transcript`` bypasses the ASR leg (oracle-transcript diagnosis).

    The ASR hypothesis is de-BPE'd back to words, run through the MT source
    preprocessing (already lowercase and punctuation-free) and re-segmented
    with the MT BPE rules.
    """
    if transcript is None:
        hyp = decode(asr_model, features, beam=beam)
        transcript = " ".join(asr_task.target_text.decode_tokens(hyp.body))
    src = np.asarray(mt_task.source_text.encode(transcript), dtype=np.int64)
    if src.size == 0:
        return CascadeOutput("", transcript)
    hyp = decode(mt_model, src, beam=beam)
    return CascadeOutput(hypothesis_text(mt_task, hyp.body), transcript)


__all__ = ["TrainOptions", "TrainResult", "MetricsLog", "read_metrics", "check_fingerprints", "warm_start",
           "augment_batch", "train", "hypothesis_text", "predict", "validate", "CascadeOutput", "cascade_decode"]
