"""Task definitions: mapping raw records to model examples and length filtering."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..audio import FbankConfig, SpecAugmentPolicy, Waveform, extract_features
from ..errors import SchemaError
from ..text import BOS, EOS, BpeModel, TextProcessor, Vocabulary, normalize_source, tokenize

TASKS = ("asr", "mt", "st")


@dataclass
class TaskSpec:
    """Everything needed to turn a record into a model example.

    For speech tasks ``max_source_len`` is a frame truncation limit; for MT it
    is a token filter. ``batch_budget`` counts padded source frames (ASR/ST)
    or padded source tokens (MT).
    """

    kind: str
    bpe: BpeModel
    vocab: Vocabulary
    max_source_len: int
    max_target_len: int
    batch_budget: int
    spec_augment: SpecAugmentPolicy | None = None
    fbank: FbankConfig = field(default_factory=FbankConfig)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in TASKS:
            raise ValueError(f"unknown task {self.kind!r}")
        if min(self.max_source_len, self.max_target_len, self.batch_budget) <= 0:
            raise ValueError("length limits and batch budget must be positive")
        self.source_text = TextProcessor(self.bpe, self.vocab, source_side=True)
        self.target_text = TextProcessor(self.bpe, self.vocab, source_side=self.kind == "asr")

    @classmethod
    def for_task(cls, kind, bpe, vocab, **overrides):
        """Length limits and batch budgets of the benchmark recipes."""
        kind = kind.lower()
        presets = {
            "mt": dict(max_source_len=120, max_target_len=150, batch_budget=25000),
            "asr": dict(max_source_len=3000, max_target_len=120, batch_budget=120000),
            "st": dict(max_source_len=3000, max_target_len=150, batch_budget=80000,
                       spec_augment=SpecAugmentPolicy()),
        }
        if kind not in presets:
            raise ValueError(f"unknown task {kind!r}")
        cfg = presets[kind]
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(kind, bpe, vocab, **cfg)

    @property
    def is_speech(self):
        return self.kind != "mt"

    @property
    def target_field(self):
        return "transcription" if self.kind == "asr" else "translation"

    @property
    def target_processor(self):
        return self.target_text


@dataclass
class Example:
    src: np.ndarray
    tgt: np.ndarray
    index: int = 0
    reference: str = ""

    @property
    def src_len(self):
        return int(self.src.shape[0])

    @property
    def tgt_len(self):
        """Target length without the BOS/EOS framing."""
        return int(self.tgt.shape[0]) - 2


def _features(entry, spec: TaskSpec):
    audio = np.asarray(entry["audio"], dtype=np.float32)
    if audio.ndim == 1:
        rate = int(entry.get("sample_rate", 16000))
        return extract_features(Waveform(audio, rate), spec.fbank).data
    if audio.ndim != 2:
        raise SchemaError(f"'audio' must be a waveform or a frames x dims matrix, got shape {audio.shape}")
    return audio


def task_source(entry: dict, spec: TaskSpec, index=0) -> np.ndarray:
    """Model input alone: features (ASR/ST) or normalized source ids (MT)."""
    key = "audio" if spec.is_speech else "transcription"
    if key not in entry:
        raise SchemaError(f"{spec.kind} record {index} lacks field(s) {[key]}")
    if spec.is_speech:
        return _features(entry, spec)
    return np.asarray(spec.source_text.encode(entry["transcription"]), dtype=np.int64)


def task_reference(entry: dict, spec: TaskSpec) -> str:
    """The string hypotheses are scored against; ASR references are normalized and tokenized."""
    ref = entry[spec.target_field]
    return " ".join(tokenize(normalize_source(ref))) if spec.kind == "asr" else ref


def task_map(entry: dict, spec: TaskSpec, index=0) -> Example:
    """ASR: features -> normalized transcription; ST: features -> translation; MT: transcription -> translation."""
    need = ("audio", spec.target_field) if spec.is_speech else ("transcription", "translation")
    missing = [k for k in need if k not in entry]
    if missing:
        raise SchemaError(f"{spec.kind} record {index} lacks field(s) {missing}")
    src = task_source(entry, spec, index)
    ids = spec.target_text.encode(entry[spec.target_field])
    tgt = np.asarray([BOS] + ids + [EOS], dtype=np.int64)
    return Example(src, tgt, index, task_reference(entry, spec))


def length_filter(examples, spec: TaskSpec):
    """MT drops long pairs; ASR/ST truncate frames then drop long targets."""
    out = []
    for ex in examples:
        if spec.is_speech:
            if ex.src_len > spec.max_source_len:
                ex = Example(ex.src[: spec.max_source_len], ex.tgt, ex.index, ex.reference)
        elif ex.src_len > spec.max_source_len:
            continue
        if ex.tgt_len > spec.max_target_len:
            continue
        out.append(ex)
    return out
