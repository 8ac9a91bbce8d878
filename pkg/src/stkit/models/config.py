from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields


@dataclass
class TransformerConfig:
    num_encoder_layers: int = 6
    num_decoder_layers: int = 6
    d_model: int = 256
    ffn_dim: int = 2048
    num_heads: int = 4
    dropout: float = 0.1
    src_vocab_size: int = 0
    tgt_vocab_size: int = 0
    is_speech_input: bool = False
    input_dim: int = 80
    frontend_channels: int = 256
    frontend_kernel: int = 3
    frontend_stride: int = 2
    max_positions: int = 2048

    def __post_init__(self):
        for name in ("num_encoder_layers", "num_decoder_layers", "d_model", "ffn_dim", "num_heads",
                     "tgt_vocab_size", "max_positions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.is_speech_input and self.src_vocab_size <= 0:
            raise ValueError("text input needs src_vocab_size > 0")
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model {self.d_model} is not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def for_task(cls, task, src_vocab_size=0, tgt_vocab_size=0, **overrides):
        """Benchmark architecture: 6/6 layers for MT, 12/6 with a conv frontend for ASR and ST."""
        task = task.lower()
        if task not in ("mt", "asr", "st"):
            raise ValueError(f"unknown task {task!r}")
        speech = task != "mt"
        cfg = dict(num_encoder_layers=12 if speech else 6, num_decoder_layers=6, d_model=256, ffn_dim=2048,
                   num_heads=4, is_speech_input=speech, src_vocab_size=0 if speech else src_vocab_size,
                   tgt_vocab_size=tgt_vocab_size)
        cfg.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**cfg)

    @property
    def head_dim(self):
        return self.d_model // self.num_heads

    def subsampled_length(self, frames):
        s = self.frontend_stride
        return math.ceil(math.ceil(frames / s) / s)

    @property
    def frontend_flat_dim(self):
        s = self.frontend_stride
        return math.ceil(math.ceil(self.input_dim / s) / s) * self.frontend_channels

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})
