"""Adam and the warmup/inverse-sqrt learning-rate schedule with task scaling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError


@dataclass
class ScheduleConfig:
    d_model: int
    warmup_steps: int
    init_scale: float = 1.0
    end_scale: float = 1.0
    decay_at: int | None = None
    decay_steps: int | None = None

    def __post_init__(self):
        if self.warmup_steps <= 0:
            raise ValueError("warmup_steps must be positive")
        if (self.decay_at is None) != (self.decay_steps is None):
            raise ValueError("decay_at and decay_steps must be given together")
        if self.decay_steps is not None and self.decay_steps <= 0:
            raise ValueError("decay_steps must be positive")

    @classmethod
    def for_task(cls, task, d_model=256):
        """Schedule presets: MT unscaled; ASR 3.5 -> 2.0 and ST 3.5 -> 1.5 over 50k steps after 50k."""
        task = task.lower()
        if task == "mt":
            return cls(d_model, 4000)
        if task == "asr":
            return cls(d_model, 25000, 3.5, 2.0, 50000, 50000)
        if task == "st":
            return cls(d_model, 25000, 3.5, 1.5, 50000, 50000)
        raise ValueError(f"unknown task {task!r}")


def scale_factor(step, cfg: ScheduleConfig):
    if cfg.decay_at is None or step <= cfg.decay_at:
        return cfg.init_scale
    if step >= cfg.decay_at + cfg.decay_steps:
        return cfg.end_scale
    frac = (step - cfg.decay_at) / cfg.decay_steps
    return cfg.init_scale + frac * (cfg.end_scale - cfg.init_scale)


def noam_lr(step, cfg: ScheduleConfig):
    if step < 1:
        raise ValueError("step must be >= 1")
    base = cfg.d_model ** -0.5 * min(step ** -0.5, step * cfg.warmup_steps ** -1.5)
    return base * scale_factor(step, cfg)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(params: dict, grads: dict, state: AdamState, lr: float):
    """One bias-corrected Adam step, in place on ``params[name].data``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_update: gradient {g.shape} does not match parameter {name} {p.data.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)
    return params, state
