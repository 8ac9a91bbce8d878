"""Warm-starting a model from another model's checkpoint by parameter name."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NoOverlapError
from ..executor.checkpoint import Checkpoint, load_checkpoint


@dataclass
class LoadReport:
    loaded: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    mismatched: list = field(default_factory=list)
    missing: list = field(default_factory=list)

    def summary(self):
        return (f"loaded {len(self.loaded)}, mismatched {len(self.mismatched)}, "
                f"skipped {len(self.skipped)}, missing {len(self.missing)}")


def _matcher(name_filter):
    if name_filter is None:
        return lambda name: True
    if callable(name_filter):
        return name_filter
    prefixes = (name_filter,) if isinstance(name_filter, str) else tuple(name_filter)
    return lambda name: name.startswith(prefixes)


def init_from_pretrained(model, checkpoint, name_filter=None) -> LoadReport:
    """Copy parameters whose canonical name and shape both match.

    ``name_filter`` is a prefix, a sequence of prefixes or a predicate on
    names (e.g. ``"encoder."`` for ASR-encoder initialization).
    """
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    match = _matcher(name_filter)
    params = model.named_parameters()
    report = LoadReport()
    for name, value in ckpt.params.items():
        if not match(name) or name not in params:
            report.skipped.append(name)
        elif params[name].data.shape != value.shape:
            report.mismatched.append(name)
        else:
            report.loaded.append(name)
    report.missing = [n for n in params if match(n) and n not in ckpt.params]
    if not report.loaded:
        raise NoOverlapError(f"no parameter of the checkpoint matches the model by name and shape ({report.summary()})")
    for name in report.loaded:
        p = params[name]
        p.data = np.array(ckpt.params[name], dtype=p.data.dtype)
    return report
