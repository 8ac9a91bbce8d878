"""Checkpoint directories: a JSON manifest plus one binary tensor file.

Tensor file, per tensor (little-endian): name_len u16, name utf-8,
dtype u8 (0 float32, 1 float64, 2 int64), rank u8, dims u32 * rank, raw values.
"""
from __future__ import annotations

import json
import os
import shutil
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import CheckpointMismatchError

MANIFEST = "manifest.json"
TENSORS = "tensors.bin"

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1, np.dtype("int64"): 2}


@dataclass
class Checkpoint:
    params: dict
    step: int = 0
    config: dict = field(default_factory=dict)
    fingerprints: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.step < 0:
            raise ValueError("checkpoint step must be >= 0")

    @classmethod
    def from_model(cls, model, step=0, fingerprints=None, **extra):
        params = {name: np.array(p.data, copy=True) for name, p in model.named_parameters().items()}
        return cls(params, step, model.cfg.to_dict(), dict(fingerprints or {}), extra)

    def manifest(self):
        return {"step": self.step, "config": self.config, "fingerprints": self.fingerprints,
                "tensors": sorted(self.params), **({"extra": self.extra} if self.extra else {})}


def write_tensors(params: dict, path):
    with open(path, "wb") as f:
        for name, arr in params.items():
            arr = np.asarray(arr)
            code = _DTYPE_CODES.get(arr.dtype)
            if code is None:
                raise TypeError(f"cannot serialize {name} with dtype {arr.dtype}")
            nb = name.encode("utf-8")
            f.write(struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())


def read_tensors(path) -> dict:
    out = {}
    with open(path, "rb") as f:
        blob = f.read()
    pos = 0
    while pos < len(blob):
        (nlen,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + nlen].decode("utf-8")
        pos += nlen
        code, rank = struct.unpack_from("<BB", blob, pos)
        pos += 2
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        dt = _DTYPES[code]
        count = int(np.prod(dims)) if rank else 1
        nbytes = count * dt.itemsize
        if pos + nbytes > len(blob):
            raise ValueError(f"{path}: tensor {name!r} is truncated")
        out[name] = np.frombuffer(blob, dtype=dt, count=count, offset=pos).reshape(dims).astype(dt.newbyteorder("="))
        pos += nbytes
    return out


def save_checkpoint(ckpt: Checkpoint, directory, files=None):
    """Write ``ckpt`` to ``directory``; ``files`` maps extra file names to source paths to copy in."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensors(ckpt.params, directory / TENSORS)
    with open(directory / MANIFEST, "w", encoding="utf-8") as f:
        json.dump(ckpt.manifest(), f, indent=2, sort_keys=True)
    for name, src in (files or {}).items():
        if src and Path(src).resolve() != (directory / name).resolve():
            shutil.copyfile(src, directory / name)
    return directory


def load_checkpoint(directory) -> Checkpoint:
    directory = Path(directory)
    with open(directory / MANIFEST, encoding="utf-8") as f:
        manifest = json.load(f)
    params = read_tensors(directory / TENSORS)
    listed = set(manifest.get("tensors", params))
    if listed != set(params):
        raise CheckpointMismatchError(f"{directory}: manifest and tensor file disagree on "
                                      f"{sorted(listed ^ set(params))}")
    return Checkpoint(params, manifest["step"], manifest.get("config", {}), manifest.get("fingerprints", {}),
                      manifest.get("extra", {}))


def average_checkpoints(checkpoints) -> Checkpoint:
    """Elementwise mean of parameters; paths or Checkpoint objects accepted."""
    ckpts = [c if isinstance(c, Checkpoint) else load_checkpoint(c) for c in checkpoints]
    if not ckpts:
        raise ValueError("need at least one checkpoint to average")
    ref = ckpts[0]
    names = set(ref.params)
    problems = []
    for i, c in enumerate(ckpts[1:], 1):
        for name in sorted(names ^ set(c.params)):
            problems.append(f"checkpoint {i}: {name} present in only one of the inputs")
        for name in sorted(names & set(c.params)):
            if c.params[name].shape != ref.params[name].shape:
                problems.append(f"checkpoint {i}: {name} has shape {c.params[name].shape}, "
                                f"expected {ref.params[name].shape}")
    if problems:
        raise CheckpointMismatchError("cannot average checkpoints:\n  " + "\n  ".join(problems))
    avg = {}
    for name in ref.params:
        # sorting along the checkpoint axis makes the sum independent of input order
        stacked = np.sort(np.stack([c.params[name].astype(np.float64) for c in ckpts]), axis=0)
        avg[name] = (stacked.sum(axis=0) / len(ckpts)).astype(ref.params[name].dtype)
    return Checkpoint(avg, max(c.step for c in ckpts), ref.config, ref.fingerprints, ref.extra)


def list_checkpoints(root):
    """Step-ordered ``ckpt-*`` directories under ``root``."""
    root = Path(root)
    if not root.is_dir():
        return []
    found = []
    for p in root.iterdir():
        if p.is_dir() and p.name.startswith("ckpt-") and (p / MANIFEST).exists():
            try:
                found.append((int(p.name[5:]), p))
            except ValueError:
                continue
    return [p for _, p in sorted(found)]


def prune_checkpoints(root, keep):
    ckpts = list_checkpoints(root)
    for p in ckpts[: max(len(ckpts) - keep, 0)]:
        shutil.rmtree(p)


def restore_model(model, ckpt: Checkpoint):
    """Copy every checkpoint tensor into ``model``; the name sets must match exactly."""
    params = model.named_parameters()
    if set(params) != set(ckpt.params):
        diff = sorted(set(params) ^ set(ckpt.params))
        raise CheckpointMismatchError(f"checkpoint does not match model parameters: {diff[:10]}")
    for name, p in params.items():
        if p.data.shape != ckpt.params[name].shape:
            raise CheckpointMismatchError(f"{name}: checkpoint shape {ckpt.params[name].shape} != {p.data.shape}")
        p.data = np.array(ckpt.params[name], dtype=p.data.dtype)
    return model


def checkpoint_file(directory, name):
    p = os.path.join(directory, name)
    return p if os.path.exists(p) else None
