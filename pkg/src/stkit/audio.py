"""Waveform reading, log-mel filterbank extraction, CMVN and SpecAugment."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import AudioFormatError, TooShortError, UnsupportedAudioError


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")

    @property
    def duration_s(self):
        return len(self.samples) / self.sample_rate_hz


@dataclass
class FbankConfig:
    num_filters: int = 80
    window_ms: float = 25.0
    step_ms: float = 10.0
    preemphasis: float = 0.97
    fft_size: int | None = None
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.num_filters <= 0:
            raise ValueError("num_filters must be positive")
        if not (self.window_ms >= self.step_ms > 0):
            raise ValueError("need window_ms >= step_ms > 0")

    def window_samples(self, sample_rate_hz):
        return int(round(self.window_ms * sample_rate_hz / 1000.0))

    def step_samples(self, sample_rate_hz):
        return int(round(self.step_ms * sample_rate_hz / 1000.0))

    def resolved_fft_size(self, sample_rate_hz):
        if self.fft_size is not None:
            return self.fft_size
        win = self.window_samples(sample_rate_hz)
        n = 1
        while n < win:
            n *= 2
        return n


@dataclass
class FeatureMatrix:
    data: np.ndarray
    frame_step_ms: float = 10.0

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"feature matrix must be frames x dims with frames >= 1, got {self.data.shape}")

    @property
    def num_frames(self):
        return self.data.shape[0]

    @property
    def num_dims(self):
        return self.data.shape[1]


@dataclass
class SpecAugmentPolicy:
    num_freq_masks: int = 2
    max_freq_width: int = 27
    num_time_masks: int = 2
    max_time_width: int = 70
    time_ratio: float = 0.2

    def __post_init__(self):
        if min(self.num_freq_masks, self.max_freq_width, self.num_time_masks, self.max_time_width) < 0:
            raise ValueError("SpecAugment parameters must be nonnegative")
        if not 0.0 <= self.time_ratio <= 1.0:
            raise ValueError("time_ratio must lie in [0, 1]")


def read_wav(path) -> Waveform:
    """Read a 16-bit PCM mono RIFF/WAVE file."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise AudioFormatError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    data = None
    while pos + 8 <= len(blob):
        chunk_id = blob[pos:pos + 4]
        (size,) = struct.unpack("<I", blob[pos + 4:pos + 8])
        body = blob[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise AudioFormatError(f"{path}: chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            if size < 16:
                raise AudioFormatError(f"{path}: fmt chunk too small")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise AudioFormatError(f"{path}: missing fmt or data chunk")
    audio_format, channels, rate, _, _, bits = fmt
    if audio_format != 1 or bits != 16:
        raise UnsupportedAudioError(f"{path}: only 16-bit PCM is supported (format={audio_format}, bits={bits})")
    if channels != 1:
        raise UnsupportedAudioError(f"{path}: only mono audio is supported, got {channels} channels")
    if rate <= 0:
        raise AudioFormatError(f"{path}: invalid sample rate {rate}")
    pcm = np.frombuffer(data[: len(data) // 2 * 2], dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path, wav: Waveform):
    """Write ``wav`` as 16-bit PCM mono; samples are clipped to [-1, 1)."""
    pcm = np.clip(np.round(np.asarray(wav.samples) * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, wav.sample_rate_hz, wav.sample_rate_hz * 2, 2, 16)
    with open(path, "wb") as f:
        f.write(header + fmt + b"data" + struct.pack("<I", len(payload)) + payload)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filter_centers(num_filters, sample_rate_hz):
    """Center frequencies (Hz) of the triangular filters spanning 0..Nyquist."""
    mels = np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), num_filters + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(num_filters, fft_size, sample_rate_hz):
    """Triangular filter weights, shape ``(num_filters, fft_size // 2 + 1)``.

    Weights are evaluated at each FFT bin's center frequency so that narrow
    low-frequency filters never collapse to zero width.
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate_hz / 2.0), num_filters + 2))
    bins = np.arange(fft_size // 2 + 1) * sample_rate_hz / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lo) / (mid - lo)
    falling = (hi - bins[None, :]) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def num_frames(num_samples, win, step):
    return 1 + (num_samples - win) // step


def frame_signal(x, win, step):
    n = num_frames(len(x), win, step)
    idx = np.arange(win)[None, :] + step * np.arange(n)[:, None]
    return x[idx]


def logmel_filterbank(w: Waveform, cfg: FbankConfig | None = None) -> FeatureMatrix:
    """Log-mel filterbank energies of ``w``.

    Each frame is pre-emphasized, Hamming-windowed and transformed with a
    real FFT; the magnitude spectrum is pooled by triangular mel filters and
    the natural log is taken after flooring at ``cfg.log_floor``.
    """
    cfg = cfg or FbankConfig()
    sr = w.sample_rate_hz
    win = cfg.window_samples(sr)
    step = cfg.step_samples(sr)
    x = np.asarray(w.samples, dtype=np.float64)
    if len(x) < win:
        raise TooShortError(f"waveform has {len(x)} samples, need at least one window of {win}")
    frames = frame_signal(x, win, step)
    if cfg.preemphasis:
        # pre-emphasis within each frame; the first sample keeps its value
        frames = np.concatenate([frames[:, :1], frames[:, 1:] - cfg.preemphasis * frames[:, :-1]], axis=1)
    frames = frames * np.hamming(win)[None, :]
    nfft = cfg.resolved_fft_size(sr)
    mag = np.abs(np.fft.rfft(frames, n=nfft, axis=1))
    fb = mel_filterbank(cfg.num_filters, nfft, sr)
    energies = mag @ fb.T
    feats = np.log(np.maximum(energies, cfg.log_floor))
    return FeatureMatrix(feats.astype(np.float32), cfg.step_ms)


def cmvn_utterance(f: FeatureMatrix, std_floor=1e-8) -> FeatureMatrix:
    """Per-utterance, per-coefficient mean/variance normalization."""
    x = np.asarray(f.data, dtype=np.float64)
    mean = x.mean(axis=0, keepdims=True)
    std = np.maximum(x.std(axis=0, keepdims=True), std_floor)
    out = (x - mean) / std
    # constant dimensions come out as exact zeros
    out[:, (x.std(axis=0) <= std_floor)] = 0.0
    return FeatureMatrix(out.astype(np.float32), f.frame_step_ms)


def spec_augment(f: FeatureMatrix, pol: SpecAugmentPolicy, rng) -> FeatureMatrix:
    """Apply frequency and time masks; masked cells become 0.

    ``rng`` is a ``numpy.random.Generator`` or anything accepted by
    ``numpy.random.default_rng``.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    x = np.array(f.data, copy=True)
    frames, dims = x.shape
    for _ in range(pol.num_freq_masks):
        width = int(rng.integers(0, min(pol.max_freq_width, dims) + 1))
        start = int(rng.integers(0, dims - width + 1))
        x[:, start:start + width] = 0
    cap = min(pol.max_time_width, int(np.floor(pol.time_ratio * frames)))
    for _ in range(pol.num_time_masks):
        width = int(rng.integers(0, cap + 1))
        start = int(rng.integers(0, frames - width + 1))
        x[start:start + width, :] = 0
    return FeatureMatrix(x, f.frame_step_ms)


def extract_features(w: Waveform, cfg: FbankConfig | None = None, normalize=True) -> FeatureMatrix:
    feats = logmel_filterbank(w, cfg)
    return cmvn_utterance(feats) if normalize else feats
