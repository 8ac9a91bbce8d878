"""Synthetic tone corpus: each digit is a fixed-frequency tone burst.

Transcriptions spell the digits in English (lowercase, no punctuation);
translations spell them in French with sentence case and a final period, so
the target side exercises case and punctuation handling.
"""
from __future__ import annotations

import numpy as np

from ..audio import Waveform, extract_features

DIGIT_WORDS = ("zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine")
DIGIT_TRANSLATIONS = ("zéro", "un", "deux", "trois", "quatre", "cinq", "six", "sept", "huit", "neuf")

SAMPLE_RATE = 16000


def digit_frequency(d):
    """Tone frequency (Hz) used for digit ``d``.

    Neighbouring digits sit about one mel filter apart, so telling them
    apart takes a trained encoder rather than a single threshold.
    """
    return 400.0 + 40.0 * int(d)


def transcribe(digits):
    return " ".join(DIGIT_WORDS[d] for d in digits)


def translate(digits):
    words = [DIGIT_TRANSLATIONS[d] for d in digits]
    words[0] = words[0][:1].upper() + words[0][1:]
    return " ".join(words) + "."


def render(digits, rng, sample_rate=SAMPLE_RATE):
    """Waveform for a digit string plus the (start, end) sample span of each tone."""
    pieces = [np.zeros(int(rng.integers(80, 240)))]
    spans = []
    pos = len(pieces[0])
    for d in digits:
        n = int(rng.uniform(0.08, 0.13) * sample_rate)
        amp = rng.uniform(0.3, 0.6)
        phase = rng.uniform(0, 2 * np.pi)
        t = np.arange(n) / sample_rate
        tone = amp * np.sin(2 * np.pi * digit_frequency(d) * t + phase)
        ramp = min(80, n // 4)
        env = np.ones(n)
        env[:ramp] = np.linspace(0, 1, ramp)
        env[-ramp:] = np.linspace(1, 0, ramp)
        pieces.append(tone * env)
        spans.append((pos, pos + n))
        pos += n
        gap = np.zeros(int(rng.uniform(0.08, 0.12) * sample_rate))
        pieces.append(gap)
        pos += len(gap)
    pieces.append(np.zeros(int(rng.integers(160, 400))))
    samples = np.concatenate(pieces)
    samples = samples + rng.normal(0, 1e-3, size=samples.shape)
    return Waveform(np.clip(samples, -1, 1), sample_rate), spans


def synth_digits(rng, min_len=3, max_len=6):
    return [int(d) for d in rng.integers(0, 10, size=int(rng.integers(min_len, max_len + 1)))]


def synth_corpus(seed, n, mode="features", min_digits=3, max_digits=6):
    """``n`` records with "audio", "transcription" and "translation".

    ``mode="features"`` stores normalized log-mel features (frames x 80);
    ``mode="waveform"`` stores the raw samples for on-the-fly extraction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode not in ("features", "waveform"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        digits = synth_digits(rng, min_digits, max_digits)
        wav, _ = render(digits, rng)
        audio = extract_features(wav).data if mode == "features" else wav.samples.astype(np.float32)
        out.append({"audio": audio, "transcription": transcribe(digits), "translation": translate(digits)})
    return out
