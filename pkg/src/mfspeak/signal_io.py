"""Audio loading, segmentation and synthetic oracle signals.

Random draws use numpy's ``default_rng`` (PCG64 bit generator). Given the
same integer seed, the output is bit-identical across runs and platforms.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np
from scipy.io import wavfile


class SignalError(ValueError):
    """Base class for signal loading and generation errors."""


class UnreadableAudioError(SignalError):
    pass


class UnsupportedEncodingError(SignalError):
    pass


class EmptyAudioError(SignalError):
    pass


class WindowOutOfRangeError(SignalError):
    pass


@dataclass(frozen=True, eq=False)
class TimeSeries:
    samples: np.ndarray
    sample_rate: float = 1.0
    source_id: str = ""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise SignalError(f"samples must be one-dimensional, got shape {samples.shape}")
        if samples.size < 2:
            raise SignalError(f"a time series needs at least 2 samples, got {samples.size}")
        if not np.all(np.isfinite(samples)):
            raise SignalError("samples contain NaN or Inf")
        if not self.sample_rate > 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class CascadeSpec:
    levels: int
    multiplier: float = 0.75

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 1:
            raise SignalError(f"levels must be a positive integer, got {self.levels}")
        if not 0.5 < self.multiplier < 1.0:
            raise SignalError(f"multiplier must lie in (0.5, 1), got {self.multiplier}")


def _scale_pcm(data: np.ndarray) -> np.ndarray:
    kind = data.dtype.kind
    if kind == "f":
        return data.astype(np.float64)
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if kind == "i":
        # scipy left-justifies 24-bit PCM into int32, so the full dtype range applies
        return data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    raise UnsupportedEncodingError(f"unsupported sample dtype {data.dtype}")


def load_wav(path) -> TimeSeries:
    """Read a PCM or float WAV file as a mono series scaled to [-1, 1]."""
    path = Path(path)
    if not path.is_file():
        raise UnreadableAudioError(f"{path}: no such file")
    try:
        with open(path, "rb") as fh:
            magic = fh.read(4)
    except OSError as exc:
        raise UnreadableAudioError(f"{path}: {exc}") from exc
    if magic not in (b"RIFF", b"RIFX", b"RF64"):
        raise UnreadableAudioError(f"{path}: not a WAV file")
    try:
        rate, data = wavfile.read(path)
    except ValueError as exc:
        raise UnsupportedEncodingError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise UnreadableAudioError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise EmptyAudioError(f"{path}: file holds no audio samples")
    samples = _scale_pcm(data)
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if samples.size < 2:
        raise EmptyAudioError(f"{path}: fewer than 2 samples")
    return TimeSeries(samples, float(rate), str(path))


def write_wav16(path, ts: TimeSeries) -> None:
    """Write a series clipped to [-1, 1] as 16-bit mono PCM."""
    pcm = np.clip(np.round(ts.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(int(round(ts.sample_rate)))
        fh.writeframes(pcm.tobytes())


def _to_index(seconds: float, rate: float) -> int:
    # round-half-up on the decimal repr avoids drift such as 2.5 -> 2
    value = Decimal(repr(float(seconds))) * Decimal(repr(float(rate)))
    return int(value.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def segment(ts: TimeSeries, start_s: float, duration_s: float) -> TimeSeries:
    start = _to_index(start_s, ts.sample_rate)
    length = _to_index(duration_s, ts.sample_rate)
    if start_s < 0 or length < 2 or start + length > len(ts):
        raise WindowOutOfRangeError(
            f"window [{start_s}s, +{duration_s}s] -> samples [{start}, {start + length}) "
            f"outside series of {len(ts)} samples"
        )
    return TimeSeries(
        ts.samples[start:start + length],
        ts.sample_rate,
        f"{ts.source_id}[{start_s}s+{duration_s}s]",
    )


def gen_binomial_cascade(spec: CascadeSpec) -> TimeSeries:
    """Deterministic binomial multiplicative cascade of length ``2**levels``.

    Sample k (0-based) equals ``a**n(k) * (1-a)**(levels-n(k))`` where n(k)
    is the number of set bits of k.
    """
    n = 2 ** spec.levels
    k = np.arange(n, dtype=np.int64)
    bits = np.zeros(n, dtype=np.int64)
    for shift in range(spec.levels):
        bits += (k >> shift) & 1
    a = spec.multiplier
    x = a ** bits.astype(np.float64) * (1.0 - a) ** (spec.levels - bits).astype(np.float64)
    return TimeSeries(x, 1.0, f"cascade(levels={spec.levels},a={a!r})")


def gen_white_noise(n: int, seed: int) -> TimeSeries:
    if n < 2:
        raise SignalError(f"white noise needs n >= 2, got {n}")
    x = np.random.default_rng(seed).standard_normal(n)
    return TimeSeries(x, 1.0, f"white_noise(n={n},seed={seed})")


def load_series(path) -> TimeSeries:
    """Load a WAV file or a raw ``.npy`` series (sample rate 1)."""
    path = Path(path)
    if path.suffix.lower() == ".npy":
        if not path.is_file():
            raise UnreadableAudioError(f"{path}: no such file")
        return TimeSeries(np.load(path, allow_pickle=False), 1.0, str(path))
    return load_wav(path)
