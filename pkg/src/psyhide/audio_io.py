"""PCM16 WAV input/output and the canonical in-memory signal type."""

from __future__ import annotations

import logging
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SAMPLE_RATE = 16000
PCM_SCALE = 32768.0


class AudioFormatError(ValueError):
    """Raised for WAV files outside the supported PCM16 / 16 kHz subset."""


@dataclass(frozen=True)
class AudioSignal:
    """Mono signal with samples in [-1, 1].

    ``samples`` is stored as a read-only float64 array so that signals can be
    shared between runs without defensive copies.
    """

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).ravel()
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def with_samples(self, samples) -> "AudioSignal":
        return AudioSignal(samples, self.sample_rate_hz)


def read_wav(path) -> AudioSignal:
    """Load a 16-bit PCM WAV file, averaging stereo channels."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            if wf.getcomptype() != "NONE":
                raise AudioFormatError(f"{path}: compressed WAV is not supported")
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        raise AudioFormatError(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise OSError(f"{path}: truncated WAV file") from exc

    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if n_channels not in (1, 2):
        raise AudioFormatError(f"{path}: {n_channels} channels not supported")
    if rate != SAMPLE_RATE:
        raise AudioFormatError(f"{path}: sample rate {rate} Hz, expected {SAMPLE_RATE}")
    if len(raw) != n_frames * n_channels * 2:
        raise OSError(f"{path}: truncated WAV file")

    data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    if n_channels == 2:
        data = data.reshape(-1, 2).mean(axis=1)
    return AudioSignal(data, rate)


def to_pcm16(samples) -> tuple[np.ndarray, int]:
    """Quantize to int16, returning the array and the number of clipped samples."""
    samples = np.asarray(samples, dtype=np.float64)
    scaled = np.round(samples * PCM_SCALE)
    clipped = int(np.count_nonzero((scaled > 32767) | (scaled < -32768)))
    return np.clip(scaled, -32768, 32767).astype("<i2"), clipped


def write_wav(signal: AudioSignal, path) -> int:
    """Write ``signal`` as mono PCM16. Returns the number of clipped samples."""
    if len(signal) == 0:
        raise ValueError("cannot write an empty signal")
    pcm, clipped = to_pcm16(signal.samples)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(signal.sample_rate_hz)
        wf.writeframes(pcm.tobytes())
    if clipped:
        logger.warning("%s: clipped %d samples outside [-1, 1]", path, clipped)
    return clipped
