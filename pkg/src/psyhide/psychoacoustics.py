"""MPEG-1 layer-style hearing thresholds projected onto the front-end grid.

Simplified psychoacoustic model 1: Terhardt threshold in quiet, tonal
maskers found as prominent spectral peaks, a two-slope spreading function on
the bark axis and power-domain combination. Noise maskers and temporal
masking are not modelled, which can only make the thresholds lower.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from psyhide._validation import DimensionError
from psyhide.audio_io import AudioSignal
from psyhide.frontend import FrameConfig, hann_periodic

BUFFER_LEN = 1024
GRANULE_LEN = 576
GRANULE_HOP = 512
GRANULE_DFT = 1024
N_BANDS = 32
MAX_LEVEL_DB = 95.0
QUIET_CAP_DB = 70.0
PEAK_PROMINENCE_DB = 7.0
PEAK_NEIGHBOURS = (4, 5, 6)  # granule-DFT bins on each side, past the Hann main lobe
SLOPE_BELOW = 27.0  # dB/bark, maskees below the masker
SLOPE_ABOVE = 10.0  # dB/bark, maskees above the masker
MASKING_FLOOR_DB = -200.0


def hz_to_bark(f):
    """Zwicker critical-band rate."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    z = 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)
    return z if z.ndim else float(z)


def threshold_in_quiet(f):
    """Terhardt's absolute hearing threshold in dB SPL, capped at 70 dB."""
    f = np.maximum(np.asarray(f, dtype=np.float64), 20.0) / 1000.0
    tq = 3.64 * f**-0.8 - 6.5 * np.exp(-0.6 * (f - 3.3) ** 2) + 1e-3 * f**4
    tq = np.minimum(tq, QUIET_CAP_DB)
    return tq if tq.ndim else float(tq)


@dataclass
class GranuleAnalysis:
    spectrum_db: np.ndarray  # (G, GRANULE_DFT//2 + 1) normalized dB
    band_energy: np.ndarray  # (G, 32) linear power on the normalized scale
    bark: np.ndarray  # bark position of each spectral bin
    maskers: list  # per granule: list of (frequency_hz, level_db)
    offset_db: float  # added to raw dB to reach the normalized scale


@dataclass
class ThresholdMatrix:
    """Hearing thresholds in dB on the front-end's (frame, bin) grid."""

    values: np.ndarray
    reference: float  # max bin energy of the original granule spectra (raw power)
    quiet: np.ndarray  # threshold in quiet on the same grid
    analysis: GranuleAnalysis

    @property
    def shape(self):
        return self.values.shape


def granule_starts(n_samples: int) -> np.ndarray:
    if n_samples < BUFFER_LEN:
        raise DimensionError(f"need at least {BUFFER_LEN} samples, got {n_samples}")
    n_buffers = 1 + (n_samples - BUFFER_LEN) // GRANULE_HOP
    # buffer b holds granules b and b+1
    return np.arange(n_buffers + 1) * GRANULE_HOP


def _granule_power(samples: np.ndarray) -> np.ndarray:
    starts = granule_starts(samples.shape[0])
    padded = np.concatenate([samples, np.zeros(GRANULE_LEN)])
    frames = np.stack([padded[s : s + GRANULE_LEN] for s in starts]) * hann_periodic(GRANULE_LEN)
    spec = np.fft.rfft(frames, n=GRANULE_DFT, axis=1)
    return spec.real**2 + spec.imag**2


def find_tonal_maskers(spectrum_db: np.ndarray, freqs: np.ndarray) -> list[tuple[float, float]]:
    """Local maxima at least 7 dB above the bins a few places away on both sides."""
    n = spectrum_db.shape[0]
    reach = max(PEAK_NEIGHBOURS)
    k = np.arange(reach, n - reach)
    level = spectrum_db[k]
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(level) & (level > spectrum_db[k - 1]) & (level >= spectrum_db[k + 1])
        for j in PEAK_NEIGHBOURS:
            ok &= level - spectrum_db[k - j] >= PEAK_PROMINENCE_DB
            ok &= level - spectrum_db[k + j] >= PEAK_PROMINENCE_DB
    ok &= level >= threshold_in_quiet(freqs[k])
    return [(float(freqs[i]), float(spectrum_db[i])) for i in k[ok]]


def masking_curve(maskers, bark) -> np.ndarray:
    """Power-sum of the individual tonal masking thresholds, in dB."""
    total = np.full(np.shape(bark), 10.0 ** (MASKING_FLOOR_DB / 10.0))
    for freq, level in maskers:
        zm = hz_to_bark(freq)
        dz = bark - zm
        spread = np.where(dz < 0, SLOPE_BELOW * dz, -SLOPE_ABOVE * dz)
        total += 10.0 ** ((level - (14.5 + zm) + spread) / 10.0)
    return 10.0 * np.log10(total)


def analyze_granules(samples) -> GranuleAnalysis:
    samples = np.asarray(samples, dtype=np.float64)
    power = _granule_power(samples)
    freqs = np.fft.rfftfreq(GRANULE_DFT, 1.0 / 16000)
    peak = power.max()
    if peak > 0:
        offset = MAX_LEVEL_DB - 10.0 * np.log10(peak)
        with np.errstate(divide="ignore"):
            spectrum_db = 10.0 * np.log10(power) + offset
    else:
        offset = 0.0
        spectrum_db = np.full(power.shape, -np.inf)
    normalized = power * 10.0 ** (offset / 10.0)
    band_edges = np.linspace(0, freqs[-1], N_BANDS + 1)
    band_idx = np.clip(np.searchsorted(band_edges, freqs, side="right") - 1, 0, N_BANDS - 1)
    band_energy = np.stack([np.bincount(band_idx, row, minlength=N_BANDS) for row in normalized])
    maskers = [find_tonal_maskers(row, freqs) for row in spectrum_db]
    return GranuleAnalysis(spectrum_db, band_energy, hz_to_bark(freqs), maskers, float(offset))


def nearest_granule(n_frames: int, cfg: FrameConfig, n_granules: int) -> np.ndarray:
    frame_centres = np.arange(n_frames) * cfg.hop + cfg.frame_len / 2.0
    idx = np.rint((frame_centres - GRANULE_LEN / 2.0) / GRANULE_HOP).astype(np.int64)
    return np.clip(idx, 0, n_granules - 1)


def quiet_threshold_grid(n_frames: int, cfg: FrameConfig, sample_rate: int = 16000) -> np.ndarray:
    tq = threshold_in_quiet(cfg.bin_frequencies(sample_rate))
    return np.tile(tq, (n_frames, 1))


def compute_thresholds(original, cfg: FrameConfig | None = None) -> ThresholdMatrix:
    """Hearing thresholds of ``original`` on the front-end grid.

    Each frame takes the granule nearest in time; the masking curve is
    interpolated in frequency from the granule DFT onto the front-end bins
    (mirrored above Nyquist) and combined with the threshold in quiet by max.
    """
    cfg = cfg or FrameConfig()
    if isinstance(original, AudioSignal):
        rate, samples = original.sample_rate_hz, original.samples
    else:
        rate, samples = 16000, np.asarray(original, dtype=np.float64)
    analysis = analyze_granules(samples)
    n_frames = cfg.n_frames(samples.shape[0])

    granule_freqs = np.fft.rfftfreq(GRANULE_DFT, 1.0 / 16000)
    masks = np.stack([masking_curve(m, analysis.bark) for m in analysis.maskers])
    bin_freqs = cfg.bin_frequencies(rate)
    projected = np.stack([np.interp(bin_freqs, granule_freqs, row) for row in masks])
    per_frame = projected[nearest_granule(n_frames, cfg, len(analysis.maskers))]
    quiet = quiet_threshold_grid(n_frames, cfg, rate)
    reference = float(10.0 ** ((MAX_LEVEL_DB - analysis.offset_db) / 10.0))
    return ThresholdMatrix(np.maximum(per_frame, quiet), reference, quiet, analysis)


class HearingThresholdTransformer(TransformerMixin, BaseEstimator):
    """sklearn-style wrapper: signal -> threshold matrix values."""

    def __init__(self, frame_len=400, hop=160, dft_size=512):
        self.frame_len = frame_len
        self.hop = hop
        self.dft_size = dft_size

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        cfg = FrameConfig(self.frame_len, self.hop, self.dft_size)
        return compute_thresholds(X, cfg).values
