"""Differentiable log-power spectrum front-end.

The forward chain is framing + window, zero-padded DFT, squared magnitude and
logarithm. Each stage has an explicit backward function so callers (the
attack) can intervene between the DFT and magnitude stages, where the complex
gradient is carried as a separate (real, imaginary) pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from psyhide._validation import DimensionError
from psyhide.audio_io import AudioSignal

EPS_LOG = 1e-10


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class FrameConfig:
    frame_len: int = 400
    hop: int = 160
    dft_size: int = 512
    window: np.ndarray = field(default=None, repr=False, compare=False)
    eps_log: float = EPS_LOG

    def __post_init__(self):
        if not 0 < self.hop <= self.frame_len <= self.dft_size:
            raise ValueError("need 0 < hop <= frame_len <= dft_size")
        window = hann_periodic(self.frame_len) if self.window is None else self.window
        window = np.array(window, dtype=np.float64)
        if window.shape != (self.frame_len,):
            raise ValueError("window length must equal frame_len")
        if np.any(window < 0) or np.any(window > 1):
            raise ValueError("window values must lie in [0, 1]")
        window.setflags(write=False)
        object.__setattr__(self, "window", window)

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.frame_len:
            raise DimensionError(
                f"signal of {n_samples} samples is shorter than one frame ({self.frame_len})"
            )
        return 1 + (n_samples - self.frame_len) // self.hop

    def bin_frequencies(self, sample_rate: int) -> np.ndarray:
        """Physical frequency of every DFT bin, mirrored above Nyquist."""
        k = np.arange(self.dft_size)
        return np.minimum(k, self.dft_size - k) * sample_rate / self.dft_size


@dataclass
class SpectroGrid:
    """Complex spectrum of every frame plus the intermediates the backward pass needs."""

    spectrum: np.ndarray  # (T, K) complex
    windowed: np.ndarray  # (T, N)
    power: np.ndarray  # (T, K) = Re^2 + Im^2
    config: FrameConfig
    n_samples: int

    @property
    def shape(self):
        return self.spectrum.shape


def frame_signal(samples: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    n_frames = cfg.n_frames(samples.shape[0])
    view = np.lib.stride_tricks.sliding_window_view(samples, cfg.frame_len)
    return view[: (n_frames - 1) * cfg.hop + 1 : cfg.hop]


def spectrogram(samples, cfg: FrameConfig) -> SpectroGrid:
    samples = np.asarray(samples, dtype=np.float64)
    windowed = frame_signal(samples, cfg) * cfg.window
    spectrum = np.fft.fft(windowed, n=cfg.dft_size, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    return SpectroGrid(spectrum, windowed, power, cfg, samples.shape[0])


def forward_preprocess(x, cfg: FrameConfig | None = None):
    """Compute log-power features and the cached spectral grid.

    ``x`` may be an :class:`AudioSignal` or a raw sample array.
    """
    cfg = cfg or FrameConfig()
    samples = x.samples if isinstance(x, AudioSignal) else x
    grid = spectrogram(samples, cfg)
    return np.log(grid.power + cfg.eps_log), grid


def log_backward(grad_features: np.ndarray, grid: SpectroGrid) -> np.ndarray:
    _check_grid_shape(grad_features, grid)
    return grad_features / (grid.power + grid.config.eps_log)


def magnitude_backward(grad_power: np.ndarray, grid: SpectroGrid):
    """Split a power-spectrum gradient into its (Re, Im) pair."""
    _check_grid_shape(grad_power, grid)
    return 2.0 * grid.spectrum.real * grad_power, 2.0 * grid.spectrum.imag * grad_power


def dft_backward(grad_re: np.ndarray, grad_im: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Gradient w.r.t. the windowed frames.

    Evaluates sum_k grad_re*cos(2 pi k n / K) - grad_im*sin(2 pi k n / K),
    which is the real part of an unnormalized inverse DFT.
    """
    k = cfg.dft_size
    full = np.fft.ifft(grad_re + 1j * grad_im, axis=1).real * k
    return full[:, : cfg.frame_len]


def window_backward(grad_windowed: np.ndarray, cfg: FrameConfig, n_samples: int) -> np.ndarray:
    """Overlap-add the per-frame gradients back onto the sample axis."""
    n_frames = grad_windowed.shape[0]
    if n_frames != cfg.n_frames(n_samples):
        raise DimensionError("frame count does not match signal length")
    index = (np.arange(n_frames)[:, None] * cfg.hop + np.arange(cfg.frame_len)).ravel()
    contrib = (grad_windowed * cfg.window).ravel()
    # bincount sums in index order, so the accumulation is deterministic
    return np.bincount(index, weights=contrib, minlength=n_samples)


def backward_preprocess(grad_features, grid: SpectroGrid, spectral_scale=None) -> np.ndarray:
    """Chain rule from feature cotangents back to the raw samples.

    ``spectral_scale`` multiplies both members of the (Re, Im) gradient pair
    elementwise at the magnitude/DFT boundary.
    """
    grad_features = np.asarray(grad_features, dtype=np.float64)
    grad_power = log_backward(grad_features, grid)
    grad_re, grad_im = magnitude_backward(grad_power, grid)
    if spectral_scale is not None:
        _check_grid_shape(spectral_scale, grid)
        grad_re = grad_re * spectral_scale
        grad_im = grad_im * spectral_scale
    grad_windowed = dft_backward(grad_re, grad_im, grid.config)
    return window_backward(grad_windowed, grid.config, grid.n_samples)


def _check_grid_shape(arr, grid: SpectroGrid):
    if np.shape(arr) != grid.shape:
        raise DimensionError(f"expected shape {grid.shape}, got {np.shape(arr)}")


def dump_matrix_csv(path, matrix: np.ndarray, fmt: str = "%.6f") -> None:
    """Row per frame, column per bin."""
    np.savetxt(path, np.asarray(matrix), delimiter=",", fmt=fmt)


class LogSpectrumTransformer(TransformerMixin, BaseEstimator):
    """Stateless sklearn wrapper around :func:`forward_preprocess`."""

    def __init__(self, frame_len=400, hop=160, dft_size=512, eps_log=EPS_LOG):
        self.frame_len = frame_len
        self.hop = hop
        self.dft_size = dft_size
        self.eps_log = eps_log

    def frame_config(self) -> FrameConfig:
        return FrameConfig(self.frame_len, self.hop, self.dft_size, eps_log=self.eps_log)

    def fit(self, X=None, y=None):
        self.config_ = self.frame_config()
        return self

    def transform(self, X):
        features, _ = forward_preprocess(X, self.frame_config())
        return features
