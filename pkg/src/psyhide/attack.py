"""Targeted adversarial perturbation of raw audio under hearing-threshold scaling.

One iteration runs the signal through the front-end and acoustic model,
backpropagates the cross-entropy against a fixed state alignment all the way
to the samples and takes a plain gradient step. With thresholds enabled the
complex spectral gradient is damped bin by bin according to how much room is
left under the hearing threshold of the original signal.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from psyhide._validation import DimensionError, check_same_shape
from psyhide.acoustic_model import ToyAcousticModel, cross_entropy_loss
from psyhide.audio_io import AudioSignal
from psyhide.decoding import (
    DecodingGraph,
    StateAlignment,
    equal_align,
    forced_align,
    phone_rate_check,
    viterbi_decode,
)
from psyhide.frontend import FrameConfig, SpectroGrid, backward_preprocess, forward_preprocess
from psyhide.metrics import phi, snr, tokenize, wer
from psyhide.psychoacoustics import MAX_LEVEL_DB, ThresholdMatrix, compute_thresholds

logger = logging.getLogger(__name__)

EPS_D = 1e-12


class PhoneRateError(ValueError):
    def __init__(self, rate, max_rate):
        super().__init__(f"target needs {rate:.2f} phones/s, limit is {max_rate:.2f}")
        self.rate = rate
        self.max_rate = max_rate


@dataclass(frozen=True)
class AttackConfig:
    lambda_db: float = 20.0
    learning_rate: float = 0.05
    max_iterations: int = 500
    check_every: int = 100
    use_thresholds: bool = True
    use_forced_alignment: bool = True
    seed: int = 0
    max_phone_rate: float = 6.0
    realign_every: int = 0  # 0 keeps the initial alignment for the whole run
    reference_db: float = MAX_LEVEL_DB  # level of the original's loudest bin on the D scale
    stop_at_success: bool = True  # False spends the whole budget, noting the first success

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.check_every < 1:
            raise ValueError("check_every must be >= 1")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.lambda_db < 0:
            raise ValueError("lambda must be >= 0")


@dataclass
class AttackReport:
    success: bool
    iterations_used: int
    wer: float
    phi_db: float
    snr_db: float
    transcript: list[str]
    target: list[str]
    alignment: str
    alignment_fallback: bool
    first_success: int | None = None
    loss_history: list[float] = field(default_factory=list)
    wer_history: list[tuple[int, float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["snr_db"] = None if np.isinf(self.snr_db) else self.snr_db
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _spectrum(grid_or_array) -> np.ndarray:
    return grid_or_array.spectrum if isinstance(grid_or_array, SpectroGrid) else np.asarray(grid_or_array)


def difference_matrix(original, modified, eps_d: float = EPS_D, reference_db: float = 0.0) -> np.ndarray:
    """Per-bin level of the spectral difference relative to the original's peak, in dB.

    ``reference_db`` shifts the scale so the original's largest magnitude sits
    at that level (0 dB by default).
    """
    s = _spectrum(original)
    m = _spectrum(modified)
    if s.shape != m.shape:
        raise DimensionError(f"grids differ: {s.shape} vs {m.shape}")
    peak = np.max(np.abs(s))
    if peak == 0:
        raise ValueError("original spectrum is all zeros")
    diff = np.maximum(np.abs(s - m), eps_d)
    return 20.0 * np.log10(diff / peak) + reference_db


def _minmax(matrix: np.ndarray) -> np.ndarray:
    lo, hi = matrix.min(), matrix.max()
    if hi == lo:
        return np.full(matrix.shape, 0.5)
    return (matrix - lo) / (hi - lo)


def scale_factors(thresholds, differences, lambda_db: float):
    """Return ``(phi_hat, h_hat, phi)``.

    ``phi = H - D`` is the headroom under the threshold; ``phi + lambda`` is
    clamped at zero and min-max normalized into ``phi_hat``. ``h_hat`` is the
    min-max normalized threshold matrix. A constant matrix normalizes to 0.5.
    """
    h = np.asarray(getattr(thresholds, "values", thresholds), dtype=np.float64)
    d = np.asarray(differences, dtype=np.float64)
    check_same_shape(h, d, names=("thresholds", "differences"))
    headroom = h - d
    relaxed = np.maximum(headroom + lambda_db, 0.0)
    return _minmax(relaxed), _minmax(h), headroom


def perceptibility(thresholds, differences) -> float:
    """Average excess of the difference spectrum over the hearing threshold."""
    h = np.asarray(getattr(thresholds, "values", thresholds), dtype=np.float64)
    return phi(np.asarray(differences) - h)


@dataclass
class StepResult:
    samples: np.ndarray
    loss: float
    posteriors: np.ndarray
    spectral_scale: np.ndarray | None


def attack_step(
    x,
    target: StateAlignment,
    model: ToyAcousticModel,
    thresholds: ThresholdMatrix | np.ndarray | None,
    cfg: AttackConfig,
    original_spectrum=None,
    frame_cfg: FrameConfig | None = None,
    iteration: int = 0,
) -> StepResult:
    """One gradient step on the raw samples.

    ``original_spectrum`` (complex, or a SpectroGrid) is needed when
    thresholds are in use; pass it in to avoid recomputing it every call.
    """
    frame_cfg = frame_cfg or FrameConfig()
    samples = np.asarray(getattr(x, "samples", x), dtype=np.float64)
    features, grid = forward_preprocess(samples, frame_cfg)
    posteriors, acts = model.forward(features)
    loss, grad_post = cross_entropy_loss(posteriors, target)
    grad_features = model.backward(features, grad_post, cache=(posteriors, acts))

    scale = None
    if cfg.use_thresholds:
        if thresholds is None:
            raise ValueError("thresholds required when use_thresholds is set")
        if original_spectrum is None:
            raise ValueError("original spectrum required when use_thresholds is set")
        d = difference_matrix(original_spectrum, grid, reference_db=cfg.reference_db)
        phi_hat, h_hat, _ = scale_factors(thresholds, d, cfg.lambda_db)
        scale = phi_hat * h_hat

    grad = backward_preprocess(grad_features, grid, spectral_scale=scale)
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0]) if not np.all(np.isfinite(grad)) else -1
        raise FloatingPointError(f"non-finite value at iteration {iteration}, sample {bad}")
    updated = np.clip(samples - cfg.learning_rate * grad, -1.0, 1.0)
    return StepResult(updated, loss, posteriors, scale)


def initial_alignment(posteriors, target_words, graph: DecodingGraph, forced: bool) -> StateAlignment:
    n_frames = posteriors.shape[0]
    if forced:
        return forced_align(posteriors, target_words, graph)
    return equal_align(target_words, n_frames, graph)


def run_attack(
    original: AudioSignal,
    target_words,
    model: ToyAcousticModel,
    graph: DecodingGraph,
    cfg: AttackConfig | None = None,
    thresholds: ThresholdMatrix | None = None,
    frame_cfg: FrameConfig | None = None,
):
    """Iterate :func:`attack_step` until the decoder outputs the target.

    The transcript is checked before the first step, every ``check_every``
    steps and after the last one; the run stops at WER 0 (unless
    ``cfg.stop_at_success`` is off) or after ``max_iterations`` steps.
    ``report.first_success`` is the first check that saw WER 0. Returns
    ``(adversarial_signal, report)``.
    """
    cfg = cfg or AttackConfig()
    frame_cfg = frame_cfg or FrameConfig()
    target = tokenize(target_words) if isinstance(target_words, str) else [w.upper() for w in target_words]
    passed, rate = phone_rate_check(target, original.duration_s, cfg.max_phone_rate, graph.inventory)
    if not passed:
        raise PhoneRateError(rate, cfg.max_phone_rate)

    features, original_grid = forward_preprocess(original, frame_cfg)
    if thresholds is None:
        thresholds = compute_thresholds(original, frame_cfg)
    posteriors = model.predict_proba(features)
    alignment = initial_alignment(posteriors, target, graph, cfg.use_forced_alignment)
    logger.info("alignment %s over %d frames", alignment.source, len(alignment))

    x = original.samples.copy()
    losses: list[float] = []
    wer_history: list[tuple[int, float]] = []
    transcript: list[str] = []
    current_wer = float("inf")
    first_success = None
    iteration = 0
    while True:
        if iteration % cfg.check_every == 0 or iteration == cfg.max_iterations:
            feats, _ = forward_preprocess(x, frame_cfg)
            transcript = viterbi_decode(model.predict_proba(feats), graph)
            current_wer = wer(target, transcript).wer
            wer_history.append((iteration, current_wer))
            logger.debug("iteration %d WER %.3f", iteration, current_wer)
            if current_wer == 0 and first_success is None:
                first_success = iteration
            if (current_wer == 0 and cfg.stop_at_success) or iteration == cfg.max_iterations:
                break
        if cfg.realign_every and iteration and iteration % cfg.realign_every == 0 and cfg.use_forced_alignment:
            feats, _ = forward_preprocess(x, frame_cfg)
            alignment = forced_align(model.predict_proba(feats), target, graph)
        step = attack_step(
            x,
            alignment,
            model,
            thresholds,
            cfg,
            original_spectrum=original_grid,
            frame_cfg=frame_cfg,
            iteration=iteration,
        )
        x = step.samples
        losses.append(step.loss)
        iteration += 1

    adversarial = original.with_samples(x)
    _, final_grid = forward_preprocess(x, frame_cfg)
    d = difference_matrix(original_grid, final_grid, reference_db=cfg.reference_db)
    report = AttackReport(
        success=current_wer == 0,
        iterations_used=iteration,
        wer=current_wer,
        phi_db=perceptibility(thresholds, d),
        snr_db=snr(original, adversarial),
        transcript=transcript,
        target=target,
        alignment=alignment.source,
        alignment_fallback=alignment.fallback,
        first_success=first_success,
        loss_history=losses,
        wer_history=wer_history,
        config=asdict(cfg),
    )
    return adversarial, report


class PsychoacousticAttack(BaseEstimator):
    """Estimator wrapper: ``fit(signal, target)`` crafts the adversarial example.

    After fitting, ``adversarial_`` holds the perturbed signal and ``report_``
    the run summary; :meth:`predict` transcribes any signal with the
    attacked recognizer.
    """

    def __init__(
        self,
        model=None,
        graph=None,
        lambda_db=20.0,
        learning_rate=0.05,
        max_iterations=500,
        check_every=100,
        use_thresholds=True,
        use_forced_alignment=True,
        max_phone_rate=6.0,
        seed=0,
    ):
        self.model = model
        self.graph = graph
        self.lambda_db = lambda_db
        self.learning_rate = learning_rate
        self.max_iterations = max_iterations
        self.check_every = check_every
        self.use_thresholds = use_thresholds
        self.use_forced_alignment = use_forced_alignment
        self.max_phone_rate = max_phone_rate
        self.seed = seed

    def attack_config(self) -> AttackConfig:
        return AttackConfig(
            lambda_db=self.lambda_db,
            learning_rate=self.learning_rate,
            max_iterations=self.max_iterations,
            check_every=self.check_every,
            use_thresholds=self.use_thresholds,
            use_forced_alignment=self.use_forced_alignment,
            seed=self.seed,
            max_phone_rate=self.max_phone_rate,
        )

    def fit(self, X, y):
        if self.model is None or self.graph is None:
            raise ValueError("model and graph must be set")
        signal = X if isinstance(X, AudioSignal) else AudioSignal(X)
        self.adversarial_, self.report_ = run_attack(
            signal, y, self.model, self.graph, self.attack_config()
        )
        return self

    def predict(self, X):
        signal = X if isinstance(X, AudioSignal) else AudioSignal(X)
        features, _ = forward_preprocess(signal)
        return viterbi_decode(self.model.predict_proba(features), self.graph)
