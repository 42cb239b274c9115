"""Toy hybrid acoustic model: spliced log-spectra -> MLP -> state posteriors.

The network is small on purpose; it exists so the full chain from the loss
back to the raw samples can be differentiated exactly and checked against
finite differences.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from psyhide._validation import DimensionError, check_matrix

logger = logging.getLogger(__name__)

EPS_CE = 1e-12
SILENCE = "SIL"
CHECKPOINT_FORMAT = "psyhide-acoustic-model"
CHECKPOINT_VERSION = 1


class LexiconError(KeyError):
    """A word is missing from the lexicon."""


@dataclass
class PhoneInventory:
    """Context-independent phones, three states each, plus a one-state silence.

    State ids: 0 is silence, phone ``i`` state ``j`` is ``1 + i*states_per_phone + j``.
    """

    phones: list[str]
    lexicon: dict[str, list[str]] = field(default_factory=dict)
    states_per_phone: int = 3

    def __post_init__(self):
        if SILENCE in self.phones:
            raise ValueError(f"{SILENCE} is implicit and must not be listed")
        if len(set(self.phones)) != len(self.phones):
            raise ValueError("duplicate phone symbols")
        self._index = {p: i for i, p in enumerate(self.phones)}
        for word, prons in self.lexicon.items():
            unknown = [p for p in prons if p not in self._index]
            if unknown:
                raise ValueError(f"word {word} uses unknown phones {unknown}")

    @property
    def n_states(self) -> int:
        return 1 + len(self.phones) * self.states_per_phone

    def phone_states(self, phone: str) -> list[int]:
        if phone == SILENCE:
            return [0]
        base = 1 + self._index[phone] * self.states_per_phone
        return list(range(base, base + self.states_per_phone))

    def pronounce(self, word: str) -> list[str]:
        try:
            return self.lexicon[word.upper()]
        except KeyError:
            raise LexiconError(f"word {word!r} is not in the lexicon") from None

    def word_states(self, word: str) -> list[int]:
        return [s for p in self.pronounce(word) for s in self.phone_states(p)]

    def state_chain(self, words, silence=True) -> list[int]:
        """Expanded left-to-right state chain, optionally framed by silence."""
        chain = [s for w in words for s in self.word_states(w)]
        return [0, *chain, 0] if silence else chain

    def state_names(self) -> list[str]:
        names = [SILENCE]
        for p in self.phones:
            names.extend(f"{p}_{j}" for j in range(self.states_per_phone))
        return names


def read_lexicon(path) -> PhoneInventory:
    """Parse ``WORD ph1 ph2 ...`` lines.

    A ``# phones: A B C`` comment fixes the phone order (and thus the state
    ids); without it phones are sorted alphabetically.
    """
    lexicon: dict[str, list[str]] = {}
    phones = None
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        stripped = line.strip()
        if stripped.startswith("#"):
            body = stripped.lstrip("#").strip()
            if body.lower().startswith("phones:"):
                phones = body.split(":", 1)[1].split()
            continue
        if not stripped:
            continue
        parts = stripped.split()
        if len(parts) < 2:
            raise ValueError(f"{path}:{lineno}: word without pronunciation")
        lexicon[parts[0].upper()] = parts[1:]
    if phones is None:
        phones = sorted({p for prons in lexicon.values() for p in prons} - {SILENCE})
    return PhoneInventory(phones, lexicon)


def write_lexicon(inventory: PhoneInventory, path) -> None:
    lines = [f"# phones: {' '.join(inventory.phones)}"]
    lines += [f"{word} {' '.join(prons)}" for word, prons in inventory.lexicon.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def splice(features: np.ndarray, context: int) -> np.ndarray:
    """Concatenate frames t-c..t+c per row, repeating the edge frames."""
    n_frames = features.shape[0]
    index = np.clip(np.arange(n_frames)[:, None] + np.arange(-context, context + 1), 0, n_frames - 1)
    return features[index].reshape(n_frames, -1)


def unsplice(grad_spliced: np.ndarray, n_frames: int, n_bins: int, context: int) -> np.ndarray:
    """Adjoint of :func:`splice`: scatter-add each context slot back to its frame."""
    slots = grad_spliced.reshape(n_frames, 2 * context + 1, n_bins)
    grad = np.zeros((n_frames, n_bins))
    for j, offset in enumerate(range(-context, context + 1)):
        lo, hi = max(0, -offset), min(n_frames, n_frames - offset)
        if lo < hi:
            grad[lo + offset : hi + offset] += slots[lo:hi, j]
        # rows whose neighbour fell off an edge read the clamped edge frame
        grad[0] += slots[: min(lo, n_frames), j].sum(axis=0)
        grad[-1] += slots[max(hi, 0) :, j].sum(axis=0)
    return grad


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


class ToyAcousticModel(ClassifierMixin, BaseEstimator):
    """Feed-forward network over spliced frames producing state pseudo-posteriors.

    Parameters
    ----------
    n_states : int
        Output size Q.
    context : int
        Splice radius; each decision sees ``2*context + 1`` frames.
    hidden : tuple of int
        Hidden layer widths, tanh between layers.
    learning_rate, n_epochs, batch_size, seed
        Adam settings used by :meth:`fit`. ``batch_size=None`` trains full batch.
    """

    def __init__(
        self,
        n_states=46,
        context=2,
        hidden=(64,),
        learning_rate=1e-3,
        n_epochs=20,
        batch_size=256,
        weight_decay=0.0,
        seed=0,
    ):
        self.n_states = n_states
        self.context = context
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.n_epochs = n_epochs
        self.batch_size = batch_size
        self.weight_decay = weight_decay
        self.seed = seed

    # -- parameters -------------------------------------------------------

    def _init_params(self, n_bins, feature_mean=None, feature_scale=None):
        rng = np.random.default_rng(self.seed)
        widths = [n_bins * (2 * self.context + 1), *self.hidden, self.n_states]
        self.n_bins_ = n_bins
        self.weights_ = [
            rng.normal(0.0, 1.0 / np.sqrt(a), size=(a, b)) for a, b in zip(widths[:-1], widths[1:])
        ]
        self.biases_ = [np.zeros(b) for b in widths[1:]]
        self.feature_mean_ = np.zeros(n_bins) if feature_mean is None else feature_mean
        self.feature_scale_ = np.ones(n_bins) if feature_scale is None else feature_scale
        self.classes_ = np.arange(self.n_states)
        self.loss_curve_ = []

    def initialize(self, n_bins, features=None):
        """Set up untrained parameters; normalization statistics come from ``features``."""
        mean = scale = None
        if features is not None:
            stacked = np.vstack(features)
            mean = stacked.mean(axis=0)
            scale = stacked.std(axis=0) + 1e-3
        self._init_params(n_bins, mean, scale)
        return self

    @property
    def n_layers(self):
        return len(self.weights_)

    # -- forward / backward -----------------------------------------------

    def _check_features(self, features):
        check_is_fitted(self, "weights_")
        return check_matrix(features, "features", n_cols=self.n_bins_)

    def forward(self, features):
        """Posteriors plus the activations needed by :meth:`backward`."""
        features = self._check_features(features)
        normed = (features - self.feature_mean_) / self.feature_scale_
        h = splice(normed, self.context)
        acts = [h]
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            z = h @ w + b
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return softmax(acts[-1]), acts

    def _backward_logits(self, grad_logits, acts, params=True):
        """Backpropagate logit gradients; returns (grad spliced input, weight grads, bias grads).

        With ``params=False`` only the input gradient is formed.
        """
        grad_w, grad_b = [], []
        g = grad_logits
        for i in reversed(range(self.n_layers)):
            if params:
                grad_w.append(acts[i].T @ g)
                grad_b.append(g.sum(axis=0))
            g = g @ self.weights_[i].T
            if i > 0:
                g = g * (1.0 - acts[i] ** 2)
        return g, grad_w[::-1], grad_b[::-1]

    def backward(self, features, grad_posteriors, cache=None):
        """Gradient of a scalar w.r.t. the (unnormalized) feature matrix."""
        features = self._check_features(features)
        if cache is None:
            posteriors, acts = self.forward(features)
        else:
            posteriors, acts = cache
        grad_posteriors = np.asarray(grad_posteriors, dtype=np.float64)
        if grad_posteriors.shape != posteriors.shape:
            raise DimensionError(
                f"posterior gradient shape {grad_posteriors.shape} != {posteriors.shape}"
            )
        # softmax Jacobian-vector product
        grad_logits = posteriors * (
            grad_posteriors - np.sum(grad_posteriors * posteriors, axis=1, keepdims=True)
        )
        g, _, _ = self._backward_logits(grad_logits, acts, params=False)
        grad_normed = unsplice(g, features.shape[0], self.n_bins_, self.context)
        return grad_normed / self.feature_scale_

    # -- sklearn surface ---------------------------------------------------

    def predict_proba(self, features):
        return self.forward(features)[0]

    def predict(self, features):
        return np.argmax(self.predict_proba(features), axis=1)

    def fit(self, X, y):
        """Train on a list of feature matrices ``X`` with per-frame state labels ``y``.

        A bare matrix / label vector pair is accepted as a single utterance.
        Parameters from a previous fit are kept (warm start), which is how
        the realignment round continues training.
        """
        if isinstance(X, np.ndarray) and X.ndim == 2:
            X, y = [X], [y]
        if len(X) == 0:
            raise ValueError("no training data")
        if not hasattr(self, "weights_"):
            self.initialize(np.shape(X[0])[1], X)
        blocks = []
        for feats, labels in zip(X, y):
            feats = self._check_features(feats)
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise DimensionError("one label per frame required")
            if labels.min() < 0 or labels.max() >= self.n_states:
                raise ValueError("label outside state range")
            normed = (feats - self.feature_mean_) / self.feature_scale_
            blocks.append((splice(normed, self.context), labels))
        inputs = np.vstack([b[0] for b in blocks])
        targets = np.concatenate([b[1] for b in blocks])
        self._train(inputs, targets)
        return self

    def _train(self, inputs, targets):
        rng = np.random.default_rng(self.seed + 1)
        params = self.weights_ + self.biases_
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        step = 0
        n = inputs.shape[0]
        batch = n if self.batch_size is None else min(self.batch_size, n)
        for _ in range(self.n_epochs):
            order = rng.permutation(n) if batch < n else np.arange(n)
            epoch_loss = 0.0
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                loss, grads = self._batch_gradients(inputs[idx], targets[idx])
                epoch_loss += loss * len(idx)
                step += 1
                for p, g, mi, vi in zip(params, grads, m, v):
                    mi *= beta1
                    mi += (1 - beta1) * g
                    vi *= beta2
                    vi += (1 - beta2) * g * g
                    m_hat = mi / (1 - beta1**step)
                    v_hat = vi / (1 - beta2**step)
                    p -= self.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
            self.loss_curve_.append(epoch_loss / n)
            logger.debug("epoch %d loss %.4f", len(self.loss_curve_), self.loss_curve_[-1])

    def _batch_gradients(self, x, labels):
        acts = [x]
        h = x
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            z = h @ w + b
            h = np.tanh(z) if i < self.n_layers - 1 else z
            acts.append(h)
        post = softmax(acts[-1])
        rows = np.arange(len(labels))
        loss = -np.mean(np.log(np.maximum(post[rows, labels], EPS_CE)))
        grad_logits = post.copy()
        grad_logits[rows, labels] -= 1.0
        grad_logits /= len(labels)
        _, grad_w, grad_b = self._backward_logits(grad_logits, acts)
        if self.weight_decay:
            grad_w = [g + self.weight_decay * w for g, w in zip(grad_w, self.weights_)]
        return loss, grad_w + grad_b

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "weights_")
        arrays = {"feature_mean": self.feature_mean_, "feature_scale": self.feature_scale_}
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        params = self.get_params()
        params["hidden"] = list(params["hidden"])
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "params": params,
            "n_bins": int(self.n_bins_),
            "arrays": {
                name: {"shape": list(a.shape), "data": np.asarray(a, dtype=np.float64).ravel().tolist()}
                for name, a in arrays.items()
            },
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ToyAcousticModel":
        if payload.get("format") != CHECKPOINT_FORMAT:
            raise ValueError("not an acoustic model checkpoint")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        params = dict(payload["params"])
        params["hidden"] = tuple(params["hidden"])
        model = cls(**params)
        arrays = {
            name: np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
            for name, spec in payload["arrays"].items()
        }
        n_layers = sum(1 for name in arrays if name.startswith("W"))
        model.n_bins_ = int(payload["n_bins"])
        model.feature_mean_ = arrays["feature_mean"]
        model.feature_scale_ = arrays["feature_scale"]
        model.weights_ = [arrays[f"W{i}"] for i in range(n_layers)]
        model.biases_ = [arrays[f"b{i}"] for i in range(n_layers)]
        model.classes_ = np.arange(model.n_states)
        model.loss_curve_ = []
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ToyAcousticModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def model_forward(model: ToyAcousticModel, features) -> np.ndarray:
    return model.predict_proba(features)


def model_backward(model: ToyAcousticModel, features, grad_posteriors) -> np.ndarray:
    return model.backward(features, grad_posteriors)


def cross_entropy_loss(posteriors, target):
    """Mean negative log posterior of the target state per frame.

    Returns ``(loss, grad)`` where ``grad`` is w.r.t. the posterior matrix.
    Posteriors below ``EPS_CE`` are clamped so neither value is ever NaN.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    target = np.asarray(getattr(target, "states", target), dtype=np.int64)
    n_frames, n_states = posteriors.shape
    if target.shape != (n_frames,):
        raise DimensionError(f"target has {target.shape[0]} frames, posteriors {n_frames}")
    if target.min() < 0 or target.max() >= n_states:
        raise ValueError("target state outside posterior range")
    rows = np.arange(n_frames)
    picked = np.maximum(posteriors[rows, target], EPS_CE)
    loss = -np.sum(np.log(picked)) / n_frames
    grad = np.zeros_like(posteriors)
    grad[rows, target] = -1.0 / (n_frames * picked)
    return float(loss), grad
