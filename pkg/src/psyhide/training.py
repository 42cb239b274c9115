"""Two-round training of the toy acoustic model: equal alignment, then realignment."""

from __future__ import annotations

import logging

import numpy as np

from psyhide.acoustic_model import PhoneInventory, ToyAcousticModel
from psyhide.decoding import DecodingGraph, equal_align, forced_align
from psyhide.frontend import FrameConfig, forward_preprocess

logger = logging.getLogger(__name__)


def frame_accuracy(model: ToyAcousticModel, corpus, graph: DecodingGraph, cfg=None) -> float:
    """Fraction of frames whose arg-max state equals the reference label.

    Utterances without reference labels are scored against the model's own
    forced alignment of their transcript.
    """
    cfg = cfg or FrameConfig()
    hits = total = 0
    for utt in corpus:
        feats, _ = forward_preprocess(utt.signal, cfg)
        post = model.predict_proba(feats)
        ref = utt.states if utt.states is not None else forced_align(post, utt.words, graph).states
        hits += int(np.sum(np.argmax(post, axis=1) == ref))
        total += len(ref)
    return hits / total


def train_toy(
    model: ToyAcousticModel,
    corpus,
    epochs: int,
    inventory: PhoneInventory,
    heldout=None,
    cfg: FrameConfig | None = None,
):
    """Train ``model`` in place and return ``(model, heldout_frame_accuracy)``.

    Round one uses equally divided state targets; round two re-aligns every
    training utterance with the round-one model and continues training.
    ``epochs`` applies to each round. Without ``heldout`` the last fifth of
    the corpus is held out.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty training corpus")
    cfg = cfg or FrameConfig()
    if heldout is None:
        n_held = max(1, len(corpus) // 5) if len(corpus) > 1 else 0
        corpus, heldout = corpus[: len(corpus) - n_held], corpus[len(corpus) - n_held :]
    graph = DecodingGraph(inventory)
    feats = [forward_preprocess(u.signal, cfg)[0] for u in corpus]

    if epochs > 0:
        if not hasattr(model, "weights_"):
            model.initialize(feats[0].shape[1], feats)
        labels = [equal_align(u.words, f.shape[0], graph).states for u, f in zip(corpus, feats)]
        model.set_params(n_epochs=epochs).fit(feats, labels)
        logger.info("equal-alignment round done, loss %.4f", model.loss_curve_[-1])

        labels = [
            forced_align(model.predict_proba(f), u.words, graph).states for u, f in zip(corpus, feats)
        ]
        model.fit(feats, labels)
        logger.info("realignment round done, loss %.4f", model.loss_curve_[-1])

    if not hasattr(model, "weights_"):
        model.initialize(feats[0].shape[1], feats)
    accuracy = frame_accuracy(model, heldout or corpus, graph, cfg)
    return model, accuracy
