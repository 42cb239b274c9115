"""Word-loop Viterbi decoding, forced alignment and the phone-rate gate."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from psyhide.acoustic_model import EPS_CE, PhoneInventory
from psyhide.metrics import tokenize

LOG_HALF = np.log(0.5)


class AlignmentError(ValueError):
    """The state chain cannot be laid out over the available frames."""


class AlignmentFallbackWarning(UserWarning):
    pass


def log_emissions(posteriors) -> np.ndarray:
    return np.log(np.maximum(np.asarray(posteriors, dtype=np.float64), EPS_CE))


def _words(target) -> list[str]:
    return tokenize(target) if isinstance(target, str) else [w.upper() for w in target]


@dataclass
class StateAlignment:
    """Per-frame target states laid along an expanded state chain."""

    states: np.ndarray
    positions: np.ndarray  # chain index per frame
    chain: list[int]
    source: str  # "forced" or "equal"
    fallback: bool = False

    def __len__(self):
        return len(self.states)

    def score(self, posteriors) -> float:
        """Sum of log posteriors along the alignment."""
        logp = log_emissions(posteriors)
        return float(logp[np.arange(len(self.states)), self.states].sum())


class DecodingGraph:
    """Word loop over lexicon chains with an optional one-state silence.

    Nodes are (HMM state, word) pairs; every word gets its own copy of its
    states. Within a word each node has a self-loop and an advance arc, both
    with probability 1/2. From a word-final node (or silence) the exit mass
    of 1/2 is spread uniformly over all entry nodes.
    """

    def __init__(self, inventory: PhoneInventory, words=None, silence=True):
        self.inventory = inventory
        self.words = [w.upper() for w in (words if words is not None else inventory.lexicon)]
        node_state, node_word = [], []
        entries, finals = [], []
        spans = []
        for wi, word in enumerate(self.words):
            states = inventory.word_states(word)
            first = len(node_state)
            node_state.extend(states)
            node_word.extend([wi] * len(states))
            entries.append(first)
            finals.append(first + len(states) - 1)
            spans.append((first, first + len(states)))
        self.silence_node = None
        if silence:
            self.silence_node = len(node_state)
            node_state.append(0)
            node_word.append(-1)
            entries.append(self.silence_node)
            finals.append(self.silence_node)

        n = len(node_state)
        self.node_state = np.array(node_state, dtype=np.int64)
        self.node_word = np.array(node_word, dtype=np.int64)
        self.entries = np.array(entries, dtype=np.int64)
        self.finals = np.array(finals, dtype=np.int64)

        log_a = np.full((n, n), -np.inf)
        new_word = np.zeros((n, n), dtype=bool)
        for first, stop in spans:
            for i in range(first, stop):
                log_a[i, i] = LOG_HALF
                if i + 1 < stop:
                    log_a[i, i + 1] = LOG_HALF
        exit_logp = LOG_HALF - np.log(len(entries))
        for src in finals:
            log_a[src, src] = LOG_HALF
            for dst in entries:
                if dst == src:
                    # silence re-entering itself is just a longer silence
                    log_a[src, src] = np.logaddexp(log_a[src, src], exit_logp)
                    continue
                log_a[src, dst] = exit_logp
                new_word[src, dst] = True
        self.log_trans = log_a
        self.new_word = new_word
        self.log_start = np.full(n, -np.inf)
        self.log_start[self.entries] = -np.log(len(entries))

    @property
    def n_nodes(self) -> int:
        return len(self.node_state)

    def path_score(self, path, log_emit) -> float:
        path = list(path)
        score = self.log_start[path[0]] + log_emit[0, self.node_state[path[0]]]
        for t in range(1, len(path)):
            score += self.log_trans[path[t - 1], path[t]] + log_emit[t, self.node_state[path[t]]]
        return float(score)

    def path_words(self, path) -> list[str]:
        words = []
        for t, node in enumerate(path):
            if t == 0 or self.new_word[path[t - 1], node]:
                wi = self.node_word[node]
                if wi >= 0:
                    words.append(self.words[wi])
        return words


def viterbi_path(posteriors, graph: DecodingGraph):
    """Best node path; ties resolve to the lowest node id."""
    log_emit = log_emissions(posteriors)
    n_frames = log_emit.shape[0]
    if n_frames < 1:
        raise ValueError("need at least one frame")
    emit = log_emit[:, graph.node_state]
    delta = graph.log_start + emit[0]
    back = np.zeros((n_frames, graph.n_nodes), dtype=np.int64)
    for t in range(1, n_frames):
        cand = delta[:, None] + graph.log_trans
        back[t] = np.argmax(cand, axis=0)
        delta = cand[back[t], np.arange(graph.n_nodes)] + emit[t]
    final_scores = delta[graph.finals]
    best = np.flatnonzero(final_scores == final_scores.max())
    node = int(np.min(graph.finals[best]))
    score = float(delta[node])
    path = [node]
    for t in range(n_frames - 1, 0, -1):
        node = int(back[t, node])
        path.append(node)
    return path[::-1], score


def viterbi_decode(posteriors, graph: DecodingGraph) -> list[str]:
    path, _ = viterbi_path(posteriors, graph)
    return graph.path_words(path)


def align_chain(posteriors, chain) -> tuple[np.ndarray, float]:
    """Best monotone assignment of frames to a left-to-right chain.

    Every chain position gets at least one frame. Among equal-scoring paths
    the one with the latest transitions wins (stay in the current state).
    Returns the chain position per frame and the path log score.
    """
    log_emit = log_emissions(posteriors)
    n_frames, n_pos = log_emit.shape[0], len(chain)
    if n_pos == 0:
        raise AlignmentError("empty state chain")
    if n_frames < n_pos:
        raise AlignmentError(f"{n_frames} frames cannot cover {n_pos} states")
    emit = log_emit[:, chain]
    delta = np.full(n_pos, -np.inf)
    delta[0] = emit[0, 0]
    advanced = np.zeros((n_frames, n_pos), dtype=bool)
    for t in range(1, n_frames):
        stay = delta
        move = np.concatenate(([-np.inf], delta[:-1]))
        # on a tie the predecessor one position back wins, which delays the
        # transition into this position as long as possible
        advanced[t] = move >= stay
        delta = np.where(advanced[t], move, stay) + emit[t]
    positions = np.empty(n_frames, dtype=np.int64)
    pos = n_pos - 1
    score = float(delta[pos])
    for t in range(n_frames - 1, -1, -1):
        positions[t] = pos
        if t > 0 and advanced[t, pos]:
            pos -= 1
    return positions, score


def equal_align(target_words, n_frames: int, graph: DecodingGraph, silence=True) -> StateAlignment:
    """Split the frames into contiguous equal blocks, one per chain state."""
    words = _words(target_words)
    if not words:
        raise ValueError("empty target transcription")
    if n_frames < 1:
        raise ValueError("need at least one frame")
    chain = graph.inventory.state_chain(words, silence=silence)
    n_pos = len(chain)
    if n_pos > n_frames:
        raise AlignmentError(f"{n_pos} states do not fit into {n_frames} frames")
    base, extra = divmod(n_frames, n_pos)
    sizes = np.full(n_pos, base)
    sizes[:extra] += 1
    positions = np.repeat(np.arange(n_pos), sizes)
    return StateAlignment(np.asarray(chain)[positions], positions, chain, "equal")


def forced_align(posteriors, target_words, graph: DecodingGraph, silence=True) -> StateAlignment:
    """Viterbi alignment of the target's state chain to the posteriors.

    When the chain is longer than the utterance this falls back to
    :func:`equal_align` (with a warning), which itself rejects chains that
    cannot get one frame per state.
    """
    words = _words(target_words)
    if not words:
        raise ValueError("empty target transcription")
    chain = graph.inventory.state_chain(words, silence=silence)
    n_frames = np.shape(posteriors)[0]
    if n_frames < len(chain):
        warnings.warn(
            f"forced alignment infeasible ({n_frames} frames < {len(chain)} states); "
            "using equal division",
            AlignmentFallbackWarning,
            stacklevel=2,
        )
        result = equal_align(words, n_frames, graph, silence=silence)
        result.fallback = True
        return result
    positions, _ = align_chain(posteriors, chain)
    return StateAlignment(np.asarray(chain)[positions], positions, chain, "forced")


def phone_rate_check(target_words, duration_s: float, max_rate: float, inventory: PhoneInventory):
    """Return ``(passed, rate)`` with rate in phones per second."""
    if duration_s <= 0:
        raise ValueError("duration must be positive")
    words = _words(target_words)
    n_phones = sum(len(inventory.pronounce(w)) for w in words)
    if n_phones == 0:
        raise ValueError("target transcription has no phones")
    rate = n_phones / duration_s
    return rate <= max_rate, rate
