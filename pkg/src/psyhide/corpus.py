"""Synthetic speech-like corpus so the toolkit runs without external data.

Every emitting HMM state owns a pair of "formant" tones; an utterance is a
sequence of equally long state segments with phase-continuous oscillators
over a faint harmonic voicing bed, framed by silence and covered by a low
noise floor. The segment length (the
speaking rate) varies between utterances.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from psyhide.acoustic_model import PhoneInventory
from psyhide.audio_io import SAMPLE_RATE, AudioSignal, read_wav, write_wav
from psyhide.frontend import FrameConfig
from psyhide.metrics import tokenize

DEFAULT_PHONES = ["AA", "EH", "IY", "UW", "OW", "AH", "S", "T", "N", "M", "L", "R", "K", "D", "P"]

DEFAULT_LEXICON = {
    "ON": ["AA", "N"],
    "NO": ["N", "OW"],
    "STOP": ["S", "T", "AA", "P"],
    "OPEN": ["OW", "P", "AH", "N"],
    "DOOR": ["D", "OW", "R"],
    "LIGHT": ["L", "AA", "T"],
    "NOT": ["N", "AA", "T"],
    "KEEP": ["K", "IY", "P"],
    "SEND": ["S", "EH", "N", "D"],
    "MONEY": ["M", "AH", "N", "IY"],
    "TO": ["T", "UW"],
    "ME": ["M", "IY"],
    "READ": ["R", "IY", "D"],
    "MAIL": ["M", "EH", "L"],
    "CALL": ["K", "AA", "L"],
    "MOON": ["M", "UW", "N"],
    "SOON": ["S", "UW", "N"],
    "TEN": ["T", "EH", "N"],
    "DEAL": ["D", "IY", "L"],
    "LOOK": ["L", "UW", "K"],
    "DROP": ["D", "R", "AA", "P"],
    "SLOW": ["S", "L", "OW"],
    "PLAN": ["P", "L", "AA", "N"],
    "TREE": ["T", "R", "IY"],
}

NOISE_LEVEL = 0.003
FORMANT_AMPS = (0.25, 0.12)
BED_AMP = 0.01  # per harmonic of the voicing bed under the formant tones
BED_MAX_HZ = 6000.0
PITCH_HZ = (130.0, 190.0)
STATE_FRAMES = (3, 6)  # inclusive range of 10 ms frames per state (speaking rate)


def default_inventory() -> PhoneInventory:
    return PhoneInventory(list(DEFAULT_PHONES), {w: list(p) for w, p in DEFAULT_LEXICON.items()})


def state_formants(n_states: int, seed: int = 1234) -> np.ndarray:
    """Well separated (f1, f2) pairs for states 1..n_states-1; row 0 (silence) is zero."""
    rng = np.random.default_rng(seed)
    table = np.zeros((n_states, 2))
    chosen: list[tuple[float, float]] = []
    while len(chosen) < n_states - 1:
        f1 = rng.uniform(250.0, 1100.0)
        f2 = rng.uniform(1300.0, 3800.0)
        if all(abs(f1 - a) >= 70.0 or abs(f2 - b) >= 140.0 for a, b in chosen):
            chosen.append((f1, f2))
    table[1:] = chosen
    return table


@dataclass
class Utterance:
    signal: AudioSignal
    words: list[str]
    states: np.ndarray | None = None  # reference state per front-end frame
    name: str = ""


def synthesize(words, inventory: PhoneInventory, rng, cfg: FrameConfig | None = None) -> Utterance:
    """Render a word sequence; the frame labels come from the state at each frame centre."""
    cfg = cfg or FrameConfig()
    words = [w.upper() for w in words]
    formants = state_formants(inventory.n_states)
    hop = cfg.hop

    # one speaking rate per utterance: every state, silence included, lasts the same
    frames_per_state = int(rng.integers(STATE_FRAMES[0], STATE_FRAMES[1] + 1))
    segments = [(s, frames_per_state) for s in inventory.state_chain(words)]
    # frame_len - hop extra samples split around the utterance: frame t is then
    # centred on the first hop of the t-th 10 ms slot and fills whole frames
    pad = (cfg.frame_len - hop) // 2
    sample_states = np.concatenate(
        [np.zeros(pad, dtype=int)]
        + [np.full(d * hop, s) for s, d in segments]
        + [np.zeros(cfg.frame_len - hop - pad, dtype=int)]
    )

    jitter = rng.uniform(0.98, 1.02, size=2)
    gain = rng.uniform(0.7, 1.3)
    freq = formants[sample_states] * jitter
    voiced = sample_states > 0
    phase = 2.0 * np.pi * np.cumsum(freq, axis=0) / SAMPLE_RATE
    tones = (np.sin(phase) * FORMANT_AMPS).sum(axis=1)
    f0 = rng.uniform(*PITCH_HZ)
    harmonics = np.arange(1, int(BED_MAX_HZ // f0) + 1)
    pitch_phase = 2.0 * np.pi * f0 * np.arange(sample_states.shape[0]) / SAMPLE_RATE
    bed = BED_AMP * np.sin(np.outer(pitch_phase, harmonics)).sum(axis=1)
    tones = (tones + bed) * voiced * gain
    samples = tones + NOISE_LEVEL * rng.standard_normal(sample_states.shape[0])

    n_frames = cfg.n_frames(samples.shape[0])
    centres = np.arange(n_frames) * hop + cfg.frame_len // 2
    return Utterance(AudioSignal(np.clip(samples, -1.0, 1.0)), words, sample_states[centres])


def make_corpus(
    n_utterances: int,
    inventory: PhoneInventory | None = None,
    seed: int = 0,
    words_per_utterance=(1, 3),
) -> list[Utterance]:
    inventory = inventory or default_inventory()
    rng = np.random.default_rng(seed)
    vocab = sorted(inventory.lexicon)
    corpus = []
    for i in range(n_utterances):
        n_words = rng.integers(words_per_utterance[0], words_per_utterance[1] + 1)
        words = [vocab[j] for j in rng.integers(0, len(vocab), size=n_words)]
        utt = synthesize(words, inventory, rng)
        utt.name = f"utt{i:04d}"
        corpus.append(utt)
    return corpus


def write_corpus(corpus, directory) -> None:
    """One WAV per utterance plus a ``text`` file of ``<name> WORD ...`` lines."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    lines = []
    for utt in corpus:
        write_wav(utt.signal, directory / f"{utt.name}.wav")
        lines.append(f"{utt.name} {' '.join(utt.words)}")
    (directory / "text").write_text("\n".join(lines) + "\n")


def read_corpus(directory) -> list[Utterance]:
    directory = Path(directory)
    text = directory / "text"
    if not text.exists():
        raise FileNotFoundError(f"{text} not found")
    corpus = []
    for line in text.read_text().splitlines():
        if not line.strip():
            continue
        name, _, transcript = line.strip().partition(" ")
        corpus.append(Utterance(read_wav(directory / f"{name}.wav"), tokenize(transcript), None, name))
    return corpus
