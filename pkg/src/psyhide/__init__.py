"""Psychoacoustically hidden adversarial examples against a toy DNN-HMM recognizer."""

from psyhide.acoustic_model import PhoneInventory, ToyAcousticModel, cross_entropy_loss, read_lexicon
from psyhide.attack import AttackConfig, AttackReport, PsychoacousticAttack, run_attack
from psyhide.audio_io import AudioSignal, read_wav, write_wav
from psyhide.corpus import default_inventory, make_corpus
from psyhide.decoding import DecodingGraph, equal_align, forced_align, viterbi_decode
from psyhide.frontend import FrameConfig, LogSpectrumTransformer, backward_preprocess, forward_preprocess
from psyhide.metrics import phi, snr, wer
from psyhide.psychoacoustics import HearingThresholdTransformer, compute_thresholds
from psyhide.training import train_toy

__version__ = "0.1.0"

__all__ = [
    "AttackConfig",
    "AttackReport",
    "AudioSignal",
    "DecodingGraph",
    "FrameConfig",
    "HearingThresholdTransformer",
    "LogSpectrumTransformer",
    "PhoneInventory",
    "PsychoacousticAttack",
    "ToyAcousticModel",
    "backward_preprocess",
    "compute_thresholds",
    "cross_entropy_loss",
    "default_inventory",
    "equal_align",
    "forced_align",
    "forward_preprocess",
    "make_corpus",
    "phi",
    "read_lexicon",
    "read_wav",
    "run_attack",
    "snr",
    "train_toy",
    "viterbi_decode",
    "wer",
    "write_wav",
]
