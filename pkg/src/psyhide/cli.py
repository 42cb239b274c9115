"""Hide target transcriptions in audio below psychoacoustic hearing thresholds.

Exit codes: 0 success, 1 usage or input error, 2 attack did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from psyhide.acoustic_model import LexiconError, ToyAcousticModel, read_lexicon
from psyhide.attack import AttackConfig, PhoneRateError, difference_matrix, run_attack
from psyhide.audio_io import AudioFormatError, read_wav, write_wav
from psyhide.corpus import default_inventory, make_corpus, read_corpus, write_corpus
from psyhide.decoding import AlignmentError, DecodingGraph, viterbi_decode
from psyhide.frontend import dump_matrix_csv, forward_preprocess
from psyhide.psychoacoustics import compute_thresholds
from psyhide.sweep import ExperimentSpec, cmd_sweep, summarize
from psyhide.training import train_toy

logger = logging.getLogger("psyhide")

EXIT_OK, EXIT_USAGE, EXIT_NOT_CONVERGED = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; 2 is reserved for non-convergence here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _existing(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"{what} not found: {p}")
    return p


def _inventory(path):
    return read_lexicon(_existing(path, "lexicon")) if path else default_inventory()


def _load_model(path, inventory) -> ToyAcousticModel:
    model = ToyAcousticModel.load(_existing(path, "model checkpoint"))
    if model.n_states != inventory.n_states:
        raise UsageError(f"model has {model.n_states} states, lexicon needs {inventory.n_states}")
    return model


def cmd_make_corpus(args) -> int:
    inventory = _inventory(args.lexicon)
    corpus = make_corpus(args.n, inventory, seed=args.seed, words_per_utterance=(args.min_words, args.max_words))
    write_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} utterances to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    inventory = _inventory(args.lexicon)
    corpus = read_corpus(_existing(args.corpus, "corpus directory"))
    if not corpus:
        raise UsageError(f"no utterances in {args.corpus}")
    model = ToyAcousticModel(n_states=inventory.n_states, hidden=tuple(args.hidden), seed=args.seed)
    model, accuracy = train_toy(model, corpus, args.epochs, inventory)
    model.save(args.out)
    print(f"held-out frame accuracy {accuracy:.4f}")
    return EXIT_OK


def cmd_decode(args) -> int:
    inventory = _inventory(args.lexicon)
    model = _load_model(args.model, inventory)
    features, _ = forward_preprocess(read_wav(_existing(args.input, "input audio")))
    print(" ".join(viterbi_decode(model.predict_proba(features), DecodingGraph(inventory))))
    return EXIT_OK


def cmd_thresholds(args) -> int:
    signal = read_wav(_existing(args.input, "input audio"))
    dump_matrix_csv(args.out, compute_thresholds(signal).values)
    return EXIT_OK


def _dump_spectra(directory, original, adversarial, thresholds, cfg: AttackConfig):
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    _, s = forward_preprocess(original)
    _, m = forward_preprocess(adversarial)
    dump_matrix_csv(out / "original_magnitude.csv", np.abs(s.spectrum))
    dump_matrix_csv(out / "adversarial_magnitude.csv", np.abs(m.spectrum))
    dump_matrix_csv(out / "difference_db.csv", difference_matrix(s, m, reference_db=cfg.reference_db))
    dump_matrix_csv(out / "thresholds_db.csv", thresholds.values)


def cmd_attack(args) -> int:
    inventory = _inventory(args.lexicon)
    model = _load_model(args.model, inventory)
    original = read_wav(_existing(args.input, "input audio"))
    cfg = AttackConfig(
        lambda_db=args.lambda_db,
        learning_rate=args.learning_rate,
        max_iterations=args.iterations,
        check_every=args.check_every,
        use_thresholds=not args.no_thresholds,
        use_forced_alignment=not args.equal_align,
        seed=args.seed,
        max_phone_rate=args.max_phone_rate,
    )
    thresholds = compute_thresholds(original)
    adversarial, report = run_attack(
        original, args.target, model, DecodingGraph(inventory), cfg, thresholds=thresholds
    )
    write_wav(adversarial, args.out)
    report_path = Path(args.report) if args.report else Path(args.out).with_suffix(".json")
    report_path.write_text(report.to_json() + "\n")
    if args.dump_spectra:
        _dump_spectra(args.dump_spectra, original, adversarial, thresholds, cfg)
    verdict = "success" if report.success else "not converged"
    print(f"{verdict}: WER {report.wer:.3f} after {report.iterations_used} iterations, phi {report.phi_db:.2f} dB")
    return EXIT_OK if report.success else EXIT_NOT_CONVERGED


def _targets(args) -> list[str]:
    targets = list(args.target or [])
    if args.targets_file:
        lines = _existing(args.targets_file, "target list").read_text().splitlines()
        targets += [t.strip() for t in lines if t.strip()]
    if not targets:
        raise UsageError("no targets given (use --target or --targets-file)")
    return targets


def cmd_sweep_cli(args) -> int:
    inventory = _inventory(args.lexicon)
    model = _load_model(args.model, inventory)
    spec = ExperimentSpec(
        corpus_dir=str(_existing(args.corpus, "corpus directory")),
        targets=_targets(args),
        lambdas=args.lambdas.split(","),
        budgets=[int(b) for b in args.iterations.split(",")],
        max_phone_rate=args.max_phone_rate,
        seed=args.seed,
        output_dir=args.out,
        learning_rate=args.learning_rate,
        use_forced_alignment=not args.equal_align,
        stop_at_success=not args.full_budget,
    )
    path, rows = cmd_sweep(spec, model, inventory)
    summary = {str(k): v for k, v in summarize(rows).items()}
    (Path(args.out) / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{len(rows)} rows written to {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="psyhide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def lexicon_flag(p):
        p.add_argument("--lexicon", help="lexicon file (default: built-in toy lexicon)")

    p = sub.add_parser("make-corpus", help="synthesize a toy corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--min-words", type=int, default=1)
    p.add_argument("--max-words", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    lexicon_flag(p)
    p.set_defaults(func=cmd_make_corpus)

    p = sub.add_parser("train", help="train the toy acoustic model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--hidden", type=int, nargs="+", default=[64])
    p.add_argument("--seed", type=int, default=0)
    lexicon_flag(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("decode", help="transcribe a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", required=True)
    lexicon_flag(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("thresholds", help="write the hearing-threshold matrix as CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("attack", help="hide a target transcription in a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--lambda", dest="lambda_db", type=float, default=20.0)
    p.add_argument("--iterations", type=int, default=500)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--check-every", type=int, default=100)
    p.add_argument("--max-phone-rate", type=float, default=6.0)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="JSON report path (default: --out with .json suffix)")
    p.add_argument("--no-thresholds", action="store_true")
    p.add_argument("--equal-align", action="store_true")
    p.add_argument("--dump-spectra", metavar="DIR")
    p.add_argument("--seed", type=int, default=0)
    lexicon_flag(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("sweep", help="attack every utterance/target/lambda/budget combination")
    p.add_argument("--corpus", required=True)
    p.add_argument("--target", action="append", help="target text, repeatable")
    p.add_argument("--targets-file", help="one target text per line")
    p.add_argument("--lambdas", default="20", help="comma-separated; 'none' disables thresholds")
    p.add_argument("--iterations", default="500", help="comma-separated budgets")
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--max-phone-rate", type=float, default=6.0)
    p.add_argument("--equal-align", action="store_true")
    p.add_argument("--full-budget", action="store_true", help="keep iterating after the first success")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    lexicon_flag(p)
    p.set_defaults(func=cmd_sweep_cli)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (UsageError, AudioFormatError, LexiconError, PhoneRateError, AlignmentError, ValueError, OSError) as exc:
        print(f"psyhide: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
