"""Batch experiments: attack every (utterance, target, lambda, budget) cell and tabulate.

Runs are independent and go to a process pool; the worker count comes from
``PSYHIDE_WORKERS`` (default: CPU count, at most 8). Rows are sorted before
they are written, so the CSV does not depend on completion order.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from psyhide.acoustic_model import PhoneInventory, ToyAcousticModel
from psyhide.attack import AttackConfig, PhoneRateError, run_attack
from psyhide.corpus import Utterance, make_corpus
from psyhide.decoding import AlignmentError, DecodingGraph, phone_rate_check

logger = logging.getLogger(__name__)

WORKERS_ENV = "PSYHIDE_WORKERS"
NO_THRESHOLDS = "none"
COLUMNS = ["utterance", "target", "lambda", "budget", "status", "success", "iterations", "first_success", "wer", "phi_db", "snr_db"]


def worker_count(default_cap: int = 8) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        n = int(raw)
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return max(1, min(os.cpu_count() or 1, default_cap))


def _lambda_key(value):
    return -1.0 if value == NO_THRESHOLDS else float(value)


@dataclass
class ExperimentSpec:
    """A sweep grid. ``lambdas`` may contain ``"none"`` for the unthresholded attack."""

    corpus_dir: str | None
    targets: list[str]
    lambdas: list = field(default_factory=lambda: [20.0])
    budgets: list[int] = field(default_factory=lambda: [500])
    max_phone_rate: float = 6.0
    seed: int = 0
    output_dir: str = "sweep_out"
    learning_rate: float = 0.05
    use_forced_alignment: bool = True
    stop_at_success: bool = True

    def __post_init__(self):
        if not self.targets:
            raise ValueError("target list is empty")
        if not self.lambdas:
            raise ValueError("lambda grid is empty")
        if not self.budgets:
            raise ValueError("budget grid is empty")
        self.lambdas = [NO_THRESHOLDS if str(v).lower() == NO_THRESHOLDS else float(v) for v in self.lambdas]
        if any(v != NO_THRESHOLDS and v < 0 for v in self.lambdas):
            raise ValueError("lambda values must be >= 0")
        self.budgets = [int(b) for b in self.budgets]
        if any(b < 0 for b in self.budgets):
            raise ValueError("budgets must be >= 0")

    def prepare_output(self) -> Path:
        out = Path(self.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
        return out

    def attack_config(self, lam, budget: int) -> AttackConfig:
        thresholds = lam != NO_THRESHOLDS
        return AttackConfig(
            lambda_db=float(lam) if thresholds else 0.0,
            learning_rate=self.learning_rate,
            max_iterations=budget,
            check_every=min(100, budget) if budget else 1,
            use_thresholds=thresholds,
            use_forced_alignment=self.use_forced_alignment,
            seed=self.seed,
            max_phone_rate=self.max_phone_rate,
            stop_at_success=self.stop_at_success,
        )


@dataclass(frozen=True)
class SweepJob:
    utterance: str
    samples: np.ndarray
    target: tuple[str, ...]
    lam: object
    budget: int
    config: AttackConfig


def _run_job(job: SweepJob, model_payload: dict, inventory: PhoneInventory) -> dict:
    from psyhide.audio_io import AudioSignal

    row = {
        "utterance": job.utterance,
        "target": " ".join(job.target),
        "lambda": job.lam,
        "budget": job.budget,
    }
    model = ToyAcousticModel.from_dict(model_payload)
    graph = DecodingGraph(inventory)
    try:
        _, rep = run_attack(AudioSignal(job.samples), list(job.target), model, graph, job.config)
    except PhoneRateError:
        return {**row, "status": "phone_rate"}
    except (AlignmentError, FloatingPointError, ValueError) as exc:
        logger.warning("run %s / %s failed: %s", job.utterance, row["target"], exc)
        return {**row, "status": type(exc).__name__}
    return {
        **row,
        "status": "ok",
        "success": rep.success,
        "iterations": rep.iterations_used,
        "first_success": rep.first_success,
        "wer": rep.wer,
        "phi_db": rep.phi_db,
        "snr_db": rep.snr_db,
    }


def make_jobs(pairs, spec: ExperimentSpec) -> list[SweepJob]:
    """Cross every (utterance, target) pair with the lambda and budget grids."""
    jobs = []
    for utt, target in pairs:
        for lam in spec.lambdas:
            for budget in spec.budgets:
                jobs.append(
                    SweepJob(utt.name, utt.signal.samples, tuple(target), lam, budget, spec.attack_config(lam, budget))
                )
    return jobs


def run_jobs(jobs, model: ToyAcousticModel, inventory: PhoneInventory, workers: int | None = None) -> list[dict]:
    workers = workers or worker_count()
    payload = model.to_dict()
    if workers == 1 or len(jobs) <= 1:
        rows = [_run_job(j, payload, inventory) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_job, jobs, [payload] * len(jobs), [inventory] * len(jobs)))
    return sort_rows(rows)


def sort_rows(rows) -> list[dict]:
    return sorted(rows, key=lambda r: (r["utterance"], r["target"], _lambda_key(r["lambda"]), r["budget"]))


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6f}"
    return str(value)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in COLUMNS])
    return buf.getvalue()


def cmd_sweep(spec: ExperimentSpec, model: ToyAcousticModel, inventory: PhoneInventory, corpus=None, workers=None):
    """Run the grid of ``spec`` and write ``results.csv`` into its output directory.

    ``corpus`` defaults to the utterances in ``spec.corpus_dir``. Returns
    the path of the CSV and the sorted rows.
    """
    from psyhide.corpus import read_corpus

    out = spec.prepare_output()
    if corpus is None:
        if spec.corpus_dir is None:
            raise ValueError("no corpus given")
        corpus = read_corpus(spec.corpus_dir)
    pairs = [(utt, target.split()) for utt in corpus for target in spec.targets]
    rows = run_jobs(make_jobs(pairs, spec), model, inventory, workers)
    path = out / "results.csv"
    path.write_text(rows_to_csv(rows))
    return path, rows


def attack_suite(
    n_pairs: int,
    inventory: PhoneInventory,
    seed: int = 0,
    carrier_words: int = 3,
    target_words: int = 2,
    max_phone_rate: float = 6.0,
) -> list[tuple[Utterance, list[str]]]:
    """Seeded (carrier, target) pairs whose phone rate is within ``max_phone_rate``.

    Targets are drawn at random from the lexicon until one fits the carrier;
    a carrier that no short target fits is replaced.
    """
    rng = np.random.default_rng(seed)
    vocab = sorted(inventory.lexicon)
    pairs = []
    carrier_seed = seed
    while len(pairs) < n_pairs:
        carrier_seed += 1
        utt = make_corpus(1, inventory, seed=carrier_seed, words_per_utterance=(carrier_words, carrier_words))[0]
        utt.name = f"carrier{len(pairs):03d}"
        for _ in range(50):
            target = [vocab[i] for i in rng.integers(0, len(vocab), size=target_words)]
            if target != utt.words and phone_rate_check(target, utt.signal.duration_s, max_phone_rate, inventory)[0]:
                pairs.append((utt, target))
                break
    return pairs


def _first_success(row) -> float:
    if row.get("first_success") is not None:
        return float(row["first_success"])
    return float(row["iterations"]) if row["success"] else math.inf


def summarize(rows) -> dict:
    """Per-lambda success rate, mean phi and median iterations to the first success.

    Failed runs count as infinitely many iterations in the median.
    """
    out = {}
    for lam in sorted({r["lambda"] for r in rows}, key=_lambda_key):
        sel = [r for r in rows if r["lambda"] == lam and r["status"] == "ok"]
        if not sel:
            continue
        its = [_first_success(r) for r in sel]
        out[lam] = {
            "runs": len(sel),
            "success_rate": float(np.mean([r["success"] for r in sel])),
            "mean_phi_db": float(np.mean([r["phi_db"] for r in sel])),
            "median_iterations": float(np.median(its)),
        }
    return out


def with_alignment(spec: ExperimentSpec, forced: bool) -> ExperimentSpec:
    return replace(spec, use_forced_alignment=forced)
