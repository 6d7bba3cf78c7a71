"""Desk-scale synthetic benchmark: generate, preprocess, train and evaluate.

The same settings drive the acceptance checks and the demo scripts, so a
single call reproduces one seed of the experiment.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, replace
from pathlib import Path

from .evaluation import evaluate
from .ingestion import ActivityFilter, PreprocessConfig, preprocess, sample_eval_candidates
from .model import MVMN, ModelConfig
from .synth import SynthConfig, synth_files
from .train import train
from .types import Dataset

# training schedule for the benchmark; model widths stay at their defaults
BENCH_TRAIN = {"lr": 1e-3, "epochs": 8, "patience": 3}
# synthetic users have at least ten check-ins and few friends each
BENCH_ACTIVITY = ActivityFilter(min_friends=1, min_checkins=5)
CANDIDATES_PER_USER = 50


@dataclass
class BenchData:
    dataset: Dataset
    candidates: dict[int, list[int]]
    seed: int


def prepare(seed: int, synth: SynthConfig | None = None, workdir: str | Path | None = None) -> BenchData:
    """Synthetic raw files, the preprocessed dataset and test candidate pools."""
    synth = replace(synth or SynthConfig(), seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(workdir or tmp)
        checkins, edges = root / f"checkins_{seed}.tsv", root / f"edges_{seed}.tsv"
        synth_files(synth, checkins, edges)
        dataset = preprocess(checkins, edges, PreprocessConfig(activity=BENCH_ACTIVITY, seed=seed))
    candidates = sample_eval_candidates(dataset, CANDIDATES_PER_USER, seed, "test")
    return BenchData(dataset, candidates, seed)


def bench_config(seed: int, variant: str = "full", beta: float = 0.1, **overrides) -> ModelConfig:
    return replace(ModelConfig(seed=seed, beta=beta, **BENCH_TRAIN), **overrides).with_variant(variant)


def untrained_auc(data: BenchData, variant: str = "full") -> float:
    config = bench_config(data.seed, variant)
    model = MVMN(config, data.dataset.n_users, data.dataset.n_locations, data.dataset.n_time_bins)
    return evaluate(model, data.dataset, data.candidates)["auc"]


def run(data: BenchData, variant: str = "full", beta: float = 0.1, **overrides) -> dict:
    """Train one configuration and return its test metrics plus the best epoch."""
    ckpt = train(data.dataset, bench_config(data.seed, variant, beta, **overrides))
    result = evaluate(ckpt.model(), data.dataset, data.candidates)
    result["best_epoch"] = ckpt.epoch
    result["val_auc"] = ckpt.val_auc
    return result
