"""Ranking metrics for link inference: P@k, R@k and AUC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.stats import rankdata

from .types import Dataset


@dataclass
class UserRanking:
    user: int
    candidates: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.candidates = np.asarray(self.candidates, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if not (len(self.candidates) == len(self.scores) == len(self.labels)):
            raise ValueError(f"user {self.user}: candidates, scores and labels differ in length")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError(f"user {self.user}: non-finite score")


RankingRun = list[UserRanking]


def top_k(ranking: UserRanking, k: int) -> np.ndarray:
    """Indices of the k best candidates; ties go to the lower user id."""
    order = np.lexsort((ranking.candidates, -ranking.scores))
    return order[:k]


def precision_recall_at_k(run: RankingRun, k: int = 10) -> tuple[float, float]:
    if not run:
        raise ValueError("empty ranking run")
    precision = recall = 0.0
    for r in run:
        hits = int(r.labels[top_k(r, k)].sum())
        n_pos = int(r.labels.sum())
        precision += hits / k
        recall += hits / n_pos if n_pos else 0.0
    return precision / len(run), recall / len(run)


def auc(run: RankingRun) -> float:
    """Pooled Mann-Whitney AUC over every (positive, negative) pair; ties count half."""
    scores = np.concatenate([r.scores for r in run]) if run else np.zeros(0)
    labels = np.concatenate([r.labels for r in run]) if run else np.zeros(0)
    return auc_from_scores(scores, labels)


def auc_from_scores(scores: np.ndarray, labels: np.ndarray) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks handle ties
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def per_user_auc(run: RankingRun) -> float:
    vals = [
        auc_from_scores(r.scores, r.labels)
        for r in run
        if 0 < r.labels.sum() < len(r.labels)
    ]
    return float(np.mean(vals)) if vals else float("nan")


def build_run(scores_for_pairs, dataset: Dataset, candidates: Mapping[int, list[int]],
              split: str = "test") -> RankingRun:
    """Score every pool and label candidates by membership in the split's edges."""
    edges = {"test": dataset.test_edges, "val": dataset.val_edges}[split]
    users = sorted(candidates)
    pairs = np.asarray([(u, v) for u in users for v in candidates[u]], dtype=np.int64).reshape(-1, 2)
    for u, v in pairs:
        if u not in dataset.trajectories or v not in dataset.trajectories:
            raise KeyError(f"missing trajectory for pair ({dataset.users[u]}, {dataset.users[v]})")
    scores = scores_for_pairs(pairs)
    run, at = [], 0
    for u in users:
        cands = np.asarray(candidates[u], dtype=np.int64)
        labels = np.asarray([(min(u, v), max(u, v)) in edges for v in cands], dtype=np.int64)
        run.append(UserRanking(u, cands, scores[at : at + len(cands)], labels))
        at += len(cands)
    return run


def metrics(run: RankingRun, k: int = 10) -> dict:
    p, r = precision_recall_at_k(run, k)
    return {
        "auc": auc(run),
        f"p@{k}": p,
        f"r@{k}": r,
        "auc_per_user": per_user_auc(run),
        "n_users": len(run),
        "n_pairs": int(sum(len(x.candidates) for x in run)),
        "n_positive_pairs": int(sum(int(x.labels.sum()) for x in run)),
    }


def evaluate(model, dataset: Dataset, candidates: Mapping[int, list[int]], k: int = 10,
             split: str = "test") -> dict:
    """Score all candidate pools with ``model`` in evaluation mode and report metrics."""
    run = build_run(lambda pairs: model.score_pairs(dataset, pairs), dataset, candidates, split)
    return metrics(run, k)
