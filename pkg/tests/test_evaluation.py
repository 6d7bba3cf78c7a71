import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvmn.evaluation import (
    UserRanking,
    auc,
    auc_from_scores,
    build_run,
    metrics,
    precision_recall_at_k,
    top_k,
)

from oracles import pairwise_auc, precision_recall


def _random_run(r, n_users=5, pool=12, ties=True):
    run = []
    for u in range(n_users):
        cands = r.permutation(100)[:pool]
        scores = r.integers(0, 5, size=pool) / 4.0 if ties else r.random(pool)
        labels = (r.random(pool) < 0.25).astype(int)
        run.append(UserRanking(u, cands, scores, labels))
    if not any(x.labels.any() for x in run):
        run[0].labels[0] = 1
    if all(x.labels.all() for x in run):
        run[0].labels[0] = 0
    return run


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.booleans(), st.integers(1, 15))
def test_metrics_match_brute_force(seed, ties, k):
    r = np.random.default_rng(seed)
    run = _random_run(r, ties=ties)
    pools = [(x.candidates.tolist(), x.scores.tolist(), x.labels.tolist()) for x in run]
    p, rec = precision_recall_at_k(run, k)
    ref_p, ref_r = precision_recall(pools, k)
    assert p == pytest.approx(ref_p, abs=1e-12) and rec == pytest.approx(ref_r, abs=1e-12)
    scores = np.concatenate([x.scores for x in run])
    labels = np.concatenate([x.labels for x in run])
    assert auc(run) == pytest.approx(pairwise_auc(scores, labels), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_monotone_transform_invariance(seed):
    r = np.random.default_rng(seed)
    run = _random_run(r, ties=False)
    warped = [UserRanking(x.user, x.candidates, np.exp(3 * x.scores) - 7, x.labels) for x in run]
    assert auc(run) == auc(warped)
    assert precision_recall_at_k(run, 5) == precision_recall_at_k(warped, 5)


def test_precision_identity_hits_equal_total():
    r = np.random.default_rng(3)
    run = _random_run(r, n_users=8)
    k = 4
    p, _ = precision_recall_at_k(run, k)
    hits = sum(int(x.labels[top_k(x, k)].sum()) for x in run)
    assert p * k * len(run) == pytest.approx(hits)


def test_ties_prefer_lower_id():
    ranking = UserRanking(0, [9, 4, 7], [0.5, 0.5, 0.1], [0, 1, 0])
    assert top_k(ranking, 1).tolist() == [1]


def test_worked_example():
    ranking = UserRanking(0, [1, 2, 3, 4], [0.9, 0.8, 0.3, 0.1], [1, 0, 1, 0])
    p, rec = precision_recall_at_k([ranking], 2)
    assert (p, rec) == (0.5, 0.5)
    assert auc([ranking]) == pytest.approx(0.75)


def test_all_ties_give_half():
    assert auc_from_scores(np.ones(6), np.array([1, 0, 1, 0, 0, 0])) == 0.5


def test_auc_needs_both_classes():
    with pytest.raises(ValueError):
        auc_from_scores(np.ones(3), np.ones(3))


def test_validation_errors():
    with pytest.raises(ValueError):
        UserRanking(0, [1, 2], [0.1], [0, 1])
    with pytest.raises(ValueError):
        UserRanking(0, [1], [np.nan], [0])
    with pytest.raises(ValueError):
        precision_recall_at_k([], 3)


def test_user_without_positives_counts_zero_recall():
    a = UserRanking(0, [1, 2], [0.9, 0.1], [1, 0])
    b = UserRanking(1, [3, 4], [0.9, 0.1], [0, 0])
    assert precision_recall_at_k([a, b], 1) == (0.5, 0.5)


def test_build_run_and_metrics(small_dataset):
    ds = small_dataset
    users = sorted(ds.trajectories)
    u = next(a for a, _ in sorted(ds.test_edges))
    cands = {u: [v for v in users if v != u][:6]}
    run = build_run(lambda pairs: pairs[:, 1].astype(float), ds, cands)
    assert run[0].labels.tolist() == [int((min(u, v), max(u, v)) in ds.test_edges) for v in cands[u]]
    out = metrics(run, k=3)
    assert set(out) >= {"auc", "p@3", "r@3", "n_users", "n_pairs"}
