from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvmn.analysis import (
    avg_cosine_similarity,
    cooccurrence_ratios,
    profile,
    report,
    sample_unlinked,
)
from mvmn.types import Dataset, Trajectory

from conftest import random_dataset

H = 3600


def _brute_cooccurrence(ds, window_hours, mode):
    width = window_hours * H
    n_l = n_l_s = n_lt = n_lt_s = 0
    for a, b in combinations(sorted(ds.trajectories), 2):
        ta, tb = ds.trajectories[a], ds.trajectories[b]
        shared = temporal = False
        for la, sa in zip(ta.locations, ta.timestamps):
            for lb, sb in zip(tb.locations, tb.timestamps):
                if la != lb:
                    continue
                shared = True
                if mode == "bucket":
                    temporal |= sa // width == sb // width
                else:
                    temporal |= abs(int(sa) - int(sb)) <= width
        linked = (a, b) in ds.all_edges
        n_l += shared
        n_l_s += shared and linked
        n_lt += temporal
        n_lt_s += temporal and linked
    return n_l, n_l_s, n_lt, n_lt_s


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.5, 1.0, 3.0]), st.sampled_from(["bucket", "sliding"]))
def test_cooccurrence_matches_brute_force(seed, window, mode):
    ds = random_dataset(seed, n_locations=4, span_hours=12)
    got = cooccurrence_ratios(ds, window, mode)
    assert (got.n_l, got.n_l_s, got.n_lt, got.n_lt_s) == _brute_cooccurrence(ds, window, mode)


def test_ratios_and_undefined_cases():
    trajs = {0: Trajectory(0, [0], [0]), 1: Trajectory(1, [0], [10 * H]), 2: Trajectory(2, [1], [5])}
    ds = Dataset(["a", "b", "c"], ["x", "y"], trajs, frozenset({(0, 1)}), frozenset(), frozenset())
    stats = cooccurrence_ratios(ds, 1.0)
    assert stats.sr == 1.0 and stats.str_ is None
    d = stats.to_dict()
    assert d["SR"] == 1.0 and d["STR"] is None
    with pytest.raises(ValueError):
        cooccurrence_ratios(ds, 0.0)
    with pytest.raises(ValueError):
        cooccurrence_ratios(ds, 1.0, "weekly")


def test_bucket_and_sliding_differ_at_boundary():
    # 30 minutes apart but straddling an hour boundary
    trajs = {0: Trajectory(0, [0], [H - 900]), 1: Trajectory(1, [0], [H + 900])}
    ds = Dataset(["a", "b"], ["x"], trajs, frozenset({(0, 1)}), frozenset(), frozenset())
    assert cooccurrence_ratios(ds, 1.0, "bucket").n_lt == 0
    assert cooccurrence_ratios(ds, 1.0, "sliding").n_lt == 1


def test_profile_example():
    traj = Trajectory(0, [0, 0, 0], [0, 2 * H, 2 * H + 60])
    p = profile(traj)
    assert p.frame_hist[0] == 1 and p.frame_hist[2] == 2 and p.frame_hist.sum() == 3
    assert p.gap_hist.sum() == 2


def test_similarity_skips_empty_histograms():
    profiles = {0: profile(Trajectory(0, [0], [0])), 1: profile(Trajectory(1, [0, 1], [0, H]))}
    res = avg_cosine_similarity([(0, 1)], profiles, "gap")
    assert res.mean is None and res.n_skipped == 1
    res = avg_cosine_similarity([(0, 1)], profiles, "frame")
    assert res.mean == pytest.approx(1 / np.sqrt(2))


def test_sample_unlinked_is_deterministic_and_unlinked(small_dataset):
    a = sample_unlinked(small_dataset, 15, seed=4)
    assert a == sample_unlinked(small_dataset, 15, seed=4)
    assert len(a) == 15 and not set(a) & small_dataset.all_edges


def test_report_keys(small_dataset):
    out = report(small_dataset, seed=1)
    assert set(out["similarity"]) == {"frame_linked", "frame_unlinked", "gap_linked", "gap_unlinked"}
    assert out["n_linked_pairs"] == len(small_dataset.all_edges)
