import calendar
from collections import defaultdict
from datetime import datetime

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvmn.ingestion import (
    ActivityFilter,
    InsufficientNegatives,
    ParseError,
    PreprocessConfig,
    RawCheckIn,
    RegionFilter,
    apply_activity_filter,
    apply_region_filter,
    build_dataset,
    group_by_user,
    parse_checkins,
    parse_edges,
    sample_eval_candidates,
    split_edges,
    truncate_trajectory,
)
from mvmn.types import Trajectory

from conftest import random_dataset


def test_parse_gowalla_line(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t22847\n")
    (row,) = parse_checkins(p)
    expected_ts = calendar.timegm(datetime(2010, 10, 19, 23, 55, 27).timetuple())
    assert expected_ts == 1287532527
    assert row == RawCheckIn("0", 1287532527, 30.23, -97.79, "22847")


def test_parse_empty_file(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("")
    assert parse_checkins(p) == []


def test_parse_reports_line_number(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("0\t2010-10-19T23:55:27Z\t30.23\t-97.79\t1\n1\t2010-10-19T23:55:27Z\t30.23\t-97.79\n")
    with pytest.raises(ParseError, match=":2:"):
        parse_checkins(p)


def test_parse_bad_timestamp(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("0\tyesterday\t30.23\t-97.79\t1\n")
    with pytest.raises(ParseError, match="timestamp"):
        parse_checkins(p)


def test_parse_unknown_format(tmp_path):
    p = tmp_path / "c.tsv"
    p.write_text("")
    with pytest.raises(ValueError):
        parse_checkins(p, "csv")


def test_parse_edges_collapses_directions(tmp_path):
    p = tmp_path / "e.tsv"
    p.write_text("1\t2\n2\t1\n3\t3\n2\t4\n")
    assert parse_edges(p) == {("1", "2"), ("2", "4")}


def _rows(user, coords):
    return [RawCheckIn(user, i, lat, lon, f"l{i}") for i, (lat, lon) in enumerate(coords)]


def test_region_filter_boundary_fraction():
    box = RegionFilter(0, 1, 0, 1, 0.1)
    rows = {"a": _rows("a", [(0.5, 0.5)] + [(5, 5)] * 9), "b": _rows("b", [(5, 5)] * 10)}
    kept = apply_region_filter(rows, box)
    assert list(kept) == ["a"]
    assert len(kept["a"]) == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.tuples(st.floats(-2, 2), st.floats(-2, 2)), min_size=1, max_size=8), max_size=8),
       st.floats(0, 1))
def test_region_filter_matches_recount(users, frac):
    box = RegionFilter(-1, 1, -1, 1, frac)
    rows = {str(i): _rows(str(i), c) for i, c in enumerate(users)}
    kept = apply_region_filter(rows, box)
    for u, rs in rows.items():
        inside = [r for r in rs if -1 <= r.lat <= 1 and -1 <= r.lon <= 1]
        if inside and len(inside) / len(rs) >= frac:
            assert kept[u] == inside
        else:
            assert u not in kept


def test_region_filter_validates_box():
    with pytest.raises(ValueError):
        RegionFilter(1, 0, 0, 1)
    with pytest.raises(ValueError):
        RegionFilter(0, 1, 0, 1, 1.5)


def test_activity_filter_cascades():
    by_user = {"a": [None] * 3, "b": [None] * 12}
    users, edges = apply_activity_filter(by_user, {("a", "b")}, ActivityFilter(1, 10))
    assert users == {} and edges == set()


def test_activity_filter_identity_when_all_pass():
    by_user = {"a": [None] * 10, "b": [None] * 10, "c": [None] * 11}
    edges = {("a", "b"), ("b", "c")}
    users, kept = apply_activity_filter(by_user, edges, ActivityFilter(1, 10))
    assert users == by_user and kept == edges


def _naive_filter(by_user, edges, f):
    users = set(by_user)
    while True:
        live = {e for e in edges if e[0] in users and e[1] in users}
        deg = defaultdict(int)
        for a, b in live:
            deg[a] += 1
            deg[b] += 1
        nxt = {u for u in users if len(by_user[u]) >= f.min_checkins and deg[u] >= f.min_friends}
        if nxt == users:
            return users, live
        users = nxt


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_activity_filter_matches_naive_fixed_point(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 15))
    by_user = {str(u): [None] * int(rng.integers(0, 6)) for u in range(n)}
    edges = {(str(a), str(b)) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.25}
    f = ActivityFilter(int(rng.integers(0, 3)), int(rng.integers(0, 5)))
    users, kept = apply_activity_filter(by_user, edges, f)
    exp_users, exp_edges = _naive_filter(by_user, edges, f)
    assert set(users) == exp_users and kept == exp_edges


@pytest.mark.parametrize("length, expected_start", [(150, 0), (200, 0), (250, 50)])
def test_truncate_keeps_suffix(length, expected_start):
    t = Trajectory(0, np.arange(length), np.arange(length))
    out = truncate_trajectory(t, 200)
    np.testing.assert_array_equal(out.locations, np.arange(expected_start, length))


def test_split_exact_ratios_and_determinism():
    edges = [(i, i + 1) for i in range(10)]
    train, val, test = split_edges(edges, seed=3)
    assert (len(train), len(val), len(test)) == (8, 1, 1)
    assert split_edges(edges, seed=3) == (train, val, test)


def test_split_large_is_partition():
    rng = np.random.default_rng(0)
    edges = {tuple(sorted(rng.choice(500, size=2, replace=False).tolist())) for _ in range(1100)}
    edges = sorted(edges)[:1000]
    train, val, test = split_edges(edges, seed=1)
    assert not (train & val or train & test or val & test)
    assert train | val | test == set(edges)
    for part, ratio in ((train, 0.8), (val, 0.1), (test, 0.1)):
        assert abs(len(part) - ratio * 1000) <= 1


def test_candidates_pool_composition():
    ds = random_dataset(seed=1, n_users=70, n_edges=80)
    pools = sample_eval_candidates(ds, per_user=50, seed=0)
    linked = defaultdict(set)
    for a, b in ds.all_edges:
        linked[a].add(b)
        linked[b].add(a)
    positives = defaultdict(set)
    for a, b in ds.test_edges:
        positives[a].add(b)
        positives[b].add(a)
    assert set(pools) == set(positives)
    for u, pool in pools.items():
        assert len(pool) == 50 + len(positives[u]) == len(set(pool))
        negatives = set(pool) - positives[u]
        assert not negatives & linked[u] and u not in pool
        for v in pool:
            edge = (min(u, v), max(u, v))
            assert edge not in ds.train_edges and edge not in ds.val_edges


def test_candidates_insufficient_negatives_names_user(small_dataset):
    with pytest.raises(InsufficientNegatives, match="u"):
        sample_eval_candidates(small_dataset, per_user=50)


def _write_raw(tmp_path, n_users=30, per_user=12, seed=0):
    rng = np.random.default_rng(seed)
    lines = []
    for u in range(n_users):
        for _ in range(per_user):
            ts = 1_300_000_000 + int(rng.integers(0, 10**6))
            iso = datetime.utcfromtimestamp(ts).strftime("%Y-%m-%dT%H:%M:%SZ")
            lines.append(f"{u}\t{iso}\t{rng.uniform(0, 1):.4f}\t{rng.uniform(0, 1):.4f}\t{int(rng.integers(40))}")
    (tmp_path / "c.tsv").write_text("\n".join(lines) + "\n")
    edges = {(a, b) for a in range(n_users) for b in range(a + 1, n_users) if rng.random() < 0.15}
    (tmp_path / "e.tsv").write_text("".join(f"{a}\t{b}\n" for a, b in sorted(edges)))
    return tmp_path / "c.tsv", tmp_path / "e.tsv"


def test_pipeline_invariants_and_determinism(tmp_path):
    c, e = _write_raw(tmp_path)
    cfg = PreprocessConfig(RegionFilter(0.0, 0.6, 0.0, 1.0, 0.3), ActivityFilter(1, 4), k_max=6, seed=2)
    rows, edges = parse_checkins(c), parse_edges(e)
    ds = build_dataset(rows, edges, cfg)
    ds2 = build_dataset(rows, edges, cfg)
    assert ds.fingerprint() == ds2.fingerprint() and ds.users == ds2.users
    degree = defaultdict(int)
    for a, b in ds.all_edges:
        degree[a] += 1
        degree[b] += 1
    by_user = group_by_user(rows)
    for u, traj in ds.trajectories.items():
        assert 4 <= len(traj) <= 6 and degree[u] >= 1
        raw = [r for r in by_user[ds.users[u]] if r.lat <= 0.6]
        assert len(traj) == min(len(raw), 6)
        # the most recent in-region check-ins are kept
        assert traj.timestamps[-1] == max(r.timestamp for r in raw)


def test_pipeline_needs_ten_edges(tmp_path):
    c, e = _write_raw(tmp_path, n_users=4)
    with pytest.raises(ValueError, match="edges"):
        build_dataset(parse_checkins(c), parse_edges(e), PreprocessConfig(activity=ActivityFilter(1, 1)))
