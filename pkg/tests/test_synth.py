from dataclasses import replace

import numpy as np
import pytest

from mvmn.synth import SynthConfig, generate, synth_files

SMALL = SynthConfig(communities=3, users_per_community=12, locations_per_community=8, global_locations=20)


def test_single_community_without_edges():
    data = generate(SynthConfig(communities=1, users_per_community=5, p_in=0.0, p_out=0.0))
    assert data.edges == []


def test_full_own_pool_keeps_locations_in_community():
    c = replace(SMALL, own_pool_prob=1.0, joint_visits=0.0)
    data = generate(c)
    for u, (locs, _) in enumerate(data.checkins):
        com = data.community[u]
        assert np.all(locs // c.locations_per_community == com)


def test_checkin_counts_and_sorted_times():
    c = replace(SMALL, joint_visits=0.0)
    data = generate(c)
    for locs, stamps in data.checkins:
        assert c.checkins_min <= len(locs) <= c.checkins_max
        assert np.all(np.diff(stamps) >= 0)


def test_files_are_byte_identical(tmp_path):
    a = synth_files(SMALL, tmp_path / "c1", tmp_path / "e1")
    synth_files(SMALL, tmp_path / "c2", tmp_path / "e2")
    assert (tmp_path / "c1").read_bytes() == (tmp_path / "c2").read_bytes()
    assert (tmp_path / "e1").read_bytes() == (tmp_path / "e2").read_bytes()
    lines = (tmp_path / "e1").read_text().splitlines()
    assert len(lines) == 2 * len(a.edges)
    other = synth_files(replace(SMALL, seed=1), tmp_path / "c3", tmp_path / "e3")
    assert other.edges != a.edges


def _jaccard(x, y):
    x, y = set(x.tolist()), set(y.tolist())
    return len(x & y) / len(x | y)


def test_linked_users_share_more_locations():
    data = generate(SynthConfig())
    linked = [_jaccard(data.checkins[a][0], data.checkins[b][0]) for a, b in data.edges]
    rng = np.random.default_rng(0)
    edges = set(data.edges)
    unlinked = []
    while len(unlinked) < 2000:
        a, b = sorted(rng.choice(len(data.checkins), 2, replace=False).tolist())
        if (a, b) not in edges:
            unlinked.append(_jaccard(data.checkins[a][0], data.checkins[b][0]))
    assert np.mean(linked) > np.mean(unlinked)


def test_edges_denser_within_communities():
    data = generate(SynthConfig())
    same = sum(data.community[a] == data.community[b] for a, b in data.edges)
    assert same > 0.8 * len(data.edges)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"communities": 0},
        {"p_in": 0.01, "p_out": 0.02},
        {"own_pool_prob": 0.05},
        {"checkins_min": 5, "checkins_max": 4},
        {"mean_gaps": (1.0,)},
        {"active_hours": 0.0},
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_config_json_round_trip(tmp_path):
    import json

    c = replace(SMALL, mean_gaps=(1.0, 2.0, 3.0))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(c.to_dict()))
    assert SynthConfig.from_json(p) == c
