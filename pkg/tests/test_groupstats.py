from __future__ import annotations

import io

import pytest
from hypothesis import given, strategies as st

from oasd import groupstats as gs
from oasd.errors import ConfigError, GroupNotFoundError
from oasd.trajio import Trajectory

from conftest import NINE_AM, T1, T2, T3


def _t3(trajs):
    return next(t for t in trajs if t.segments == T3)


def test_toy_fractions(toy):
    _, trajs = toy
    store = gs.build_stats(trajs)
    key = store.key_of(trajs[0])
    assert store.group(key).traj_count == 10
    assert gs.transition_fraction(store, key, "e1", "e2") == 0.5
    assert gs.fractions(store, _t3(trajs)) == [1.0, 0.5, 0.5, 0.1, 0.1, 0.1, 0.1, 0.1, 1.0]


def test_toy_noisy_labels_and_nrf(toy):
    _, trajs = toy
    store = gs.build_stats(trajs, alpha=0.5, delta=0.3)
    key = store.key_of(trajs[0])
    assert gs.noisy_labels(store, _t3(trajs)) == [0, 1, 1, 1, 1, 1, 1, 1, 0]
    assert gs.normal_routes(store, key) == {T1, T2}
    assert gs.nrf(store, _t3(trajs)) == [0, 0, 0, 1, 1, 1, 1, 1, 0]
    # at delta 0.4 only T1 (share 0.5) is normal, so T2's branch is flagged
    strict = store.with_thresholds(delta=0.4)
    assert gs.normal_routes(strict, key) == {T1}
    assert gs.nrf(strict, _t3(trajs))[1:3] == [1, 1]


def test_transition_counted_once_per_trajectory():
    loop = ("a", "b", "a", "b", "c")
    store = gs.build_stats([Trajectory("x", NINE_AM, loop)])
    g = store.group(store.key_of(Trajectory("x", NINE_AM, loop)))
    assert g.transition_counts[("a", "b")] == 1


def test_groups_split_by_slot(toy):
    _, trajs = toy
    late = [Trajectory("late", NINE_AM + 3 * 3600, T1)]
    store = gs.build_stats(list(trajs) + late)
    assert len(store) == 2
    with pytest.raises(GroupNotFoundError):
        gs.noisy_labels(store, Trajectory("q", NINE_AM + 6 * 3600, T1))


def test_threshold_validation():
    with pytest.raises(ConfigError):
        gs.build_stats([], alpha=1.5)


def test_drop_history_edges(toy):
    _, trajs = toy
    store = gs.build_stats(trajs)
    same = gs.drop_history(store, 0.0, seed=1)
    assert same.groups == store.groups
    assert len(gs.drop_history(store, 1.0, seed=1)) == 0
    half_a = gs.drop_history(store, 0.5, seed=7)
    half_b = gs.drop_history(store, 0.5, seed=7)
    assert half_a.groups == half_b.groups
    assert next(iter(half_a.groups.values())).traj_count == 5
    with pytest.raises(ConfigError):
        gs.drop_history(store, 1.2, seed=0)


def test_stats_round_trip(small_world):
    _, trajs, _ = small_world
    store = gs.build_stats(trajs, slots_per_day=12, alpha=0.45, delta=0.35)
    back = gs.load_stats(io.StringIO(gs.save_stats(store)))
    assert back.groups == store.groups
    assert (back.slots_per_day, back.alpha, back.delta) == (12, 0.45, 0.35)


routes = st.lists(st.sampled_from([T1, T2, T3]), min_size=1, max_size=30)


@given(routes, st.floats(0, 1), st.floats(0, 1))
def test_noisy_labels_monotone_in_alpha(rs, a1, a2):
    trajs = [Trajectory(f"t{k}", NINE_AM, r) for k, r in enumerate(rs)]
    lo, hi = sorted((a1, a2))
    s_lo = gs.build_stats(trajs, alpha=lo)
    s_hi = s_lo.with_thresholds(alpha=hi)
    for t in trajs:
        f = gs.fractions(s_lo, t)
        assert all(0.0 <= v <= 1.0 for v in f) and f[0] == f[-1] == 1.0
        # raising alpha can only turn 0s into 1s
        assert all(a <= b for a, b in zip(gs.noisy_labels(s_lo, t), gs.noisy_labels(s_hi, t)))


@given(routes, st.floats(0, 1))
def test_nrf_zero_on_normal_routes(rs, delta):
    trajs = [Trajectory(f"t{k}", NINE_AM, r) for k, r in enumerate(rs)]
    store = gs.build_stats(trajs, delta=delta)
    key = store.key_of(trajs[0])
    normal = gs.normal_routes(store, key)
    for r in set(rs):
        feats = gs.nrf(store, Trajectory("q", NINE_AM, r))
        assert feats[0] == feats[-1] == 0
        if r in normal:
            assert not any(feats)


@given(routes, st.floats(0, 1), st.integers(0, 2**16))
def test_drop_history_removes_floor_share(rs, rate, seed):
    trajs = [Trajectory(f"t{k}", NINE_AM, r) for k, r in enumerate(rs)]
    store = gs.build_stats(trajs)
    dropped = gs.drop_history(store, rate, seed)
    n = len(rs)
    kept = n - int(rate * n + 1e-9)
    if kept == 0:
        assert len(dropped) == 0
    else:
        g = next(iter(dropped.groups.values()))
        assert g.traj_count == kept
        assert sum(g.route_counts.values()) == kept
