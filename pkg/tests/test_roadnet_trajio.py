from __future__ import annotations

import io
import json

import pytest
from hypothesis import given, strategies as st

from oasd.errors import NotFoundError, ParseError, ValidationError, ConfigError
from oasd.roadnet import RoadNetwork, dump_network, load_network
from oasd.trajio import (Trajectory, dump_trajectories, load_trajectories, time_slot,
                         validate_trajectory)

from conftest import NINE_AM, T1, toy_network


def test_degrees_follow_vertex_incidence():
    net = toy_network()
    # A has two exits (e2, e3); E has three entries (e5, e6, e15)
    assert net.out_degree("e1") == 2
    assert net.in_degree("e10") == 3
    assert net.out_degree("e12") == 1 and net.in_degree("e13") == 1
    assert net.out_degree("e4") == 2   # D -> E or D -> G
    assert net.out_degree("e10") == 0
    assert net.in_degree("e1") == 0


def test_adjacency_and_lookup():
    net = toy_network()
    assert net.is_adjacent("e1", "e2")
    assert not net.is_adjacent("e2", "e1")
    assert sorted(net.next_segments("e4")) == ["e11", "e5"]
    with pytest.raises(NotFoundError):
        net.segment("nope")


def test_duplicate_and_dangling_segments_rejected():
    with pytest.raises(ValidationError):
        RoadNetwork.from_segments([("a", "u", "v"), ("a", "v", "w")])
    with pytest.raises(ValidationError):
        load_network('{"vertices": [{"id": "u"}], '
                     '"segments": [{"id": "s", "from": "u", "to": "x"}]}')


def test_network_round_trip():
    net = toy_network()
    assert load_network(dump_network(net)) == net
    assert load_network(io.StringIO(dump_network(net))) == net


def test_network_parse_errors_carry_line():
    with pytest.raises(ParseError) as exc:
        load_network('{"segments": [\n {"id": "s1", "from": "a"}\n]}')
    assert exc.value.line == 2
    with pytest.raises(ParseError):
        load_network("{not json")


def test_trajectory_validation(toy):
    net, _ = toy
    validate_trajectory(Trajectory("ok", 0, T1, (0, 0, 0, 0)), net)
    with pytest.raises(ValidationError, match="not adjacent"):
        validate_trajectory(Trajectory("gap", 0, ("e1", "e4")), net)
    with pytest.raises(ValidationError, match="unknown segment"):
        validate_trajectory(Trajectory("u", 0, ("e1", "zz")), net)
    with pytest.raises(ValidationError, match="too short"):
        validate_trajectory(Trajectory("s", 0, ("e1",)), net)
    with pytest.raises(ValidationError, match="endpoint"):
        validate_trajectory(Trajectory("l", 0, T1, (1, 0, 0, 0)), net)
    # shape checks still run without a network
    validate_trajectory(Trajectory("free", 0, ("x", "y")), None)


def test_jsonl_round_trip_and_rejections(toy):
    net, trajs = toy
    text = dump_trajectories(trajs)
    assert load_trajectories(text, net) == trajs
    bad = text + json.dumps({"id": "bad", "start": 0, "segments": ["e1", "e5"]}) + "\n"
    rejected = []
    assert len(load_trajectories(bad, net, rejected=rejected)) == len(trajs)
    assert rejected and rejected[0][0] == len(trajs) + 1
    with pytest.raises(ValidationError):
        load_trajectories(bad, net, strict=True)
    with pytest.raises(ParseError) as exc:
        load_trajectories(text + "{oops\n", net)
    assert exc.value.line == len(trajs) + 1


def test_time_slot():
    assert time_slot(NINE_AM) == 9
    assert time_slot(NINE_AM, slots_per_day=4) == 1
    assert time_slot(NINE_AM, offset=3600) == 10
    with pytest.raises(ConfigError):
        time_slot(0, slots_per_day=5)


@given(st.integers(min_value=0, max_value=2**40), st.sampled_from([1, 2, 3, 4, 6, 8, 12, 24]))
def test_time_slot_in_range(t, slots):
    assert 0 <= time_slot(t, slots) < slots
