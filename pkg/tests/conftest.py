from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from oasd.roadnet import RoadNetwork
from oasd.synthgen import SynthConfig, generate
from oasd.trajio import Trajectory

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

NINE_AM = 1_699_920_000 + 9 * 3600

# S -e1-> A; A -e2-> B -e4-> D -e5-> E; A -e3-> C -e6-> E;
# D -e11-> G -e12-> H -e13-> I -e14-> J -e15-> E; E -e10-> T
TOY_EDGES = {
    "e1": ("S", "A"), "e2": ("A", "B"), "e3": ("A", "C"), "e4": ("B", "D"),
    "e5": ("D", "E"), "e6": ("C", "E"), "e10": ("E", "T"), "e11": ("D", "G"),
    "e12": ("G", "H"), "e13": ("H", "I"), "e14": ("I", "J"), "e15": ("J", "E"),
}
T1 = ("e1", "e3", "e6", "e10")
T2 = ("e1", "e2", "e4", "e5", "e10")
T3 = ("e1", "e2", "e4", "e11", "e12", "e13", "e14", "e15", "e10")


def toy_network() -> RoadNetwork:
    return RoadNetwork.from_segments((k, u, v, 100.0) for k, (u, v) in TOY_EDGES.items())


def toy_trajectories() -> list[Trajectory]:
    out = []
    for name, route, count in (("t1", T1, 5), ("t2", T2, 4), ("t3", T3, 1)):
        for k in range(count):
            out.append(Trajectory(f"{name}-{k}", NINE_AM + 60 * k, route))
    return out


@pytest.fixture
def toy():
    return toy_network(), toy_trajectories()


@pytest.fixture(scope="session")
def small_world():
    cfg = SynthConfig(width=10, height=10, n_pairs=6, trajs_per_pair=20, anomaly_ratio=0.1,
                      route_len=(6, 16), detour_len=(3, 8), seed=3)
    return generate(cfg)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""
    def record(number: int, ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(ok), detail)
        assert ok, f"criterion {number}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
