"""Historical statistics per (SD pair, time slot) group.

Each group keeps how many trajectories it holds, how many of them contain each
transition (a trajectory counts once per distinct transition), and how often
each exact route occurs. Noisy labels come from transition fractions
thresholded at ``alpha``; normal routes are routes whose share exceeds
``delta``; the normal-route feature flags segments whose incoming transition
appears in no normal route.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, GroupNotFoundError, ParseError
from .trajio import SdPair, Trajectory, check_slots, time_slot

SOURCE_PAD = None  # stands in for the missing predecessor of the first segment

STATS_VERSION = 1

Transition = tuple[str, str]
Route = tuple[str, ...]


class GroupKey(NamedTuple):
    source: str
    destination: str
    slot: int

    @property
    def sd(self) -> SdPair:
        return SdPair(self.source, self.destination)


def route_transitions(route: Sequence[str]) -> set[Transition]:
    return {(route[i - 1], route[i]) for i in range(1, len(route))}


@dataclass
class GroupStats:
    traj_count: int = 0
    transition_counts: Counter = field(default_factory=Counter)
    route_counts: Counter = field(default_factory=Counter)

    def add(self, route: Route, times: int = 1) -> None:
        self.traj_count += times
        self.route_counts[route] += times
        for tr in route_transitions(route):
            self.transition_counts[tr] += times

    @classmethod
    def from_routes(cls, route_counts: dict[Route, int]) -> "GroupStats":
        g = cls()
        for route, k in route_counts.items():
            if k > 0:
                g.add(tuple(route), k)
        return g


@dataclass
class StatsStore:
    groups: dict[GroupKey, GroupStats]
    slots_per_day: int = 24
    alpha: float = 0.5
    delta: float = 0.4
    offset: int = 0
    _normal: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        check_slots(self.slots_per_day)
        for name in ("alpha", "delta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")

    def __len__(self) -> int:
        return len(self.groups)

    def __contains__(self, key) -> bool:
        return key in self.groups

    def key_for(self, sd: Sequence[str], start: int) -> GroupKey:
        return GroupKey(sd[0], sd[1], time_slot(start, self.slots_per_day, self.offset))

    def key_of(self, traj: Trajectory) -> GroupKey:
        return self.key_for(traj.sd, traj.start)

    def group(self, key: GroupKey) -> GroupStats:
        try:
            return self.groups[key]
        except KeyError:
            raise GroupNotFoundError(f"no history for group {tuple(key)!r}") from None

    def normal_transitions(self, key: GroupKey) -> frozenset[Transition]:
        cached = self._normal.get(key)
        if cached is None:
            trs = set()
            for route in normal_routes(self, key):
                trs |= route_transitions(route)
            cached = self._normal[key] = frozenset(trs)
        return cached

    def with_thresholds(self, alpha: float | None = None,
                        delta: float | None = None) -> "StatsStore":
        return StatsStore(self.groups, self.slots_per_day,
                          self.alpha if alpha is None else alpha,
                          self.delta if delta is None else delta, self.offset)


def build_stats(
    trajectories: Iterable[Trajectory],
    slots_per_day: int = 24,
    alpha: float = 0.5,
    delta: float = 0.4,
    offset: int = 0,
) -> StatsStore:
    store = StatsStore({}, slots_per_day, alpha, delta, offset)
    for traj in trajectories:
        key = store.key_of(traj)
        store.groups.setdefault(key, GroupStats()).add(traj.segments)
    return store


def transition_fraction(store: StatsStore, key: GroupKey, prev: str | None,
                        cur: str, is_terminal: bool = False) -> float:
    g = store.group(key)
    if prev is SOURCE_PAD or is_terminal:
        return 1.0
    return g.transition_counts.get((prev, cur), 0) / g.traj_count


def fractions(store: StatsStore, traj: Trajectory) -> list[float]:
    key = store.key_of(traj)
    segs = traj.segments
    n = len(segs)
    return [
        transition_fraction(store, key, segs[i - 1] if i else SOURCE_PAD, segs[i],
                            is_terminal=i == n - 1)
        for i in range(n)
    ]


def noisy_labels(store: StatsStore, traj: Trajectory) -> list[int]:
    return [0 if f > store.alpha else 1 for f in fractions(store, traj)]


def normal_routes(store: StatsStore, key: GroupKey) -> set[Route]:
    g = store.group(key)
    return {r for r, k in g.route_counts.items() if k / g.traj_count > store.delta}


def nrf_at(store: StatsStore, key: GroupKey, prev: str, cur: str) -> int:
    """Feature of an interior position; raises if the group has no history."""
    store.group(key)
    return 0 if (prev, cur) in store.normal_transitions(key) else 1


def nrf(store: StatsStore, traj: Trajectory) -> list[int]:
    key = store.key_of(traj)
    store.group(key)
    normal = store.normal_transitions(key)
    segs = traj.segments
    n = len(segs)
    feats = [0] * n
    for i in range(1, n - 1):
        feats[i] = 0 if (segs[i - 1], segs[i]) in normal else 1
    return feats


def drop_history(store: StatsStore, drop_rate: float, seed: int) -> StatsStore:
    """Remove ``floor(drop_rate * traj_count)`` random trajectories from every group."""
    if not 0.0 <= drop_rate <= 1.0:
        raise ConfigError(f"drop_rate must lie in [0, 1], got {drop_rate}")
    rng = np.random.default_rng(seed)
    groups = {}
    for key in sorted(store.groups):
        g = store.groups[key]
        routes = sorted(g.route_counts)
        members = np.repeat(np.arange(len(routes)), [g.route_counts[r] for r in routes])
        n_drop = int(np.floor(drop_rate * g.traj_count + 1e-9))
        keep = np.sort(rng.permutation(len(members))[n_drop:])
        if len(keep) == 0:
            continue
        kept = Counter(members[keep].tolist())
        groups[key] = GroupStats.from_routes({routes[k]: c for k, c in kept.items()})
    return StatsStore(groups, store.slots_per_day, store.alpha, store.delta, store.offset)


def save_stats(store: StatsStore, sink: IO[str] | None = None) -> str:
    groups = []
    for key in sorted(store.groups):
        g = store.groups[key]
        groups.append({
            "source": key.source,
            "destination": key.destination,
            "slot": key.slot,
            "routes": [{"segments": list(r), "count": g.route_counts[r]}
                       for r in sorted(g.route_counts)],
        })
    doc = {"version": STATS_VERSION, "slots_per_day": store.slots_per_day,
           "alpha": store.alpha, "delta": store.delta, "offset": store.offset,
           "groups": groups}
    text = json.dumps(doc, sort_keys=True) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def load_stats(source: IO[str] | str) -> StatsStore:
    if hasattr(source, "read"):
        text = source.read()
    elif source.lstrip().startswith("{"):
        text = source
    else:
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if doc.get("version") != STATS_VERSION:
        raise ParseError(f"unsupported stats version {doc.get('version')!r}")
    groups = {}
    for rec in doc["groups"]:
        key = GroupKey(rec["source"], rec["destination"], int(rec["slot"]))
        groups[key] = GroupStats.from_routes(
            {tuple(r["segments"]): int(r["count"]) for r in rec["routes"]})
    return StatsStore(groups, int(doc["slots_per_day"]), float(doc["alpha"]),
                      float(doc["delta"]), int(doc.get("offset", 0)))
