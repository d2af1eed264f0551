"""Seeded synthetic worlds: grid road networks, SD pairs with weighted normal
routes, and detours with exact ground-truth labels."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .errors import ConfigError
from .roadnet import RoadNetwork, Segment
from .tensorcore import substream
from .trajio import SECONDS_PER_DAY, Trajectory

log = logging.getLogger(__name__)

BASE_DAY = 1_699_920_000  # a UTC midnight
MAX_ATTEMPTS = 200


@dataclass
class SynthConfig:
    width: int = 20
    height: int = 20
    n_pairs: int = 50
    trajs_per_pair: int = 40
    # each profile lists normal-route weights; a pair draws one profile
    route_profiles: tuple[tuple[float, ...], ...] = ((1.0,), (0.55, 0.45))
    profile_probs: tuple[float, ...] = (0.7, 0.3)
    anomaly_ratio: float = 0.02
    detour_len: tuple[int, int] = (5, 12)
    route_len: tuple[int, int] = (12, 40)
    slots: tuple[int, ...] = tuple(range(24))
    slots_per_pair: int = 1
    slots_per_day: int = 24
    days: int = 30
    corridor: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if len(self.route_profiles) != len(self.profile_probs):
            raise ConfigError("route_profiles and profile_probs differ in length")
        if abs(sum(self.profile_probs) - 1.0) > 1e-9:
            raise ConfigError("profile_probs must sum to 1")
        for prof in self.route_profiles:
            if not 1 <= len(prof) <= 3 or abs(sum(prof) - 1.0) > 1e-9:
                raise ConfigError(f"route profile {prof} must hold 1-3 weights summing to 1")
        if not 0.0 <= self.anomaly_ratio <= 1.0:
            raise ConfigError("anomaly_ratio must lie in [0, 1]")
        if self.n_pairs < 1 or self.trajs_per_pair < 1:
            raise ConfigError("n_pairs and trajs_per_pair must be positive")
        if self.width < 3 or self.height < 3:
            raise ConfigError("grid must be at least 3x3")
        if not 0.0 <= self.corridor <= 1.0:
            raise ConfigError("corridor must lie in [0, 1]")
        if not 1 <= self.slots_per_pair <= len(self.slots):
            raise ConfigError("slots_per_pair out of range")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        for k in ("route_profiles",):
            if k in d:
                d[k] = tuple(tuple(p) for p in d[k])
        for k in ("profile_probs", "detour_len", "route_len", "slots"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


def grid_network(width: int, height: int, corridor: float = 0.0,
                 rng: np.random.Generator | None = None) -> RoadNetwork:
    """4-connected two-way grid; a ``corridor`` share of links become one-way
    three-segment chains, so single-exit and single-entry segments exist."""
    vertices = {f"v{x}_{y}": (100.0 * x, 100.0 * y)
                for y in range(height) for x in range(width)}
    segments: dict[str, Segment] = {}

    def add(u: str, v: str, length: float = 100.0) -> None:
        sid = f"{u}>{v}"
        segments[sid] = Segment(sid, u, v, length)

    links = []
    for y in range(height):
        for x in range(width):
            if x + 1 < width:
                links.append((f"v{x}_{y}", f"v{x + 1}_{y}"))
            if y + 1 < height:
                links.append((f"v{x}_{y}", f"v{x}_{y + 1}"))
    for k, (u, v) in enumerate(links):
        if corridor > 0 and rng is not None and rng.random() < corridor:
            if rng.random() < 0.5:
                u, v = v, u
            (ux, uy), (vx, vy) = vertices[u], vertices[v]
            a, b = f"c{k}a", f"c{k}b"
            vertices[a] = (ux + (vx - ux) / 3, uy + (vy - uy) / 3)
            vertices[b] = (ux + 2 * (vx - ux) / 3, uy + 2 * (vy - uy) / 3)
            add(u, a, 100 / 3)
            add(a, b, 100 / 3)
            add(b, v, 100 / 3)
        else:
            add(u, v)
            add(v, u)
    return RoadNetwork(vertices, segments)


def _digraph(net: RoadNetwork) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(net.vertices)
    for s in net.segments.values():
        g.add_edge(s.src, s.dst, sid=s.id)
    return g


def _path(g: nx.DiGraph, src: str, dst: str, weights: dict, banned: set[str],
          banned_edges: Sequence[tuple[str, str]] = ()) -> list[str] | None:
    view = nx.restricted_view(g, banned - {src, dst}, banned_edges)
    try:
        return nx.dijkstra_path(view, src, dst, weight=lambda u, v, _: weights[(u, v)])
    except (nx.NetworkXNoPath, nx.NodeNotFound):
        return None


@dataclass
class PairPlan:
    source: str
    destination: str
    routes: list[list[str]]          # segment sequences incl. source/destination
    weights: list[float]
    slots: list[int]
    vpaths: list[list[str]] = field(default_factory=list)


class _World:
    def __init__(self, cfg: SynthConfig, net: RoadNetwork, rng: np.random.Generator):
        self.cfg = cfg
        self.net = net
        self.rng = rng
        self.g = _digraph(net)
        self.edges = list(self.g.edges)
        self.segs = list(net.segments)

    def seg_of(self, u: str, v: str) -> str:
        return self.g.edges[u, v]["sid"]

    def random_weights(self) -> dict:
        w = self.rng.uniform(1.0, 2.0, size=len(self.edges))
        return dict(zip(self.edges, w))

    def plan_pair(self, profile: Sequence[float]) -> PairPlan | None:
        cfg = self.cfg
        s = self.net.segments[self.segs[self.rng.integers(len(self.segs))]]
        t = self.net.segments[self.segs[self.rng.integers(len(self.segs))]]
        if len({s.src, s.dst, t.src, t.dst}) < 4:
            return None
        weights = self.random_weights()
        banned = {s.src, t.dst}
        vpaths = []
        for _ in profile:
            if vpaths:
                for p in vpaths:
                    for e in zip(p, p[1:]):
                        weights[e] *= 4.0
            p = _path(self.g, s.dst, t.src, weights, banned)
            if p is None or p in vpaths:
                return None
            vpaths.append(p)
        routes = [[s.id] + [self.seg_of(u, v) for u, v in zip(p, p[1:])] + [t.id]
                  for p in vpaths]
        lo, hi = cfg.route_len
        if not all(lo <= len(r) <= hi for r in routes):
            return None
        slots = sorted(self.rng.choice(cfg.slots, size=cfg.slots_per_pair, replace=False)
                       .tolist())
        return PairPlan(s.id, t.id, routes, list(profile), slots, vpaths)

    def detour(self, plan: PairPlan, base: int) -> tuple[list[str], list[int]] | None:
        """Replace an interior sub-path of route ``base`` with an off-route path."""
        cfg = self.cfg
        vp = plan.vpaths[base]
        src = self.net.segments[plan.source]
        dst = self.net.segments[plan.destination]
        banned = {v for p in plan.vpaths for v in p} | {src.src, dst.dst}
        lo, hi = cfg.detour_len
        m = len(vp) - 1
        weights = self.random_weights()
        for _ in range(MAX_ATTEMPTS):
            a = int(self.rng.integers(0, m))
            b = int(self.rng.integers(a + 1, min(m, a + hi) + 1))
            alt = _path(self.g, vp[a], vp[b], weights, banned, [(vp[a], vp[b])])
            if alt is None or not lo <= len(alt) - 1 <= hi:
                continue
            new = vp[:a] + alt + vp[b + 1:]
            segs = [plan.source] + [self.seg_of(u, v) for u, v in zip(new, new[1:])] \
                + [plan.destination]
            # detour edges sit at a+1..a+len(alt)-1; the rejoin edge follows and
            # is entered through a detour transition, so it is labeled too
            labels = [0] * len(segs)
            for k in range(a + 1, min(a + len(alt) + 1, len(segs) - 1)):
                labels[k] = 1
            return segs, labels
        return None


def _quotas(weights: Sequence[float], n: int) -> list[int]:
    raw = [w * n for w in weights]
    q = [int(np.floor(r)) for r in raw]
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - q[i]), i))
    for i in order[:n - sum(q)]:
        q[i] += 1
    return q


def _start_time(rng: np.random.Generator, cfg: SynthConfig, slot: int,
                day_range: tuple[int, int] | None = None) -> int:
    width = SECONDS_PER_DAY // cfg.slots_per_day
    lo, hi = day_range or (0, cfg.days)
    day = int(rng.integers(lo, hi))
    return BASE_DAY + day * SECONDS_PER_DAY + slot * width + int(rng.integers(0, width))


def _plan_pairs(cfg: SynthConfig, world: _World, profiles: Sequence[int]) -> list[PairPlan]:
    plans = []
    for p in profiles:
        for attempt in range(MAX_ATTEMPTS):
            plan = world.plan_pair(cfg.route_profiles[p])
            if plan is not None:
                plans.append(plan)
                break
        else:
            raise ConfigError("could not place an SD pair; grid too small for route_len")
    return plans


def generate(cfg: SynthConfig) -> tuple[RoadNetwork, list[Trajectory], dict]:
    """Network, labeled trajectories, and a manifest of routes and detours."""
    cfg.validate()
    rng = substream(cfg.seed, "gen")
    net = grid_network(cfg.width, cfg.height, cfg.corridor, rng)
    world = _World(cfg, net, rng)
    profiles = rng.choice(len(cfg.route_profiles), size=cfg.n_pairs, p=cfg.profile_probs)
    total = cfg.n_pairs * cfg.trajs_per_pair
    n_anom = int(round(cfg.anomaly_ratio * total))
    # spread detours evenly over pairs so no group's fractions are skewed by a cluster
    per_pair = np.zeros(cfg.n_pairs, dtype=int)
    per_pair[rng.permutation(cfg.n_pairs)] = _quotas([1.0 / cfg.n_pairs] * cfg.n_pairs, n_anom)
    anomalous = np.zeros(total, dtype=bool)
    for p, k in enumerate(per_pair):
        picks = rng.permutation(cfg.trajs_per_pair)[:k]
        anomalous[p * cfg.trajs_per_pair + picks] = True

    trajs: list[Trajectory] = []
    manifest_pairs = []
    pair_idx = 0
    plans = _plan_pairs(cfg, world, profiles)
    while pair_idx < len(plans):
        plan = plans[pair_idx]
        flags = anomalous[pair_idx * cfg.trajs_per_pair:(pair_idx + 1) * cfg.trajs_per_pair]
        made = _make_pair(cfg, world, rng, pair_idx, plan, flags)
        if made is None:
            log.info("pair %d: no admissible detour, regenerating", pair_idx)
            plans[pair_idx] = _plan_pairs(cfg, world, [profiles[pair_idx]])[0]
            continue
        pair_trajs, record = made
        trajs.extend(pair_trajs)
        manifest_pairs.append(record)
        pair_idx += 1
    manifest = {"config": asdict(cfg), "pairs": manifest_pairs}
    return net, trajs, manifest


def _make_pair(cfg, world, rng, pair_idx, plan, flags):
    per_slot = _quotas([1.0 / len(plan.slots)] * len(plan.slots), len(flags))
    trajs, detours = [], []
    k = 0
    for slot, n_slot in zip(plan.slots, per_slot):
        quota = _quotas(plan.weights, n_slot)
        slot_flags = flags[k:k + n_slot]
        # anomalies are carved out of the dominant route's quota
        quota[0] -= int(slot_flags.sum())
        if quota[0] < 0:
            return None
        route_ids = [r for r, q in enumerate(quota) for _ in range(q)]
        rng.shuffle(route_ids)
        it = iter(route_ids)
        for f in slot_flags:
            tid = f"p{pair_idx:03d}-t{k:04d}"
            start = _start_time(rng, cfg, slot)
            if f:
                made = world.detour(plan, 0)
                if made is None:
                    return None
                segs, labels = made
                detours.append({"traj": tid, "base_route": 0, "segments": segs,
                                "labels": labels})
            else:
                r = next(it)
                segs, labels = plan.routes[r], [0] * len(plan.routes[r])
            trajs.append(Trajectory(tid, start, tuple(segs), tuple(labels)))
            k += 1
    record = {"pair": pair_idx, "source": plan.source, "destination": plan.destination,
              "slots": plan.slots,
              "routes": [{"segments": r, "weight": w} for r, w in zip(plan.routes,
                                                                       plan.weights)],
              "detours": detours}
    return trajs, record


def drift_scenario(cfg: SynthConfig, minority: float = 0.08
                   ) -> tuple[RoadNetwork, list[Trajectory], list[Trajectory], dict]:
    """Two partitions in which each pair's dominant and alternative routes swap.

    In the first partition route A is normal and the few trips along route B
    are anomalous on B's distinctive stretch; the second partition reverses
    the roles. Partition 2 starts on later days but in the same slots.
    """
    cfg.validate()
    rng = substream(cfg.seed, "gen")
    net = grid_network(cfg.width, cfg.height, cfg.corridor, rng)
    world = _World(cfg, net, rng)
    half = cfg.days // 2
    if half < 1:
        raise ConfigError("drift scenario needs at least two days")
    parts: tuple[list, list] = ([], [])
    pairs = []
    pair_idx = 0
    while len(pairs) < cfg.n_pairs:
        plan = world.plan_pair((1.0,))
        if plan is None:
            continue
        made = world.detour(plan, 0)
        if made is None:
            continue
        b_segs, b_labels = made
        a_segs = plan.routes[0]
        a_labels = _distinct_mask(a_segs, b_segs)
        n_min = max(1, int(round(minority * cfg.trajs_per_pair)))
        for part, (major, minor) in enumerate([((a_segs, None), (b_segs, b_labels)),
                                               ((b_segs, None), (a_segs, a_labels))]):
            ids = [1] * n_min + [0] * (cfg.trajs_per_pair - n_min)
            rng.shuffle(ids)
            days = (0, half) if part == 0 else (half, cfg.days)
            for k, is_min in enumerate(ids):
                segs, labels = minor if is_min else major
                labels = labels if labels is not None else [0] * len(segs)
                tid = f"d{part + 1}-p{pair_idx:03d}-t{k:04d}"
                parts[part].append(Trajectory(tid, _start_time(rng, cfg, plan.slots[0], days),
                                              tuple(segs), tuple(labels)))
        pairs.append({"pair": pair_idx, "source": plan.source,
                      "destination": plan.destination, "slots": plan.slots,
                      "route_a": list(a_segs), "route_b": list(b_segs)})
        pair_idx += 1
    return net, parts[0], parts[1], {"config": asdict(cfg), "pairs": pairs}


def _distinct_mask(route: Sequence[str], other: Sequence[str]) -> list[int]:
    """1 on interior positions of ``route`` entered by a transition ``other`` never makes."""
    shared = set(zip(other, other[1:]))
    return [0] + [int((route[i - 1], route[i]) not in shared)
                  for i in range(1, len(route) - 1)] + [0]
