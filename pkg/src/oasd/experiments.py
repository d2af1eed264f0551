"""Evaluation protocols: held-out benchmark, concept drift, cold start, latency."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import groupstats as gs
from .detector import open_session
from .errors import ConfigError
from .estimator import OnlineSubtrajectoryDetector, TransitionFrequencyDetector, split_indices
from .metrics import EvalReport
from .roadnet import RoadNetwork
from .synthgen import SynthConfig, drift_scenario, generate
from .trajio import Trajectory

log = logging.getLogger(__name__)

LENGTH_GROUPS = (("G1", 0, 15), ("G2", 15, 30), ("G3", 30, 45), ("G4", 45, None))


def desk_world(seed: int = 0, **overrides) -> SynthConfig:
    """Benchmark world: 50 pairs x 40 trips, one normal route per pair, 2% detours."""
    base = dict(route_profiles=((1.0,),), profile_probs=(1.0,), anomaly_ratio=0.02,
                n_pairs=50, trajs_per_pair=40, seed=seed)
    base.update(overrides)
    return SynthConfig(**base)


def desk_detector(seed: int = 0, **overrides) -> OnlineSubtrajectoryDetector:
    params = dict(pretrain_size=1000, pretrain_epochs=5, pretrain_policy_epochs=100,
                  joint_size=1000, seed=seed)
    params.update(overrides)
    return OnlineSubtrajectoryDetector(**params)


@dataclass
class BenchmarkResult:
    baseline: EvalReport
    pretrained: EvalReport
    trained: EvalReport
    n_train: int
    n_dev: int
    n_test: int
    seconds: dict = field(default_factory=dict)
    detector: OnlineSubtrajectoryDetector | None = field(default=None, repr=False)
    test: list[Trajectory] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        return {"baseline_f1": self.baseline.f1, "pretrained_f1": self.pretrained.f1,
                "trained_f1": self.trained.f1, "trained_tf1": self.trained.tf1,
                "n_train": self.n_train, "n_dev": self.n_dev, "n_test": self.n_test,
                "seconds": self.seconds}


def run_benchmark(world: SynthConfig | None = None,
                  detector: OnlineSubtrajectoryDetector | None = None,
                  test_frac: float = 0.4, dev_frac: float = 0.1) -> BenchmarkResult:
    """Generate, split, train, and score both detectors on the held-out split.

    Statistics come from every trajectory: they are unlabeled history, so the
    test trips count toward normal routes exactly as live traffic would.
    """
    world = world or desk_world()
    det = detector or desk_detector(world.seed)
    secs = {}
    t0 = time.perf_counter()
    net, trajs, _ = generate(world)
    test_i, dev_i, train_i = split_indices(len(trajs), test_frac, dev_frac, world.seed)
    test = [trajs[i] for i in test_i]
    dev = [trajs[i] for i in dev_i]
    train = [trajs[i] for i in train_i]
    secs["generate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    det.fit(train, network=net, history=trajs, eval_set=dev)
    secs["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    base = TransitionFrequencyDetector(det.alpha, det.delta, det.slots_per_day, det.phi)
    base.fit(trajs)
    baseline = base.evaluate(test)
    trained = det.evaluate(test)
    pre_models, det.models_ = det.models_, det.pretrained_models_
    try:
        pretrained = det.evaluate(test)
    finally:
        det.models_ = pre_models
    secs["evaluate"] = time.perf_counter() - t0
    return BenchmarkResult(baseline, pretrained, trained, len(train), len(dev), len(test),
                           secs, det, test)


def partition_by_time(trajs: Sequence[Trajectory], xi: int) -> list[list[Trajectory]]:
    """Sort by start time (ties by id) and cut into ``xi`` near-equal parts."""
    if xi < 1:
        raise ConfigError(f"xi must be >= 1, got {xi}")
    ordered = sorted(trajs, key=lambda t: (t.start, t.id))
    bounds = np.linspace(0, len(ordered), xi + 1).round().astype(int)
    return [ordered[a:b] for a, b in zip(bounds, bounds[1:])]


@dataclass
class DriftRow:
    part: int
    n: int
    frozen_f1: float
    finetuned_f1: float


def run_drift(net: RoadNetwork, trajs: Sequence[Trajectory], xi: int = 2,
              detector: OnlineSubtrajectoryDetector | None = None) -> list[DriftRow]:
    """Frozen-vs-fine-tuned comparison over time partitions.

    Both models start from training on part 1. The frozen model keeps part 1's
    parameters and statistics; the fine-tuned one continues joint training on
    each later part with statistics rebuilt from that part.
    """
    parts = partition_by_time(trajs, xi)
    det = detector or desk_detector()
    det.fit(parts[0], network=net)
    frozen_models, frozen_stats = det.models_.copy(), det.stats_
    rows = []
    for k, part in enumerate(parts, start=1):
        if k > 1:
            det.partial_fit(part)
        ft = det.evaluate(part).f1
        live_models, live_stats = det.models_, det.stats_
        det.models_ = frozen_models
        try:
            fr = det.evaluate(part, stats=frozen_stats).f1
        finally:
            det.models_ = live_models
        det.stats_ = live_stats
        rows.append(DriftRow(k, len(part), fr, ft))
        log.info("drift part %d: frozen %.4f fine-tuned %.4f", k, fr, ft)
    return rows


def drift_corpus(seed: int = 0, minority: float = 0.08, **overrides):
    cfg = SynthConfig(**{"n_pairs": 50, "trajs_per_pair": 40, "seed": seed, **overrides})
    net, p1, p2, manifest = drift_scenario(cfg, minority)
    return net, p1 + p2, manifest


@dataclass
class ColdStartRow:
    drop_rate: float
    groups: int
    f1: float


def run_coldstart(detector: OnlineSubtrajectoryDetector, test: Sequence[Trajectory],
                  rates: Sequence[float] = (0.0, 0.2, 0.4, 0.6, 0.8),
                  seed: int = 0) -> list[ColdStartRow]:
    """Re-score a trained detector after thinning its history by each drop rate."""
    rows = []
    for rate in rates:
        store = gs.drop_history(detector.stats_, rate, seed)
        rows.append(ColdStartRow(float(rate), len(store), detector.evaluate(test, store).f1))
    return rows


def length_group(n: int) -> str:
    for name, lo, hi in LENGTH_GROUPS:
        if n >= lo and (hi is None or n < hi):
            return name
    raise AssertionError(n)


def run_latency(detector: OnlineSubtrajectoryDetector, trajs: Sequence[Trajectory],
                repeats: int = 1) -> dict:
    """Wall-clock per-point push time, grouped by trajectory length."""
    det = detector
    times: dict[str, list[float]] = {name: [] for name, _, _ in LENGTH_GROUPS}
    clock = time.perf_counter
    for _ in range(repeats):
        for t in trajs:
            sess = open_session(det.models_, det.stats_, det.network_, t, D=det.delay)
            n = len(t)
            bucket = times[length_group(n)]
            for i, seg in enumerate(t.segments):
                t0 = clock()
                sess.push(seg, is_last=i == n - 1)
                bucket.append(clock() - t0)
    report = {"groups": {}}
    for name, vals in times.items():
        if vals:
            arr = np.asarray(vals) * 1e3
            report["groups"][name] = {"points": int(arr.size),
                                      "median_ms": float(np.median(arr)),
                                      "p99_ms": float(np.percentile(arr, 99))}
    every = np.concatenate([np.asarray(v) for v in times.values() if v]) * 1e3
    report["median_ms"] = float(np.median(every))
    g = report["groups"]
    if "G1" in g and "G4" in g:
        report["g4_g1_ratio"] = g["G4"]["median_ms"] / g["G1"]["median_ms"]
    return report


def bench_world(seed: int = 0) -> SynthConfig:
    """Wider grid with a spread of route lengths so every length group is populated."""
    return SynthConfig(width=48, height=48, n_pairs=60, trajs_per_pair=8,
                       route_profiles=((1.0,),), profile_probs=(1.0,), anomaly_ratio=0.05,
                       route_len=(6, 120), detour_len=(4, 12), seed=seed)


def asdict_rows(rows) -> list[dict]:
    return [asdict(r) for r in rows]
