"""Online labeling of a trajectory, one segment at a time.

Interior positions are first offered to the road-network rules; only when the
rules cannot decide is the policy consulted. Raw labels then pass through a
delay buffer that merges anomalous runs separated by short normal gaps before
runs are reported.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import groupstats as gs
from . import rsrnet
from .errors import ContractViolation, ConfigError, StreamError
from .policy import GREEDY, SAMPLE, Models, make_state, policy_action
from .roadnet import RoadNetwork
from .trajio import Trajectory, anomaly_event, normal_event

log = logging.getLogger(__name__)

NOT_DETERMINED = None


def rnel_decide(net: RoadNetwork, prev: str, cur: str, prev_label: int) -> int | None:
    """Label forced by the network structure, or ``NOT_DETERMINED``."""
    if not net.is_adjacent(prev, cur):
        raise ContractViolation(f"segments {prev!r} and {cur!r} are not adjacent")
    out_deg = net.out_degree(prev)
    in_deg = net.in_degree(cur)
    if out_deg == 1 and in_deg == 1:
        return prev_label
    if out_deg == 1 and in_deg > 1 and prev_label == 0:
        return 0
    if out_deg > 1 and in_deg == 1 and prev_label == 1:
        return 1
    return NOT_DETERMINED


class DelayedLabeler:
    """Streaming post-processor for raw 0/1 labels.

    After a run of 1s ends at ``b``, the following ``D`` positions are watched;
    a 1 at ``j <= b + D`` turns the zeros in ``(b, j)`` into 1s and the run
    continues. Labels come out in index order once they can no longer change.
    """

    def __init__(self, D: int = 8):
        if D < 0:
            raise ConfigError(f"delay D must be >= 0, got {D}")
        self.D = D
        self.labels: list[int] = []
        self.n_final = 0
        self.run_start: int | None = None
        self.last_one: int | None = None

    def push(self, label: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        """Feed the next raw label; returns ``(newly_final_labels, closed_runs)``."""
        i = len(self.labels)
        self.labels.append(label)
        runs = []
        if label == 1:
            if self.run_start is None:
                self.run_start = i
            else:
                for k in range(self.last_one + 1, i):
                    self.labels[k] = 1
            self.last_one = i
        elif self.run_start is not None and i >= self.last_one + self.D:
            runs.append(self._close())
        return self._release(), runs

    def finish(self) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        runs = [self._close()] if self.run_start is not None else []
        return self._release(final=True), runs

    def _close(self) -> tuple[int, int]:
        run = (self.run_start, self.last_one)
        self.run_start = self.last_one = None
        return run

    def _release(self, final: bool = False) -> list[tuple[int, int]]:
        frontier = len(self.labels)
        if not final and self.run_start is not None:
            frontier = self.last_one + 1
        out = [(k, self.labels[k]) for k in range(self.n_final, frontier)]
        self.n_final = frontier
        return out


def extract_runs(labels: Sequence[int]) -> list[tuple[int, int]]:
    """Maximal runs of 1s as inclusive ``(start, end)`` index pairs."""
    runs = []
    start = None
    for i, v in enumerate(labels):
        if v and start is None:
            start = i
        elif not v and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(labels) - 1))
    return runs


def apply_delay(labels: Sequence[int], D: int) -> list[int]:
    """Batch form of the delay post-processor."""
    lab = DelayedLabeler(D)
    for v in labels:
        lab.push(v)
    lab.finish()
    return list(lab.labels)


@dataclass
class Decision:
    """A position where the policy chose the label."""

    index: int
    state: np.ndarray
    prev_label: int
    action: int
    log_prob: float


@dataclass
class DetectionSession:
    """Per-trajectory online state. Holds its own LSTM state; models are read-only."""

    models: Models
    store: gs.StatsStore
    net: RoadNetwork
    traj_id: str
    sd: tuple[str, str]
    start: int = 0
    mode: str = GREEDY
    D: int = 8
    rng: np.random.Generator | None = None
    record: bool = False
    segments: list[str] = field(default_factory=list)
    raw_labels: list[int] = field(default_factory=list)
    final_labels: list[int] = field(default_factory=list)
    nrf: list[int] = field(default_factory=list)
    zs: list[np.ndarray] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    closed: bool = False

    def __post_init__(self):
        if self.mode not in (GREEDY, SAMPLE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == SAMPLE and self.rng is None:
            raise ConfigError("sample mode needs a seeded generator")
        self.key = self.store.key_for(self.sd, self.start)
        self.cold = self.key not in self.store
        self._delay = DelayedLabeler(self.D)
        self._state = self.models.rsr.zero_state()
        self._anomalies = 0

    def push(self, seg: str, is_last: bool = False, forced: int | None = None) -> list[dict]:
        """Consume the next segment; returns events that became final.

        ``forced`` overrides the policy's choice at policy-decided positions
        (used for pretraining on noisy labels).
        """
        if self.closed:
            raise StreamError(f"trajectory {self.traj_id!r} already finished")
        net = self.net
        if seg not in net:
            raise StreamError(f"unknown segment {seg!r}")
        i = len(self.segments)
        events: list[dict] = []
        if i == 0:
            if seg != self.sd[0]:
                raise StreamError(
                    f"trajectory {self.traj_id!r} starts at {seg!r}, not its source "
                    f"{self.sd[0]!r}")
            if self.cold:
                events.append({"traj": self.traj_id, "event": "warning",
                               "code": "cold_start",
                               "message": f"no history for group {tuple(self.key)!r}"})
        else:
            prev = self.segments[-1]
            if not net.is_adjacent(prev, seg):
                raise StreamError(f"segment {seg!r} does not follow {prev!r}")
            if is_last and seg != self.sd[1]:
                raise StreamError(
                    f"trajectory {self.traj_id!r} ends at {seg!r}, not its destination "
                    f"{self.sd[1]!r}")
        if is_last and i == 0:
            raise StreamError("a trajectory needs at least two segments")

        if i == 0 or is_last:
            f = 0
        elif self.cold:
            f = 1
        else:
            f = 0 if (self.segments[-1], seg) in self.store.normal_transitions(self.key) else 1
        z, _, self._state, _ = rsrnet.forward_step(
            self.models.rsr, net.index[seg], f, self._state)

        if i == 0 or is_last:
            label = 0
        else:
            prev_label = self.raw_labels[-1]
            label = rnel_decide(net, self.segments[-1], seg, prev_label)
            if label is NOT_DETERMINED:
                s = make_state(z, prev_label, self.models.policy)
                if forced is None:
                    label, lp = policy_action(self.models.policy, s, self.mode, self.rng)
                else:
                    label, lp = forced, float("nan")
                if self.record:
                    self.decisions.append(Decision(i, s, prev_label, label, lp))

        self.segments.append(seg)
        self.raw_labels.append(label)
        self.nrf.append(f)
        if self.record:
            self.zs.append(z)

        final, runs = self._delay.push(label)
        if is_last:
            more, more_runs = self._delay.finish()
            final += more
            runs += more_runs
        self.final_labels.extend(v for _, v in final)
        events.extend(self._run_event(r) for r in runs)
        if is_last:
            self.closed = True
            if self._anomalies == 0:
                events.append(normal_event(self.traj_id))
        self.events.extend(events)
        return events

    def _run_event(self, run: tuple[int, int]) -> dict:
        start, end = run
        # the destination is forced normal, so runs never reach it
        end = min(end, len(self.segments) - 2)
        self._anomalies += 1
        return anomaly_event(self.traj_id, start, end, self.segments[start:end + 1])


def open_session(models: Models, store: gs.StatsStore, net: RoadNetwork,
                 traj: Trajectory, mode: str = GREEDY, D: int = 8,
                 rng: np.random.Generator | None = None,
                 record: bool = False) -> DetectionSession:
    return DetectionSession(models, store, net, traj.id, traj.sd, traj.start,
                            mode=mode, D=D, rng=rng, record=record)


def run_session(session: DetectionSession, segments: Sequence[str],
                forced: Sequence[int] | None = None) -> DetectionSession:
    n = len(segments)
    for i, seg in enumerate(segments):
        session.push(seg, is_last=i == n - 1,
                     forced=None if forced is None else forced[i])
    return session


def detect_trajectory(models: Models, store: gs.StatsStore, net: RoadNetwork,
                      traj: Trajectory, mode: str = GREEDY, D: int = 8,
                      rng: np.random.Generator | None = None) -> tuple[list[int], list[dict]]:
    """Final labels and events from pushing every point through a fresh session."""
    sess = run_session(open_session(models, store, net, traj, mode, D, rng), traj.segments)
    return sess.final_labels, sess.events


def detect_frequency_baseline(store: gs.StatsStore, traj: Trajectory,
                              alpha: float | None = None) -> tuple[list[int], list[dict]]:
    """Noisy labels used directly as detections, runs extracted without delay."""
    if alpha is not None and alpha != store.alpha:
        store = store.with_thresholds(alpha=alpha)
    labels = gs.noisy_labels(store, traj)
    labels[0] = labels[-1] = 0
    events = [anomaly_event(traj.id, s, e, traj.segments[s:e + 1])
              for s, e in extract_runs(labels)]
    if not events:
        events.append(normal_event(traj.id))
    return labels, events
