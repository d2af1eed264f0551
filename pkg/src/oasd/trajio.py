"""Map-matched trajectories: data model, JSONL ingestion, and point-by-point replay."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, NamedTuple, Sequence

from .errors import ConfigError, ParseError, ValidationError
from .roadnet import RoadNetwork

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400


class SdPair(NamedTuple):
    source: str
    destination: str


@dataclass(frozen=True)
class Trajectory:
    """An identified segment sequence with a start time and optional ground truth."""

    id: str
    start: int
    segments: tuple[str, ...]
    labels: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(int(v) for v in self.labels))

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def sd(self) -> SdPair:
        return SdPair(self.segments[0], self.segments[-1])

    def to_dict(self) -> dict:
        rec = {"id": self.id, "start": int(self.start), "segments": list(self.segments)}
        if self.labels is not None:
            rec["labels"] = list(self.labels)
        return rec


def validate_trajectory(traj: Trajectory, net: RoadNetwork | None) -> None:
    """Shape and label checks; segment and adjacency checks too when ``net`` is given."""
    n = len(traj.segments)
    if n < 2:
        raise ValidationError(f"trajectory {traj.id!r}: too short (n={n})")
    if net is not None:
        for sid in traj.segments:
            if sid not in net:
                raise ValidationError(f"trajectory {traj.id!r}: unknown segment {sid!r}")
        for i in range(1, n):
            if not net.is_adjacent(traj.segments[i - 1], traj.segments[i]):
                raise ValidationError(
                    f"trajectory {traj.id!r}: segments {traj.segments[i - 1]!r} and "
                    f"{traj.segments[i]!r} at positions {i - 1},{i} are not adjacent"
                )
    if traj.labels is not None:
        if len(traj.labels) != n:
            raise ValidationError(f"trajectory {traj.id!r}: labels length mismatch")
        if any(v not in (0, 1) for v in traj.labels):
            raise ValidationError(f"trajectory {traj.id!r}: labels must be 0/1")
        if traj.labels[0] != 0 or traj.labels[-1] != 0:
            raise ValidationError(f"trajectory {traj.id!r}: endpoint labels must be 0")


def parse_trajectory(rec: dict) -> Trajectory:
    return Trajectory(
        id=str(rec["id"]),
        start=int(rec.get("start", 0)),
        segments=tuple(str(s) for s in rec["segments"]),
        labels=None if rec.get("labels") is None else tuple(rec["labels"]),
    )


def load_trajectories(
    source: IO[str] | str | Iterable[str],
    net: RoadNetwork | None,
    strict: bool = False,
    rejected: list[tuple[int, str]] | None = None,
) -> list[Trajectory]:
    """Read trajectory JSONL. Invalid records are skipped with a warning unless ``strict``.

    ``rejected`` collects ``(line, reason)`` for every skipped record.
    """
    out = []
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip():
            continue
        try:
            traj = parse_trajectory(json.loads(line))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed trajectory record: {exc}", line=lineno) from None
        try:
            validate_trajectory(traj, net)
        except ValidationError as exc:
            if strict:
                raise ValidationError(f"line {lineno}: {exc}") from None
            log.warning("line %d rejected: %s", lineno, exc)
            if rejected is not None:
                rejected.append((lineno, str(exc)))
            continue
        out.append(traj)
    return out


def dump_trajectories(trajs: Iterable[Trajectory], sink: IO[str] | None = None) -> str:
    text = "".join(json.dumps(t.to_dict(), sort_keys=True) + "\n" for t in trajs)
    if sink is not None:
        sink.write(text)
    return text


def time_slot(t: int | float, slots_per_day: int = 24, offset: int = 0) -> int:
    """Slot index of an epoch timestamp within its (UTC + ``offset``) day."""
    check_slots(slots_per_day)
    width = SECONDS_PER_DAY // slots_per_day
    return int(((int(t) + offset) % SECONDS_PER_DAY) // width)


def check_slots(slots_per_day: int) -> None:
    if not isinstance(slots_per_day, int) or not 1 <= slots_per_day <= 24 \
            or 24 % slots_per_day:
        raise ConfigError(f"slots_per_day must divide 24, got {slots_per_day!r}")


def stream(traj: Trajectory) -> Iterator[tuple[int, str]]:
    for i, sid in enumerate(traj.segments):
        yield i, sid


def anomaly_event(traj_id: str, start: int, end: int, segments: Sequence[str]) -> dict:
    return {"traj": traj_id, "event": "anomaly", "start_idx": int(start),
            "end_idx": int(end), "segments": list(segments)}


def normal_event(traj_id: str) -> dict:
    return {"traj": traj_id, "event": "normal"}


def dump_events(events: Iterable[dict], sink: IO[str] | None = None) -> str:
    text = "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)
    if sink is not None:
        sink.write(text)
    return text


def _lines(source) -> Iterable[str]:
    if isinstance(source, str):
        if "\n" in source or source.lstrip().startswith("{"):
            return source.splitlines()
        with open(source, encoding="utf-8") as fh:
            return fh.read().splitlines()
    return source
