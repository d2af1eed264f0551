"""Directed road network over road segments.

Degrees are taken over segment-to-segment transitions: ``out_degree(e)`` counts
the segments leaving ``e``'s head vertex and ``in_degree(e)`` counts those
entering its tail vertex.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable

from .errors import NotFoundError, ParseError, ValidationError


@dataclass(frozen=True)
class Segment:
    id: str
    src: str
    dst: str
    length: float = 0.0


@dataclass
class RoadNetwork:
    vertices: dict[str, tuple[float, float]]
    segments: dict[str, Segment]
    successors: dict[str, list[str]] = field(default_factory=dict, repr=False)
    predecessors: dict[str, list[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._validate()
        self.successors, self.predecessors = self._build_indices()
        # dense integer ids, used as embedding rows
        self.index = {sid: k for k, sid in enumerate(self.segments)}

    @classmethod
    def from_segments(
        cls,
        segments: Iterable[tuple[str, str, str] | tuple[str, str, str, float]],
        vertices: dict[str, tuple[float, float]] | None = None,
    ) -> "RoadNetwork":
        segs: dict[str, Segment] = {}
        verts = dict(vertices or {})
        for rec in segments:
            seg = Segment(*rec)
            if seg.id in segs:
                raise ValidationError(f"duplicate segment id {seg.id!r}")
            segs[seg.id] = seg
            if vertices is None:
                verts.setdefault(seg.src, (0.0, 0.0))
                verts.setdefault(seg.dst, (0.0, 0.0))
        return cls(verts, segs)

    def _validate(self) -> None:
        for seg in self.segments.values():
            for v in (seg.src, seg.dst):
                if v not in self.vertices:
                    raise ValidationError(
                        f"segment {seg.id!r} references missing vertex {v!r}"
                    )
            if seg.length < 0:
                raise ValidationError(f"segment {seg.id!r} has negative length")

    def _build_indices(self) -> tuple[dict[str, list[str]], dict[str, list[str]]]:
        succ: dict[str, list[str]] = {v: [] for v in self.vertices}
        pred: dict[str, list[str]] = {v: [] for v in self.vertices}
        for seg in self.segments.values():
            succ[seg.src].append(seg.id)
            pred[seg.dst].append(seg.id)
        return succ, pred

    def __len__(self) -> int:
        return len(self.segments)

    def __contains__(self, sid: object) -> bool:
        return sid in self.segments

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RoadNetwork):
            return NotImplemented
        return self.vertices == other.vertices and self.segments == other.segments

    def segment(self, sid: str) -> Segment:
        try:
            return self.segments[sid]
        except KeyError:
            raise NotFoundError(f"unknown segment {sid!r}") from None

    def out_degree(self, sid: str) -> int:
        return len(self.successors[self.segment(sid).dst])

    def in_degree(self, sid: str) -> int:
        return len(self.predecessors[self.segment(sid).src])

    def is_adjacent(self, first: str, second: str) -> bool:
        return self.segment(first).dst == self.segment(second).src

    def next_segments(self, sid: str) -> list[str]:
        return list(self.successors[self.segment(sid).dst])

    def to_dict(self) -> dict:
        return {
            "vertices": [
                {"id": v, "x": x, "y": y} for v, (x, y) in self.vertices.items()
            ],
            "segments": [
                {"id": s.id, "from": s.src, "to": s.dst, "length": s.length}
                for s in self.segments.values()
            ],
        }


def load_network(source: IO[str] | IO[bytes] | str) -> RoadNetwork:
    """Parse the JSON network format from a stream, a path, or raw text."""
    text = _read_text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("network document must be a JSON object", line=1)

    vertices: dict[str, tuple[float, float]] = {}
    for rec in doc.get("vertices", []):
        try:
            vid = str(rec["id"])
            vertices[vid] = (float(rec.get("x", 0.0)), float(rec.get("y", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad vertex record {rec!r}: {exc}",
                             line=_line_of(text, rec)) from None
    segments: dict[str, Segment] = {}
    for rec in doc.get("segments", []):
        try:
            seg = Segment(str(rec["id"]), str(rec["from"]), str(rec["to"]),
                          float(rec.get("length", 0.0)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad segment record {rec!r}: {exc}",
                             line=_line_of(text, rec)) from None
        if seg.id in segments:
            raise ValidationError(f"duplicate segment id {seg.id!r}")
        segments[seg.id] = seg
    return RoadNetwork(vertices, segments)


def dump_network(net: RoadNetwork, sink: IO[str] | None = None) -> str:
    text = json.dumps(net.to_dict(), indent=1, sort_keys=True) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def _read_text(source) -> str:
    if isinstance(source, str):
        if source.lstrip().startswith("{"):
            return source
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    if isinstance(source, (bytes, bytearray)):
        return source.decode("utf-8")
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data


def _line_of(text: str, rec) -> int | None:
    # best effort: locate the record's id in the raw text
    if isinstance(rec, dict) and "id" in rec:
        needle = json.dumps(rec["id"])
        pos = text.find(needle)
        if pos >= 0:
            return text.count("\n", 0, pos) + 1
    return None


__all__ = ["RoadNetwork", "Segment", "load_network", "dump_network"]
