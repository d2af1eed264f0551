"""Span-level scores for anomalous subtrajectories, NER style.

Ground-truth and detected anomalies are maximal runs of 1s. For each
trajectory with ground-truth anomalies, the Jaccard index of its 1-positions
against the detected 1-positions is summed into ``J``; precision divides by
the number of detected runs (over every trajectory) and recall by the number
of ground-truth runs. TF1 swaps each Jaccard for ``[J_traj > phi]``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from .errors import ValidationError


@dataclass
class EvalReport:
    J: float
    precision: float
    recall: float
    f1: float
    tf1: float
    n_gt_runs: int
    n_det_runs: int
    per_traj_jaccard: dict[str, float] = field(default_factory=dict)
    tprecision: float = 0.0
    trecall: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def table(self) -> str:
        rows = [("F1", self.f1), ("TF1", self.tf1), ("precision", self.precision),
                ("recall", self.recall), ("J", self.J),
                ("gt runs", self.n_gt_runs), ("detected runs", self.n_det_runs)]
        return "\n".join(f"{name:<14}{value:>10.4f}" if isinstance(value, float)
                         else f"{name:<14}{value:>10d}" for name, value in rows)


def count_runs(labels: Sequence[int]) -> int:
    prev = 0
    n = 0
    for v in labels:
        if v and not prev:
            n += 1
        prev = v
    return n


def jaccard(gt: set[int], det: set[int]) -> float:
    union = gt | det
    if not union:
        return 0.0
    return len(gt & det) / len(union)


def _prf(J: float, n_det: int, n_gt: int) -> tuple[float, float, float]:
    p = J / n_det if n_det else 0.0
    r = J / n_gt if n_gt else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def evaluate(corpus: Iterable[tuple[str, Sequence[int], Sequence[int]]],
             phi: float = 0.5) -> EvalReport:
    """Score ``(traj_id, gt_labels, detected_labels)`` triples."""
    J = 0.0
    TJ = 0
    n_gt = n_det = 0
    per_traj = {}
    for tid, gt, det in corpus:
        if len(gt) != len(det):
            raise ValidationError(
                f"trajectory {tid!r}: {len(gt)} ground-truth labels vs {len(det)} detected")
        n_det += count_runs(det)
        g_runs = count_runs(gt)
        if not g_runs:
            continue
        n_gt += g_runs
        j = jaccard({i for i, v in enumerate(gt) if v}, {i for i, v in enumerate(det) if v})
        per_traj[tid] = j
        J += j
        TJ += j > phi
    p, r, f = _prf(J, n_det, n_gt)
    tp, tr, tf = _prf(float(TJ), n_det, n_gt)
    return EvalReport(J, p, r, f, tf, n_gt, n_det, per_traj, tp, tr)
