"""Input checks shared by the estimator layer and the command line."""

from __future__ import annotations

import numbers
from typing import Iterable, Sequence

from .errors import ConfigError, ValidationError
from .roadnet import RoadNetwork
from .trajio import Trajectory, parse_trajectory, validate_trajectory


def check_fraction(name: str, value) -> float:
    if not isinstance(value, numbers.Real) or not 0.0 <= float(value) <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {value!r}")
    return float(value)


def check_nonneg_int(name: str, value) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        raise ConfigError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


def check_network(net) -> RoadNetwork:
    if not isinstance(net, RoadNetwork):
        raise ValidationError(f"expected a RoadNetwork, got {type(net).__name__}")
    if not len(net):
        raise ValidationError("road network has no segments")
    return net


def check_trajectories(X: Iterable, net: RoadNetwork | None = None,
                       require_labels: bool = False) -> list[Trajectory]:
    """Coerce ``X`` to a list of trajectories and validate each against ``net``.

    Plain dicts in the JSONL record shape are accepted.
    """
    if isinstance(X, (Trajectory, dict, str)):
        raise ValidationError("expected a sequence of trajectories, got a single item")
    out = []
    for item in X:
        traj = parse_trajectory(item) if isinstance(item, dict) else item
        if not isinstance(traj, Trajectory):
            raise ValidationError(f"expected Trajectory, got {type(item).__name__}")
        if net is not None:
            validate_trajectory(traj, net)
        if require_labels and traj.labels is None:
            raise ValidationError(f"trajectory {traj.id!r} has no ground-truth labels")
        out.append(traj)
    return out


def check_label_rows(rows: Sequence[Sequence[int]], trajs: Sequence[Trajectory]) -> None:
    if len(rows) != len(trajs):
        raise ValidationError(f"{len(rows)} label rows for {len(trajs)} trajectories")
    for row, t in zip(rows, trajs):
        if len(row) != len(t):
            raise ValidationError(f"trajectory {t.id!r}: {len(row)} labels for {len(t)} segments")
