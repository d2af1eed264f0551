"""Labeling policy and the container bundling it with the representation network."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import IO

import numpy as np

from . import tensorcore as tc
from .errors import ShapeError
from .rsrnet import RsrParams

GREEDY = "greedy"
SAMPLE = "sample"


@dataclass
class PolicyParams:
    label_emb: np.ndarray  # (2, d_label)
    W: np.ndarray          # (2, d_z + d_label)
    b: np.ndarray          # (2,)

    @property
    def d_label(self) -> int:
        return self.label_emb.shape[1]

    @property
    def d_z(self) -> int:
        return self.W.shape[1] - self.d_label

    @classmethod
    def init(cls, rng: np.random.Generator, d_z: int, d_label: int = 32) -> "PolicyParams":
        return cls(tc.uniform_init(rng, 2, d_label),
                   tc.uniform_init(rng, 2, d_z + d_label), np.zeros(2))

    @classmethod
    def zeros(cls, d_z: int, d_label: int) -> "PolicyParams":
        return cls(np.zeros((2, d_label)), np.zeros((2, d_z + d_label)), np.zeros(2))

    def tensors(self) -> dict[str, np.ndarray]:
        return {"pol.label_emb": self.label_emb, "pol.W": self.W, "pol.b": self.b}

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "PolicyParams":
        return cls(t["pol.label_emb"], t["pol.W"], t["pol.b"])

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.label_emb.copy(), self.W.copy(), self.b.copy())


def make_state(z: np.ndarray, prev_label: int, p: PolicyParams) -> np.ndarray:
    if z.shape != (p.d_z,):
        raise ShapeError(f"make_state: z has shape {z.shape}, policy expects ({p.d_z},)")
    return np.concatenate([z, p.label_emb[prev_label]])


def action_probs(p: PolicyParams, s: np.ndarray) -> np.ndarray:
    return tc.linear_softmax(p.W, p.b, s)


def policy_action(p: PolicyParams, s: np.ndarray, mode: str = GREEDY,
                  rng: np.random.Generator | None = None) -> tuple[int, float]:
    """Pick a label; greedy ties resolve to 0. Returns ``(action, ln pi(action|s))``."""
    probs = action_probs(p, s)
    if mode == GREEDY:
        a = 1 if probs[1] > probs[0] else 0
    elif mode == SAMPLE:
        if rng is None:
            raise ValueError("sample mode needs a generator")
        a = 1 if rng.random() < probs[1] else 0
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return a, float(np.log(max(probs[a], tc.LOG_EPS)))


def log_prob(p: PolicyParams, s: np.ndarray, a: int) -> float:
    return float(np.log(max(action_probs(p, s)[a], tc.LOG_EPS)))


def log_prob_backward(p: PolicyParams, s: np.ndarray, prev_label: int, a: int,
                      grads: PolicyParams, scale: float = 1.0) -> None:
    """Accumulate ``scale * grad ln pi(a|s)`` into ``grads``.

    ``s`` is the state built with ``prev_label``; the label-embedding row it
    used receives the gradient of the state's trailing block. ``z`` is fixed.
    """
    d = -tc.cross_entropy_logit_grad(action_probs(p, s), a) * scale
    ds = tc.linear_softmax_backward(p.W, s, d, grads.W, grads.b)
    grads.label_emb[prev_label] += ds[p.d_z:]


@dataclass
class Models:
    rsr: RsrParams
    policy: PolicyParams
    config: dict = field(default_factory=dict)

    @classmethod
    def init(cls, seed: int, n_segments: int, d_emb: int = 32, d_hidden: int = 32,
             d_label: int = 32, **config) -> "Models":
        rng = tc.substream(seed, "init")
        rsr = RsrParams.init(rng, n_segments, d_emb, d_hidden)
        pol = PolicyParams.init(rng, rsr.d_z, d_label)
        cfg = {"seed": seed, "n_segments": n_segments, "d_emb": d_emb,
               "d_hidden": d_hidden, "d_label": d_label, **config}
        return cls(rsr, pol, cfg)

    def copy(self) -> "Models":
        return Models(self.rsr.copy(), self.policy.copy(), dict(self.config))

    def tensors(self) -> dict[str, np.ndarray]:
        return {**self.rsr.tensors(), **self.policy.tensors()}

    def save(self, sink: IO[str] | None = None) -> str:
        return tc.save_checkpoint(self.tensors(), self.config, sink)

    @classmethod
    def load(cls, source: IO[str] | str) -> "Models":
        tensors, config = tc.load_checkpoint(source)
        return cls(RsrParams.from_tensors(tensors), PolicyParams.from_tensors(tensors),
                   config)
