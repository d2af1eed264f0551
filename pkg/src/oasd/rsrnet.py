"""Road segment representation network.

Segment embeddings feed an LSTM; its hidden state is concatenated with a
one-hot of the normal-route feature (which bypasses the LSTM) to give the
per-position representation ``z``, and an affine+softmax head predicts the
0/1 label from ``z``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import tensorcore as tc
from .errors import ShapeError

ONEHOT = np.eye(2)


@dataclass
class RsrParams:
    emb: np.ndarray
    lstm: tc.LstmParams
    Wc: np.ndarray
    bc: np.ndarray

    @property
    def d_hidden(self) -> int:
        return self.lstm.hidden

    @property
    def d_z(self) -> int:
        return self.lstm.hidden + 2

    @classmethod
    def init(cls, rng: np.random.Generator, n_segments: int, d_emb: int = 32,
             d_hidden: int = 32) -> "RsrParams":
        return cls(tc.uniform_init(rng, n_segments, d_emb),
                   tc.LstmParams.init(rng, d_emb, d_hidden),
                   tc.uniform_init(rng, 2, d_hidden + 2), np.zeros(2))

    @classmethod
    def zeros(cls, n_segments: int, d_emb: int, d_hidden: int) -> "RsrParams":
        return cls(np.zeros((n_segments, d_emb)), tc.LstmParams.zeros(d_emb, d_hidden),
                   np.zeros((2, d_hidden + 2)), np.zeros(2))

    def tensors(self) -> dict[str, np.ndarray]:
        return {"rsr.emb": self.emb, "rsr.Wx": self.lstm.Wx, "rsr.Wh": self.lstm.Wh,
                "rsr.b": self.lstm.b, "rsr.Wc": self.Wc, "rsr.bc": self.bc}

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "RsrParams":
        return cls(t["rsr.emb"], tc.LstmParams(t["rsr.Wx"], t["rsr.Wh"], t["rsr.b"]),
                   t["rsr.Wc"], t["rsr.bc"])

    def copy(self) -> "RsrParams":
        return RsrParams.from_tensors({k: v.copy() for k, v in self.tensors().items()})

    def zero_state(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros(self.d_hidden), np.zeros(self.d_hidden)


def forward_step(p: RsrParams, seg: int, nrf_i: int, state):
    """Advance one position; returns ``(z, probs, new_state, cache)``."""
    x = tc.embed(p.emb, seg)
    h, c, cell = tc.lstm_step(p.lstm, x, state[0], state[1])
    z = np.concatenate([h, ONEHOT[nrf_i]])
    probs = tc.linear_softmax(p.Wc, p.bc, z)
    return z, probs, (h, c), (seg, cell)


@dataclass
class RsrOutput:
    z: list[np.ndarray]
    probs: list[np.ndarray]
    caches: list
    state: tuple[np.ndarray, np.ndarray]


def forward(p: RsrParams, segs: Sequence[int], nrf: Sequence[int]) -> RsrOutput:
    if len(segs) != len(nrf):
        raise ShapeError(f"forward: {len(segs)} segments vs {len(nrf)} features")
    state = p.zero_state()
    zs, probs, caches = [], [], []
    for seg, f in zip(segs, nrf):
        z, pr, state, cache = forward_step(p, seg, f, state)
        zs.append(z)
        probs.append(pr)
        caches.append(cache)
    return RsrOutput(zs, probs, caches, state)


def _check_lengths(segs, nrf, labels) -> None:
    if not len(segs) == len(nrf) == len(labels):
        raise ShapeError(
            f"length mismatch: {len(segs)} segments, {len(nrf)} features, "
            f"{len(labels)} labels")


def sequence_loss(p: RsrParams, segs: Sequence[int], nrf: Sequence[int],
                  labels: Sequence[int]) -> float:
    _check_lengths(segs, nrf, labels)
    out = forward(p, segs, nrf)
    return float(np.mean([tc.cross_entropy(pr, y) for pr, y in zip(out.probs, labels)]))


def loss_and_grads(p: RsrParams, segs: Sequence[int], nrf: Sequence[int],
                   labels: Sequence[int]) -> tuple[float, RsrParams]:
    """Mean cross-entropy over the sequence and its gradient by BPTT."""
    _check_lengths(segs, nrf, labels)
    n = len(segs)
    out = forward(p, segs, nrf)
    loss = float(np.mean([tc.cross_entropy(pr, y) for pr, y in zip(out.probs, labels)]))

    g = RsrParams.zeros(*p.emb.shape, p.d_hidden)
    H = p.d_hidden
    dh_next = np.zeros(H)
    dc_next = np.zeros(H)
    for i in range(n - 1, -1, -1):
        dlogits = tc.cross_entropy_logit_grad(out.probs[i], labels[i]) / n
        dz = tc.linear_softmax_backward(p.Wc, out.z[i], dlogits, g.Wc, g.bc)
        seg, cell = out.caches[i]
        dx, dh_next, dc_next = tc.lstm_step_backward(
            p.lstm, g.lstm, cell, dz[:H] + dh_next, dc_next)
        tc.embed_backward(g.emb, seg, dx)
    return loss, g


def train_step(p: RsrParams, opt: tc.AdamState, segs, nrf, labels) -> float:
    """One Adam descent step on a single trajectory; returns the pre-step loss."""
    loss, g = loss_and_grads(p, segs, nrf, labels)
    tc.adam_step(opt, p.tensors(), g.tensors())
    return loss


def train_epoch(p: RsrParams, dataset: Sequence[tuple], opt: tc.AdamState,
                rng: np.random.Generator) -> float:
    """One shuffled pass over ``(segs, nrf, labels)`` triples, batch size one."""
    order = rng.permutation(len(dataset))
    losses = [train_step(p, opt, *dataset[k]) for k in order]
    return float(np.mean(losses)) if losses else 0.0


def load_embeddings(source: IO[str] | str, index: dict[str, int],
                    table: np.ndarray) -> int:
    """Copy vectors from an ``{"id", "vec"}`` JSONL file into ``table`` rows.

    Returns the number of rows filled; ids missing from ``index`` are ignored.
    """
    if isinstance(source, str):
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    else:
        lines = source.read().splitlines()
    filled = 0
    for line in lines:
        if not line.strip():
            continue
        rec = json.loads(line)
        row = index.get(str(rec["id"]))
        if row is None:
            continue
        vec = tc.check_finite(str(rec["id"]), np.asarray(rec["vec"], dtype=np.float64))
        if vec.shape != (table.shape[1],):
            raise ShapeError(f"embedding for {rec['id']!r} has dim {vec.shape}, "
                             f"expected {table.shape[1]}")
        table[row] = vec
        filled += 1
    return filled
