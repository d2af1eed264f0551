"""Small differentiable kernels with hand-written backward passes.

Everything is float64 numpy. Each forward returns what its backward needs so
no autodiff graph is kept around.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Callable, IO

import numpy as np

from .errors import ParseError, ShapeError

CKPT_VERSION = 1
LOG_EPS = 1e-12
INIT_SCALE = 0.08


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, independent generator derived from a master seed."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


def uniform_init(rng: np.random.Generator, *shape: int) -> np.ndarray:
    return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)


def check_finite(name: str, arr: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"tensor {name!r} contains NaN or Inf")
    return arr


def _expect(name: str, arr: np.ndarray, shape: tuple) -> None:
    if arr.shape != shape:
        raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")


# ---------------------------------------------------------------- embedding

def embed(table: np.ndarray, token: int) -> np.ndarray:
    if not 0 <= token < table.shape[0]:
        raise IndexError(f"token {token} out of range for table with {table.shape[0]} rows")
    return table[token].copy()


def embed_backward(grad_table: np.ndarray, token: int, grad_out: np.ndarray) -> None:
    grad_table[token] += grad_out


# ---------------------------------------------------------------- LSTM cell

def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    """Gate order in the stacked weights is input, forget, output, candidate."""

    Wx: np.ndarray  # (4H, X)
    Wh: np.ndarray  # (4H, H)
    b: np.ndarray   # (4H,)

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    @property
    def inputs(self) -> int:
        return self.Wx.shape[1]

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int) -> "LstmParams":
        b = np.zeros(4 * d_hidden)
        b[d_hidden:2 * d_hidden] = 1.0
        return cls(uniform_init(rng, 4 * d_hidden, d_in),
                   uniform_init(rng, 4 * d_hidden, d_hidden), b)

    @classmethod
    def zeros(cls, d_in: int, d_hidden: int) -> "LstmParams":
        return cls(np.zeros((4 * d_hidden, d_in)), np.zeros((4 * d_hidden, d_hidden)),
                   np.zeros(4 * d_hidden))


def lstm_step(p: LstmParams, x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray):
    """One cell step; returns ``(h, c, cache)``."""
    H = p.hidden
    if x.shape != (p.inputs,) or h_prev.shape != (H,) or c_prev.shape != (H,):
        raise ShapeError(
            f"lstm_step: got x{x.shape} h{h_prev.shape} c{c_prev.shape} "
            f"for input {p.inputs}, hidden {H}")
    a = p.Wx @ x + p.Wh @ h_prev + p.b
    i = sigmoid(a[:H])
    f = sigmoid(a[H:2 * H])
    o = sigmoid(a[2 * H:3 * H])
    g = np.tanh(a[3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def lstm_step_backward(p: LstmParams, grads: LstmParams, cache, dh: np.ndarray,
                       dc: np.ndarray):
    """Accumulate parameter grads into ``grads``; return ``(dx, dh_prev, dc_prev)``."""
    x, h_prev, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    di = dc * g
    df = dc * c_prev
    dg = dc * i
    da = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ])
    grads.Wx += np.outer(da, x)
    grads.Wh += np.outer(da, h_prev)
    grads.b += da
    return p.Wx.T @ da, p.Wh.T @ da, dc * f


# ---------------------------------------------------------------- heads

def softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def linear_softmax(W: np.ndarray, b: np.ndarray, z: np.ndarray) -> np.ndarray:
    if W.ndim != 2 or b.shape != (W.shape[0],) or z.shape != (W.shape[1],):
        raise ShapeError(f"linear_softmax: W{W.shape} b{b.shape} z{z.shape}")
    return softmax(W @ z + b)


def linear_softmax_backward(W: np.ndarray, z: np.ndarray, dlogits: np.ndarray,
                            gW: np.ndarray, gb: np.ndarray) -> np.ndarray:
    """Given dL/dlogits, accumulate into ``gW``/``gb`` and return dL/dz."""
    gW += np.outer(dlogits, z)
    gb += dlogits
    return W.T @ dlogits


def cross_entropy(pred: np.ndarray, label: int) -> float:
    """``-ln pred[label]`` with the probability clamped at ``LOG_EPS``."""
    return -float(np.log(max(pred[label], LOG_EPS)))


def cross_entropy_logit_grad(pred: np.ndarray, label: int) -> np.ndarray:
    g = pred.copy()
    g[label] -= 1.0
    return g


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity; 0 when either vector has norm below 1e-12."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine: shapes {a.shape} and {b.shape} differ")
    na = float(np.sqrt(a @ a))
    nb = float(np.sqrt(b @ b))
    if na < 1e-12 or nb < 1e-12:
        return 0.0
    return float(a @ b) / (na * nb)


# ---------------------------------------------------------------- Adam

@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray], maximize: bool = False) -> None:
    """In-place Adam update of every array in ``params``."""
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ShapeError(f"adam_step: grad {k} {g.shape} vs param {params[k].shape}")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    sign = 1.0 if maximize else -1.0
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[k] += sign * state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


# ---------------------------------------------------------------- checking

def finite_diff_check(f: Callable[[], float], params: dict[str, np.ndarray],
                      grads: dict[str, np.ndarray], h: float = 1e-5,
                      floor: float = 1e-6) -> float:
    """Max relative error between ``grads`` and central differences of ``f``.

    ``f`` reads the arrays in ``params``, which are perturbed in place and
    restored. Relative error is ``|a-n| / max(|a|+|n|, floor)``.
    """
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            fp = f()
            flat[k] = old - h
            fm = f()
            flat[k] = old
            num = (fp - fm) / (2.0 * h)
            err = abs(num - gflat[k]) / max(abs(num) + abs(gflat[k]), floor)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(tensors: dict[str, np.ndarray], config: dict,
                    sink: IO[str] | None = None) -> str:
    doc = {
        "version": CKPT_VERSION,
        "config": config,
        "tensors": {
            name: {"shape": list(arr.shape), "data": [float(x) for x in arr.reshape(-1)]}
            for name, arr in tensors.items()
        },
    }
    text = json.dumps(doc, sort_keys=True) + "\n"
    if sink is not None:
        sink.write(text)
    return text


def load_checkpoint(source: IO[str] | str) -> tuple[dict[str, np.ndarray], dict]:
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
    if doc.get("version") != CKPT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('version')!r}")
    tensors = {}
    for name, rec in doc["tensors"].items():
        arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        tensors[name] = check_finite(name, arr)
    return tensors, doc["config"]
