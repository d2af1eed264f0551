"""Policy learning: rewards, REINFORCE updates, and the joint training loop.

The representation network and the labeling policy are trained together.
Pretraining fits both to the noisy labels; joint training then alternates a
policy rollout (whose labels supervise the representation network) with a
REINFORCE step whose return mixes label continuity and the network's loss on
the rolled-out labels.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import groupstats as gs
from . import rsrnet
from . import tensorcore as tc
from .detector import Decision, DetectionSession, open_session, run_session
from .errors import ContractViolation
from .metrics import evaluate
from .policy import (GREEDY, SAMPLE, Models, PolicyParams, log_prob_backward,
                     make_state, policy_action)
from .roadnet import RoadNetwork
from .trajio import Trajectory

log = logging.getLogger(__name__)

__all__ = [
    "Episode", "TrainConfig", "Trainer", "episode_return", "global_reward",
    "local_reward", "local_rewards", "make_state", "policy_action",
    "reinforce_update", "rollout_refined_labels",
]


def local_reward(prev_label: int, cur_label: int, z_prev: np.ndarray,
                 z_cur: np.ndarray) -> float:
    sign = 1.0 if prev_label == cur_label else -1.0
    return sign * tc.cosine(z_prev, z_cur)


def local_rewards(labels: Sequence[int], zs: Sequence[np.ndarray]) -> list[float]:
    return [local_reward(labels[i - 1], labels[i], zs[i - 1], zs[i])
            for i in range(1, len(labels))]


def global_reward(loss: float) -> float:
    if loss < 0:
        raise ContractViolation(f"loss must be non-negative, got {loss}")
    return 1.0 / (1.0 + loss)


def episode_return(locals_: Sequence[float], global_: float) -> float:
    if not locals_:
        raise ContractViolation("an episode needs at least one transition")
    return float(np.mean(locals_)) + global_


@dataclass
class Episode:
    labels: list[int]
    decisions: list[Decision]
    locals: list[float] = field(default_factory=list)
    global_: float = 0.0
    R: float = 0.0

    def score(self, zs: Sequence[np.ndarray], loss: float) -> "Episode":
        self.locals = local_rewards(self.labels, zs)
        self.global_ = global_reward(loss)
        self.R = episode_return(self.locals, self.global_)
        return self


def reinforce_update(pol: PolicyParams, episode: Episode, opt: tc.AdamState) -> bool:
    """One ascent step along ``R * sum grad ln pi(a_i|s_i)``; False if nothing to do."""
    if not episode.decisions or episode.R == 0.0:
        return False
    grads = PolicyParams.zeros(pol.d_z, pol.d_label)
    for d in episode.decisions:
        log_prob_backward(pol, d.state, d.prev_label, d.action, grads, episode.R)
    tc.adam_step(opt, pol.tensors(), grads.tensors(), maximize=True)
    return True


def rollout_refined_labels(models: Models, store: gs.StatsStore, net: RoadNetwork,
                           traj: Trajectory, mode: str = SAMPLE,
                           rng: np.random.Generator | None = None,
                           forced: Sequence[int] | None = None
                           ) -> tuple[list[int], Episode, DetectionSession]:
    """Label ``traj`` exactly as a detection session would, recording the episode.

    Returned labels are the raw (pre-delay) labels; the episode is unscored.
    """
    sess = run_session(open_session(models, store, net, traj, mode=mode, D=0, rng=rng,
                                    record=True), traj.segments, forced)
    return list(sess.raw_labels), Episode(list(sess.raw_labels), sess.decisions), sess


@dataclass
class TrainConfig:
    lr_rsr: float = 0.01
    lr_policy: float = 0.001
    pretrain_epochs: int = 5
    pretrain_policy_epochs: int | None = None  # None: same as pretrain_epochs
    epochs_per_traj: int = 5
    eval_every: int = 200
    D: int = 8
    phi: float = 0.5
    seed: int = 0


def f1_score(models: Models, store: gs.StatsStore, net: RoadNetwork,
             trajs: Sequence[Trajectory], D: int = 8, phi: float = 0.5) -> float:
    from .detector import detect_trajectory

    corpus = []
    for t in trajs:
        labels, _ = detect_trajectory(models, store, net, t, GREEDY, D)
        corpus.append((t.id, t.labels, labels))
    return evaluate(corpus, phi).f1


class Trainer:
    """Owns the optimizer state and random substreams for one training run."""

    def __init__(self, models: Models, net: RoadNetwork, cfg: TrainConfig | None = None,
                 log_sink: IO[str] | None = None):
        self.models = models
        self.net = net
        self.cfg = cfg or TrainConfig()
        self.opt_rsr = tc.AdamState(self.cfg.lr_rsr)
        self.opt_pol = tc.AdamState(self.cfg.lr_policy)
        self.shuffle_rng = tc.substream(self.cfg.seed, "shuffle")
        self.rollout_rng = tc.substream(self.cfg.seed, "rollout")
        self.log_sink = log_sink
        self.step = 0
        self.history: list[dict] = []

    def _log(self, **rec) -> None:
        rec = {"step": self.step, **rec}
        self.history.append(rec)
        if self.log_sink is not None:
            self.log_sink.write(json.dumps(rec, sort_keys=True) + "\n")

    def _indices(self, traj: Trajectory) -> list[int]:
        return [self.net.index[s] for s in traj.segments]

    def pretrain(self, store: gs.StatsStore, trajs: Sequence[Trajectory],
                 epochs: int | None = None, policy_epochs: int | None = None) -> Models:
        """Fit the representation network, then the policy, to the noisy labels."""
        epochs = self.cfg.pretrain_epochs if epochs is None else epochs
        if policy_epochs is None:
            policy_epochs = self.cfg.pretrain_policy_epochs
        if policy_epochs is None:
            policy_epochs = epochs
        if not trajs:
            return self.models
        rsr = self.models.rsr
        noisy = [gs.noisy_labels(store, t) for t in trajs]
        data = []
        for t, y in zip(trajs, noisy):
            feats = gs.nrf(store, t) if store.key_of(t) in store else \
                [0] + [1] * (len(t) - 2) + [0]
            data.append((self._indices(t), feats, y))
        for _ in range(max(epochs, 0)):
            loss = rsrnet.train_epoch(rsr, data, self.opt_rsr, self.shuffle_rng)
            self._log(phase="pretrain_rsr", loss=loss)
        # with the representation frozen and actions forced, every epoch replays
        # the same episodes; only the label-embedding part of each state moves
        episodes = []
        for k, t in enumerate(trajs):
            labels, ep, sess = rollout_refined_labels(
                self.models, store, self.net, t, GREEDY, forced=noisy[k])
            ep.score(sess.zs, rsrnet.sequence_loss(rsr, data[k][0], sess.nrf, labels))
            episodes.append((ep, [sess.zs[d.index] for d in ep.decisions]))
        pol = self.models.policy
        for _ in range(max(policy_epochs, 0)):
            for k in self.shuffle_rng.permutation(len(trajs)):
                ep, zs = episodes[k]
                for d, z in zip(ep.decisions, zs):
                    d.state = make_state(z, d.prev_label, pol)
                reinforce_update(pol, ep, self.opt_pol)
            self._log(phase="pretrain_policy",
                      mean_return=float(np.mean([ep.R for ep, _ in episodes])))
        return self.models

    def train_on(self, store: gs.StatsStore, traj: Trajectory) -> tuple[float, float]:
        """Joint update on one trajectory for ``epochs_per_traj`` rounds."""
        rsr = self.models.rsr
        segs = self._indices(traj)
        loss = R = 0.0
        for _ in range(self.cfg.epochs_per_traj):
            labels, ep, sess = rollout_refined_labels(
                self.models, store, self.net, traj, SAMPLE, self.rollout_rng)
            rsrnet.train_step(rsr, self.opt_rsr, segs, sess.nrf, labels)
            out = rsrnet.forward(rsr, segs, sess.nrf)
            loss = float(np.mean([tc.cross_entropy(p, y) for p, y in zip(out.probs, labels)]))
            ep.score(out.z, loss)
            reinforce_update(self.models.policy, ep, self.opt_pol)
            R = ep.R
        return loss, R

    def joint_train(self, store: gs.StatsStore, trajs: Sequence[Trajectory],
                    eval_set: Sequence[Trajectory] | None = None,
                    eval_store: gs.StatsStore | None = None) -> Models:
        """Alternate rollouts and updates; keep the checkpoint with the best eval F1."""
        if not trajs:
            return self.models
        eval_store = eval_store or store
        best = best_f1 = None
        if eval_set:
            best_f1 = f1_score(self.models, eval_store, self.net, eval_set, self.cfg.D,
                               self.cfg.phi)
            best = self.models.copy()
            self._log(phase="eval", eval_f1=best_f1)
        losses, returns = [], []
        for n, k in enumerate(self.shuffle_rng.permutation(len(trajs)), start=1):
            loss, R = self.train_on(store, trajs[k])
            self.step += 1
            losses.append(loss)
            returns.append(R)
            if n % self.cfg.eval_every == 0 or n == len(trajs):
                rec = {"phase": "joint", "loss": float(np.mean(losses)),
                       "mean_return": float(np.mean(returns))}
                losses, returns = [], []
                if eval_set:
                    f1 = f1_score(self.models, eval_store, self.net, eval_set,
                                  self.cfg.D, self.cfg.phi)
                    rec["eval_f1"] = f1
                    if f1 > best_f1:
                        best_f1, best = f1, self.models.copy()
                self._log(**rec)
        if best is not None:
            self.models = best
        return self.models

    def fine_tune(self, store: gs.StatsStore, trajs: Sequence[Trajectory],
                  eval_set: Sequence[Trajectory] | None = None) -> Models:
        return self.joint_train(store, trajs, eval_set)
