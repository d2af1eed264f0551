"""scikit-learn style wrappers around the detector and the frequency baseline.

``X`` is always a sequence of :class:`~oasd.trajio.Trajectory` (or JSONL-shaped
dicts). ``predict`` returns one final label list per trajectory; ``detect``
returns the event stream a live session would have emitted.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import groupstats as gs
from .asdnet import Trainer, TrainConfig
from .detector import detect_frequency_baseline, detect_trajectory
from .errors import ConfigError
from .metrics import EvalReport, evaluate
from .policy import GREEDY, SAMPLE, Models
from .tensorcore import substream
from .trajio import Trajectory
from .validation import check_fraction, check_network, check_nonneg_int, check_trajectories

log = logging.getLogger(__name__)

PROFILES = {"desk": (32, 32, 32), "paper": (128, 128, 128)}


def profile_dims(profile: str) -> tuple[int, int, int]:
    try:
        return PROFILES[profile]
    except KeyError:
        raise ConfigError(f"unknown profile {profile!r}; expected one of {sorted(PROFILES)}")


def _score_corpus(trajs: Sequence[Trajectory], rows: Sequence[Sequence[int]],
                  phi: float) -> EvalReport:
    return evaluate(((t.id, t.labels, r) for t, r in zip(trajs, rows)), phi)


class OnlineSubtrajectoryDetector(BaseEstimator):
    """Learned online detector: representation network + labeling policy.

    ``fit`` builds group statistics from ``history`` (defaults to ``X``),
    pretrains both networks on noisy labels for a random sample of
    ``pretrain_size`` trajectories, then runs joint training over ``X``.
    Labels on ``X`` are never read during training; ``eval_set`` labels only
    pick the best checkpoint.
    """

    def __init__(self, alpha=0.5, delta=0.4, delay=8, slots_per_day=24, profile="desk",
                 lr_rsr=0.01, lr_policy=0.001, pretrain_size=200, pretrain_epochs=5,
                 pretrain_policy_epochs=100, joint_size=None, epochs_per_traj=5,
                 eval_every=200, phi=0.5, mode=GREEDY, seed=0):
        self.alpha = alpha
        self.delta = delta
        self.delay = delay
        self.slots_per_day = slots_per_day
        self.profile = profile
        self.lr_rsr = lr_rsr
        self.lr_policy = lr_policy
        self.pretrain_size = pretrain_size
        self.pretrain_epochs = pretrain_epochs
        self.pretrain_policy_epochs = pretrain_policy_epochs
        self.joint_size = joint_size
        self.epochs_per_traj = epochs_per_traj
        self.eval_every = eval_every
        self.phi = phi
        self.mode = mode
        self.seed = seed

    def _check_params(self) -> None:
        check_fraction("alpha", self.alpha)
        check_fraction("delta", self.delta)
        check_fraction("phi", self.phi)
        check_nonneg_int("delay", self.delay)
        check_nonneg_int("pretrain_size", self.pretrain_size)
        check_nonneg_int("pretrain_epochs", self.pretrain_epochs)
        check_nonneg_int("pretrain_policy_epochs", self.pretrain_policy_epochs)
        check_nonneg_int("epochs_per_traj", self.epochs_per_traj)
        if self.joint_size is not None:
            check_nonneg_int("joint_size", self.joint_size)
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        if self.mode not in (GREEDY, SAMPLE):
            raise ConfigError(f"unknown mode {self.mode!r}")
        profile_dims(self.profile)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr_rsr=self.lr_rsr, lr_policy=self.lr_policy,
                           pretrain_epochs=self.pretrain_epochs,
                           pretrain_policy_epochs=self.pretrain_policy_epochs,
                           epochs_per_traj=self.epochs_per_traj, eval_every=self.eval_every,
                           D=self.delay, phi=self.phi, seed=self.seed)

    def _stats(self, trajs: Sequence[Trajectory]) -> gs.StatsStore:
        return gs.build_stats(trajs, slots_per_day=self.slots_per_day, alpha=self.alpha,
                              delta=self.delta)

    def fit(self, X, y=None, network=None, history=None, eval_set=None):
        self._check_params()
        net = check_network(network)
        X = check_trajectories(X, net)
        hist = X if history is None else check_trajectories(history, net)
        evals = None if eval_set is None else check_trajectories(eval_set, net, True)
        self.network_ = net
        self.stats_ = self._stats(hist)
        d_emb, d_hidden, d_label = profile_dims(self.profile)
        models = Models.init(self.seed, len(net), d_emb, d_hidden, d_label,
                             profile=self.profile)
        self.trainer_ = Trainer(models, net, self.train_config())
        rng = self.trainer_.shuffle_rng
        n_pre = min(self.pretrain_size, len(X))
        pre = [X[i] for i in sorted(rng.choice(len(X), n_pre, replace=False))] if n_pre else []
        self.trainer_.pretrain(self.stats_, pre)
        self.pretrained_models_ = self.trainer_.models.copy()
        joint = X if self.joint_size is None else X[:self.joint_size]
        self.models_ = self.trainer_.joint_train(self.stats_, joint, evals)
        self.history_ = self.trainer_.history
        return self

    def partial_fit(self, X, y=None, history=None, eval_set=None):
        """Continue joint training on newly recorded trajectories.

        Statistics are rebuilt from ``history`` (defaults to ``X``) so that the
        normal routes follow the new data.
        """
        check_is_fitted(self, "models_")
        X = check_trajectories(X, self.network_)
        hist = X if history is None else check_trajectories(history, self.network_)
        evals = None if eval_set is None else check_trajectories(eval_set, self.network_, True)
        self.stats_ = self._stats(hist)
        self.models_ = self.trainer_.fine_tune(self.stats_, X, evals)
        self.history_ = self.trainer_.history
        return self

    def _rng(self):
        return substream(self.seed, "rollout") if self.mode == SAMPLE else None

    def detect(self, X, stats: gs.StatsStore | None = None):
        """Per trajectory, ``(final_labels, events)``."""
        check_is_fitted(self, "models_")
        X = check_trajectories(X, self.network_)
        store = self.stats_ if stats is None else stats
        rng = self._rng()
        return [detect_trajectory(self.models_, store, self.network_, t, self.mode,
                                  self.delay, rng) for t in X]

    def predict(self, X, stats: gs.StatsStore | None = None) -> list[list[int]]:
        return [labels for labels, _ in self.detect(X, stats)]

    def evaluate(self, X, stats: gs.StatsStore | None = None) -> EvalReport:
        X = check_trajectories(X, None, require_labels=True)
        return _score_corpus(X, self.predict(X, stats), self.phi)

    def score(self, X, y=None) -> float:
        return self.evaluate(X).f1


class TransitionFrequencyDetector(BaseEstimator):
    """Baseline: noisy labels from transition fractions, runs taken as-is."""

    def __init__(self, alpha=0.5, delta=0.4, slots_per_day=24, phi=0.5):
        self.alpha = alpha
        self.delta = delta
        self.slots_per_day = slots_per_day
        self.phi = phi

    def fit(self, X, y=None, network=None, history=None):
        check_fraction("alpha", self.alpha)
        check_fraction("delta", self.delta)
        net = None if network is None else check_network(network)
        X = check_trajectories(X if history is None else history, net)
        self.stats_ = gs.build_stats(X, slots_per_day=self.slots_per_day, alpha=self.alpha,
                                     delta=self.delta)
        return self

    def detect(self, X, stats: gs.StatsStore | None = None):
        check_is_fitted(self, "stats_")
        store = self.stats_ if stats is None else stats
        return [detect_frequency_baseline(store, t) for t in check_trajectories(X)]

    def predict(self, X, stats: gs.StatsStore | None = None) -> list[list[int]]:
        return [labels for labels, _ in self.detect(X, stats)]

    def evaluate(self, X, stats: gs.StatsStore | None = None) -> EvalReport:
        X = check_trajectories(X, None, require_labels=True)
        return _score_corpus(X, self.predict(X, stats), self.phi)

    def score(self, X, y=None) -> float:
        return self.evaluate(X).f1


def split_indices(n: int, test_frac: float, dev_frac: float, seed: int
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Seeded test/dev/train index split."""
    perm = substream(seed, "split").permutation(n)
    n_test = int(round(test_frac * n))
    n_dev = int(round(dev_frac * n))
    return perm[:n_test], perm[n_test:n_test + n_dev], perm[n_test + n_dev:]
