"""Behavior cloning: demonstration dataset and log-likelihood training.

The dataset is an ordered store of trajectories plus a flattened
transition view used for training. For environments with discrete-valued
observations (the cliff grid) exact duplicate (observation, action)
pairs are dropped on append, keeping the first occurrence; for
continuous observations (the river) dedup is a policy no-op. Retraining
consumes a sliding window of the most recent transitions.

Demo files are JSONL, one trajectory per line:
``{"obs": [[...], ...], "acts": [[...], ...], "rews": [...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from trackrl.nets import Adam, Mlp, MultiCategorical


@dataclass
class Trajectory:
    observations: np.ndarray  # (T, obs_dim)
    actions: np.ndarray       # (T, n_branches) int64
    rewards: np.ndarray       # (T,)

    def __post_init__(self):
        self.observations = np.asarray(self.observations, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        t = len(self.observations)
        if self.actions.shape[0] != t or self.rewards.shape[0] != t:
            raise ValueError("trajectory fields must be length-aligned")
        if not (np.isfinite(self.observations).all() and np.isfinite(self.rewards).all()):
            raise ValueError("trajectory contains non-finite values")

    @property
    def episodic_reward(self) -> float:
        return float(self.rewards.sum())

    def __len__(self) -> int:
        return len(self.observations)


@dataclass
class DemoDataset:
    """Ordered trajectory store with a flattened, optionally deduped view."""

    discrete_obs: bool = False
    trajectories: list[Trajectory] = field(default_factory=list)
    _flat_obs: list[np.ndarray] = field(default_factory=list)
    _flat_acts: list[np.ndarray] = field(default_factory=list)
    _seen: set[bytes] = field(default_factory=set)

    @property
    def n_transitions(self) -> int:
        return len(self._flat_obs)

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    def _key(self, obs: np.ndarray, act: np.ndarray) -> bytes:
        return obs.tobytes() + act.tobytes()

    def append_trajectory(self, traj: Trajectory) -> int:
        """Append in order; returns the number of transitions added to the
        flat view (duplicates are skipped for discrete observations)."""
        self.trajectories.append(traj)
        added = 0
        for obs, act in zip(traj.observations, traj.actions):
            if self.discrete_obs:
                key = self._key(obs, act)
                if key in self._seen:
                    continue
                self._seen.add(key)
            self._flat_obs.append(obs)
            self._flat_acts.append(act)
            added += 1
        return added

    def dedup(self) -> "DemoDataset":
        """Drop transitions whose (observation, action) duplicates an earlier
        one, keeping first occurrences. No-op for continuous observations."""
        if not self.discrete_obs:
            return self
        seen: set[bytes] = set()
        obs_keep, act_keep = [], []
        for obs, act in zip(self._flat_obs, self._flat_acts):
            key = self._key(obs, act)
            if key in seen:
                continue
            seen.add(key)
            obs_keep.append(obs)
            act_keep.append(act)
        self._flat_obs, self._flat_acts, self._seen = obs_keep, act_keep, seen
        return self

    def latest_window(self, k: int = 2000) -> tuple[np.ndarray, np.ndarray]:
        """The last min(k, size) transitions in insertion order."""
        n = self.n_transitions
        lo = max(0, n - k)
        return np.array(self._flat_obs[lo:]), np.array(self._flat_acts[lo:])

    def all_transitions(self) -> tuple[np.ndarray, np.ndarray]:
        return self.latest_window(self.n_transitions)

    # -- JSONL persistence ----------------------------------------------------

    def save_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as f:
            for traj in self.trajectories:
                f.write(json.dumps({
                    "obs": traj.observations.tolist(),
                    "acts": traj.actions.tolist(),
                    "rews": traj.rewards.tolist(),
                }) + "\n")

    @classmethod
    def load_jsonl(cls, path: str | Path, discrete_obs: bool = False) -> "DemoDataset":
        ds = cls(discrete_obs=discrete_obs)
        with open(path) as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                try:
                    traj = Trajectory(rec["obs"], rec["acts"], rec["rews"])
                except (KeyError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad trajectory record: {exc}") from exc
                ds.append_trajectory(traj)
        return ds


def nll_loss(net: Mlp, cards: tuple[int, ...], obs: np.ndarray, acts: np.ndarray) -> float:
    """Mean negative log-likelihood of the demonstrated actions."""
    logits, _ = net.forward(obs)
    head = MultiCategorical(logits, cards)
    return float(-head.log_prob(acts).mean())


def accuracy(net: Mlp, cards: tuple[int, ...], obs: np.ndarray, acts: np.ndarray,
             chunk: int = 4096) -> float:
    """Fraction of transitions whose per-branch argmax matches the demo action."""
    hits = 0
    for lo in range(0, len(obs), chunk):
        logits, _ = net.forward(obs[lo:lo + chunk])
        head = MultiCategorical(logits, cards)
        hits += int((head.mode() == acts[lo:lo + chunk]).all(axis=1).sum())
    return hits / max(len(obs), 1)


def train_bc(obs: np.ndarray, acts: np.ndarray, cards: tuple[int, ...],
             rng: np.random.Generator, net: Mlp | None = None,
             dims: list[int] | None = None, epochs: int = 50, lr: float = 3e-4,
             batch_size: int = 64) -> tuple[Mlp, float]:
    """Fit (or warm-start refit) a categorical policy by maximum likelihood.

    Minimizes the mean NLL of demonstrated actions with Adam over
    shuffled minibatches; returns the net and its training-set accuracy.
    A fresh optimizer is used on every call, so warm-started retraining
    starts from the previous weights but clean Adam moments.
    """
    obs = np.asarray(obs, dtype=np.float64)
    acts = np.asarray(acts, dtype=np.int64)
    n = len(obs)
    if n == 0:
        raise ValueError("empty demonstration data")
    if net is None:
        if dims is None:
            raise ValueError("dims required when training from scratch")
        net = Mlp.init([*dims, sum(cards)], rng, out_gain=0.01)
    opt = Adam(net.params, lr=lr)

    rows = np.arange(min(batch_size, n))
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            mb = order[start:start + batch_size]
            b = len(mb)
            x = obs[mb]
            a = acts[mb]
            logits, cache = net.forward(x)
            head = MultiCategorical(logits, cards)
            dlogits = np.empty_like(logits)
            col = 0
            r = rows[:b]
            for i, c in enumerate(cards):
                p = np.exp(head.branch_log_probs[i])
                one_hot = np.zeros_like(p)
                one_hot[r, a[:, i]] = 1.0
                dlogits[:, col:col + c] = (p - one_hot) / b
                col += c
            grads = net.backward(cache, dlogits)
            opt.step(net.params, grads)

    return net, accuracy(net, cards, obs, acts)
