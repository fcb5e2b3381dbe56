"""Environment contract shared by both track-following tasks.

An environment owns a single PCG64 generator (re-seeded by
``reset(seed=...)``, advanced by unseeded resets) and reports task-level
termination only; episode time limits are layered on with
:class:`TimeLimit` so that value bootstrapping can distinguish the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    """Static description of an environment's interface."""

    observation_dim: int
    action_branch_cardinalities: tuple[int, ...]
    max_episode_steps: int

    def __post_init__(self):
        if self.observation_dim <= 0 or self.max_episode_steps <= 0:
            raise ValueError("EnvSpec fields must be positive")
        if not self.action_branch_cardinalities or any(c <= 0 for c in self.action_branch_cardinalities):
            raise ValueError("action branch cardinalities must be positive")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    terminated: bool  # task-defined end (failure or full coverage)
    truncated: bool   # time-limit end


class EpisodeDoneError(RuntimeError):
    """Raised when ``step`` is called on a finished episode."""


class TrackEnv:
    """Base class: seeding, action validation, finished-episode guard."""

    spec: EnvSpec

    def __init__(self):
        self._rng: np.random.Generator | None = None
        self._done = True

    # -- seeding ------------------------------------------------------------

    def _reseed(self, seed: int | None) -> np.random.Generator:
        if seed is not None:
            self._rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        elif self._rng is None:
            self._rng = np.random.default_rng()
        return self._rng

    # -- contract helpers ---------------------------------------------------

    def _check_not_done(self):
        if self._done:
            raise EpisodeDoneError("step() called on a finished episode; call reset() first")

    def _check_action(self, action) -> np.ndarray:
        a = np.asarray(action, dtype=np.int64)
        cards = self.spec.action_branch_cardinalities
        if a.shape != (len(cards),):
            raise ValueError(f"action must have {len(cards)} branch(es), got shape {a.shape}")
        for i, c in enumerate(cards):
            if not 0 <= a[i] < c:
                raise ValueError(f"action branch {i} value {a[i]} outside [0, {c})")
        return a

    # -- interface ----------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError

    def get_state(self) -> dict:
        """Full mid-episode state for checkpointing (includes RNG)."""
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError


class TimeLimit:
    """Truncates episodes at ``limit`` steps unless already terminated."""

    def __init__(self, env: TrackEnv, limit: int):
        if limit <= 0:
            raise ValueError("time limit must be positive")
        self.env = env
        self.limit = int(limit)
        self._elapsed = 0
        self._done = True
        self.spec = EnvSpec(
            observation_dim=env.spec.observation_dim,
            action_branch_cardinalities=env.spec.action_branch_cardinalities,
            max_episode_steps=self.limit,
        )

    def reset(self, seed: int | None = None) -> np.ndarray:
        obs = self.env.reset(seed)
        self._elapsed = 0
        self._done = False
        return obs

    def step(self, action) -> StepResult:
        if self._done:
            raise EpisodeDoneError("step() called on a finished episode; call reset() first")
        result = self.env.step(action)
        self._elapsed += 1
        if not result.terminated and self._elapsed >= self.limit:
            result.truncated = True
        self._done = result.terminated or result.truncated
        return result

    def get_state(self) -> dict:
        return {"elapsed": self._elapsed, "done": self._done, "inner": self.env.get_state()}

    def set_state(self, state: dict) -> None:
        self._elapsed = int(state["elapsed"])
        self._done = bool(state["done"])
        self.env.set_state(state["inner"])
