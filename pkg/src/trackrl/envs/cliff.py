"""CliffCircular: a 12x12 grid world for circular track following.

A 4x4 cliff block occupies the center (rows/cols 4-7); the track is the
20-cell ring immediately around it. Each episode the agent start and two
extra cliff cells are randomized. The agent sees only the 5x5 cliff
window around itself; +1 is paid when its projection onto the track ring
lands on a not-yet-visited cell, -100 (terminal) for stepping onto any
cliff, 0 otherwise. Visiting all 20 ring cells ends the episode, so 20
is the best possible score.

The visitation history is deliberately absent from the observation: the
reward is non-Markovian in what the agent can see.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from trackrl.envs.core import EnvSpec, StepResult, TrackEnv

GRID_SIZE = 12
BLOCK_LO, BLOCK_HI = 4, 7        # central cliff block, inclusive
WINDOW = 5                        # observation window side
CLIFF_REWARD = -100.0
TRACK_REWARD = 1.0
MAX_EPISODE_REWARD = 20.0
TIME_LIMIT = 128

# Actions: index -> (drow, dcol)
ACTIONS = ((0, 0), (-1, 0), (0, 1), (1, 0), (0, -1))  # noop, up, right, down, left
ACTION_NAMES = ("noop", "up", "right", "down", "left")


def _build_ring() -> tuple[tuple[int, int], ...]:
    """The 20 track cells in traversal order (clockwise from (3,3))."""
    lo, hi = BLOCK_LO - 1, BLOCK_HI + 1
    ring = [(lo, c) for c in range(lo, hi + 1)]
    ring += [(r, hi) for r in range(lo + 1, hi + 1)]
    ring += [(hi, c) for c in range(hi - 1, lo - 1, -1)]
    ring += [(r, lo) for r in range(hi - 1, lo, -1)]
    return tuple(ring)


TRACK_RING = _build_ring()
TRACK_INDEX = {cell: i for i, cell in enumerate(TRACK_RING)}
STATIC_CLIFF = frozenset(
    (r, c) for r in range(BLOCK_LO, BLOCK_HI + 1) for c in range(BLOCK_LO, BLOCK_HI + 1)
)
WALKABLE = tuple(
    (r, c) for r in range(GRID_SIZE) for c in range(GRID_SIZE) if (r, c) not in STATIC_CLIFF
)


def _build_projection_table() -> np.ndarray:
    """Ring index of the nearest track cell per grid cell.

    Euclidean distance between cell centers; ties broken by the smallest
    row-major (row, col) position among the equidistant track cells.
    """
    table = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    by_rowmajor = sorted(TRACK_RING)
    for r in range(GRID_SIZE):
        for c in range(GRID_SIZE):
            best, best_d2 = None, None
            for tr, tc in by_rowmajor:
                d2 = (r - tr) ** 2 + (c - tc) ** 2
                if best_d2 is None or d2 < best_d2:
                    best, best_d2 = (tr, tc), d2
            table[r, c] = TRACK_INDEX[best]
    return table


PROJECTION = _build_projection_table()


@dataclass
class GridLayout:
    """Per-episode static geometry (the block and ring never move)."""

    random_cliff_cells: frozenset[tuple[int, int]]
    cliff_padded: np.ndarray  # (GRID+4, GRID+4) float64, 1.0 = cliff/out-of-grid

    @property
    def static_cliff_cells(self) -> frozenset[tuple[int, int]]:
        return STATIC_CLIFF

    @property
    def track_cells(self) -> tuple[tuple[int, int], ...]:
        return TRACK_RING

    def is_cliff(self, cell: tuple[int, int]) -> bool:
        return cell in STATIC_CLIFF or cell in self.random_cliff_cells


@dataclass
class CliffState:
    agent_cell: tuple[int, int]
    visited_track: np.ndarray  # (20,) bool
    steps_elapsed: int


def build_layout(rng: np.random.Generator) -> tuple[GridLayout, tuple[int, int]]:
    """Randomize the episode: agent start plus two extra cliff cells.

    The start is uniform over walkable cells (the ring included); the two
    random cliffs are uniform over walkable cells that are neither track
    nor the start, so every ring projection stays reachable.
    """
    start = WALKABLE[int(rng.integers(len(WALKABLE)))]
    candidates = [c for c in WALKABLE if c not in TRACK_INDEX and c != start]
    picks = rng.choice(len(candidates), size=2, replace=False)
    cliffs = frozenset(candidates[int(i)] for i in picks)

    pad = (WINDOW - 1) // 2
    padded = np.ones((GRID_SIZE + 2 * pad, GRID_SIZE + 2 * pad), dtype=np.float64)
    padded[pad:-pad, pad:-pad] = 0.0
    for r, c in STATIC_CLIFF:
        padded[r + pad, c + pad] = 1.0
    for r, c in cliffs:
        padded[r + pad, c + pad] = 1.0
    return GridLayout(random_cliff_cells=cliffs, cliff_padded=padded), start


def observe(state: CliffState, layout: GridLayout) -> np.ndarray:
    """Flattened 5x5 cliff window centered on the agent, row-major.

    1.0 marks a cliff cell (static or random) or an out-of-grid cell;
    visitation history is intentionally not observable.
    """
    r, c = state.agent_cell
    return layout.cliff_padded[r:r + WINDOW, c:c + WINDOW].ravel().copy()


def episode_max_reward() -> float:
    return MAX_EPISODE_REWARD


class CliffCircularEnv(TrackEnv):
    spec = EnvSpec(
        observation_dim=WINDOW * WINDOW,
        action_branch_cardinalities=(len(ACTIONS),),
        max_episode_steps=TIME_LIMIT,
    )

    def __init__(self):
        super().__init__()
        self.layout: GridLayout | None = None
        self.state: CliffState | None = None

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = self._reseed(seed)
        self.layout, start = build_layout(rng)
        self.state = CliffState(
            agent_cell=start,
            visited_track=np.zeros(len(TRACK_RING), dtype=bool),
            steps_elapsed=0,
        )
        self._done = False
        return observe(self.state, self.layout)

    def step(self, action) -> StepResult:
        self._check_not_done()
        a = int(self._check_action(action)[0])
        st, layout = self.state, self.layout

        dr, dc = ACTIONS[a]
        r = min(max(st.agent_cell[0] + dr, 0), GRID_SIZE - 1)  # off-grid moves clamp
        c = min(max(st.agent_cell[1] + dc, 0), GRID_SIZE - 1)
        st.agent_cell = (r, c)
        st.steps_elapsed += 1

        if layout.is_cliff((r, c)):
            self._done = True
            return StepResult(observe(st, layout), CLIFF_REWARD, True, False)

        reward = 0.0
        terminated = False
        proj = int(PROJECTION[r, c])
        if not st.visited_track[proj]:
            st.visited_track[proj] = True
            reward = TRACK_REWARD
            if st.visited_track.all():
                terminated = True
        self._done = terminated
        return StepResult(observe(st, layout), reward, terminated, False)

    # -- checkpoint support ---------------------------------------------------

    def get_state(self) -> dict:
        return {
            "rng": self._rng.bit_generator.state if self._rng is not None else None,
            "done": self._done,
            "random_cliffs": sorted(self.layout.random_cliff_cells) if self.layout else None,
            "agent_cell": self.state.agent_cell if self.state else None,
            "visited": self.state.visited_track.copy() if self.state else None,
            "steps_elapsed": self.state.steps_elapsed if self.state else 0,
        }

    def set_state(self, state: dict) -> None:
        if state["rng"] is not None:
            self._rng = np.random.default_rng()
            self._rng.bit_generator.state = state["rng"]
        self._done = bool(state["done"])
        if state["random_cliffs"] is not None:
            cliffs = frozenset(tuple(c) for c in state["random_cliffs"])
            pad = (WINDOW - 1) // 2
            padded = np.ones((GRID_SIZE + 2 * pad, GRID_SIZE + 2 * pad), dtype=np.float64)
            padded[pad:-pad, pad:-pad] = 0.0
            for cell in STATIC_CLIFF | cliffs:
                padded[cell[0] + pad, cell[1] + pad] = 1.0
            self.layout = GridLayout(random_cliff_cells=cliffs, cliff_padded=padded)
            self.state = CliffState(
                agent_cell=tuple(state["agent_cell"]),
                visited_track=np.array(state["visited"], dtype=bool),
                steps_elapsed=int(state["steps_elapsed"]),
            )

    # -- rendering -------------------------------------------------------------

    def render_ascii(self) -> str:
        rows = []
        for r in range(GRID_SIZE):
            row = []
            for c in range(GRID_SIZE):
                cell = (r, c)
                if cell == self.state.agent_cell:
                    ch = "A"
                elif cell in STATIC_CLIFF:
                    ch = "#"
                elif cell in self.layout.random_cliff_cells:
                    ch = "X"
                elif cell in TRACK_INDEX:
                    ch = "o" if self.state.visited_track[TRACK_INDEX[cell]] else "."
                else:
                    ch = " "
                row.append(ch)
            rows.append("".join(row))
        return "\n".join(rows)
