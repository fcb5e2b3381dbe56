"""Demonstration sources: scripted experts and an interactive play mode.

The scripted experts are state-privileged (they read the full simulator
state, like a human watching the whole screen), while the demonstrations
they produce record only the learner's partial observation. The cliff
expert's action noise rate is calibrated so its mean episode reward sits
near zero, i.e. a competent but clearly imperfect demonstrator.
"""

from __future__ import annotations

import sys
from collections import deque

import numpy as np

from trackrl.bc import DemoDataset, Trajectory
from trackrl.envs.cliff import GRID_SIZE, TRACK_INDEX, TRACK_RING
from trackrl.envs.core import TimeLimit
from trackrl.envs.river import (FORWARD_UNIT, LEFT_UNIT, UP_UNIT, YAW_UNIT,
                                RiverEnv, wrap_angle)

# Calibrated so 1000-episode mean reward lands near 0 (see tests): the
# -100 cliff penalty makes a ~17% fall rate cancel the ~+17 track gain.
CLIFF_EXPERT_NOISE = 0.06

_MOVE_TO_ACTION = {(0, 0): 0, (-1, 0): 1, (0, 1): 2, (1, 0): 3, (0, -1): 4}


class ScriptedCliffExpert:
    """Walks to the track ring and circulates it in a fixed direction.

    Off the ring it follows a BFS shortest path (avoiding all cliffs).
    With probability ``noise_rate`` it emits a uniformly random action,
    which is what occasionally walks it off a cliff.
    """

    def __init__(self, rng: np.random.Generator, direction: int = 1,
                 noise_rate: float = CLIFF_EXPERT_NOISE):
        if not 0.0 <= noise_rate < 1.0:
            raise ValueError("noise_rate must be in [0, 1)")
        if direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        self.rng = rng
        self.direction = direction
        self.noise_rate = noise_rate

    def act(self, env) -> np.ndarray:
        base = env.env if isinstance(env, TimeLimit) else env
        if self.noise_rate > 0.0 and self.rng.random() < self.noise_rate:
            return np.array([int(self.rng.integers(5))], dtype=np.int64)
        cell = base.state.agent_cell
        if cell in TRACK_INDEX:
            nxt = TRACK_RING[(TRACK_INDEX[cell] + self.direction) % len(TRACK_RING)]
            move = (nxt[0] - cell[0], nxt[1] - cell[1])
            return np.array([_MOVE_TO_ACTION[move]], dtype=np.int64)
        move = self._bfs_step(cell, base.layout)
        return np.array([_MOVE_TO_ACTION[move]], dtype=np.int64)

    def _bfs_step(self, start: tuple[int, int], layout) -> tuple[int, int]:
        """First move of a shortest cliff-free path to any ring cell."""
        prev: dict[tuple[int, int], tuple[int, int]] = {start: start}
        queue = deque([start])
        goal = None
        while queue:
            cell = queue.popleft()
            if cell in TRACK_INDEX:
                goal = cell
                break
            for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
                nxt = (cell[0] + dr, cell[1] + dc)
                if not (0 <= nxt[0] < GRID_SIZE and 0 <= nxt[1] < GRID_SIZE):
                    continue
                if nxt in prev or layout.is_cliff(nxt):
                    continue
                prev[nxt] = cell
                queue.append(nxt)
        if goal is None:
            return (0, 0)  # boxed in by random cliffs: stay put
        while prev[goal] != start:
            goal = prev[goal]
        return (goal[0] - start[0], goal[1] - start[1])


class ScriptedRiverExpert:
    """Steers at a look-ahead point on the centerline in the direction faced.

    The travel direction is whatever the reset yaw is closest to (the yaw
    failure rule forbids turning around). Altitude is held low enough to
    pass under bridge decks; when a forward move would clip an obstacle
    box the expert holds position and keeps descending instead.
    """

    LOOKAHEAD = 4          # segments (~4 m)
    CRUISE_ALTITUDE = 3.0  # m above the local centerline
    BOX_MARGIN = 1.0       # extra horizontal clearance around obstacles

    def act(self, env) -> np.ndarray:
        base: RiverEnv = env.env if isinstance(env, TimeLimit) else env
        st = base.state
        spline = base.spline
        x, y, z = st.pose.position
        yaw = st.pose.yaw

        idx, _ = spline.project(x, y)
        bearing = spline.tangent_bearings[idx]
        forward = abs(wrap_angle(yaw - bearing)) <= np.pi / 2.0
        step = self.LOOKAHEAD if forward else -self.LOOKAHEAD
        target = spline.vertices[(idx + step) % spline.n_segments]
        desired = np.arctan2(target[1] - y, target[0] - x)
        err = wrap_angle(desired - yaw)

        if err > YAW_UNIT / 2.0:
            yaw_branch = 0
        elif err < -YAW_UNIT / 2.0:
            yaw_branch = 2
        else:
            yaw_branch = 1
        new_yaw = wrap_angle(yaw + (1 - yaw_branch) * YAW_UNIT)

        dz = z - spline.local_z(idx, x, y)
        if dz > self.CRUISE_ALTITUDE + 0.5:
            up_branch = 2
        elif dz < self.CRUISE_ALTITUDE - 0.5:
            up_branch = 0
        else:
            up_branch = 1

        # rotate in place when badly misaligned instead of moving
        fwd_pref = 1 if abs(wrap_angle(desired - new_yaw)) > np.deg2rad(60.0) else 0

        heading = np.array([np.cos(new_yaw), np.sin(new_yaw)])
        left = np.array([-heading[1], heading[0]])
        new_z = z + (1 - up_branch) * UP_UNIT

        # Pick the forward/lateral pair that keeps a bank margin, trying
        # plain cruising first, then strafing, then holding position.
        fwd_branch, lat_branch = fwd_pref, 1
        best = None
        for fwd, lat in ((fwd_pref, 1), (fwd_pref, 0), (fwd_pref, 2),
                         (1, 0), (1, 2), (1, 1)):
            nxt_xy = (x + (1 - fwd) * FORWARD_UNIT * heading[0] + (1 - lat) * LEFT_UNIT * left[0],
                      y + (1 - fwd) * FORWARD_UNIT * heading[1] + (1 - lat) * LEFT_UNIT * left[1])
            nidx, ndist = spline.project(*nxt_xy)
            margin = spline.seg_half_widths[nidx] - ndist
            if margin >= 0.8:
                fwd_branch, lat_branch = fwd, lat
                best = None
                break
            if best is None or margin > best[0]:
                best = (margin, fwd, lat)
        if best is not None:
            _, fwd_branch, lat_branch = best

        move = ((1 - fwd_branch) * FORWARD_UNIT * heading
                + (1 - lat_branch) * LEFT_UNIT * left)
        nxt = np.array([x + move[0], y + move[1], new_z])
        box = self._near_box(base, nxt)
        if box is not None:
            # Clear the deck vertically before advancing: pass over when
            # already above its midline, under otherwise.
            half = base.config.agent_collider_side / 2.0
            if z >= 0.5 * (box[2] + box[5]):
                clear = z - half - 0.5 > box[5]
                up_branch = 1 if clear else 0
            else:
                clear = z + half + 0.5 < box[2]
                up_branch = 1 if clear else 2
            if not clear:
                fwd_branch = 1
        return np.array([up_branch, yaw_branch, fwd_branch, lat_branch], dtype=np.int64)

    def _near_box(self, base: RiverEnv, pos: np.ndarray) -> np.ndarray | None:
        """The first obstacle box the inflated agent cube would touch, if any."""
        half = base.config.agent_collider_side / 2.0 + self.BOX_MARGIN
        for box in base.obstacle_boxes:
            if (pos[0] + half >= box[0] and pos[0] - half <= box[3]
                    and pos[1] + half >= box[1] and pos[1] - half <= box[4]
                    and pos[2] + half >= box[2] - 0.5 and pos[2] - half <= box[5] + 0.5):
                return box
        return None


def collect_demos(expert, env, n_trajectories: int, seed: int,
                  max_steps: int | None = None) -> DemoDataset:
    """Roll the expert for `n` episodes and store (obs, action, reward) triples.

    ``max_steps`` caps each trajectory (river demonstrations are cut at
    50 steps); without it episodes run to termination or the time limit.
    """
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    from trackrl import rng as rngmod

    discrete = _is_discrete_obs_env(env)
    ds = DemoDataset(discrete_obs=discrete)
    obs = env.reset(seed=rngmod.stream_seed(seed, "demo-collect"))
    for _ in range(n_trajectories):
        obs_list, act_list, rew_list = [], [], []
        steps = 0
        while True:
            action = expert.act(env)
            result = env.step(action)
            obs_list.append(obs)
            act_list.append(action)
            rew_list.append(result.reward)
            obs = result.observation
            steps += 1
            if result.terminated or result.truncated:
                obs = env.reset()
                break
            if max_steps is not None and steps >= max_steps:
                obs = env.reset()
                break
        ds.append_trajectory(Trajectory(np.array(obs_list), np.array(act_list), np.array(rew_list)))
    return ds


def _is_discrete_obs_env(env) -> bool:
    base = env.env if isinstance(env, TimeLimit) else env
    return not isinstance(base, RiverEnv)


CLIFF_KEYMAP = {".": 0, "w": 1, "d": 2, "s": 3, "a": 4}
RIVER_KEYMAP = {
    ".": (1, 1, 1, 1),  # all no-op
    "w": (1, 1, 0, 1), "s": (1, 1, 2, 1),   # forward / backward
    "a": (1, 0, 1, 1), "d": (1, 2, 1, 1),   # yaw left / right
    "r": (0, 1, 1, 1), "f": (2, 1, 1, 1),   # up / down
    "q": (1, 1, 1, 0), "e": (1, 1, 1, 2),   # strafe left / right
}


def keyboard_play(env, n_episodes: int = 1, seed: int | None = None,
                  stdin=None, stdout=None) -> DemoDataset:
    """Interactive demonstration capture on a terminal.

    Renders the grid (or the overhead river view) after every step, maps
    keys to actions per the module keymaps ('x' aborts the episode), and
    asks keep/discard after each episode. Refuses to run without a tty.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    if not (hasattr(stdin, "isatty") and stdin.isatty()):
        raise RuntimeError("keyboard play needs an interactive terminal")

    base = env.env if isinstance(env, TimeLimit) else env
    keymap = RIVER_KEYMAP if isinstance(base, RiverEnv) else CLIFF_KEYMAP
    ds = DemoDataset(discrete_obs=_is_discrete_obs_env(env))
    obs = env.reset(seed=seed)
    for ep in range(n_episodes):
        obs_list, act_list, rew_list = [], [], []
        aborted = False
        stdout.write(f"episode {ep + 1}/{n_episodes}  keys: {' '.join(sorted(keymap))}  x=abort\n")
        stdout.write(base.render_ascii() + "\n")
        while True:
            key = _read_key(stdin, stdout)
            if key == "x":
                aborted = True
                break
            if key not in keymap:
                continue
            action = np.atleast_1d(np.array(keymap[key], dtype=np.int64))
            result = env.step(action)
            obs_list.append(obs)
            act_list.append(action)
            rew_list.append(result.reward)
            obs = result.observation
            stdout.write(base.render_ascii() + f"\nr={result.reward:+.3f}\n")
            if result.terminated or result.truncated:
                break
        obs = env.reset()
        if aborted or not obs_list:
            continue
        total = float(np.sum(rew_list))
        stdout.write(f"episode reward {total:+.3f}; keep? [y/n] ")
        stdout.flush()
        if _read_key(stdin, stdout).lower() == "y":
            ds.append_trajectory(Trajectory(np.array(obs_list), np.array(act_list),
                                            np.array(rew_list)))
    return ds


def _read_key(stdin, stdout) -> str:
    """One keypress: raw tty read when possible, else first char of a line."""
    try:
        import termios
        import tty

        fd = stdin.fileno()
        old = termios.tcgetattr(fd)
        try:
            tty.setcbreak(fd)
            ch = stdin.read(1)
        finally:
            termios.tcsetattr(fd, termios.TCSADRAIN, old)
        return ch
    except (ImportError, OSError):
        line = stdin.readline()
        return line[:1] if line else "x"
