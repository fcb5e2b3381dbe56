"""River-lite: geometric river following with a multi-discrete camera agent.

The agent is a pose (position, yaw) moved by a 4-branch discrete action
(vertical, yaw, forward/backward, lateral), holding itself inside the
river's bounding volume: horizontally within the local half-width of the
spline, vertically in the altitude band [h1, h2] above the local
centerline, facing within alpha/2 of either tangent direction (which
forbids turning around), clear of obstacle boxes, and making visitation
progress at least once every `no_progress_limit` steps. Any violation
ends the episode with reward -1.

Progress pays 10*n/N for the n spline segments newly covered by the
agent's projection, so a full lap earns exactly 10. The observation is a
16x16 body-frame water occupancy mask plus the normalized altitude; the
visitation history is not observable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trackrl import kernels
from trackrl.envs.core import EnvSpec, StepResult, TrackEnv
from trackrl.envs.maps import RiverMap, default_map
from trackrl.envs.spline import RiverSpline

MASK_ROWS = 16
MASK_COLS = 16
MASK_CELL = 1.0  # meters per observation cell
OBS_DIM = MASK_ROWS * MASK_COLS + 1
TIME_LIMIT = 400
FAIL_REWARD = -1.0
SHAPED_SCALE = 10.0

# Per-branch movement units; branch value v in {0,1,2} applies (1-v)*unit.
UP_UNIT = 1.0            # m, world vertical
YAW_UNIT = np.deg2rad(10.0)
FORWARD_UNIT = 1.0       # m, along yaw heading
LEFT_UNIT = 0.5          # m, 90 deg left of heading


def wrap_angle(a: float) -> float:
    """Normalize to (-pi, pi]."""
    a = (a + np.pi) % (2.0 * np.pi) - np.pi
    if a == -np.pi:
        a = np.pi
    return a


@dataclass
class AgentPose:
    position: np.ndarray  # (3,)
    yaw: float


@dataclass
class RiverConfig:
    h1: float = 1.0
    h2: float = 15.0
    alpha_deg: float = 150.0
    no_progress_limit: int = 50
    agent_collider_side: float = 0.5
    river_map: RiverMap = field(default_factory=default_map)

    def __post_init__(self):
        if not 0.0 < self.h1 < self.h2:
            raise ValueError("require 0 < h1 < h2")
        if not 0.0 < self.alpha_deg < 360.0:
            raise ValueError("require 0 < alpha < 360 degrees")


@dataclass
class RiverState:
    pose: AgentPose
    visited: np.ndarray            # (N,) bool
    last_projection_index: int
    steps_since_progress: int


class RiverEnv(TrackEnv):
    spec = EnvSpec(
        observation_dim=OBS_DIM,
        action_branch_cardinalities=(3, 3, 3, 3),
        max_episode_steps=TIME_LIMIT,
    )

    def __init__(self, config: RiverConfig | None = None):
        super().__init__()
        self.config = config or RiverConfig()
        m = self.config.river_map
        self.spline = RiverSpline(m.control_points, m.half_widths, m.n_segments)
        self.n_segments = m.n_segments
        self.max_index_jump = m.n_segments // 4
        self.obstacle_boxes = m.obstacle_boxes
        self._alpha_half = np.deg2rad(self.config.alpha_deg) / 2.0
        self._build_water_segments(m)
        self._build_reset_bbox()
        self.state: RiverState | None = None

    # -- geometry caches ------------------------------------------------------

    def _build_water_segments(self, m: RiverMap) -> None:
        """Concatenated main + tributary segments for the occupancy mask."""
        ax = [self.spline.seg_ax]
        ay = [self.spline.seg_ay]
        bx = [self.spline.seg_bx]
        by = [self.spline.seg_by]
        hw = [self.spline.seg_half_widths]
        if len(m.tributary_points) >= 2:
            p = m.tributary_points
            w = m.tributary_half_widths
            ax.append(p[:-1, 0])
            ay.append(p[:-1, 1])
            bx.append(p[1:, 0])
            by.append(p[1:, 1])
            hw.append(0.5 * (w[:-1] + w[1:]))
        self.water_ax = np.ascontiguousarray(np.concatenate(ax))
        self.water_ay = np.ascontiguousarray(np.concatenate(ay))
        self.water_bx = np.ascontiguousarray(np.concatenate(bx))
        self.water_by = np.ascontiguousarray(np.concatenate(by))
        self.water_hw2 = np.ascontiguousarray(np.concatenate(hw) ** 2)

    def _build_reset_bbox(self) -> None:
        pad = float(self.spline.seg_half_widths.max())
        xs = np.concatenate([self.spline.seg_ax, self.spline.seg_bx])
        ys = np.concatenate([self.spline.seg_ay, self.spline.seg_by])
        self._bbox = (xs.min() - pad, xs.max() + pad, ys.min() - pad, ys.max() + pad)

    # -- observation ----------------------------------------------------------

    def observe(self) -> np.ndarray:
        """16x16 water mask (row-major, near-to-far rows, left-to-right cols)
        plus one normalized-altitude channel."""
        st = self.state
        mask = kernels.water_mask(
            st.pose.position[:2], st.pose.yaw, MASK_ROWS, MASK_COLS, MASK_CELL,
            self.water_ax, self.water_ay, self.water_bx, self.water_by, self.water_hw2,
        )
        idx, _ = self.spline.project(st.pose.position[0], st.pose.position[1])
        dz = st.pose.position[2] - self.spline.local_z(idx, st.pose.position[0], st.pose.position[1])
        alt = (dz - self.config.h1) / (self.config.h2 - self.config.h1)
        return np.concatenate([mask, [alt]])

    # -- collision ------------------------------------------------------------

    def _cube_hits_box(self, pos: np.ndarray) -> bool:
        half = self.config.agent_collider_side / 2.0
        for box in self.obstacle_boxes:
            if (pos[0] + half >= box[0] and pos[0] - half <= box[3]
                    and pos[1] + half >= box[1] and pos[1] - half <= box[4]
                    and pos[2] + half >= box[2] and pos[2] - half <= box[5]):
                return True
        return False

    # -- episode dynamics -------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = self._reseed(seed)
        cfg = self.config
        x0, x1, y0, y1 = self._bbox
        while True:
            x = x0 + rng.random() * (x1 - x0)
            y = y0 + rng.random() * (y1 - y0)
            idx, dist = self.spline.project(x, y)
            if dist > self.spline.seg_half_widths[idx]:
                continue
            dz = cfg.h1 + rng.random() * (cfg.h2 - cfg.h1)
            z = self.spline.local_z(idx, x, y) + dz
            pos = np.array([x, y, z])
            if self._cube_hits_box(pos):
                continue
            bearing = self.spline.tangent_bearings[idx]
            if rng.random() < 0.5:
                bearing = wrap_angle(bearing + np.pi)
            yaw = wrap_angle(bearing + np.deg2rad(rng.uniform(-30.0, 30.0)))
            break
        self.state = RiverState(
            pose=AgentPose(position=pos, yaw=yaw),
            visited=np.zeros(self.n_segments, dtype=bool),
            last_projection_index=idx,
            steps_since_progress=0,
        )
        self._done = False
        return self.observe()

    def _newly_covered(self, idx: int) -> list[int]:
        """Segment indices covered by moving the projection to `idx`.

        The shorter wrapped interval from the previous projection,
        inclusive of `idx`; jumps longer than N/4 (impossible in normal
        play, where one action moves about a segment length) are treated
        as no coverage.
        """
        n = self.n_segments
        last = self.state.last_projection_index
        if idx == last:
            return [idx]
        fwd = (idx - last) % n
        bwd = (last - idx) % n
        if min(fwd, bwd) > self.max_index_jump:
            return []
        if fwd <= bwd:
            return [(last + i) % n for i in range(1, fwd + 1)]
        return [(last - i) % n for i in range(1, bwd + 1)]

    def step(self, action) -> StepResult:
        self._check_not_done()
        a = self._check_action(action)
        cfg = self.config
        st = self.state

        # Yaw first, then translations in the updated heading frame.
        st.pose.yaw = wrap_angle(st.pose.yaw + (1 - a[1]) * YAW_UNIT)
        heading = np.array([np.cos(st.pose.yaw), np.sin(st.pose.yaw)])
        left = np.array([-heading[1], heading[0]])
        st.pose.position[:2] += (1 - a[2]) * FORWARD_UNIT * heading + (1 - a[3]) * LEFT_UNIT * left
        st.pose.position[2] += (1 - a[0]) * UP_UNIT

        x, y, z = st.pose.position
        idx, dist = self.spline.project(x, y)

        # Failure checks in fixed order: volume, yaw, collision, no-progress.
        failed = False
        dz = z - self.spline.local_z(idx, x, y)
        if not (cfg.h1 <= dz <= cfg.h2) or dist > self.spline.seg_half_widths[idx]:
            failed = True
        if not failed:
            diff = abs(wrap_angle(st.pose.yaw - self.spline.tangent_bearings[idx]))
            if min(diff, np.pi - diff) > self._alpha_half:
                failed = True
        if not failed and self._cube_hits_box(st.pose.position):
            failed = True
        covered = [] if failed else self._newly_covered(idx)
        new = [] if failed else [s for s in covered if not st.visited[s]]
        if not failed and not new and st.steps_since_progress + 1 >= cfg.no_progress_limit:
            failed = True

        if failed:
            self._done = True
            return StepResult(self.observe(), FAIL_REWARD, True, False)

        for s in new:
            st.visited[s] = True
        st.last_projection_index = idx
        if new:
            st.steps_since_progress = 0
            reward = SHAPED_SCALE * len(new) / self.n_segments
        else:
            st.steps_since_progress += 1
            reward = 0.0
        terminated = bool(st.visited.all())
        self._done = terminated
        return StepResult(self.observe(), reward, terminated, False)

    # -- checkpoint support -----------------------------------------------------

    def get_state(self) -> dict:
        st = self.state
        return {
            "rng": self._rng.bit_generator.state if self._rng is not None else None,
            "done": self._done,
            "position": st.pose.position.copy() if st else None,
            "yaw": st.pose.yaw if st else None,
            "visited": st.visited.copy() if st else None,
            "last_projection_index": st.last_projection_index if st else 0,
            "steps_since_progress": st.steps_since_progress if st else 0,
        }

    def set_state(self, state: dict) -> None:
        if state["rng"] is not None:
            self._rng = np.random.default_rng()
            self._rng.bit_generator.state = state["rng"]
        self._done = bool(state["done"])
        if state["position"] is not None:
            self.state = RiverState(
                pose=AgentPose(position=np.array(state["position"]), yaw=float(state["yaw"])),
                visited=np.array(state["visited"], dtype=bool),
                last_projection_index=int(state["last_projection_index"]),
                steps_since_progress=int(state["steps_since_progress"]),
            )

    # -- rendering ----------------------------------------------------------------

    def render_ascii(self, cols: int = 60) -> str:
        x0, x1, y0, y1 = self._bbox
        rows = max(int(cols * (y1 - y0) / (x1 - x0) * 0.5), 10)
        sx = (x1 - x0) / cols
        sy = (y1 - y0) / rows
        ax, ay = self.state.pose.position[:2]
        grid = []
        for j in range(rows - 1, -1, -1):
            line = []
            for i in range(cols):
                x = x0 + (i + 0.5) * sx
                y = y0 + (j + 0.5) * sy
                idx, dist = self.spline.project(x, y)
                wet = dist <= self.spline.seg_half_widths[idx]
                boxed = any(b[0] <= x <= b[3] and b[1] <= y <= b[4] for b in self.obstacle_boxes)
                if abs(x - ax) < sx and abs(y - ay) < sy:
                    arrows = "→↑←↓"
                    q = int(((self.state.pose.yaw + np.pi / 4) % (2 * np.pi)) // (np.pi / 2))
                    line.append(arrows[q])
                elif boxed:
                    line.append("B")
                elif wet:
                    line.append("~")
                else:
                    line.append(".")
            grid.append("".join(line))
        return "\n".join(grid)
