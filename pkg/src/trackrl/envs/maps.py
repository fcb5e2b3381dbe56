"""River map definitions and the plain-text map file format.

A map is the closed control polygon with per-point half-widths, optional
axis-aligned obstacle boxes (bridges), and an optional tributary spur.
The tributary contributes water to the observation mask only; it is not
part of the reward spline or of the valid flight volume, which makes it
a visual distractor.

Map file format (``key = value`` lines, ``#`` comments)::

    n_segments = 200
    control_points = 36.0,0.0,0.0; 27.7,16.0,0.0; ...
    half_widths = 7.7; 6.2; ...
    obstacle_boxes = 26.0,-1.5,6.0,46.0,1.5,9.0
    tributary_points = -17.0,29.8,0.0; ...
    tributary_half_widths = 5.0; ...
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class RiverMap:
    control_points: np.ndarray                    # (M, 3)
    half_widths: np.ndarray                       # (M,)
    n_segments: int = 200
    obstacle_boxes: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))
    tributary_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    tributary_half_widths: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        self.half_widths = np.asarray(self.half_widths, dtype=np.float64)
        self.obstacle_boxes = np.asarray(self.obstacle_boxes, dtype=np.float64).reshape(-1, 6)
        self.tributary_points = np.asarray(self.tributary_points, dtype=np.float64).reshape(-1, 3)
        self.tributary_half_widths = np.asarray(self.tributary_half_widths, dtype=np.float64)
        if len(self.tributary_points) and len(self.tributary_half_widths) != len(self.tributary_points):
            raise ValueError("one half-width per tributary point required")


def default_map() -> RiverMap:
    """The built-in annulus: ~200 m around, widths 5-8 m, one bridge, one spur.

    Twelve control points on a gently lobed ring of base radius 32 m. The
    bridge deck spans the river at the easternmost lobe between 6 and 9 m
    altitude, leaving clearance under and over it.
    """
    k = np.arange(12)
    theta = 2.0 * np.pi * k / 12.0
    radius = 32.0 + 4.0 * np.cos(3.0 * theta)
    pts = np.stack([radius * np.cos(theta), radius * np.sin(theta), np.zeros(12)], axis=1)
    widths = 6.5 + 1.5 * np.sin(2.0 * theta + 1.0)

    bridge = np.array([[26.0, -1.5, 6.0, 46.0, 1.5, 9.0]])

    spur_dir = np.array([np.cos(2.0 * np.pi / 3.0), np.sin(2.0 * np.pi / 3.0), 0.0])
    bend = np.array([-np.sin(2.0 * np.pi / 3.0), np.cos(2.0 * np.pi / 3.0), 0.0])
    spur = np.stack([spur_dir * 33.0,
                     spur_dir * 41.0 + bend * 2.0,
                     spur_dir * 49.0 + bend * 5.0,
                     spur_dir * 56.0 + bend * 9.0])
    spur_widths = np.array([5.0, 4.5, 4.0, 3.5])

    return RiverMap(
        control_points=pts,
        half_widths=widths,
        n_segments=200,
        obstacle_boxes=bridge,
        tributary_points=spur,
        tributary_half_widths=spur_widths,
    )


def _fmt_tuples(arr: np.ndarray) -> str:
    return "; ".join(",".join(repr(float(v)) for v in row) for row in np.atleast_2d(arr))


def _fmt_scalars(arr: np.ndarray) -> str:
    return "; ".join(repr(float(v)) for v in arr)


def save_map(path: str | Path, river_map: RiverMap) -> None:
    lines = ["# trackrl river map"]
    lines.append(f"n_segments = {river_map.n_segments}")
    lines.append(f"control_points = {_fmt_tuples(river_map.control_points)}")
    lines.append(f"half_widths = {_fmt_scalars(river_map.half_widths)}")
    if len(river_map.obstacle_boxes):
        lines.append(f"obstacle_boxes = {_fmt_tuples(river_map.obstacle_boxes)}")
    if len(river_map.tributary_points):
        lines.append(f"tributary_points = {_fmt_tuples(river_map.tributary_points)}")
        lines.append(f"tributary_half_widths = {_fmt_scalars(river_map.tributary_half_widths)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_map(path: str | Path) -> RiverMap:
    known = {"n_segments", "control_points", "half_widths", "obstacle_boxes",
             "tributary_points", "tributary_half_widths"}
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown map key {key!r}")
        values[key] = val

    def tuples(key, width):
        if key not in values:
            return np.zeros((0, width))
        rows = [r for r in values[key].split(";") if r.strip()]
        return np.array([[float(x) for x in row.split(",")] for row in rows])

    def scalars(key):
        if key not in values:
            return np.zeros(0)
        return np.array([float(x) for x in values[key].split(";") if x.strip()])

    for req in ("control_points", "half_widths"):
        if req not in values:
            raise ValueError(f"{path}: missing required map key {req!r}")
    return RiverMap(
        control_points=tuples("control_points", 3),
        half_widths=scalars("half_widths"),
        n_segments=int(values.get("n_segments", "200")),
        obstacle_boxes=tuples("obstacle_boxes", 6),
        tributary_points=tuples("tributary_points", 3),
        tributary_half_widths=scalars("tributary_half_widths"),
    )
