"""Closed Catmull-Rom river centerline and its arc-length resampling.

The river is a closed uniform Catmull-Rom spline through a handful of
control points; each control point also carries a river half-width which
is interpolated with the same basis (the spline is evaluated in 4D:
x, y, z, half-width). For the environment the curve is flattened into N
straight segments of near-equal arc length with per-segment tangents and
half-widths; projection queries run against those segments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from trackrl import kernels

SAMPLES_PER_SEGMENT = 50  # dense arc-length table resolution per control segment


def catmull_rom_point(p0, p1, p2, p3, t: float) -> np.ndarray:
    """Uniform Catmull-Rom basis point between `p1` and `p2` at `t` in [0,1]."""
    p0, p1, p2, p3 = (np.asarray(p, dtype=np.float64) for p in (p0, p1, p2, p3))
    t2 = t * t
    t3 = t2 * t
    return 0.5 * (
        2.0 * p1
        + (-p0 + p2) * t
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t3
    )


def eval_catmull_rom(control_points, segment_index: int, t: float) -> np.ndarray:
    """Point on the closed spline: segment `i` runs from P_i to P_{i+1}."""
    pts = np.asarray(control_points, dtype=np.float64)
    m = len(pts)
    if m < 4:
        raise ValueError("a closed Catmull-Rom spline needs at least 4 control points")
    i = segment_index % m
    return catmull_rom_point(pts[(i - 1) % m], pts[i], pts[(i + 1) % m], pts[(i + 2) % m], t)


def _dense_samples(pts4: np.ndarray, samples_per_segment: int) -> np.ndarray:
    m = len(pts4)
    ts = np.arange(samples_per_segment) / samples_per_segment
    out = np.empty((m * samples_per_segment, pts4.shape[1]))
    for i in range(m):
        p0, p1, p2, p3 = pts4[(i - 1) % m], pts4[i], pts4[(i + 1) % m], pts4[(i + 2) % m]
        for j, t in enumerate(ts):
            out[i * samples_per_segment + j] = catmull_rom_point(p0, p1, p2, p3, t)
    return out


def resample_arclength(control_points, half_widths, n_segments: int,
                       samples_per_segment: int = SAMPLES_PER_SEGMENT) -> np.ndarray:
    """Resample the closed spline into `n_segments` near-equal-length pieces.

    Returns the (N, 4) vertex array [x, y, z, half_width]; vertex k starts
    segment k, which ends at vertex (k+1) mod N. Uses a dense chord-length
    table to invert arc length, then evaluates the spline exactly at the
    recovered parameters, so vertices lie on the curve.
    """
    if n_segments < 50:
        raise ValueError("n_segments must be at least 50")
    pts = np.asarray(control_points, dtype=np.float64)
    hw = np.asarray(half_widths, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) < 4:
        raise ValueError("control_points must be (M>=4, 3)")
    if hw.shape != (len(pts),):
        raise ValueError("one half-width per control point required")
    pts4 = np.concatenate([pts, hw[:, None]], axis=1)

    dense = _dense_samples(pts4, samples_per_segment)
    closed = np.vstack([dense, dense[:1]])
    chords = np.linalg.norm(np.diff(closed[:, :3], axis=0), axis=1)
    if not np.all(np.isfinite(chords)) or chords.sum() <= 0.0:
        raise ValueError("degenerate spline")
    cum = np.concatenate([[0.0], np.cumsum(chords)])
    total = cum[-1]

    m = len(pts)
    verts = np.empty((n_segments, 4))
    targets = np.arange(n_segments) * (total / n_segments)
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(chords) - 1)
    for k in range(n_segments):
        d = int(idx[k])
        frac = (targets[k] - cum[d]) / chords[d]
        g = d + frac  # continuous dense index
        seg = int(g // samples_per_segment) % m
        t = (g - (g // samples_per_segment) * samples_per_segment) / samples_per_segment
        verts[k] = catmull_rom_point(
            pts4[(seg - 1) % m], pts4[seg], pts4[(seg + 1) % m], pts4[(seg + 2) % m], t
        )
    return verts


@dataclass
class RiverSpline:
    """Resampled river centerline with projection support."""

    control_points: np.ndarray   # (M, 3)
    half_widths: np.ndarray      # (M,)
    n_segments: int
    vertices: np.ndarray = field(init=False)      # (N, 4) x,y,z,hw
    seg_ax: np.ndarray = field(init=False)
    seg_ay: np.ndarray = field(init=False)
    seg_bx: np.ndarray = field(init=False)
    seg_by: np.ndarray = field(init=False)
    seg_lengths: np.ndarray = field(init=False)   # horizontal-plane chord lengths
    seg_half_widths: np.ndarray = field(init=False)
    tangents: np.ndarray = field(init=False)      # (N, 2) horizontal unit directions
    tangent_bearings: np.ndarray = field(init=False)

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=np.float64)
        self.half_widths = np.asarray(self.half_widths, dtype=np.float64)
        v = resample_arclength(self.control_points, self.half_widths, self.n_segments)
        self.vertices = v
        nxt = np.roll(v, -1, axis=0)
        self.seg_ax = np.ascontiguousarray(v[:, 0])
        self.seg_ay = np.ascontiguousarray(v[:, 1])
        self.seg_bx = np.ascontiguousarray(nxt[:, 0])
        self.seg_by = np.ascontiguousarray(nxt[:, 1])
        dx = self.seg_bx - self.seg_ax
        dy = self.seg_by - self.seg_ay
        self.seg_lengths = np.hypot(dx, dy)
        self.seg_half_widths = 0.5 * (v[:, 3] + nxt[:, 3])
        self.tangents = np.stack([dx, dy], axis=1) / self.seg_lengths[:, None]
        self.tangent_bearings = np.arctan2(dy, dx)

    @property
    def total_length(self) -> float:
        return float(self.seg_lengths.sum())

    def project(self, x: float, y: float) -> tuple[int, float]:
        """(nearest segment index, horizontal distance); ties to lower index."""
        i, d2 = kernels.nearest_segment(x, y, self.seg_ax, self.seg_ay, self.seg_bx, self.seg_by)
        return i, float(np.sqrt(d2))

    def local_z(self, seg_index: int, x: float, y: float) -> float:
        """Centerline altitude under (x, y), interpolated along the segment."""
        i = seg_index
        ax, ay = self.seg_ax[i], self.seg_ay[i]
        dx, dy = self.seg_bx[i] - ax, self.seg_by[i] - ay
        t = ((x - ax) * dx + (y - ay) * dy) / (dx * dx + dy * dy)
        t = min(max(t, 0.0), 1.0)
        z0 = self.vertices[i, 2]
        z1 = self.vertices[(i + 1) % self.n_segments, 2]
        return float(z0 + t * (z1 - z0))
