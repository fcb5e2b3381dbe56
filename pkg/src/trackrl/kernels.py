"""Hot numeric kernels with numba and pure-numpy implementations.

The three inner loops that dominate training time are jitted with numba:

* ``water_mask``      - 16x16 body-frame water occupancy for the river
                        observation (cells x segments distance tests),
* ``nearest_segment`` - point projection onto the resampled spline,
* ``gae_scan``        - the reverse scan of generalized advantage
                        estimation over a rollout horizon.

Set ``TRACKRL_NUMBA=0`` to force the pure-numpy fallbacks (used
automatically when numba is not importable). Both paths implement the
same arithmetic expression per element, so binary decisions (mask bits,
argmin indices) agree exactly; see ``benchmarks/bench_kernels.py`` for a
speed comparison.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - mirror env without numba
    HAVE_NUMBA = False

_FLAG = os.environ.get("TRACKRL_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# scalar-loop implementations (jitted when numba is active)
# ---------------------------------------------------------------------------


def _nearest_segment_loop(px, py, ax, ay, bx, by):
    best = 0
    best_d2 = np.inf
    for i in range(ax.shape[0]):
        dx = bx[i] - ax[i]
        dy = by[i] - ay[i]
        wx = px - ax[i]
        wy = py - ay[i]
        t = (wx * dx + wy * dy) / (dx * dx + dy * dy)
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = wx - t * dx
        ey = wy - t * dy
        d2 = ex * ex + ey * ey
        if d2 < best_d2:
            best_d2 = d2
            best = i
    return best, best_d2


def _water_mask_loop(ox, oy, fx, fy, lx, ly, n_rows, n_cols, cell, ax, ay, bx, by, hw2, out):
    for i in range(n_rows):
        f = (i + 0.5) * cell
        for j in range(n_cols):
            lat = (0.5 * n_cols - (j + 0.5)) * cell
            px = ox + f * fx + lat * lx
            py = oy + f * fy + lat * ly
            wet = 0.0
            for k in range(ax.shape[0]):
                dx = bx[k] - ax[k]
                dy = by[k] - ay[k]
                wx = px - ax[k]
                wy = py - ay[k]
                t = (wx * dx + wy * dy) / (dx * dx + dy * dy)
                if t < 0.0:
                    t = 0.0
                elif t > 1.0:
                    t = 1.0
                ex = wx - t * dx
                ey = wy - t * dy
                if ex * ex + ey * ey <= hw2[k]:
                    wet = 1.0
                    break
            out[i * n_cols + j] = wet


def _gae_scan_loop(rewards, values, terminated, truncated, bootstrap, last_value, gamma, lam, adv):
    n = rewards.shape[0]
    gae = 0.0
    for t in range(n - 1, -1, -1):
        if terminated[t]:
            next_v = 0.0
            chain = 0.0
        elif truncated[t]:
            next_v = bootstrap[t]
            chain = 0.0
        elif t == n - 1:
            next_v = last_value
            chain = 1.0
        else:
            next_v = values[t + 1]
            chain = 1.0
        delta = rewards[t] + gamma * next_v - values[t]
        gae = delta + gamma * lam * chain * gae
        adv[t] = gae


# ---------------------------------------------------------------------------
# pure-numpy fallbacks
# ---------------------------------------------------------------------------


def _segment_d2_np(px, py, ax, ay, bx, by):
    """Squared horizontal point-to-segment distances, (P, N)."""
    dx = bx - ax
    dy = by - ay
    wx = px[:, None] - ax[None, :]
    wy = py[:, None] - ay[None, :]
    t = np.clip((wx * dx + wy * dy) / (dx * dx + dy * dy), 0.0, 1.0)
    ex = wx - t * dx
    ey = wy - t * dy
    return ex * ex + ey * ey


def _nearest_segment_np(px, py, ax, ay, bx, by):
    d2 = _segment_d2_np(np.array([px]), np.array([py]), ax, ay, bx, by)[0]
    i = int(np.argmin(d2))
    return i, float(d2[i])


def _water_mask_np(ox, oy, fx, fy, lx, ly, n_rows, n_cols, cell, ax, ay, bx, by, hw2, out):
    f = (np.arange(n_rows) + 0.5) * cell
    lat = (0.5 * n_cols - (np.arange(n_cols) + 0.5)) * cell
    px = (ox + f[:, None] * fx + lat[None, :] * lx).ravel()
    py = (oy + f[:, None] * fy + lat[None, :] * ly).ravel()
    d2 = _segment_d2_np(px, py, ax, ay, bx, by)
    out[:] = np.any(d2 <= hw2[None, :], axis=1).astype(np.float64)


def _gae_scan_np(rewards, values, terminated, truncated, bootstrap, last_value, gamma, lam, adv):
    # A reverse scan has a sequential dependency; the fallback is the
    # same loop over numpy scalars.
    _gae_scan_loop(rewards, values, terminated, truncated, bootstrap, last_value, gamma, lam, adv)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if USE_NUMBA:
    _nearest_segment_jit = njit(cache=True)(_nearest_segment_loop)
    _water_mask_jit = njit(cache=True)(_water_mask_loop)
    _gae_scan_jit = njit(cache=True)(_gae_scan_loop)
else:  # pragma: no cover - exercised via TRACKRL_NUMBA=0 subprocess tests
    _nearest_segment_jit = None
    _water_mask_jit = None
    _gae_scan_jit = None


def nearest_segment(px: float, py: float, ax, ay, bx, by) -> tuple[int, float]:
    """Index of the nearest segment and the squared distance to it.

    Ties go to the lower index (strict `<` improvement in the scan,
    first-occurrence argmin in the fallback).
    """
    if USE_NUMBA:
        i, d2 = _nearest_segment_jit(float(px), float(py), ax, ay, bx, by)
        return int(i), float(d2)
    return _nearest_segment_np(float(px), float(py), ax, ay, bx, by)


def water_mask(origin_xy, yaw: float, n_rows: int, n_cols: int, cell: float,
               ax, ay, bx, by, hw2) -> np.ndarray:
    """Binary occupancy of the water region over a body-frame grid.

    The grid covers a forward rectangle ``n_rows*cell`` deep by
    ``n_cols*cell`` wide anchored at ``origin_xy``; row 0 is the nearest
    band, column 0 the leftmost. A cell is 1.0 iff its center is within
    the local half-width of any supplied segment.
    """
    out = np.empty(n_rows * n_cols, dtype=np.float64)
    fx = np.cos(yaw)
    fy = np.sin(yaw)
    impl = _water_mask_jit if USE_NUMBA else _water_mask_np
    impl(float(origin_xy[0]), float(origin_xy[1]), fx, fy, -fy, fx,
         n_rows, n_cols, float(cell), ax, ay, bx, by, hw2, out)
    return out


def gae_scan(rewards, values, terminated, truncated, bootstrap, last_value: float,
             gamma: float, lam: float) -> np.ndarray:
    """Generalized advantage estimates over one rollout.

    ``terminated`` steps bootstrap 0 and break the lambda chain;
    ``truncated`` steps bootstrap their stored next-state value and break
    the chain; the final step bootstraps ``last_value`` if unfinished.
    """
    adv = np.empty_like(rewards)
    impl = _gae_scan_jit if USE_NUMBA else _gae_scan_np
    impl(rewards, values, terminated.astype(np.uint8), truncated.astype(np.uint8),
         bootstrap, float(last_value), float(gamma), float(lam), adv)
    return adv


def warmup() -> None:
    """Trigger JIT compilation of all kernels (no-op on the numpy path)."""
    seg = np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([1.0, 2.0]), np.array([0.0, 0.0])
    nearest_segment(0.5, 0.2, *seg)
    water_mask((0.0, 0.0), 0.0, 2, 2, 1.0, *seg, np.array([1.0, 1.0]))
    z = np.zeros(4)
    gae_scan(z, z, np.zeros(4, bool), np.zeros(4, bool), z, 0.0, 0.99, 0.95)
