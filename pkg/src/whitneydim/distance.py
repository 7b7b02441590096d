"""Exact sampled Euclidean distance transform of a box set.

The transform is separable in the usual Felzenszwalb-Huttenlocher way, with
one twist: instead of rasterizing E, the first pass runs over a set of
"apex columns" X' that provably contains the x-coordinate of the nearest
point of E for every grid node. For a box b and a node p the nearest point
of b has x = clamp(x_p, lo_b, hi_b), which is either a box edge or a node
column inside [lo_b, hi_b]. So

    X' = {box x-edges} + {node columns lying inside some box's x-range}

and along each apex column the first pass stores the exact squared 1D
distance from each row to the union of the y-intervals of the boxes whose
x-range contains it. The second pass takes the lower envelope of parabolas
with apexes at X'. Both passes are exact up to float rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

if nb.config.THREADING_LAYER == "default":
    nb.config.THREADING_LAYER = "workqueue"

from .errors import ScaleTooFineError, check_cells
from .geometry import BoxSet

ROW_BLOCK_CELLS = 1 << 23


@nb.njit(cache=True)
def _dist2_to_intervals(ys, starts, ends, m, out):
    """Squared distance from sorted ``ys`` to ``m`` merged sorted intervals."""
    j = 0
    for i in range(ys.shape[0]):
        y = ys[i]
        while j + 1 < m and starts[j + 1] <= y:
            j += 1
        if y < starts[j]:
            g = starts[j] - y
        elif y <= ends[j]:
            g = 0.0
        else:
            g = y - ends[j]
            if j + 1 < m:
                g2 = starts[j + 1] - y
                if g2 < g:
                    g = g2
        out[i] = g * g


@nb.njit(parallel=True, cache=True)
def _column_pass(ys, offsets, ylo, yhi, G):
    """Fill G[m, :] with squared row distances to the y-intervals of apex m.

    Intervals of apex m are ylo/yhi[offsets[m]:offsets[m+1]], sorted by ylo.
    """
    M = offsets.shape[0] - 1
    for m in nb.prange(M):
        a = offsets[m]
        b = offsets[m + 1]
        starts = np.empty(b - a)
        ends = np.empty(b - a)
        n = 0
        for t in range(a, b):
            if n > 0 and ylo[t] <= ends[n - 1]:
                if yhi[t] > ends[n - 1]:
                    ends[n - 1] = yhi[t]
            else:
                starts[n] = ylo[t]
                ends[n] = yhi[t]
                n += 1
        _dist2_to_intervals(ys, starts, ends, n, G[m])


@nb.njit(parallel=True, cache=True)
def _envelope_pass(xs, apex, G, out):
    """out[i, j] = min_m (xs[i] - apex[m])^2 + G[m, j] (apex strictly increasing)."""
    M = apex.shape[0]
    nrow = G.shape[1]
    for j in nb.prange(nrow):
        v = np.empty(M, dtype=np.int64)
        z = np.empty(M + 1)
        k = -1
        for q in range(M):
            fq = G[q, j]
            if not np.isfinite(fq):
                continue
            s = -np.inf
            while k >= 0:
                p = v[k]
                s = 0.5 * ((fq - G[p, j]) / (apex[q] - apex[p]) + apex[q] + apex[p])
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s if k > 0 else -np.inf
            z[k + 1] = np.inf
        t = 0
        for i in range(xs.shape[0]):
            x = xs[i]
            while z[t + 1] < x:
                t += 1
            dx = x - apex[v[t]]
            out[i, j] = dx * dx + G[v[t], j]


def _exact_dist2_grid_2d(E: BoxSet, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    lo, hi = E.lo_f, E.hi_f
    # apex columns: box edges plus node columns inside some box's x-range
    i0 = np.searchsorted(xs, lo[:, 0], side="left")
    i1 = np.searchsorted(xs, hi[:, 0], side="right")
    mark = np.zeros(len(xs) + 1, dtype=np.int64)
    np.add.at(mark, i0, 1)
    np.add.at(mark, i1, -1)
    inside = np.cumsum(mark[:-1]) > 0
    apex = np.unique(np.concatenate([lo[:, 0], hi[:, 0], xs[inside]]))

    a0 = np.searchsorted(apex, lo[:, 0], side="left")
    a1 = np.searchsorted(apex, hi[:, 0], side="right")
    reps = a1 - a0
    check_cells(int(reps.sum()), "distance-transform apex/box incidences")
    box = np.repeat(np.arange(len(E)), reps)
    start = np.repeat(a0 - np.concatenate([[0], np.cumsum(reps)[:-1]]), reps)
    col = start + np.arange(len(box))
    order = np.lexsort((lo[box, 1], col))
    col, box = col[order], box[order]
    offsets = np.searchsorted(col, np.arange(len(apex) + 1)).astype(np.int64)
    ylo = np.ascontiguousarray(lo[box, 1])
    yhi = np.ascontiguousarray(hi[box, 1])

    out = np.empty((len(xs), len(ys)))
    block = max(1, ROW_BLOCK_CELLS // max(1, len(apex)))
    for j0 in range(0, len(ys), block):
        yb = np.ascontiguousarray(ys[j0 : j0 + block])
        G = np.empty((len(apex), len(yb)))
        _column_pass(yb, offsets, ylo, yhi, G)
        ob = np.empty((len(xs), len(yb)))
        _envelope_pass(xs, apex, G, ob)
        out[:, j0 : j0 + block] = ob
    return out


def _exact_dist2_grid_1d(E: BoxSet, xs: np.ndarray) -> np.ndarray:
    order = np.argsort(E.lo_f[:, 0], kind="stable")
    lo, hi = E.lo_f[order, 0], E.hi_f[order, 0]
    starts, ends = [], []
    for a, b in zip(lo.tolist(), hi.tolist()):
        if starts and a <= ends[-1]:
            ends[-1] = max(ends[-1], b)
        else:
            starts.append(a)
            ends.append(b)
    out = np.empty(len(xs))
    _dist2_to_intervals(xs, np.array(starts), np.array(ends), len(starts), out)
    return out


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Exact distance-to-E samples on a regular grid of spacing ``h = 2^-K``.

    The default window is [0,1]^d with (2^K+1)^d nodes; ``origin`` and
    ``extent`` allow a larger window (used when radii exceed the unit cube).
    ``values[i, j]`` is the distance at ``origin + (i, j) * h``.
    """

    grid_level: int
    values: np.ndarray
    source: BoxSet = field(repr=False)
    origin: tuple = (0.0, 0.0)

    @property
    def h(self) -> float:
        return 2.0 ** -self.grid_level

    @property
    def dim(self) -> int:
        return self.values.ndim

    def axis(self, a: int) -> np.ndarray:
        return self.origin[a] + self.h * np.arange(self.values.shape[a])

    def node_points(self, idx: np.ndarray) -> np.ndarray:
        return np.asarray(self.origin)[None, :] + self.h * np.asarray(idx, dtype=float)

    @property
    def max_value(self) -> float:
        return float(self.values.max())


def compute_distance_field(
    E: BoxSet, K: int, origin: float | tuple | None = None, extent: float = 1.0
) -> DistanceField:
    """Exact Euclidean distance from every node of a level-K grid to E.

    The grid covers ``[origin, origin + extent]^d``; by default [0,1]^d.
    ``extent * 2^K`` must be an integer.
    """
    if K < 4:
        raise ScaleTooFineError("grid level must be at least 4")
    d = E.dim
    if origin is None:
        origin = (0.0,) * d
    elif np.isscalar(origin):
        origin = (float(origin),) * d
    origin = tuple(float(o) for o in origin)
    n = extent * (1 << K)
    if abs(n - round(n)) > 1e-9:
        raise ValueError("extent must be a multiple of the grid spacing")
    n = int(round(n)) + 1
    check_cells(n**d, "distance field nodes")
    h = 2.0**-K
    axes = [origin[a] + h * np.arange(n) for a in range(d)]
    if d == 1:
        values = np.sqrt(_exact_dist2_grid_1d(E, axes[0]))
    elif d == 2:
        values = np.sqrt(_exact_dist2_grid_2d(E, axes[0], axes[1]))
    else:
        raise NotImplementedError("distance fields are implemented for d <= 2")
    values.setflags(write=False)
    return DistanceField(K, values, E, origin)


def window_for_radius(E: BoxSet, r: float, K: int) -> tuple[tuple, float]:
    """Origin and extent of a dyadic-aligned window containing E_r with margin."""
    lo = E.lo_f.min(axis=0) - r
    hi = E.hi_f.max(axis=0) + r
    h = 2.0**-K
    margin = 4 * h
    o = np.floor((lo - margin) / h) * h
    top = np.ceil((hi + margin) / h) * h
    extent = float((top - o).max())
    extent = math.ceil(extent / h) * h
    return tuple(float(v) for v in o), extent
