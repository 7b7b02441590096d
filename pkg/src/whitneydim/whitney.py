"""Whitney decomposition of [0,1]^d minus E into dyadic cubes.

The subdivision runs level by level. Every live cube carries a list of
candidate boxes of E; a box stays a candidate for a cube (and its
descendants) only while its distance to the cube does not exceed the
smallest "farthest-point" distance U from the cube to any box, since no
other box can ever be the nearest one to a point of the cube.

Distances are handled in integer units of 1/(D * 2^k), where D is E's
common denominator, so the selection rule dist(Q,E) >= diam(Q) is decided
exactly (float sums with an exact integer recheck near ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CenterNotInSetError, InvalidParamsError, ResourceLimitError, check_cells
from .geometry import Ball, BoxSet, DyadicCube, _has_overlaps as _interiors_overlap, dist_point_to_set, merged_boxes

PAIR_CHUNK = 1 << 22
_TRACE = None  # set to a list to record (level, live cubes, pairs)
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class WhitneyCube:
    cube: DyadicCube
    dist_to_E: float


@dataclass(eq=False)
class WhitneyDecomposition:
    """Selected cubes as parallel arrays, sorted by (level, index)."""

    levels: np.ndarray
    index: np.ndarray
    dist2_units: np.ndarray  # squared distance in units of (D 2^level)^-2, exact integers as float
    k_max: int
    denom: int
    residual_index: np.ndarray  # level-k_max cells neither selected nor meeting E
    source: BoxSet = field(repr=False)

    @property
    def dim(self) -> int:
        return self.index.shape[1]

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def dist(self) -> np.ndarray:
        scale = self.denom * np.exp2(self.levels.astype(float))
        return np.sqrt(self.dist2_units) / scale

    @property
    def side(self) -> np.ndarray:
        return np.exp2(-self.levels.astype(float))

    @property
    def residual_volume(self) -> float:
        return len(self.residual_index) * 2.0 ** (-self.dim * self.k_max)

    @property
    def cubes(self) -> list[WhitneyCube]:
        d = self.dist
        return [
            WhitneyCube(DyadicCube(int(k), tuple(int(v) for v in idx)), float(x))
            for k, idx, x in zip(self.levels, self.index, d)
        ]

    def cube_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.side[:, None]
        return self.index * s, (self.index + 1) * s

    def level_slice(self, k: int) -> slice:
        a = np.searchsorted(self.levels, k, side="left")
        b = np.searchsorted(self.levels, k, side="right")
        return slice(int(a), int(b))

    def exact_dist2(self, i: int) -> Fraction:
        k = int(self.levels[i])
        return Fraction(int(round(self.dist2_units[i])), (self.denom << k) ** 2)


# ---------------------------------------------------------------------------
# Pair kernels
# ---------------------------------------------------------------------------


def _pair_metrics(cidx, k, blo, bhi, D, with_overlap=False):
    """Per pair: squared min distance, squared max distance, cube-inside-box flag.

    With ``with_overlap`` the exact overlap volume of cube and box (int64
    units) is returned as a fourth array.

    ``cidx`` is (n,d) cube indices at level k; ``blo``/``bhi`` box numerators
    over D. Units are 1/(D 2^k); returns float64 arrays (exact while < 2^53).
    """
    qlo = cidx * D
    qhi = qlo + D
    sc = 1 << k
    blo = blo * sc
    bhi = bhi * sc
    gap = np.maximum(np.maximum(blo - qhi, qlo - bhi), 0).astype(np.float64)
    far = np.maximum(np.maximum(bhi - qlo, qhi - blo), 0).astype(np.float64)
    inside = ((blo <= qlo) & (qhi <= bhi)).all(axis=1)
    out = (gap * gap).sum(axis=1), (far * far).sum(axis=1), inside
    if with_overlap:
        ov = np.maximum(np.minimum(qhi, bhi) - np.maximum(qlo, blo), 0).prod(axis=1)
        out = out + (ov,)
    return out


def _exact_gap2(cidx_row, k, blo_row, bhi_row, D) -> int:
    s = 0
    sc = 1 << k
    for a in range(len(cidx_row)):
        qlo = int(cidx_row[a]) * D
        qhi = qlo + D
        g = max(int(blo_row[a]) * sc - qhi, qlo - int(bhi_row[a]) * sc, 0)
        s += g * g
    return s


def _evaluate_level(cubes, k, pair_cube, pair_box, lo, hi, D, disjoint):
    """Distances of every cube at level k plus the pruned candidate pairs.

    ``inside`` marks cubes contained in E. For boxes with pairwise disjoint
    interiors and exact integer units it is decided by summing overlap
    volumes; otherwise only containment in a single box is detected.
    """
    d = cubes.shape[1]
    by_volume = disjoint and (D << k) ** d < (1 << 62)
    full = (D ** d) if by_volume else 0
    n = len(cubes)
    d2 = np.empty(n)
    u2 = np.empty(n)
    inside = np.zeros(n, dtype=bool)
    keep_parts_c, keep_parts_b = [], []
    # chunks of whole cubes (pairs are sorted by cube)
    bounds = np.searchsorted(pair_cube, np.arange(n + 1))
    c0 = 0
    while c0 < n:
        c1 = int(np.searchsorted(bounds, bounds[c0] + PAIR_CHUNK, side="right")) - 1
        c1 = min(max(c1, c0 + 1), n)
        p0, p1 = bounds[c0], bounds[c1]
        pc = pair_cube[p0:p1]
        pb = pair_box[p0:p1]
        metrics = _pair_metrics(cubes[pc], k, lo[pb], hi[pb], D, by_volume)
        g2, f2, ins = metrics[:3]
        starts = bounds[c0:c1] - p0
        cd2 = np.minimum.reduceat(g2, starts)
        cu2 = np.minimum.reduceat(f2, starts)
        d2[c0:c1] = cd2
        u2[c0:c1] = cu2
        inside[c0:c1] = np.logical_or.reduceat(ins, starts)
        if by_volume:
            inside[c0:c1] |= np.add.reduceat(metrics[3], starts) == full
        keep = g2 <= cu2[pc - c0] * (1 + 1e-12) + 0.5
        keep_parts_c.append(pc[keep])
        keep_parts_b.append(pb[keep])
        c0 = c1
    kc = np.concatenate(keep_parts_c) if keep_parts_c else np.empty(0, dtype=np.int64)
    kb = np.concatenate(keep_parts_b) if keep_parts_b else np.empty(0, dtype=np.int64)
    return d2, u2, inside, kc, kb


def _exact_min_dist2(cube_row, k, boxes, lo, hi, D) -> int:
    return min(_exact_gap2(cube_row, k, lo[b], hi[b], D) for b in boxes)


def _float_preserving_order(value: int, thresh: int) -> float:
    """float(value), nudged so that comparing with float(thresh) stays exact."""
    f = float(value)
    if value >= thresh and f < thresh:
        return float(thresh)
    if value < thresh and f >= thresh:
        return float(np.nextafter(float(thresh), 0.0))
    return f


def whitney_decompose(E: BoxSet, k_max: int, max_cubes: int | None = None) -> WhitneyDecomposition:
    """Select cube Q iff dist(Q,E) >= diam(Q) and its parent was not selected.

    Cubes with dist < diam are subdivided down to level k_max; at k_max the
    unselected cells disjoint from E form the residual.
    """
    if k_max < 3:
        raise InvalidParamsError("k_max must be at least 3")
    if not E.normalized_flag:
        raise InvalidParamsError("the set must be normalized into [1/4,3/4]^d")
    work = merged_boxes(E)
    D = work.denom
    d = work.dim
    if D.bit_length() + k_max + 2 > 62:
        raise ResourceLimitError("grid level too fine for this set's denominator")
    lo, hi = work.lo, work.hi
    disjoint = not _interiors_overlap(work)
    thresh = d * D * D  # diam^2 in units (D 2^k)^-2 at every level
    exact_units = (D << k_max) < (1 << 26)

    cubes = np.zeros((1, d), dtype=np.int64)
    pair_cube = np.zeros(len(work), dtype=np.int64)
    pair_box = np.arange(len(work), dtype=np.int64)
    sel_lv, sel_idx, sel_d2 = [], [], []
    residual = np.empty((0, d), dtype=np.int64)
    total_selected = 0
    cap = max_cubes

    for k in range(k_max + 1):
        check_cells(len(pair_cube), f"candidate pairs at level {k}")
        if _TRACE is not None:
            _TRACE.append((k, len(cubes), len(pair_cube)))
        d2, u2, inside, kc, kb = _evaluate_level(cubes, k, pair_cube, pair_box, lo, hi, D, disjoint)
        if not exact_units:
            # squared sums may be rounded; recheck cubes close to the threshold exactly
            near = np.nonzero(np.abs(d2 - thresh) <= TIE_RTOL * thresh)[0]
            if len(near):
                starts = np.searchsorted(pair_cube, near)
                ends = np.searchsorted(pair_cube, near, side="right")
                for c, a, b in zip(near, starts, ends):
                    d2[c] = _float_preserving_order(_exact_min_dist2(cubes[c], k, pair_box[a:b], lo, hi, D), thresh)
        selected = d2 >= thresh
        if selected.any():
            sel_lv.append(np.full(int(selected.sum()), k, dtype=np.int64))
            sel_idx.append(cubes[selected])
            sel_d2.append(d2[selected])
            total_selected += int(selected.sum())
            if cap is not None and total_selected > cap:
                raise ResourceLimitError(f"more than {cap} Whitney cubes selected")
        live = (~selected) & (~inside)
        if k == k_max:
            residual = cubes[live & (d2 > 0)]
            break
        # prune pairs to live cubes and renumber
        new_id = np.cumsum(live) - 1
        mask = live[kc]
        kc, kb = new_id[kc[mask]], kb[mask]
        parents = cubes[live]
        nlive = len(parents)
        nchild = 1 << d
        check_cells(nlive * nchild, f"live cubes at level {k + 1}")
        check_cells(len(kc) * nchild, f"candidate pairs at level {k + 1}")
        offs = np.array([[(m >> a) & 1 for a in range(d)] for m in range(nchild)], dtype=np.int64)
        cubes = (2 * parents[:, None, :] + offs[None, :, :]).reshape(-1, d)
        # child c of parent p has id p*nchild + c; pairs stay grouped by cube
        pair_cube = (kc[:, None] * nchild + np.arange(nchild)[None, :])
        pair_box = np.broadcast_to(kb[:, None], pair_cube.shape)
        # reorder to (parent, child, box) so pairs are sorted by child id
        order = np.argsort(pair_cube.ravel(), kind="stable")
        pair_cube = pair_cube.ravel()[order]
        pair_box = pair_box.ravel()[order]

    if sel_lv:
        levels = np.concatenate(sel_lv)
        index = np.concatenate(sel_idx)
        d2 = np.concatenate(sel_d2)
    else:
        levels = np.empty(0, dtype=np.int64)
        index = np.empty((0, d), dtype=np.int64)
        d2 = np.empty(0)
    order = np.lexsort([index[:, a] for a in range(d - 1, -1, -1)] + [levels])
    levels, index, d2 = levels[order], index[order], d2[order]
    for arr in (levels, index, d2):
        arr.setflags(write=False)
    if len(residual):
        residual = residual[np.lexsort([residual[:, a] for a in range(d - 1, -1, -1)])]
    return WhitneyDecomposition(levels, index, d2, k_max, D, residual, E)


# ---------------------------------------------------------------------------
# Counts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationCounts:
    """Map level k -> count over ``k_range`` (inclusive)."""

    counts: dict
    k_range: tuple
    scope: Ball | None = None
    kind: str = "whitney"

    @property
    def ks(self) -> np.ndarray:
        return np.array(sorted(self.counts), dtype=np.int64)

    @property
    def values(self) -> np.ndarray:
        return np.array([self.counts[k] for k in sorted(self.counts)], dtype=np.int64)

    def total(self) -> int:
        return int(sum(self.counts.values()))

    def __getitem__(self, k: int) -> int:
        return self.counts[k]


def _cubes_meeting_ball(W: WhitneyDecomposition, ball: Ball) -> np.ndarray:
    lo, hi = W.cube_bounds()
    return ball.meets_boxes(lo, hi)


def generation_counts(W: WhitneyDecomposition, scope: Ball | None = None, clip: bool = True) -> GenerationCounts:
    """N_k = selected cubes of level k (meeting ``scope`` if given), k in [3, k_max-1]."""
    k_lo, k_hi = (3, W.k_max - 1) if clip else (0, W.k_max)
    levels = W.levels
    if scope is not None:
        levels = levels[_cubes_meeting_ball(W, scope)]
    hist = np.bincount(levels, minlength=W.k_max + 1)
    counts = {k: int(hist[k]) for k in range(k_lo, k_hi + 1)}
    return GenerationCounts(counts, (k_lo, k_hi), scope, "whitney")


def local_count(E: BoxSet, B0: Ball, k: int, W: WhitneyDecomposition | None = None, k_max: int | None = None) -> int:
    """#W_k(complement; B0) for a ball centred on E with radius below diam(E)."""
    if dist_point_to_set(np.asarray(B0.center), E) != 0.0:
        raise CenterNotInSetError("ball centre must lie in E")
    if W is None:
        W = whitney_decompose(E, k_max if k_max is not None else max(k + 1, 3))
    lo, hi = W.cube_bounds()
    sl = W.level_slice(k)
    return int(B0.meets_boxes(lo[sl], hi[sl]).sum())


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def _lookup_cubes(W: WhitneyDecomposition, points: np.ndarray) -> np.ndarray:
    """Level of the selected cube containing each point (open-interior sense), or -1."""
    out = np.full(len(points), -1, dtype=np.int64)
    d = W.dim
    for k in np.unique(W.levels):
        sl = W.level_slice(int(k))
        idx = W.index[sl]
        n = 1 << int(k)
        keys = np.ravel_multi_index(idx.T, (n,) * d)
        keys_sorted = np.sort(keys)
        cell = np.floor(points * n).astype(np.int64)
        ok = ((cell >= 0) & (cell < n)).all(axis=1)
        pk = np.zeros(len(points), dtype=np.int64)
        pk[ok] = np.ravel_multi_index(cell[ok].T, (n,) * d)
        pos = np.searchsorted(keys_sorted, pk)
        hit = ok & (pos < len(keys_sorted))
        hit[hit] = keys_sorted[pos[hit]] == pk[hit]
        out[hit] = k
    return out


def neighbor_level_constant(W: WhitneyDecomposition) -> int:
    """Largest level difference between selected cubes whose closures touch.

    Every cube probes just outside its face midpoints and corners; a
    touching neighbour that is at least as large always contains one of
    these probes, so scanning all cubes finds every touching pair's larger
    member from the smaller one.
    """
    if len(W) == 0:
        return 0
    d = W.dim
    delta = 2.0 ** -(W.k_max + 2)
    dirs = np.array(
        [v for v in np.ndindex(*(3,) * d) if any(c != 1 for c in v)], dtype=np.int64
    ) - 1  # all nonzero {-1,0,1}^d
    lo, hi = W.cube_bounds()
    center = 0.5 * (lo + hi)
    half = 0.5 * W.side[:, None]
    best = 0
    for v in dirs:
        probe = center + v[None, :] * (half + delta)
        lv = _lookup_cubes(W, probe)
        found = lv >= 0
        if found.any():
            best = max(best, int(np.abs(lv[found] - W.levels[found]).max()))
    return best


def check_sandwich_exact(W: WhitneyDecomposition) -> bool:
    """diam <= dist <= 4 diam for every selected cube, in exact integer units."""
    if len(W) == 0:
        return True
    thresh = W.dim * W.denom * W.denom
    d2 = np.rint(W.dist2_units)
    if (np.abs(d2 - W.dist2_units) > 0).any() and W.denom << W.k_max < (1 << 26):
        return False
    return bool(((d2 >= thresh) & (d2 <= 16 * thresh)).all())


def check_disjoint(W: WhitneyDecomposition) -> bool:
    """No selected cube contains another selected cube (dyadic cubes overlap only by nesting)."""
    d = W.dim
    seen: set = set()
    for k in range(W.k_max + 1):
        sl = W.level_slice(k)
        idx = W.index[sl]
        for row in idx:
            t = tuple(int(v) for v in row)
            for j in range(k + 1):
                anc = (j,) + tuple(v >> (k - j) for v in t)
                if anc in seen:
                    return False
        for row in idx:
            seen.add((k,) + tuple(int(v) for v in row))
    return True
