"""Exact primitive geometry: box sets, dyadic cubes, balls and distances.

A :class:`BoxSet` stores its boxes as integer numerators over one common
denominator, so membership, cell incidence and squared distances between
dyadic cubes and boxes can be decided in integer arithmetic. Floating point
views are derived on demand and cached.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import numba as nb
import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

from .errors import ConfigError, EmptySetError, FormatError, ResourceLimitError, check_cells

INT_LIMIT = 1 << 62


def _as_fraction(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise FormatError(f"not a rational: {value!r}") from exc
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    raise FormatError(f"coordinates must be rationals (int, Fraction or 'p/q'), got {value!r}")


class BoxSet:
    """A nonempty finite union of closed axis-aligned boxes in [0,1]^d.

    ``lo`` and ``side`` are ``(n, d)`` int64 arrays of numerators over
    ``denom``; a point is a box with zero side. Boxes are deduplicated and
    sorted lexicographically, and the representation is reduced, so two
    BoxSets built from the same boxes compare equal.
    """

    def __init__(self, lo, side, denom: int, meta: dict | None = None):
        lo = np.array(lo, dtype=np.int64, ndmin=2)
        side = np.array(side, dtype=np.int64, ndmin=2)
        denom = int(denom)
        if lo.size == 0:
            raise EmptySetError("a BoxSet needs at least one box")
        if lo.shape != side.shape:
            raise FormatError("lo and side must have the same shape")
        if lo.shape[1] not in (1, 2, 3):
            raise FormatError(f"unsupported ambient dimension {lo.shape[1]}")
        if denom <= 0:
            raise FormatError("denominator must be positive")
        if (side < 0).any():
            raise FormatError("box sides must be nonnegative")
        if (lo < 0).any() or ((lo + side) > denom).any():
            raise FormatError("every box must lie inside [0,1]^d")

        g = reduce(math.gcd, np.concatenate([lo.ravel(), side.ravel()]).tolist(), denom)
        if g > 1:
            lo, side, denom = lo // g, side // g, denom // g

        rows = np.concatenate([lo, side], axis=1)
        rows = np.unique(rows, axis=0)  # lexicographic order, duplicates removed
        d = lo.shape[1]
        self._lo = np.ascontiguousarray(rows[:, :d])
        self._side = np.ascontiguousarray(rows[:, d:])
        self._lo.setflags(write=False)
        self._side.setflags(write=False)
        self.denom = denom
        self.meta = dict(meta or {})
        self._cache: dict = {}

    # ------------------------------------------------------------------ basics
    @property
    def lo(self) -> np.ndarray:
        return self._lo

    @property
    def side(self) -> np.ndarray:
        return self._side

    @property
    def hi(self) -> np.ndarray:
        if "hi" not in self._cache:
            hi = self._lo + self._side
            hi.setflags(write=False)
            self._cache["hi"] = hi
        return self._cache["hi"]

    @property
    def dim(self) -> int:
        return self._lo.shape[1]

    def __len__(self) -> int:
        return self._lo.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, BoxSet):
            return NotImplemented
        return (
            self.denom == other.denom
            and self._lo.shape == other._lo.shape
            and bool((self._lo == other._lo).all())
            and bool((self._side == other._side).all())
        )

    def __hash__(self):
        return hash((self.denom, self._lo.tobytes(), self._side.tobytes()))

    def __repr__(self) -> str:
        return f"BoxSet(dim={self.dim}, boxes={len(self)}, denom={self.denom})"

    @property
    def lo_f(self) -> np.ndarray:
        if "lo_f" not in self._cache:
            self._cache["lo_f"] = self._lo / self.denom
        return self._cache["lo_f"]

    @property
    def hi_f(self) -> np.ndarray:
        if "hi_f" not in self._cache:
            self._cache["hi_f"] = self.hi / self.denom
        return self._cache["hi_f"]

    @property
    def normalized_flag(self) -> bool:
        """True when the union lies inside [1/4, 3/4]^d."""
        return bool((4 * self._lo >= self.denom).all() and (4 * self.hi <= 3 * self.denom).all())

    def box_fractions(self, i: int) -> tuple[tuple[Fraction, ...], tuple[Fraction, ...]]:
        lo = tuple(Fraction(int(v), self.denom) for v in self._lo[i])
        side = tuple(Fraction(int(v), self.denom) for v in self._side[i])
        return lo, side

    # ----------------------------------------------------------- construction
    @classmethod
    def from_fractions(cls, boxes: Iterable[tuple[Sequence, Sequence]], meta: dict | None = None) -> "BoxSet":
        parsed = [
            ([_as_fraction(v) for v in lo], [_as_fraction(v) for v in side]) for lo, side in boxes
        ]
        if not parsed:
            raise EmptySetError("a BoxSet needs at least one box")
        dims = {len(lo) for lo, _ in parsed} | {len(s) for _, s in parsed}
        if len(dims) != 1:
            raise FormatError("all boxes must have the same dimension")
        denom = 1
        for lo, side in parsed:
            for v in (*lo, *side):
                denom = math.lcm(denom, v.denominator)
        if denom >= INT_LIMIT:
            raise ResourceLimitError("common denominator does not fit in 63 bits")
        lo = [[int(v * denom) for v in lo] for lo, _ in parsed]
        side = [[int(v * denom) for v in side] for _, side in parsed]
        return cls(lo, side, denom, meta)

    @classmethod
    def point(cls, *coords, meta: dict | None = None) -> "BoxSet":
        return cls.from_fractions([(coords, [0] * len(coords))], meta)

    def normalize(self) -> "BoxSet":
        """Map [0,1]^d affinely onto [1/4,3/4]^d (x -> 1/4 + x/2)."""
        if self.denom * 4 >= INT_LIMIT:
            raise ResourceLimitError("denominator too large to normalize")
        meta = dict(self.meta)
        meta["normalization"] = {"scale": "1/2", "offset": "1/4"}
        return BoxSet(2 * self._lo + self.denom, 2 * self._side, 4 * self.denom, meta)

    def union(self, other: "BoxSet") -> "BoxSet":
        if other.dim != self.dim:
            raise FormatError("cannot unite sets of different dimension")
        denom = math.lcm(self.denom, other.denom)
        if denom >= INT_LIMIT:
            raise ResourceLimitError("common denominator does not fit in 63 bits")
        a, b = denom // self.denom, denom // other.denom
        lo = np.concatenate([self._lo * a, other._lo * b])
        side = np.concatenate([self._side * a, other._side * b])
        return BoxSet(lo, side, denom, {**other.meta, **self.meta})

    # ------------------------------------------------------------- measures
    def area(self) -> Fraction:
        """Exact Lebesgue measure of the union (boxes may overlap)."""
        if "area" in self._cache:
            return self._cache["area"]
        if _has_overlaps(self):
            value = _union_measure_sweep(self)
        else:
            prod = [math.prod(row) for row in self._side.tolist()]
            value = Fraction(sum(prod), self.denom ** self.dim)
        self._cache["area"] = value
        return value

    @property
    def diam(self) -> float:
        """Euclidean diameter of the union (the diameter of its corner hull)."""
        if "diam" not in self._cache:
            self._cache["diam"] = _diameter(self.corners_f())
        return self._cache["diam"]

    def corners_f(self) -> np.ndarray:
        d = self.dim
        pts = []
        for mask in range(1 << d):
            sel = np.array([(mask >> a) & 1 for a in range(d)], dtype=bool)
            pts.append(np.where(sel, self.hi_f, self.lo_f))
        return np.unique(np.concatenate(pts), axis=0)

    # -------------------------------------------------------- spatial index
    @property
    def centers_f(self) -> np.ndarray:
        if "centers" not in self._cache:
            self._cache["centers"] = 0.5 * (self.lo_f + self.hi_f)
        return self._cache["centers"]

    @property
    def max_half_diag(self) -> float:
        if "hdiag" not in self._cache:
            self._cache["hdiag"] = float(0.5 * np.sqrt(((self.hi_f - self.lo_f) ** 2).sum(axis=1)).max())
        return self._cache["hdiag"]

    @property
    def tree(self) -> cKDTree:
        if "tree" not in self._cache:
            self._cache["tree"] = cKDTree(self.centers_f)
        return self._cache["tree"]


@nb.njit(cache=True)
def _interiors_overlap_sweep(lo, hi):
    """True if two boxes share interior points (lo sorted by first coordinate)."""
    n, d = lo.shape
    for i in range(n):
        j = i + 1
        while j < n and lo[j, 0] < hi[i, 0]:
            hit = True
            for a in range(1, d):
                if not (lo[j, a] < hi[i, a] and lo[i, a] < hi[j, a]):
                    hit = False
                    break
            if hit and lo[i, 0] < hi[i, 0] and lo[j, 0] < hi[j, 0]:
                return True
            j += 1
    return False


def _has_overlaps(E: BoxSet) -> bool:
    order = np.argsort(E.lo[:, 0], kind="stable")
    return bool(_interiors_overlap_sweep(E.lo[order], E.hi[order]))


def _union_measure_sweep(E: BoxSet) -> Fraction:
    """Exact union measure by coordinate compression (used only for overlapping boxes)."""
    d = E.dim
    if d == 1:
        iv = sorted(zip(E.lo[:, 0].tolist(), E.hi[:, 0].tolist()))
        total, cur_lo, cur_hi = 0, None, None
        for a, b in iv:
            if cur_hi is None or a > cur_hi:
                if cur_hi is not None:
                    total += cur_hi - cur_lo
                cur_lo, cur_hi = a, b
            else:
                cur_hi = max(cur_hi, b)
        total += cur_hi - cur_lo
        return Fraction(total, E.denom)
    xs = np.unique(np.concatenate([E.lo[:, 0], E.hi[:, 0]]))
    check_cells(len(xs) * len(E), "union-measure sweep")
    total = Fraction(0)
    for x0, x1 in zip(xs[:-1].tolist(), xs[1:].tolist()):
        active = (E.lo[:, 0] <= x0) & (E.hi[:, 0] >= x1)
        if not active.any():
            continue
        sub = BoxSet(E.lo[active][:, 1:], E.side[active][:, 1:], E.denom)
        total += Fraction(x1 - x0, E.denom) * _union_measure_sweep(sub)
    return total


def _diameter(points: np.ndarray) -> float:
    if len(points) == 1:
        return 0.0
    if points.shape[1] == 1:
        return float(points.max() - points.min())
    if len(points) > 64:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            # Degenerate (collinear / coplanar) corner cloud: extremes along the
            # principal direction contain the diameter pair.
            c = points - points.mean(axis=0)
            _, _, vt = np.linalg.svd(c, full_matrices=False)
            proj = c @ vt[0]
            points = points[[int(np.argmin(proj)), int(np.argmax(proj))]]
    diff = points[:, None, :] - points[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=-1)).max())


# ---------------------------------------------------------------------------
# Dyadic cubes and balls
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        n = 1 << self.level
        if any(i < 0 or i >= n for i in self.index):
            raise ValueError(f"index {self.index} outside [0, 2^{self.level})")

    @property
    def dim(self) -> int:
        return len(self.index)

    @property
    def side(self) -> float:
        return 2.0 ** -self.level

    @property
    def diam(self) -> float:
        return math.sqrt(self.dim) * self.side

    @property
    def lo(self) -> np.ndarray:
        return np.array(self.index, dtype=float) * self.side

    @property
    def hi(self) -> np.ndarray:
        return (np.array(self.index, dtype=float) + 1.0) * self.side

    @property
    def center(self) -> np.ndarray:
        return (np.array(self.index, dtype=float) + 0.5) * self.side

    def lo_fraction(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(i, 1 << self.level) for i in self.index)

    def children(self) -> list["DyadicCube"]:
        d = self.dim
        out = []
        for mask in range(1 << d):
            out.append(DyadicCube(self.level + 1, tuple(2 * i + ((mask >> a) & 1) for a, i in enumerate(self.index))))
        return out

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise ValueError("the unit cube has no parent")
        return DyadicCube(self.level - 1, tuple(i >> 1 for i in self.index))


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    def meets_boxes(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Vectorized test of which closed boxes meet this open ball."""
        c = np.asarray(self.center)
        gap = np.maximum(np.maximum(lo - c, 0.0), c - hi)
        return (gap**2).sum(axis=-1) < self.radius**2


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


def _box_gap2(qlo, qhi, blo, bhi):
    gap = np.maximum(np.maximum(blo - qhi, 0.0), qlo - bhi)
    return (gap**2).sum(axis=-1)


def _nearest_box_dist2(E: BoxSet, qlo: np.ndarray, qhi: np.ndarray) -> np.ndarray:
    """Squared distance from each query box [qlo,qhi] to E, pruned with a kd-tree."""
    qlo = np.atleast_2d(np.asarray(qlo, dtype=float))
    qhi = np.atleast_2d(np.asarray(qhi, dtype=float))
    if len(E) <= 64:
        return _box_gap2(qlo[:, None, :], qhi[:, None, :], E.lo_f[None], E.hi_f[None]).min(axis=1)
    centers = 0.5 * (qlo + qhi)
    qhalf = 0.5 * np.sqrt(((qhi - qlo) ** 2).sum(axis=1))
    _, nn = E.tree.query(centers)
    ub = np.sqrt(_box_gap2(qlo, qhi, E.lo_f[nn], E.hi_f[nn]))
    radius = ub + qhalf + E.max_half_diag
    radius = radius * (1 + 1e-12) + 1e-15
    lists = E.tree.query_ball_point(centers, radius)
    lens = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
    bi = np.fromiter((j for x in lists for j in x), dtype=np.int64, count=int(lens.sum()))
    qi = np.repeat(np.arange(len(lists)), lens)
    g2 = _box_gap2(qlo[qi], qhi[qi], E.lo_f[bi], E.hi_f[bi])
    out = np.full(len(lists), np.inf)
    np.minimum.at(out, qi, g2)
    return np.minimum(out, ub**2)


def dist_points_to_set(points, E: BoxSet) -> np.ndarray:
    """Euclidean distance from each row of ``points`` to the closed union E."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    if p.shape[1] != E.dim:
        raise ValueError(f"points have dimension {p.shape[1]}, set has {E.dim}")
    return np.sqrt(_nearest_box_dist2(E, p, p))


def dist_point_to_set(p, E: BoxSet) -> float:
    return float(dist_points_to_set(np.asarray(p, dtype=float)[None, :], E)[0])


def dist_box_to_set(Q: DyadicCube, E: BoxSet) -> float:
    return float(np.sqrt(_nearest_box_dist2(E, Q.lo[None], Q.hi[None])[0]))


def dist2_box_to_set_exact(Q: DyadicCube, E: BoxSet) -> Fraction:
    """Exact squared distance between a dyadic cube and E (integer arithmetic)."""
    k, D = Q.level, E.denom
    scale = 1 << k
    best = None
    for lo, hi in zip(E.lo.tolist(), E.hi.tolist()):
        s = 0
        for a, i in enumerate(Q.index):
            qlo, qhi = i * D, (i + 1) * D
            blo, bhi = lo[a] * scale, hi[a] * scale
            g = max(blo - qhi, qlo - bhi, 0)
            s += g * g
        if best is None or s < best:
            best = s
    return Fraction(best, (D * scale) ** 2)


# ---------------------------------------------------------------------------
# Grid nodes inside E and maximal packings
# ---------------------------------------------------------------------------


def grid_nodes_in_set(E: BoxSet, K: int) -> np.ndarray:
    """Integer indices of level-K grid nodes lying in the closed union E."""
    D = E.denom
    scale = 1 << K
    if D * scale >= INT_LIMIT:
        raise ResourceLimitError("grid level too fine for this set's denominator")
    lo = -((-E.lo * scale) // D)  # ceil
    hi = (E.hi * scale) // D
    counts = np.clip(hi - lo + 1, 0, None)
    total = int(counts.prod(axis=1).sum())
    check_cells(total, "grid nodes inside E")
    chunks = []
    for b in np.nonzero(counts.prod(axis=1) > 0)[0]:
        axes = [np.arange(lo[b, a], hi[b, a] + 1) for a in range(E.dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, E.dim)
        chunks.append(mesh)
    if not chunks:
        return np.empty((0, E.dim), dtype=np.int64)
    return np.unique(np.concatenate(chunks), axis=0)


def packing_candidates(E: BoxSet, r: float, K: int | None = None) -> np.ndarray:
    """Box corners plus level-K grid nodes in E (K chosen so 2^-K <= r/8), sorted lexicographically."""
    if K is None:
        K = max(0, math.ceil(math.log2(8.0 / r)))
    nodes = grid_nodes_in_set(E, K) / float(1 << K)
    pts = np.concatenate([E.corners_f(), nodes])
    pts = np.unique(pts, axis=0)
    return pts


def maximal_packing(E: BoxSet, r: float, candidates: np.ndarray | None = None) -> np.ndarray:
    """Greedy maximal r-packing of E over a lexicographically ordered candidate set.

    Selected centres are pairwise more than 2r apart and every candidate lies
    within 2r of a selected centre.
    """
    if not r > 0:
        raise ValueError("packing radius must be positive")
    if candidates is None:
        candidates = packing_candidates(E, r)
    else:
        candidates = np.unique(np.atleast_2d(np.asarray(candidates, dtype=float)), axis=0)
    check_cells(len(candidates), "packing candidates")
    cell = 2.0 * r
    buckets: dict[tuple[int, ...], list[int]] = {}
    chosen: list[np.ndarray] = []
    d = candidates.shape[1]
    offsets = np.stack(np.meshgrid(*([np.arange(-1, 2)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    for p in candidates:
        key = tuple(np.floor(p / cell).astype(np.int64))
        ok = True
        for off in offsets:
            for j in buckets.get(tuple(int(a + b) for a, b in zip(key, off)), ()):
                if np.sum((chosen[j] - p) ** 2) <= cell * cell:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            buckets.setdefault(key, []).append(len(chosen))
            chosen.append(p)
    return np.array(chosen).reshape(-1, d)


# ---------------------------------------------------------------------------
# Union-preserving box merging
# ---------------------------------------------------------------------------


def _merge_runs(lo: np.ndarray, hi: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Merge boxes that agree on every axis but ``axis`` and touch or overlap along it."""
    d = lo.shape[1]
    others = [a for a in range(d) if a != axis]
    keys = [lo[:, axis]] + [hi[:, a] for a in others[::-1]] + [lo[:, a] for a in others[::-1]]
    order = np.lexsort(keys)
    lo, hi = lo[order], hi[order]
    same = np.ones(len(lo), dtype=bool)
    same[0] = False
    for a in others:
        same[1:] &= (lo[1:, a] == lo[:-1, a]) & (hi[1:, a] == hi[:-1, a])
    # running max of hi within a group decides whether the next box starts a new run
    run_hi = hi[:, axis].copy()
    new = np.ones(len(lo), dtype=bool)
    cur = None
    for i in range(len(lo)):
        if same[i] and lo[i, axis] <= cur:
            new[i] = False
            cur = max(cur, hi[i, axis])
        else:
            cur = hi[i, axis]
        run_hi[i] = cur
    starts = np.nonzero(new)[0]
    ends = np.append(starts[1:], len(lo)) - 1
    out_lo = lo[starts].copy()
    out_hi = hi[starts].copy()
    out_hi[:, axis] = run_hi[ends]
    return out_lo, out_hi


def merged_boxes(E: BoxSet) -> BoxSet:
    """A BoxSet with the same union and (usually) far fewer boxes.

    Boxes sharing a cross-section are merged along each axis in turn; the
    result is exact and deterministic.
    """
    if "merged" in E._cache:
        return E._cache["merged"]
    lo, hi = E.lo.copy(), E.hi.copy()
    for _ in range(2):
        for axis in range(E.dim):
            lo, hi = _merge_runs(lo, hi, axis)
    out = BoxSet(lo, hi - lo, E.denom, E.meta) if len(lo) < len(E) else E
    E._cache["merged"] = out
    return out


# ---------------------------------------------------------------------------
# JSON persistence
# ---------------------------------------------------------------------------


def _frac_str(num: int, den: int) -> str:
    f = Fraction(int(num), int(den))
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def boxset_to_record(E: BoxSet) -> dict:
    """{"dim", "boxes": [{"lo": ["p/q", ...], "side": [...]}, ...], "meta"}."""
    boxes = [
        {"lo": [_frac_str(v, E.denom) for v in lo], "side": [_frac_str(v, E.denom) for v in side]}
        for lo, side in zip(E.lo.tolist(), E.side.tolist())
    ]
    return {"dim": E.dim, "boxes": boxes, "meta": E.meta}


def boxset_from_record(rec: dict) -> BoxSet:
    try:
        dim = int(rec["dim"])
        boxes = [([Fraction(v) for v in b["lo"]], [Fraction(v) for v in b["side"]]) for b in rec["boxes"]]
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise FormatError(f"malformed BoxSet record: {exc}") from exc
    if not boxes:
        raise EmptySetError("a BoxSet needs at least one box")
    if any(len(lo) != dim or len(side) != dim for lo, side in boxes):
        raise FormatError("box coordinates do not match the declared dimension")
    return BoxSet.from_fractions(boxes, rec.get("meta") or {})


def save_boxset(E: BoxSet, path) -> None:
    import json

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(boxset_to_record(E), fh, indent=1)
        fh.write("\n")


def load_boxset(path) -> BoxSet:
    import json

    try:
        with open(path, encoding="utf-8") as fh:
            rec = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"input file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    return boxset_from_record(rec)
