"""Parallel sets E_r, r-boundaries and the boundary/Whitney-count checks (d = 2).

Contours come from marching squares on an exact distance field, with
saddle cells decided by the exact distance at the cell centre. For sets
whose components are rectangles (points and segments included) whose
r-neighbourhoods do not interact, ``exact_boundary_length`` gives the
closed form: each component contributes its perimeter plus 2 pi r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .dimension import DimensionEstimate, fit_dimension, fit_two_term, DEFAULT_TAIL, resolution_level
from .distance import DistanceField, compute_distance_field, window_for_radius
from .errors import InsufficientDataError, NoOverlapError, ScaleTooFineError
from .geometry import Ball, BoxSet, dist_points_to_set, merged_boxes
from .whitney import WhitneyDecomposition, generation_counts, whitney_decompose

MATCH_FACTOR = 0.75
DEFAULT_RATIO_BOUND = 50.0
OP_C1_BOUND = 8.0
OP_C2_FACTOR = 8.0
LARGE_R_NODES = 1 << 10


# ---------------------------------------------------------------------------
# Volumes and contours
# ---------------------------------------------------------------------------


def _require_scale(field: DistanceField, r: float, factor: float, what: str) -> None:
    if r < factor * field.h * (1 - 1e-12):
        raise ScaleTooFineError(f"{what} needs r >= {factor:g} grid spacings (r={r:g}, h={field.h:g})")


def _check_window(field: DistanceField, r: float) -> None:
    v = field.values
    border = [v[0], v[-1]] if v.ndim == 1 else [v[0, :], v[-1, :], v[:, 0], v[:, -1]]
    if min(float(b.min()) for b in border) < r:
        raise ScaleTooFineError(f"the field window does not contain the r-neighbourhood for r={r:g}")


def neighborhood_volume(field: DistanceField, r: float) -> float:
    """Node-count volume of E_r: #(nodes with dist < r) * h^d."""
    _require_scale(field, r, 4, "neighbourhood volume")
    _check_window(field, r)
    return float(np.count_nonzero(field.values < r)) * field.h**field.dim


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """Marching-squares segments of {dist = r}, oriented with E_r on the left."""

    r: float
    p: np.ndarray  # (n, 2) segment starts
    q: np.ndarray  # (n, 2) segment ends
    total_length: float
    grid_level: int

    @property
    def segments(self) -> np.ndarray:
        return np.stack([self.p, self.q], axis=1)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.p + self.q)

    @property
    def lengths(self) -> np.ndarray:
        return np.sqrt(((self.q - self.p) ** 2).sum(axis=1))


@nb.njit(cache=True)
def _ms_code(V, i, j, r):
    c = 0
    if V[i, j] < r:
        c |= 1
    if V[i + 1, j] < r:
        c |= 2
    if V[i + 1, j + 1] < r:
        c |= 4
    if V[i, j + 1] < r:
        c |= 8
    return c


@nb.njit(cache=True)
def _ms_scan(V, r):
    """Segment count and the linear indices of saddle cells, in scan order."""
    nx, ny = V.shape
    count = 0
    nsad = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = _ms_code(V, i, j, r)
            if c == 5 or c == 10:
                count += 2
                nsad += 1
            elif c != 0 and c != 15:
                count += 1
    sad = np.empty(nsad, dtype=np.int64)
    t = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = _ms_code(V, i, j, r)
            if c == 5 or c == 10:
                sad[t] = i * (ny - 1) + j
                t += 1
    return count, sad


@nb.njit(cache=True)
def _edge_point(V, i, j, e, r, ox, oy, h):
    # edges: 0 bottom (i,j)-(i+1,j), 1 right (i+1,j)-(i+1,j+1), 2 top (i,j+1)-(i+1,j+1), 3 left (i,j)-(i,j+1)
    if e == 0:
        a, b = V[i, j], V[i + 1, j]
        t = (r - a) / (b - a)
        return ox + (i + t) * h, oy + j * h
    if e == 1:
        a, b = V[i + 1, j], V[i + 1, j + 1]
        t = (r - a) / (b - a)
        return ox + (i + 1) * h, oy + (j + t) * h
    if e == 2:
        a, b = V[i, j + 1], V[i + 1, j + 1]
        t = (r - a) / (b - a)
        return ox + (i + t) * h, oy + (j + 1) * h
    a, b = V[i, j], V[i, j + 1]
    t = (r - a) / (b - a)
    return ox + i * h, oy + (j + t) * h


@nb.njit(cache=True)
def _emit(V, i, j, ea, eb, cx, cy, inside, r, ox, oy, h, P, Q, n):
    """Write segment between edges ea, eb; (cx, cy) is a corner whose status is ``inside``."""
    px, py = _edge_point(V, i, j, ea, r, ox, oy, h)
    qx, qy = _edge_point(V, i, j, eb, r, ox, oy, h)
    cross = (qx - px) * (cy - py) - (qy - py) * (cx - px)
    if (cross > 0) != inside:
        px, py, qx, qy = qx, qy, px, py
    P[n, 0] = px
    P[n, 1] = py
    Q[n, 0] = qx
    Q[n, 1] = qy


@nb.njit(cache=True)
def _ms_emit(V, r, ox, oy, h, sad_inside, P, Q):
    nx, ny = V.shape
    n = 0
    s = 0
    for i in range(nx - 1):
        for j in range(ny - 1):
            c = _ms_code(V, i, j, r)
            if c == 0 or c == 15:
                continue
            x0 = ox + i * h
            y0 = oy + j * h
            x1 = x0 + h
            y1 = y0 + h
            if c == 5 or c == 10:
                cin = sad_inside[s]
                s += 1
                # corners: b0 (x0,y0) between edges 3,0; b1 (x1,y0) 0,1; b2 (x1,y1) 1,2; b3 (x0,y1) 2,3
                cut_b0_b2 = (c == 5) != cin  # cut corners b0 and b2 off, else b1 and b3
                if cut_b0_b2:
                    in02 = c == 5
                    _emit(V, i, j, 3, 0, x0, y0, in02, r, ox, oy, h, P, Q, n)
                    _emit(V, i, j, 1, 2, x1, y1, in02, r, ox, oy, h, P, Q, n + 1)
                else:
                    in13 = c == 10
                    _emit(V, i, j, 0, 1, x1, y0, in13, r, ox, oy, h, P, Q, n)
                    _emit(V, i, j, 2, 3, x0, y1, in13, r, ox, oy, h, P, Q, n + 1)
                n += 2
                continue
            b0 = (c & 1) != 0
            b1 = (c & 2) != 0
            b2 = (c & 4) != 0
            b3 = (c & 8) != 0
            ea = -1
            eb = -1
            for e, cr in ((0, b0 != b1), (1, b1 != b2), (2, b3 != b2), (3, b0 != b3)):
                if cr:
                    if ea < 0:
                        ea = e
                    else:
                        eb = e
            # reference corner: any inside corner (all inside corners lie on one side)
            if b0:
                cx, cy = x0, y0
            elif b1:
                cx, cy = x1, y0
            elif b2:
                cx, cy = x1, y1
            else:
                cx, cy = x0, y1
            _emit(V, i, j, ea, eb, cx, cy, True, r, ox, oy, h, P, Q, n)
            n += 1


def extract_boundary(field: DistanceField, r: float) -> BoundaryCurve:
    """Marching-squares contour of the field at iso-value r (d = 2)."""
    if field.dim != 2:
        raise NotImplementedError("boundary extraction is implemented for d = 2")
    _require_scale(field, r, 8, "boundary extraction")
    V = field.values
    h = field.h
    ox, oy = field.origin
    if r >= float(V.max()):
        empty = np.empty((0, 2))
        return BoundaryCurve(r, empty, empty, 0.0, field.grid_level)
    _check_window(field, r)
    count, sad = _ms_scan(V, r)
    if len(sad):
        ny1 = V.shape[1] - 1
        ci, cj = sad // ny1, sad % ny1
        centers = np.stack([ox + (ci + 0.5) * h, oy + (cj + 0.5) * h], axis=1)
        sad_inside = dist_points_to_set(centers, field.source) < r
    else:
        sad_inside = np.zeros(0, dtype=np.bool_)
    P = np.empty((count, 2))
    Q = np.empty((count, 2))
    _ms_emit(V, r, float(ox), float(oy), h, sad_inside, P, Q)
    length = float(np.sqrt(((Q - P) ** 2).sum(axis=1)).sum())
    return BoundaryCurve(r, P, Q, length, field.grid_level)


# ---------------------------------------------------------------------------
# Exact lengths for separated rectangular components
# ---------------------------------------------------------------------------


@nb.njit(cache=True)
def _close_pairs(lo, hi, reach):
    """Pairs (i, j), i < j, of boxes (sorted by lo[:, 0]) with gap <= reach; also their squared gaps."""
    n = lo.shape[0]
    cap = 4 * n + 16
    pi = np.empty(cap, dtype=np.int64)
    pj = np.empty(cap, dtype=np.int64)
    pg = np.empty(cap)
    m = 0
    for i in range(n):
        for j in range(i + 1, n):
            if lo[j, 0] > hi[i, 0] + reach:
                break
            g2 = 0.0
            for t in range(lo.shape[1]):
                g = max(lo[j, t] - hi[i, t], lo[i, t] - hi[j, t], 0.0)
                g2 += g * g
            if g2 <= reach * reach:
                if m == cap:
                    cap *= 2
                    pi2 = np.empty(cap, dtype=np.int64)
                    pj2 = np.empty(cap, dtype=np.int64)
                    pg2 = np.empty(cap)
                    pi2[:m] = pi[:m]
                    pj2[:m] = pj[:m]
                    pg2[:m] = pg[:m]
                    pi, pj, pg = pi2, pj2, pg2
                pi[m] = i
                pj[m] = j
                pg[m] = g2
                m += 1
    return pi[:m], pj[:m], pg[:m]


def _components(n: int, pi: np.ndarray, pj: np.ndarray) -> np.ndarray:
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    g = coo_matrix((np.ones(len(pi)), (pi, pj)), shape=(n, n))
    return connected_components(g, directed=False)[1]


def exact_boundary_length(E: BoxSet, r: float) -> float:
    """H^1 of the r-boundary when components are rectangles at mutual distance >= 2r.

    Raises NotImplementedError when a component is not a rectangle or two
    components have interacting r-neighbourhoods.
    """
    if E.dim != 2:
        raise NotImplementedError("exact boundary length is implemented for d = 2")
    M = merged_boxes(E)
    order = np.lexsort(M.lo.T[::-1])
    lo_i, hi_i = M.lo[order], M.hi[order]
    lo, hi = lo_i / M.denom, hi_i / M.denom
    reach = 2.0 * r
    pi, pj, pg = _close_pairs(lo, hi, reach)
    touching = pg == 0.0
    if (pg[~touching] < reach * reach * (1 - 1e-12)).any():
        raise NotImplementedError("r-neighbourhoods of distinct components interact")
    labels = _components(len(lo), pi[touching], pj[touching])
    nc = int(labels.max()) + 1
    blo = np.full((nc, 2), np.iinfo(np.int64).max, dtype=np.int64)
    bhi = np.full((nc, 2), np.iinfo(np.int64).min, dtype=np.int64)
    for t in range(2):
        np.minimum.at(blo[:, t], labels, lo_i[:, t])
        np.maximum.at(bhi[:, t], labels, hi_i[:, t])
    area = np.zeros(nc, dtype=object)
    sizes = hi_i - lo_i
    np.add.at(area, labels, (sizes[:, 0].astype(object) * sizes[:, 1].astype(object)))
    bbox_area = (bhi - blo)[:, 0].astype(object) * (bhi - blo)[:, 1].astype(object)
    multi = np.bincount(labels, minlength=nc) > 1
    if multi.any() and (area[multi] != bbox_area[multi]).any():
        raise NotImplementedError("a component is not a rectangle")
    per = 2.0 * ((bhi - blo) / M.denom).sum(axis=1)
    return float(per.sum() + nc * 2.0 * math.pi * r)


# ---------------------------------------------------------------------------
# Fields for arbitrary radii
# ---------------------------------------------------------------------------


def unit_field(E: BoxSet, K: int) -> DistanceField:
    key = ("field", K)
    if key not in E._cache:
        E._cache[key] = compute_distance_field(E, K)
    return E._cache[key]


def field_for_radius(E: BoxSet, r: float, K: int) -> DistanceField:
    """The unit-window field when it contains E_r, else a windowed field with h <= r / LARGE_R_NODES."""
    lo, hi = E.lo_f.min(axis=0), E.hi_f.max(axis=0)
    h = 2.0**-K
    if (lo - r - 2 * h > 0).all() and (hi + r + 2 * h < 1).all():
        return unit_field(E, K)
    Kr = min(K, max(4, int(math.ceil(math.log2(LARGE_R_NODES / r)))))
    origin, extent = window_for_radius(E, r, Kr)
    key = ("wfield", Kr, origin, extent)
    if key not in E._cache:
        E._cache[key] = compute_distance_field(E, Kr, origin, extent)
    return E._cache[key]


def boundary_length(E: BoxSet, r: float, K: int = 11) -> float:
    return extract_boundary(field_for_radius(E, r, K), r).total_length


# ---------------------------------------------------------------------------
# Profiles and spherical dimensions
# ---------------------------------------------------------------------------


def parse_schedule(text: str) -> list[float]:
    """``geo:r0,ratio,n`` to [r0, r0*ratio, ..., r0*ratio^(n-1)]."""
    kind, _, args = text.partition(":")
    if kind != "geo":
        raise ValueError(f"unknown schedule kind {kind!r}")
    r0, ratio, n = args.split(",")
    return [float(r0) * float(ratio) ** i for i in range(int(n))]


def default_schedule(E: BoxSet, K: int, r_min: float | None = None) -> list[float]:
    """r_i = r0 2^(-i/2) from r0 = min(diam/2, 1/8) down to max(8h, r_min)."""
    diam = E.diam
    r0 = min(diam / 2, 0.125) if diam > 0 else 0.125
    lo = 8 * 2.0**-K
    if r_min is not None:
        lo = max(lo, r_min)
    out = []
    i = 0
    while True:
        r = r0 * 2.0 ** (-i / 2)
        if r < lo * (1 - 1e-12):
            break
        out.append(r)
        i += 1
    return out


def profile_floor(E: BoxSet) -> float | None:
    """Smallest radius at which a pre-fractal boundary still tracks its attractor."""
    res = resolution_level(E, "box")
    return None if res is None else 2.0**-res


def boundary_length_profile(E: BoxSet, r_schedule: Sequence[float] | None = None, K: int = 11) -> list[tuple]:
    """Rows (r, length, volume) in descending r."""
    if r_schedule is None:
        r_schedule = default_schedule(E, K, profile_floor(E))
    rows = []
    for r in sorted(r_schedule, reverse=True):
        f = field_for_radius(E, r, K)
        rows.append((float(r), extract_boundary(f, r).total_length, neighborhood_volume(f, r)))
    return rows


def fit_length_profile(rows: Sequence[tuple], d: int = 2):
    """Two-term fit length ~ A r^(-beta) + B r^(d-1) in x = log2(1/r); spherical exponent = beta + d - 1."""
    rs = np.array([row[0] for row in rows])
    L = np.array([row[1] for row in rows])
    return fit_two_term(-np.log2(rs), L, g=-(d - 1), poisson=False, max_slope=1.0)


def profile_slope(rows: Sequence[tuple], d: int = 2) -> float:
    """Fitted exponent of length in r (d - 1 - spherical exponent)."""
    return -fit_length_profile(rows, d).s


@dataclass
class SphericalDims:
    boundary_lower: DimensionEstimate
    boundary_upper: DimensionEstimate
    whitney_lower: DimensionEstimate
    whitney_upper: DimensionEstimate

    @property
    def discrepancy(self) -> float:
        return max(
            abs(self.boundary_lower.value - self.whitney_lower.value),
            abs(self.boundary_upper.value - self.whitney_upper.value),
        )

    def estimates(self) -> list[DimensionEstimate]:
        return [self.boundary_lower, self.boundary_upper, self.whitney_lower, self.whitney_upper]


def spherical_dims(
    E: BoxSet,
    rows: Sequence[tuple] | None = None,
    W: WhitneyDecomposition | None = None,
    k_max: int = 12,
    K: int = 11,
    tail: int = DEFAULT_TAIL,
    window: tuple | None = None,
) -> SphericalDims:
    """Method A from boundary lengths, method B from Whitney counts."""
    d = E.dim
    if rows is None:
        rows = boundary_length_profile(E, None, K)
    fit = fit_length_profile(rows, d)
    xs, e = fit.pointwise()
    if len(e) == 0:
        raise InsufficientDataError("no usable boundary exponents")
    order = np.argsort(xs)
    xs, e = xs[order][-tail:], e[order][-tail:]
    # e = spherical exponent - (d - 1) at scale 2^-x
    win = (float(min(r[0] for r in rows)), float(max(r[0] for r in rows)))
    meta = {"fit_A": fit.A, "fit_beta": fit.s, "fit_B": fit.B}
    iu, il = int(np.argmax(e)), int(np.argmin(e))
    up_a = DimensionEstimate(float(e[iu] + d - 1), "upper", "spherical", win, fit.residual, len(rows), {"r": float(2.0 ** -xs[iu])}, dict(meta, source="boundary"))
    lo_a = DimensionEstimate(float(e[il] + d - 1), "lower", "spherical", win, fit.residual, len(rows), {"r": float(2.0 ** -xs[il])}, dict(meta, source="boundary"))
    if W is None:
        W = whitney_decompose(E, k_max)
    from .dimension import default_window

    counts = generation_counts(W)
    window = window or default_window(E, W.k_max, "whitney")
    up_b = fit_dimension(counts, window, "upper", tail, "spherical")
    lo_b = fit_dimension(counts, window, "lower", tail, "spherical")
    up_b.meta["source"] = lo_b.meta["source"] = "whitney"
    return SphericalDims(lo_a, up_a, lo_b, up_b)


# ---------------------------------------------------------------------------
# Sandwich between boundary length and Whitney counts
# ---------------------------------------------------------------------------


@dataclass
class SandwichReport:
    rows: list  # (k, r, length, W_k, W_sum, lower_ratio, upper_ratio)
    offsets: tuple
    c_hat: float
    C_hat: float
    bound: float
    searched: list = field(default_factory=list)  # (offset, ratio) pairs

    @property
    def ratio(self) -> float:
        return self.C_hat / self.c_hat if self.c_hat > 0 else math.inf

    @property
    def passed(self) -> bool:
        positive = all(row[5] > 0 for row in self.rows if row[3] > 0)
        return positive and self.c_hat > 0 and math.isfinite(self.C_hat) and self.ratio <= self.bound

    def as_record(self) -> dict:
        return {
            "offsets": list(self.offsets),
            "c_hat": self.c_hat,
            "C_hat": self.C_hat,
            "ratio": self.ratio,
            "bound": self.bound,
            "passed": self.passed,
            "rows": [list(r) for r in self.rows],
            "searched": [list(s) for s in self.searched],
            "constants": "fitted regression guards",
        }


def _sandwich_rows(lengths: dict, counts: dict, d: int, a: int, b: int, ks: Sequence[int]) -> list:
    rows = []
    for k in ks:
        r, L = lengths[k]
        if any(j not in counts for j in range(k + a, k + b + 1)):
            continue
        wk = counts.get(k, 0)
        ws = sum(counts[j] for j in range(k + a, k + b + 1))
        lower = L / (r ** (d - 1) * wk) if wk > 0 else math.inf
        upper = L / (r ** (d - 1) * ws) if ws > 0 else (math.inf if L > 0 else 0.0)
        rows.append((k, r, L, wk, ws, lower, upper))
    return rows


def sandwich_check(
    E: BoxSet,
    offsets: tuple = (2, 4),
    W: WhitneyDecomposition | None = None,
    k_max: int = 12,
    K: int = 11,
    search: int = 0,
    bound: float = DEFAULT_RATIO_BOUND,
    k_window: tuple | None = None,
    match: float = MATCH_FACTOR,
    min_rows: int = 3,
) -> SandwichReport:
    """Ratios of length(r_k) to r_k^(d-1) #W_k and to r_k^(d-1) sum_{j=k+a..k+b} #W_j at r_k = match 2^-k."""
    if W is None:
        W = whitney_decompose(E, k_max)
    counts = generation_counts(W).counts
    d = E.dim
    h = 2.0**-K
    k_lo, k_hi = k_window if k_window is not None else (3, W.k_max - 1)
    ks = [k for k in range(k_lo, k_hi + 1) if match * 2.0**-k >= 8 * h * (1 - 1e-12)]
    floor = profile_floor(E)
    if floor is not None:
        ks = [k for k in ks if match * 2.0**-k >= floor]
    if not ks:
        raise NoOverlapError("no generation has a resolvable matched radius")
    lengths = {}
    for k in ks:
        r = match * 2.0**-k
        lengths[k] = (r, boundary_length(E, r, K))
    best = None
    searched = []
    shifts = range(-search, search + 1) if search else [0]
    for o in shifts:
        a, b = offsets[0] + o, offsets[1] + o
        rows = _sandwich_rows(lengths, counts, d, a, b, ks)
        rows = [row for row in rows if row[3] > 0 or row[4] > 0]
        if len(rows) < min_rows:
            continue
        c_hat = min(row[5] for row in rows)
        C_hat = max(row[6] for row in rows)
        ratio = C_hat / c_hat if c_hat > 0 else math.inf
        searched.append((o, ratio))
        if best is None or ratio < best[0] or (ratio == best[0] and abs(o) < abs(best[1])):
            best = (ratio, o, rows, c_hat, C_hat)
    if best is None:
        raise NoOverlapError("boundary scales and generations do not overlap")
    _, o, rows, c_hat, C_hat = best
    return SandwichReport(rows, (offsets[0] + o, offsets[1] + o), c_hat, C_hat, bound, searched)


# ---------------------------------------------------------------------------
# Per-cube checks
# ---------------------------------------------------------------------------


def _cell_lengths(curve: BoundaryCurve, level: int) -> dict:
    """Boundary length inside each level cell of [0,1]^2 (segments never cross grid lines)."""
    n = 1 << level
    mid = curve.midpoints
    idx = np.floor(mid * n).astype(np.int64)
    ok = ((idx >= 0) & (idx < n)).all(axis=1)
    lin = idx[ok, 0] * n + idx[ok, 1]
    keys, inv = np.unique(lin, return_inverse=True)
    sums = np.bincount(inv, weights=curve.lengths[ok])
    return dict(zip(keys.tolist(), sums.tolist()))


def _dense_cell_lengths(curve: BoundaryCurve, level: int) -> np.ndarray:
    n = 1 << level
    out = np.zeros((n, n))
    for key, v in _cell_lengths(curve, level).items():
        out[key // n, key % n] = v
    return out


@dataclass
class PerCubeReport:
    r: float
    matched_level: int
    upper_C: float  # max over cubes of clipped length / side
    lower_c: float  # min over matched cubes of length in 8B / r
    cubes_upper: int
    cubes_lower: int
    upper_bound: float | None
    lower_bound: float | None

    @property
    def passed(self) -> bool:
        ok = self.lower_c > 0
        if self.upper_bound is not None:
            ok &= self.upper_C <= self.upper_bound
        if self.lower_bound is not None:
            ok &= self.lower_c >= self.lower_bound
        return bool(ok)

    def as_record(self) -> dict:
        return {
            "r": self.r,
            "matched_level": self.matched_level,
            "upper_C": self.upper_C,
            "lower_c": self.lower_c,
            "cubes_upper": self.cubes_upper,
            "cubes_lower": self.cubes_lower,
            "passed": self.passed,
            "constants": "fitted regression guards",
        }


def per_cube_boundary_checks(
    E: BoxSet,
    r: float,
    W: WhitneyDecomposition | None = None,
    k_max: int = 12,
    K: int = 11,
    upper_bound: float | None = None,
    lower_bound: float | None = None,
) -> PerCubeReport:
    """Clipped length in each cube <= C side (all levels); length in 8B >= c r (matched level)."""
    if E.dim != 2:
        raise NotImplementedError("per-cube checks are implemented for d = 2")
    if W is None:
        W = whitney_decompose(E, k_max)
    curve = extract_boundary(field_for_radius(E, r, K), r)
    k = int(math.floor(math.log2(1.0 / r)))  # 2^-k-1 < r <= 2^-k
    upper_C = 0.0
    n_up = 0
    for lev in np.unique(W.levels):
        lev = int(lev)
        if lev > K:
            continue
        sl = W.level_slice(lev)
        idx = W.index[sl]
        if len(idx) == 0:
            continue
        cells = _cell_lengths(curve, lev)
        lin = (idx[:, 0] << lev) + idx[:, 1]
        vals = np.array([cells.get(int(v), 0.0) for v in lin])
        upper_C = max(upper_C, float(vals.max()) * (1 << lev))
        n_up += len(idx)
    sl = W.level_slice(k)
    idx = W.index[sl]
    lower_c = math.inf
    if len(idx):
        fine = _dense_cell_lengths(curve, k + 1)
        n = fine.shape[0]
        pref = np.zeros((n + 1, n + 1))
        pref[1:, 1:] = fine.cumsum(0).cumsum(1)
        # 8B spans level-(k+1) cells [2i-7, 2i+9) per axis
        a = np.clip(2 * idx - 7, 0, n)
        b = np.clip(2 * idx + 9, 0, n)
        s8 = pref[b[:, 0], b[:, 1]] - pref[a[:, 0], b[:, 1]] - pref[b[:, 0], a[:, 1]] + pref[a[:, 0], a[:, 1]]
        lower_c = float(s8.min()) / r
    return PerCubeReport(r, k, upper_C, lower_c if math.isfinite(lower_c) else 0.0, n_up, len(idx), upper_bound, lower_bound)


# ---------------------------------------------------------------------------
# Large- and small-radius bounds, regular sets, local profiles
# ---------------------------------------------------------------------------


@dataclass
class OleksivPesinReport:
    C1: float  # max length / r over r > diam
    C2: float  # max r * length over r <= diam
    C2_bound: float
    rows: list
    C1_bound: float = OP_C1_BOUND

    @property
    def passed(self) -> bool:
        return self.C1 <= self.C1_bound and self.C2 <= self.C2_bound

    def as_record(self) -> dict:
        return {
            "C1": self.C1,
            "C1_bound": self.C1_bound,
            "C2": self.C2,
            "C2_bound": self.C2_bound,
            "passed": self.passed,
            "rows": [list(r) for r in self.rows],
        }


def default_op_schedule(E: BoxSet, K: int) -> list[float]:
    """Small radii 2^-j in [max(8h, floor), diam] plus 2 diam and 4 diam (or 1/64..1/8 for a point)."""
    diam = E.diam
    if diam == 0:
        return [2.0**-j for j in range(3, 7)]
    lo = max(8 * 2.0**-K, profile_floor(E) or 0.0)
    small = [2.0**-j for j in range(1, K) if lo <= 2.0**-j <= diam]
    return small + [2 * diam, 4 * diam]


def oleksiv_pesin_check(E: BoxSet, r_schedule: Sequence[float] | None = None, K: int = 11) -> OleksivPesinReport:
    """length(r) <= C1 r for r > diam(E) (large radii taken at r >= 2 diam) and r length(r) bounded below diam.

    The small-radius bound is OP_C2_FACTOR (diam + r)^2, a regression guard.
    """
    diam = E.diam
    if r_schedule is None:
        r_schedule = default_op_schedule(E, K)
    rows = []
    C1, C2, C2b = 0.0, 0.0, 0.0
    for r in sorted(r_schedule):
        L = boundary_length(E, r, K)
        rows.append((float(r), L))
        if r > diam:
            C1 = max(C1, L / r)
        else:
            C2 = max(C2, r * L)
            C2b = max(C2b, OP_C2_FACTOR * (diam + r) ** 2)
    if C2b == 0.0:
        C2b = math.inf
    return OleksivPesinReport(C1, C2, C2b, rows)


@dataclass
class RegularLawReport:
    s: float
    band_ratio: float
    bound: float
    rows: list  # (r, length, length * r^(s+1-d))

    @property
    def passed(self) -> bool:
        return self.band_ratio <= self.bound

    def as_record(self) -> dict:
        return {"s": self.s, "band_ratio": self.band_ratio, "bound": self.bound, "passed": self.passed, "rows": [list(r) for r in self.rows]}


def regular_law_check(
    E: BoxSet, s: float | None = None, r_range: tuple = (2.0**-9, 2.0**-4), K: int = 12, bound: float = 10.0
) -> RegularLawReport:
    """Band of length(r) r^(s+1-d) over r = 2^-j (and half steps) in r_range."""
    if s is None:
        s = E.meta.get("similarity_dim")
        if s is None:
            raise InsufficientDataError("no known similarity dimension")
    d = E.dim
    j0, j1 = -math.log2(r_range[1]), -math.log2(r_range[0])
    rs = [2.0 ** -(j0 + i / 2) for i in range(int(round(2 * (j1 - j0))) + 1)]
    rows = []
    for r in rs:
        L = boundary_length(E, r, K)
        rows.append((r, L, L * r ** (s + 1 - d)))
    vals = [row[2] for row in rows]
    return RegularLawReport(float(s), max(vals) / min(vals), bound, rows)


def _disc_clip_lengths(p: np.ndarray, q: np.ndarray, c: np.ndarray, R: float) -> np.ndarray:
    """Length of each segment inside the open disc B(c, R)."""
    d = q - p
    f = p - c
    a = (d * d).sum(axis=1)
    b = 2 * (f * d).sum(axis=1)
    cc = (f * f).sum(axis=1) - R * R
    disc = b * b - 4 * a * cc
    out = np.zeros(len(p))
    ok = (disc > 0) & (a > 0)
    sq = np.sqrt(disc[ok])
    t0 = np.clip((-b[ok] - sq) / (2 * a[ok]), 0, 1)
    t1 = np.clip((-b[ok] + sq) / (2 * a[ok]), 0, 1)
    out[ok] = (t1 - t0) * np.sqrt(a[ok])
    return out


def local_boundary_profile(
    E: BoxSet, B0: Ball, r_schedule: Sequence[float] | None = None, K: int = 11
) -> DimensionEstimate:
    """Exponent lambda in length(boundary in B0) / r^(d-1) ~ (r/R)^(-lambda).

    Fitted with the same two-term law as the global profile, so a point-like
    cap (a segment end inside B0) does not bias the exponent.
    """
    if E.dim != 2:
        raise NotImplementedError("local profiles are implemented for d = 2")
    R = B0.radius
    c = np.asarray(B0.center, dtype=float)
    if r_schedule is None:
        lo = max(8 * 2.0**-K, profile_floor(E) or 0.0)
        r_schedule = [R * 2.0 ** (-j / 2) for j in range(4, 40) if R * 2.0 ** (-j / 2) >= lo]
    rows = []
    for r in r_schedule:
        curve = extract_boundary(field_for_radius(E, r, K), r)
        L = float(_disc_clip_lengths(curve.p, curve.q, c, R).sum())
        if L > 0:
            rows.append((r, L))
    if len(rows) < 3:
        raise InsufficientDataError("too few radii with boundary inside the ball")
    fit = fit_length_profile(rows, E.dim)
    win = (float(min(r_schedule)), float(max(r_schedule)))
    lam = fit.s + E.dim - 1
    return DimensionEstimate(float(lam), "slope", "local-boundary", win, fit.residual, len(rows), {"center": c.tolist(), "R": R}, {"fit_B": fit.B})


# ---------------------------------------------------------------------------
# Thick-Cantor stage-local mechanism
# ---------------------------------------------------------------------------


@dataclass
class ThickCantorReport:
    stage: int
    closed_form_ok: bool
    checks: dict
    ratios: list  # (r, length, length / (count * ell))
    box_exponent: float
    box_window: tuple
    ratio_range: tuple = (0.1, 10.0)
    box_min: float = 1.8

    @property
    def passed(self) -> bool:
        lo, hi = self.ratio_range
        return self.closed_form_ok and all(lo <= q <= hi for _, _, q in self.ratios) and self.box_exponent >= self.box_min

    def as_record(self) -> dict:
        return {
            "stage": self.stage,
            "closed_form_ok": self.closed_form_ok,
            "checks": self.checks,
            "ratios": [list(r) for r in self.ratios],
            "box_exponent": self.box_exponent,
            "box_window": list(self.box_window),
            "passed": self.passed,
        }


def thick_cantor_check(params, stage: int | None = None, bits: int = 28) -> ThickCantorReport:
    """Exact stage scalars, exact boundary lengths at r in {d_j, d_j/2}, and the box exponent above D_j."""
    from fractions import Fraction

    from .dimension import box_counts
    from .setgen import closed_form_ell, thick_cantor_generate

    inst = thick_cantor_generate(params)
    j = stage if stage is not None else max(i for i in range(2, params.J + 1, 2))
    st = inst.stage(j)
    total = sum(params.n[:j])
    lam_inv = 1 / float(params.lam(j))
    checks = {
        "count": st.count == 4**total,
        "ell": st.ell == closed_form_ell(params, j),
        "D_is_min_gap": st.gap_min is not None and st.gap_min == st.D,
        "d": st.d == min(float(st.D) / 3, (st.count * float(st.ell)) ** (-1 / (params.s[j - 1] - 1))),
        "D_formula": abs(float(st.D) - float(st.ell) * (lam_inv - 2)) <= 1e-15,
    }
    for i in range(1, params.J + 1, 2):
        prev, cur = inst.stage(i - 1), inst.stage(i)
        checks[f"odd_stage_{i}_union"] = Fraction(cur.count) * _surd_sq(cur.ell) == Fraction(prev.count) * _surd_sq(prev.ell)
    E = inst.to_boxset(j, bits)
    ell = float(st.ell)
    ratios = []
    for r in (st.d, st.d / 2):
        L = exact_boundary_length(E, r)
        ratios.append((float(r), L, L / (st.count * ell)))
    # odd-stage scales: from the side of stage j-2 to one level below the side of stage j-1,
    # where the set is indistinguishable from the solid union of stage j-1
    k_lo = int(round(math.log2(1.0 / float(inst.stage(j - 2).ell))))
    k_hi = int(math.floor(math.log2(1.0 / float(inst.stage(j - 1).ell)) + 1e-9)) + 1
    counts = box_counts(E, k_lo, k_hi)
    est = fit_dimension(counts, (k_lo, k_hi), "slope", method="box")
    return ThickCantorReport(j, all(checks.values()), checks, ratios, est.value, (k_lo, k_hi))


def _surd_sq(v):
    from fractions import Fraction

    sq = v * v
    if not sq.is_rational():
        return None
    return Fraction(sq.c[0])
