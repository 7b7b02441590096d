"""Dimension estimates from Whitney counts, box counts and two-scale counts.

Counts are fitted with the two-term expansion

    N_k ~ A * 2^(s k) + B,

in log space with inverse-variance (Poisson) weights. The constant B
absorbs zero-dimensional contributions (isolated points, segment ends)
and A the prefactor, so pure power laws and power law plus constant are
recovered exactly at any finite k. Pointwise exponents

    e_k = log2((N_k - B) / A) / k

have the same limsup/liminf as log2(N_k)/k; the upper and lower variants
are their max and min over the tail of the fit window.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np
from scipy.optimize import least_squares

from .distance import DistanceField
from .errors import InsufficientDataError, ScaleTooFineError, check_cells
from .geometry import BoxSet, INT_LIMIT, dist_points_to_set
from .whitney import GenerationCounts, WhitneyDecomposition, generation_counts, whitney_decompose

DEFAULT_TAIL = 4
ZERO_AREA_TOL = 2.0**-20
PERFECTNESS_GRID = (1.25, 1.5, 2.0, 3.0, 4.0, 8.0, 16.0, 32.0)


@dataclass
class DimensionEstimate:
    value: float
    variant: str  # upper | lower | slope
    method: str  # box | whitney | assouad-upper | assouad-lower | spherical | codim
    window: tuple
    residual: float
    samples: int
    witness: object = None
    meta: dict = field(default_factory=dict)

    def as_record(self) -> dict:
        rec = {
            "method": self.method,
            "variant": self.variant,
            "value": float(self.value),
            "window": [float(w) if isinstance(w, float) else int(w) for w in self.window],
            "residual": float(self.residual),
            "samples": int(self.samples),
        }
        if self.witness is not None:
            rec["witness"] = _plain(self.witness)
        if self.meta:
            rec["meta"] = _plain(self.meta)
        return rec


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    return obj


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountFit:
    """Fit of y(x) ~ A 2^(s x) + B 2^(g x) with a fixed subdominant exponent g <= s.

    Counts use x = k and g = 0; boundary lengths use x = log2(1/r) and
    g = -(d - 1), the exponent contributed by isolated points.
    """

    A: float
    s: float
    B: float
    ks: np.ndarray
    counts: np.ndarray
    residual: float
    g: float = 0.0

    def pointwise(self) -> tuple[np.ndarray, np.ndarray]:
        """Abscissae and exponents log2((y - B 2^(g x))/A)/x (nonpositive net values and x = 0 dropped)."""
        if self.A <= 0:
            ks = self.ks[self.ks != 0]
            return ks, np.full(len(ks), self.g)
        net = self.counts - self.B * np.exp2(self.g * self.ks)
        ok = (net > 0) & (self.ks != 0)
        e = np.log2(net[ok] / self.A) / self.ks[ok]
        return self.ks[ok], e


def fit_two_term(xs: Sequence, ys: Sequence, g: float = 0.0, poisson: bool = True, max_slope: float = 4.0) -> CountFit:
    """Log-space least squares for y ~ A 2^(s x) + B 2^(g x), s in [g, max_slope], A > 0, B >= 0.

    With ``poisson`` the residuals are weighted by sqrt(y), the inverse
    standard deviation of log y for counting data; otherwise unweighted.
    The pure power law (B = 0) is kept when it fits at least as well.
    """
    xs = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    keep = y > 0
    xs, y = xs[keep], y[keep]
    if len(xs) < 3:
        raise InsufficientDataError("at least 3 nonzero values are needed")
    logy = np.log2(y)
    w = np.sqrt(y / y.max()) if poisson else np.ones_like(y)
    basis = np.exp2(g * xs)
    if np.allclose(y / basis, y[0] / basis[0], rtol=1e-13, atol=0):
        return CountFit(0.0, g, float(y[0] / basis[0]), xs, y, 0.0, g)
    xc = xs - xs.mean()  # centred abscissae keep A well scaled
    gb = np.exp2(g * xc)
    s0, c0 = np.polyfit(xs, logy, 1, w=w)
    s0 = float(np.clip(s0, g, max_slope))
    a0 = float(np.average(logy - s0 * xc, weights=w**2))

    def resid(p):
        A, s, B = p
        return w * (np.log2(np.maximum(A * np.exp2(s * xc) + B * gb, 1e-300)) - logy)

    b_hi = float((y / gb).min())
    sol = least_squares(
        resid,
        [2.0**a0, s0, 0.0],
        bounds=([1e-300, g, 0.0], [np.inf, max_slope, b_hi]),
        method="trf",
        x_scale="jac",
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=2000,
    )
    sol_pl = least_squares(lambda p: w * (p[0] + p[1] * xc - logy), [a0, s0], method="lm", xtol=1e-14, ftol=1e-14)
    A, s, B = sol.x
    if float(np.sum(sol_pl.fun**2)) <= float(np.sum(sol.fun**2)) * (1 + 1e-12) and sol_pl.x[1] >= g:
        A, s, B = 2.0 ** sol_pl.x[0], sol_pl.x[1], 0.0
    res = resid([A, s, B])
    rms = float(np.sqrt(np.sum(res**2) / np.sum(w**2)))
    # undo the centring: A 2^(s (x - xbar)) = (A 2^(-s xbar)) 2^(s x), same for B
    shift = xs.mean()
    return CountFit(float(A * 2.0 ** (-s * shift)), float(s), float(B * 2.0 ** (-g * shift)), xs, y, rms, g)


def fit_counts(ks: Sequence, counts: Sequence, max_slope: float = 4.0) -> CountFit:
    """Two-term fit of counts N_k ~ A 2^(s k) + B with Poisson weights."""
    return fit_two_term(ks, counts, 0.0, True, max_slope)


def fit_dimension(
    counts: GenerationCounts,
    window: tuple | None = None,
    variant: str = "upper",
    tail: int = DEFAULT_TAIL,
    method: str | None = None,
) -> DimensionEstimate:
    """Upper/lower (tail max/min of pointwise exponents) or slope estimate from counts."""
    if variant not in ("upper", "lower", "slope"):
        raise ValueError(f"unknown variant {variant!r}")
    k_lo, k_hi = window if window is not None else counts.k_range
    ks = [k for k in sorted(counts.counts) if k_lo <= k <= k_hi]
    vals = [counts.counts[k] for k in ks]
    method = method or counts.kind
    nonzero = [v for v in vals if v > 0]
    if vals and not nonzero:
        return DimensionEstimate(0.0, variant, method, (k_lo, k_hi), 0.0, len(vals))
    fit = fit_counts(ks, vals)
    if variant == "slope":
        return DimensionEstimate(fit.s, variant, method, (k_lo, k_hi), fit.residual, len(fit.ks), meta=_fit_meta(fit))
    kk, e = fit.pointwise()
    if len(e) == 0:
        raise InsufficientDataError("no usable pointwise exponents")
    kk, e = kk[-tail:], e[-tail:]
    i = int(np.argmax(e)) if variant == "upper" else int(np.argmin(e))
    return DimensionEstimate(
        float(e[i]), variant, method, (k_lo, k_hi), fit.residual, len(fit.ks), witness={"k": int(kk[i])}, meta=_fit_meta(fit)
    )


def _fit_meta(fit: CountFit) -> dict:
    return {"fit_A": fit.A, "fit_s": fit.s, "fit_B": fit.B}


# ---------------------------------------------------------------------------
# Box counts
# ---------------------------------------------------------------------------


def _cell_ranges(E: BoxSet, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per box and axis, the index range of level-k cells whose closure meets the box."""
    D = E.denom
    sc = 1 << k
    if D * sc >= INT_LIMIT or E.hi.max() * sc >= INT_LIMIT:
        raise ScaleTooFineError("level too fine for exact cell incidence")
    a = -((-E.lo * sc) // D) - 1  # ceil(lo 2^k / D) - 1
    b = (E.hi * sc) // D
    return np.clip(a, 0, sc - 1), np.clip(b, 0, sc - 1)


def _count_union_1d(a: np.ndarray, b: np.ndarray) -> int:
    order = np.argsort(a, kind="stable")
    a, b = a[order], b[order]
    reach = np.maximum.accumulate(b)
    new = np.ones(len(a), dtype=bool)
    new[1:] = a[1:] > reach[:-1]
    starts = np.nonzero(new)[0]
    ends = np.append(starts[1:], len(a)) - 1
    return int((reach[ends] - a[starts] + 1).sum())


def _cells_2d(a: np.ndarray, b: np.ndarray) -> int:
    """Number of integer cells in a union of integer index rectangles [a, b] (inclusive)."""
    rows = b[:, 1] - a[:, 1] + 1
    total = int(rows.sum())
    check_cells(total, "box-count row intervals")
    r = np.repeat(np.arange(len(a)), rows)
    y = a[r, 1] + (np.arange(total) - np.repeat(np.cumsum(rows) - rows, rows))
    x0, x1 = a[r, 0], b[r, 0]
    order = np.lexsort((x0, y))
    y, x0, x1 = y[order], x0[order], x1[order]
    # running max of x1 within each row
    row_start = np.ones(total, dtype=bool)
    row_start[1:] = y[1:] != y[:-1]
    return int(_count_row_runs(x0, x1, row_start))


@nb.njit(cache=True)
def _count_row_runs(x0, x1, row_start):
    """Cells covered by integer intervals sorted by (row, x0)."""
    total = 0
    reach = -1
    for i in range(x0.shape[0]):
        if row_start[i]:
            reach = -1
        a = x0[i] if x0[i] > reach + 1 else reach + 1
        if x1[i] >= a:
            total += x1[i] - a + 1
            reach = x1[i]
    return total


def box_count(E: BoxSet, k: int) -> int:
    """Number of level-k dyadic cells whose closure meets E (exact)."""
    work = _merged(E)
    a, b = _cell_ranges(work, k)
    if work.dim == 1:
        return _count_union_1d(a[:, 0], b[:, 0])
    if work.dim == 2:
        return _cells_2d(a, b)
    raise NotImplementedError("box counts are implemented for d <= 2")


def cells_meeting(E: BoxSet, k: int) -> np.ndarray:
    """Sorted unique index rows of level-k cells whose closure meets E."""
    work = _merged(E)
    a, b = _cell_ranges(work, k)
    sizes = (b - a + 1).prod(axis=1)
    check_cells(int(sizes.sum()), "cell enumeration")
    parts = []
    for i in range(len(work)):
        axes = [np.arange(a[i, t], b[i, t] + 1) for t in range(work.dim)]
        parts.append(np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, work.dim))
    return np.unique(np.concatenate(parts), axis=0)


def _merged(E: BoxSet) -> BoxSet:
    from .geometry import merged_boxes

    return merged_boxes(E)


def box_counts(E: BoxSet, k_lo: int, k_hi: int) -> GenerationCounts:
    counts = {k: box_count(E, k) for k in range(k_lo, k_hi + 1)}
    return GenerationCounts(counts, (k_lo, k_hi), None, "box")


# ---------------------------------------------------------------------------
# Scale budget
# ---------------------------------------------------------------------------


def native_level(E: BoxSet) -> float | None:
    """log2 of the inverse smallest box side (or Koch step); None without generator metadata."""
    meta = E.meta
    if meta.get("generator") in (None, "point", "point1d", "segment", "point-segment", "raster"):
        return None
    side = E.side.max(axis=1)
    side = side[side > 0]
    if len(side) == 0:
        if meta.get("generator") == "koch":
            step = 3.0 ** -meta.get("depth", 0) * (0.5 if "normalization" in meta else 1.0)
            return math.log2(1.0 / step)
        return None
    return math.log2(E.denom / float(side.min()))


# Whitney counts of a pre-fractal agree with those of deeper pre-fractals up to
# about one level below the native level; box counts need two levels of margin.
BOX_MARGIN = -2.0
WHITNEY_MARGIN = 1.0


def resolution_level(E: BoxSet, kind: str = "box") -> float | None:
    """Finest level at which counts of a pre-fractal stand in for its attractor."""
    nat = native_level(E)
    if nat is None:
        return None
    return nat + (WHITNEY_MARGIN if kind == "whitney" else BOX_MARGIN)


def default_window(E: BoxSet, k_max: int, kind: str = "whitney") -> tuple[int, int]:
    k_hi = k_max - 1
    res = resolution_level(E, kind)
    if res is not None:
        k_hi = min(k_hi, int(math.floor(res + 1e-9)))
    return 3, max(k_hi, 5)


# ---------------------------------------------------------------------------
# Minkowski dimensions
# ---------------------------------------------------------------------------


def is_null_set(E: BoxSet) -> bool:
    """Zero-area gate: generator metadata for attractors, exact area otherwise."""
    meta = E.meta
    if meta.get("null_area_limit"):
        return True
    sd = meta.get("similarity_dim")
    if sd is not None and sd < E.dim:
        return True
    return float(E.area()) < ZERO_AREA_TOL


def minkowski_dims_whitney(
    E: BoxSet,
    k_max: int = 12,
    window: tuple | None = None,
    tail: int = DEFAULT_TAIL,
    W: WhitneyDecomposition | None = None,
    porosity: float | None = None,
) -> tuple[DimensionEstimate, DimensionEstimate]:
    if W is None:
        W = whitney_decompose(E, k_max)
    counts = generation_counts(W)
    window = window or default_window(E, W.k_max, "whitney")
    up = fit_dimension(counts, window, "upper", tail, "whitney")
    lo = fit_dimension(counts, window, "lower", tail, "whitney")
    meta = {
        "null_set": is_null_set(E),
        "porosity_checked": porosity is not None,
        "porous": bool(porosity is not None and porosity > 0),
    }
    up.meta.update(meta)
    lo.meta.update(meta)
    return up, lo


def minkowski_dims_box(E: BoxSet, k_max: int = 12, window: tuple | None = None, tail: int = DEFAULT_TAIL):
    window = window or default_window(E, k_max, "box")
    counts = box_counts(E, window[0], window[1])
    return (
        fit_dimension(counts, window, "upper", tail, "box"),
        fit_dimension(counts, window, "lower", tail, "box"),
    )


# ---------------------------------------------------------------------------
# Assouad dimensions
# ---------------------------------------------------------------------------


def representative_points(E: BoxSet, level: int, cap: int | None = None) -> np.ndarray:
    """One point of E per level-`level` cell meeting E: the point of E nearest the cell centre.

    Deterministic stride subsampling keeps at most ``cap`` points.
    """
    cells = cells_meeting(E, level)
    if cap is not None and len(cells) > cap:
        stride = math.ceil(len(cells) / cap)
        cells = cells[::stride]
    centers = (cells + 0.5) / float(1 << level)
    return nearest_points_in_set(E, centers)


def nearest_points_in_set(E: BoxSet, pts: np.ndarray) -> np.ndarray:
    """Nearest point of E to each query (clamped into the nearest box)."""
    out = np.empty_like(pts)
    lo, hi = E.lo_f, E.hi_f
    for s in range(0, len(pts), 256):
        q = pts[s : s + 256]
        c = np.clip(q[:, None, :], lo[None], hi[None])
        d2 = ((c - q[:, None, :]) ** 2).sum(axis=-1)
        j = np.argmin(d2, axis=1)
        out[s : s + 256] = c[np.arange(len(q)), j]
    return out


def _cells_meeting_ball(E: BoxSet, x: np.ndarray, R: float, level: int) -> np.ndarray:
    """Level cells whose closure meets E intersected with the open ball B(x,R)."""
    lo, hi = E.lo_f, E.hi_f
    gap = np.maximum(np.maximum(lo - x, 0.0), x - hi)
    near = (gap**2).sum(axis=1) < R * R
    if not near.any():
        return np.empty((0, E.dim), dtype=np.int64)
    blo = np.maximum(lo[near], x - R)
    bhi = np.minimum(hi[near], x + R)
    n = 1 << level
    a = np.clip(np.ceil(blo * n).astype(np.int64) - 1, 0, n - 1)
    b = np.clip(np.floor(bhi * n).astype(np.int64), 0, n - 1)
    sizes = (b - a + 1).prod(axis=1)
    total = int(sizes.sum())
    check_cells(total, "ball cell enumeration")
    d = E.dim
    box = np.repeat(np.arange(len(a)), sizes)
    off = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    idx = np.empty((total, d), dtype=np.int64)
    rem = off.copy()
    for t in range(d - 1, -1, -1):
        span = (b[box, t] - a[box, t] + 1)
        idx[:, t] = a[box, t] + rem % span
        rem //= span
    clo = np.maximum(idx / n, blo[box])
    chi = np.minimum((idx + 1) / n, bhi[box])
    valid = (clo <= chi).all(axis=1)
    g = np.maximum(np.maximum(clo - x, 0.0), x - chi)
    valid &= (g**2).sum(axis=1) < R * R
    return np.unique(idx[valid], axis=0)


def two_scale_counts(E: BoxSet, x: np.ndarray, m: int, G: int) -> np.ndarray:
    """N(x, m, g) for g = 0..G: level-(m+g) cells meeting E ∩ B(x, 2^-m)."""
    fine = _cells_meeting_ball(E, x, 2.0**-m, m + G)
    out = np.empty(G + 1, dtype=np.int64)
    cur = fine
    for g in range(G, -1, -1):
        out[g] = len(cur)
        if g:
            cur = np.unique(cur >> 1, axis=0)
    return out


def assouad_dims(
    E: BoxSet,
    center_level: int = 4,
    m_range: tuple | None = None,
    fine_level: int | None = None,
    samples_cap: int | None = 256,
    g_min: int = 2,
) -> tuple[DimensionEstimate, DimensionEstimate]:
    """Two-scale exponents: per (x, m) the fitted growth of N(x,m,g) over g in [g_min, G].

    Radii are R = 2^-m with R below diam(E) (below 1/4 for a single point).
    Upper/lower are the max/min of the per-sample exponents.
    """
    diam = E.diam
    res = resolution_level(E)
    if fine_level is None:
        fine_level = 12 if res is None else int(math.floor(res + 1e-9))
    if m_range is None:
        m0 = max(2, math.ceil(math.log2(1.0 / diam)) + 1) if diam > 0 else 2
        m_range = (m0, m0 + 2)
    centers = representative_points(E, center_level, samples_cap)
    best_up, best_lo = None, None
    exps = []
    for m in range(m_range[0], m_range[1] + 1):
        R = 2.0**-m
        if diam > 0 and not R < diam:
            continue
        G = fine_level - m
        if G < g_min + 2:
            continue
        for x in centers:
            n = two_scale_counts(E, x, m, G)
            gs = np.arange(g_min, G + 1)
            fit = fit_counts(gs, n[g_min:])
            exps.append((fit.s, fit.residual, tuple(float(v) for v in x), m))
    if not exps:
        raise InsufficientDataError("no valid (x, m, g) samples for two-scale counts")
    values = np.array([e[0] for e in exps])
    iu, il = int(np.argmax(values)), int(np.argmin(values))
    window = (g_min, fine_level - m_range[0])
    rms = float(np.sqrt(np.mean([e[1] ** 2 for e in exps])))
    up = DimensionEstimate(float(values[iu]), "upper", "assouad-upper", window, rms, len(exps), {"x": exps[iu][2], "m": exps[iu][3]})
    lo = DimensionEstimate(float(values[il]), "lower", "assouad-lower", window, rms, len(exps), {"x": exps[il][2], "m": exps[il][3]})
    return up, lo


# ---------------------------------------------------------------------------
# Porosity, uniform perfectness, codimension
# ---------------------------------------------------------------------------


@dataclass
class PorosityEstimate:
    rho: float
    sample_centers: int
    scales_tested: list
    attained_min_at: tuple


def porosity_estimate(
    E: BoxSet,
    field: DistanceField,
    center_samples: np.ndarray | None = None,
    scales: Sequence[float] | None = None,
    center_level: int = 4,
    samples_cap: int | None = 256,
) -> PorosityEstimate:
    """rho(x,r) = max over nodes y in B(x,r) of min(dist(y,E), r - |x-y|) / r; min over samples."""
    h = field.h
    if scales is None:
        scales = [2.0**-j for j in range(3, 8) if 2.0**-j >= 16 * h]
    scales = list(scales)
    for r in scales:
        if r < 16 * h * (1 - 1e-12):
            raise ScaleTooFineError(f"porosity scale {r} is below 16 grid spacings")
    if center_samples is None:
        center_samples = representative_points(E, center_level, samples_cap)
    x_all = np.atleast_2d(center_samples)
    vals = field.values
    origin = np.asarray(field.origin)
    best = (math.inf, None, None)
    d = field.dim
    for r in scales:
        w = int(math.ceil(r / h))
        offs = np.stack(np.meshgrid(*([np.arange(-w - 1, w + 2)] * d), indexing="ij"), axis=-1).reshape(-1, d)
        for x in x_all:
            base = np.round((x - origin) / h).astype(np.int64)
            idx = base[None, :] + offs
            inb = ((idx >= 0) & (idx < np.array(vals.shape))).all(axis=1)
            idx = idx[inb]
            y = origin + idx * h
            dxy = np.sqrt(((y - x) ** 2).sum(axis=1))
            ok = dxy < r
            if not ok.any():
                continue
            fv = vals[tuple(idx[ok].T)]
            rho = float(np.max(np.minimum(fv, r - dxy[ok])) / r)
            rho = min(max(rho, 0.0), 0.5)
            if rho < best[0]:
                best = (rho, tuple(float(v) for v in x), r)
    if best[1] is None:
        raise InsufficientDataError("no porosity samples")
    return PorosityEstimate(best[0], len(x_all), scales, (best[1], best[2]))


@dataclass
class PerfectnessEstimate:
    C_hat: float
    infinite: bool
    witnesses: list


def _annulus_hits(E: BoxSet, x: np.ndarray, r: float, C: float) -> bool:
    lo, hi = E.lo_f, E.hi_f
    near = np.maximum(np.maximum(lo - x, 0.0), x - hi)
    far = np.maximum(np.abs(lo - x), np.abs(hi - x))
    dmin = np.sqrt((near**2).sum(axis=1))
    dmax = np.sqrt((far**2).sum(axis=1))
    return bool(((dmin < r) & (dmax >= r / C)).any())


def perfectness_samples(E: BoxSet, center_level: int = 4, cap: int | None = 128, n_scales: int = 6) -> list:
    """(x, r) pairs with x in E, r < diam(E) and E not inside B(x, r)."""
    diam = E.diam
    if diam == 0:
        return []
    xs = representative_points(E, center_level, cap)
    far = _max_dist(E, xs)
    out = []
    for x, reach in zip(xs, far):
        for j in range(n_scales):
            r = 0.75 * diam * 2.0**-j
            if r < reach:
                out.append((x, r))
    return out


def _max_dist(E: BoxSet, xs: np.ndarray) -> np.ndarray:
    corners = E.corners_f()
    return np.array([np.sqrt(((corners - x) ** 2).sum(axis=1)).max() for x in xs])


def uniform_perfectness(E: BoxSet, samples: list | None = None, grid: Sequence[float] = PERFECTNESS_GRID) -> PerfectnessEstimate:
    """Smallest C in the grid with E meeting every sampled annulus B(x,r) minus B(x,r/C).

    A single point is reported as not uniformly perfect: its lower Assouad
    dimension is 0.
    """
    if E.diam == 0:
        return PerfectnessEstimate(math.inf, True, [])
    if samples is None:
        samples = perfectness_samples(E)
    failing = list(samples)
    for C in grid:
        failing = [(x, r) for x, r in failing if not _annulus_hits(E, x, r, C)]
        if not failing:
            return PerfectnessEstimate(float(C), False, [])
    return PerfectnessEstimate(math.inf, True, [(tuple(float(v) for v in x), float(r)) for x, r in failing[:16]])


def codimension_estimates(
    E: BoxSet,
    field: DistanceField,
    center_samples: np.ndarray | None = None,
    R_values: Sequence[float] | None = None,
    center_level: int = 4,
    samples_cap: int | None = 64,
    min_r: float | None = None,
) -> tuple[DimensionEstimate, DimensionEstimate]:
    """Exponents t in area(E_r ∩ B(x,R)) / area(B(x,R)) ~ (r/R)^t from node counts.

    Per (x, R) the exponent is the least-squares slope of log ratio against
    log(r/R) over r = R 2^-j, r >= max(8h, min_r). lower_codim is the min over
    samples, upper_codim the max.
    """
    h = field.h
    diam = E.diam
    res = resolution_level(E)
    if min_r is None:
        min_r = 8 * h
        if res is not None:
            min_r = max(min_r, 2.0 ** -(res))
    if R_values is None:
        top = diam if diam > 0 else 0.25
        R_values = [2.0 ** -j for j in range(2, 8) if 2.0**-j < top and 2.0**-j / min_r >= 8]
    if center_samples is None:
        center_samples = representative_points(E, center_level, samples_cap)
    vals = field.values
    origin = np.asarray(field.origin)
    d = field.dim
    fits = []
    for R in R_values:
        w = int(math.ceil(R / h))
        offs = np.stack(np.meshgrid(*([np.arange(-w - 1, w + 2)] * d), indexing="ij"), axis=-1).reshape(-1, d)
        rs = [R * 2.0**-j for j in range(2, 40) if R * 2.0**-j >= min_r]
        if len(rs) < 3:
            continue
        for x in np.atleast_2d(center_samples):
            idx = np.round((x - origin) / h).astype(np.int64)[None, :] + offs
            inb = ((idx >= 0) & (idx < np.array(vals.shape))).all(axis=1)
            idx = idx[inb]
            y = origin + idx * h
            inside = ((y - x) ** 2).sum(axis=1) < R * R
            fv = vals[tuple(idx[inside].T)]
            total = inside.sum()
            ratios = np.array([(fv < r).sum() / total for r in rs])
            if (ratios <= 0).any():
                continue
            t, _ = np.polyfit(np.log2(np.array(rs) / R), np.log2(ratios), 1)
            resid = np.log2(ratios) - np.polyval([t, _], np.log2(np.array(rs) / R))
            fits.append((float(t), float(np.sqrt(np.mean(resid**2))), tuple(float(v) for v in x), R))
    if not fits:
        raise InsufficientDataError("no valid (x, R, r) codimension samples")
    ts = np.array([f[0] for f in fits])
    il, iu = int(np.argmin(ts)), int(np.argmax(ts))
    rms = float(np.sqrt(np.mean([f[1] ** 2 for f in fits])))
    window = (float(min_r), float(max(R_values)))
    lower = DimensionEstimate(float(ts[il]), "lower", "codim", window, rms, len(fits), {"x": fits[il][2], "R": fits[il][3]})
    upper = DimensionEstimate(float(ts[iu]), "upper", "codim", window, rms, len(fits), {"x": fits[iu][2], "R": fits[iu][3]})
    return lower, upper
