"""Generators for test sets with known dimensions, plus raster ingestion.

Built-in IFS sets are produced with exact integer arithmetic. The thick
Cantor construction needs contraction ratios 2^(-1-1/j), which are
irrational; it is carried out exactly in the field Q(2^(1/m)) and only the
final box corners are rounded to a fine dyadic grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import mpmath
import numpy as np
from scipy.optimize import brentq

from .errors import EmptySetError, FormatError, InvalidParamsError, ResourceLimitError, check_cells
from .geometry import INT_LIMIT, BoxSet

# ---------------------------------------------------------------------------
# IFS catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IfsSpec:
    """Similarities x -> ratio * x + translation on [0,1]^d."""

    name: str
    maps: tuple  # of (Fraction ratio, tuple of Fraction translations)

    def __post_init__(self):
        if not self.maps:
            raise InvalidParamsError("an IFS needs at least one map")
        dims = {len(t) for _, t in self.maps}
        if len(dims) != 1:
            raise InvalidParamsError("all translations must have the same dimension")
        for ratio, _ in self.maps:
            if not 0 < ratio < 1:
                raise InvalidParamsError(f"ratio {ratio} is not in (0,1)")

    @property
    def dim(self) -> int:
        return len(self.maps[0][1])

    @cached_property
    def similarity_dim(self) -> float:
        """Root s of sum(ratio_i^s) = 1."""
        ratios = [float(r) for r, _ in self.maps]
        if len(ratios) == 1:
            return 0.0
        return float(brentq(lambda s: sum(r**s for r in ratios) - 1.0, 0.0, 64.0, xtol=1e-15))


def _grid_maps(pattern: Sequence[Sequence[int]], n: int) -> tuple:
    ratio = Fraction(1, n)
    return tuple((ratio, tuple(Fraction(i, n) for i in idx)) for idx in pattern)


def _catalog() -> dict[str, IfsSpec]:
    carpet = [(i, j) for i in range(3) for j in range(3) if (i, j) != (1, 1)]
    vicsek = [(0, 0), (0, 2), (1, 1), (2, 0), (2, 2)]
    return {
        "cantor3": IfsSpec("cantor3", _grid_maps([(0,), (2,)], 3)),
        "cantor3x3": IfsSpec("cantor3x3", _grid_maps([(0, 0), (0, 2), (2, 0), (2, 2)], 3)),
        "sierpinski-carpet": IfsSpec("sierpinski-carpet", _grid_maps(carpet, 3)),
        "vicsek": IfsSpec("vicsek", _grid_maps(vicsek, 3)),
    }


CATALOG = _catalog()
ALIASES = {"carpet": "sierpinski-carpet"}
KOCH_DIM = math.log(4) / math.log(3)
KOCH_DENOM_BITS = 30


def ifs_generate(spec: IfsSpec, depth: int) -> BoxSet:
    """The depth-th pre-fractal: images of [0,1]^d under all depth-fold compositions."""
    if depth < 0:
        raise InvalidParamsError("depth must be nonnegative")
    check_cells(len(spec.maps) ** depth, f"{spec.name} depth {depth} boxes")
    d = spec.dim
    lo = np.zeros((1, d), dtype=np.int64)
    side = np.ones((1, d), dtype=np.int64)
    denom = 1
    for _ in range(depth):
        new_denom = denom
        for ratio, trans in spec.maps:
            new_denom = math.lcm(new_denom, ratio.denominator * denom, *(t.denominator for t in trans))
        if new_denom >= INT_LIMIT // 4:
            raise ResourceLimitError("pre-fractal denominator exceeds 61 bits")
        los, sides = [], []
        for ratio, trans in spec.maps:
            scale = ratio.numerator * (new_denom // (ratio.denominator * denom))
            shift = np.array([t.numerator * (new_denom // t.denominator) for t in trans], dtype=np.int64)
            los.append(shift[None, :] + scale * lo)
            sides.append(scale * side)
        lo, side, denom = np.concatenate(los), np.concatenate(sides), new_denom
    meta = {"generator": spec.name, "depth": depth, "similarity_dim": spec.similarity_dim}
    return BoxSet(lo, side, denom, meta)


def koch_generate(depth: int) -> BoxSet:
    """Koch curve vertices at the given depth, rounded to a 2^-30 grid, as points.

    The curve runs from (0,1/4) to (1,1/4); its peak stays below 1/4 + sqrt(3)/6.
    """
    if depth < 0:
        raise InvalidParamsError("depth must be nonnegative")
    check_cells(4**depth + 1, f"koch depth {depth} points")
    pts = np.array([[0.0, 0.0], [1.0, 0.0]])
    rot = np.array([[0.5, -math.sqrt(3) / 2], [math.sqrt(3) / 2, 0.5]])
    for _ in range(depth):
        a, b = pts[:-1], pts[1:]
        v = (b - a) / 3.0
        p1 = a + v
        p2 = p1 + v @ rot.T
        p3 = a + 2 * v
        pts = np.concatenate([np.stack([a, p1, p2, p3], axis=1).reshape(-1, 2), pts[-1:]])
    pts[:, 1] += 0.25
    denom = 1 << KOCH_DENOM_BITS
    num = np.rint(pts * denom).astype(np.int64)
    meta = {"generator": "koch", "depth": depth, "similarity_dim": KOCH_DIM, "rounded_bits": KOCH_DENOM_BITS}
    return BoxSet(num, np.zeros_like(num), denom, meta)


def named_set(name: str, depth: int = 0) -> BoxSet:
    """Catalog sets plus the elementary shapes ``point`` and ``segment`` (unnormalized)."""
    name = ALIASES.get(name, name)
    if name in CATALOG:
        return ifs_generate(CATALOG[name], depth)
    if name == "koch":
        return koch_generate(depth)
    if name == "point":
        return BoxSet.point(Fraction(1, 2), Fraction(1, 2), meta={"generator": "point", "similarity_dim": 0.0})
    if name == "point1d":
        return BoxSet.point(Fraction(1, 2), meta={"generator": "point1d", "similarity_dim": 0.0})
    if name == "segment":
        return BoxSet.from_fractions(
            [((0, Fraction(1, 2)), (1, 0))], meta={"generator": "segment", "similarity_dim": 1.0}
        )
    if name == "cantor3-line":
        base = ifs_generate(CATALOG["cantor3"], depth)
        D = base.denom * 2
        lo = np.stack([base.lo[:, 0] * 2, np.full(len(base), D // 2)], axis=1)
        side = np.stack([base.side[:, 0] * 2, np.zeros(len(base), dtype=np.int64)], axis=1)
        return BoxSet(lo, side, D, dict(base.meta, generator="cantor3-line"))
    if name == "point-segment":
        return BoxSet.from_fractions(
            [((Fraction(1, 2), Fraction(1, 8)), (0, 0)), ((0, Fraction(1, 2)), (1, 0))],
            meta={"generator": "point-segment"},
        )
    raise FormatError(f"unknown set name {name!r}")


# ---------------------------------------------------------------------------
# Exact arithmetic in Q(2^(1/m))
# ---------------------------------------------------------------------------


class Surd:
    """Element sum_i c_i 2^(i/m) of Q(2^(1/m)), i = 0..m-1, with Fraction c_i.

    x^m - 2 is irreducible (Eisenstein), so the powers form a basis and
    equality is coefficient equality. Ordering is decided numerically at
    high precision, which is safe for the small-height numbers used here.
    """

    __slots__ = ("m", "c")
    PREC = 80

    def __init__(self, m: int, coeffs: Sequence):
        self.m = m
        c = [Fraction(v) for v in coeffs] + [Fraction(0)] * (m - len(coeffs))
        self.c = tuple(c[:m])

    @classmethod
    def rational(cls, m: int, q) -> "Surd":
        return cls(m, [q])

    @classmethod
    def pow2(cls, m: int, num: int) -> "Surd":
        """2^(num/m) for any integer num."""
        q, r = divmod(num, m)
        c = [Fraction(0)] * m
        c[r] = Fraction(2) ** q
        return cls(m, c)

    def __add__(self, o):
        o = self._coerce(o)
        return Surd(self.m, [a + b for a, b in zip(self.c, o.c)])

    __radd__ = __add__

    def __neg__(self):
        return Surd(self.m, [-a for a in self.c])

    def __sub__(self, o):
        return self + (-self._coerce(o))

    def __rsub__(self, o):
        return self._coerce(o) - self

    def __mul__(self, o):
        o = self._coerce(o)
        m = self.m
        out = [Fraction(0)] * m
        for i, a in enumerate(self.c):
            if a == 0:
                continue
            for j, b in enumerate(o.c):
                if b == 0:
                    continue
                k = i + j
                if k >= m:
                    out[k - m] += 2 * a * b
                else:
                    out[k] += a * b
        return Surd(m, out)

    __rmul__ = __mul__

    def _coerce(self, o) -> "Surd":
        if isinstance(o, Surd):
            if o.m != self.m:
                raise ValueError("mixed surd fields")
            return o
        return Surd.rational(self.m, o)

    def __eq__(self, o):
        if isinstance(o, (int, Fraction)):
            o = Surd.rational(self.m, o)
        return isinstance(o, Surd) and self.m == o.m and self.c == o.c

    def __hash__(self):
        return hash((self.m, self.c))

    def mp(self):
        with mpmath.workdps(self.PREC):
            return mpmath.fsum(mpmath.mpf(a.numerator) / a.denominator * mpmath.power(2, mpmath.mpf(i) / self.m) for i, a in enumerate(self.c))

    def sign(self) -> int:
        if all(a == 0 for a in self.c):
            return 0
        v = self.mp()
        if abs(v) < mpmath.mpf(10) ** (-(self.PREC - 10)):
            raise ArithmeticError("surd too close to zero to order reliably")
        return 1 if v > 0 else -1

    def __lt__(self, o):
        return (self - o).sign() < 0

    def __le__(self, o):
        return (self - o).sign() <= 0

    def __gt__(self, o):
        return (self - o).sign() > 0

    def __ge__(self, o):
        return (self - o).sign() >= 0

    def __float__(self):
        return float(self.mp())

    def is_rational(self) -> bool:
        return all(a == 0 for a in self.c[1:])

    def __repr__(self):
        terms = [f"{a}*2^({i}/{self.m})" for i, a in enumerate(self.c) if a != 0]
        return "Surd(" + (" + ".join(terms) or "0") + ")"


# ---------------------------------------------------------------------------
# Thick Cantor construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThickCantorParams:
    J: int
    n: tuple
    s: tuple

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "s", tuple(float(v) for v in self.s))
        if self.J < 1:
            raise InvalidParamsError("J must be at least 1")
        if len(self.n) != self.J:
            raise InvalidParamsError("n must have J entries")
        if any(v < 0 for v in self.n):
            raise InvalidParamsError("repetition counts must be nonnegative")
        if len(self.s) != self.J:
            raise InvalidParamsError("s must have J entries")
        if any(not v > 1 for v in self.s):
            raise InvalidParamsError("every s_j must exceed 1")
        if any(b > a for a, b in zip(self.s, self.s[1:])):
            raise InvalidParamsError("s must be nonincreasing")

    @property
    def field_m(self) -> int:
        evens = [j for j in range(2, self.J + 1, 2)]
        return math.lcm(2, *evens) if evens else 2

    def lam(self, j: int) -> Surd:
        """lambda_j = 1/2 for odd j, (1/2)^(1+1/j) for even j."""
        m = self.field_m
        if j % 2:
            return Surd.rational(m, Fraction(1, 2))
        return Surd.pow2(m, -(m + m // j))

    @classmethod
    def parse(cls, text: str) -> "ThickCantorParams":
        """Parse ``"J=2,n=2:6,s=2:1.5"`` (list entries separated by ':' or ' ')."""
        fields = {}
        try:
            for part in text.replace(";", ",").split(","):
                if not part.strip():
                    continue
                key, val = part.split("=", 1)
                fields[key.strip()] = val.strip()
            J = int(fields["J"])
            n = tuple(int(v) for v in fields["n"].replace(" ", ":").split(":") if v)
            if "s" in fields:
                s = tuple(float(v) for v in fields["s"].replace(" ", ":").split(":") if v)
            else:
                s = tuple(1.0 + 1.0 / j for j in range(1, J + 1))
        except (KeyError, ValueError) as exc:
            raise InvalidParamsError(f"cannot parse thick-Cantor parameters {text!r}") from exc
        return cls(J, n, s)


@dataclass
class ThickCantorStage:
    j: int
    starts: list  # sorted Surd left endpoints of the 1D factor intervals
    ell: Surd
    count: int
    D: Surd | None = None
    d: float | None = None
    gap_min: Surd | None = None  # measured min positive gap between rectangles


@dataclass
class ThickCantorInstance:
    params: ThickCantorParams
    stages: list = field(default_factory=list)

    def stage(self, j: int) -> ThickCantorStage:
        return self.stages[j]

    def rectangles(self, j: int) -> np.ndarray:
        """Float (lo_x, lo_y, side) rows of the rectangles of stage j."""
        st = self.stages[j]
        xs = np.array([float(v) for v in st.starts])
        X, Y = np.meshgrid(xs, xs, indexing="ij")
        return np.stack([X.ravel(), Y.ravel(), np.full(X.size, float(st.ell))], axis=1)

    def to_boxset(self, j: int | None = None, bits: int = 28) -> BoxSet:
        """Stage-j union as a BoxSet, corners rounded to a 2^-bits grid (unnormalized)."""
        j = self.params.J if j is None else j
        st = self.stages[j]
        denom = 1 << bits
        lo1 = np.array([_round_surd(v, denom) for v in st.starts], dtype=np.int64)
        side = _round_surd(st.ell, denom)
        X, Y = np.meshgrid(lo1, lo1, indexing="ij")
        lo = np.stack([X.ravel(), Y.ravel()], axis=1)
        meta = {
            "generator": "thick-cantor",
            "J": self.params.J,
            "n": list(self.params.n),
            "s": list(self.params.s),
            "stage": j,
            "rounded_bits": bits,
            "null_area_limit": True,
        }
        return BoxSet(lo, np.full_like(lo, side), denom, meta)


def _round_surd(v: Surd, denom: int) -> int:
    with mpmath.workdps(Surd.PREC):
        return int(mpmath.nint(v.mp() * denom))


def _lambda_op_1d(starts: list, ell: Surd, lam: Surd) -> tuple[list, Surd]:
    new_ell = lam * ell
    shift = ell - new_ell
    out = []
    for a in starts:
        out.append(a)
        out.append(a + shift)
    return out, new_ell


def _min_positive_gap(starts: list, ell: Surd) -> Surd | None:
    best = None
    for a, b in zip(starts, starts[1:]):
        g = b - (a + ell)
        if g.sign() > 0 and (best is None or g < best):
            best = g
    return best


def thick_cantor_generate(params: ThickCantorParams) -> ThickCantorInstance:
    """Build Q_0..Q_J by applying the lambda_j corner operation n_j times per stage.

    The 2D collection is the product of a 1D interval collection with itself,
    so only the 1D factor is built; the count is its square.
    """
    total = sum(params.n)
    check_cells(4**total, "thick-Cantor rectangles")
    m = params.field_m
    starts = [Surd.rational(m, 0)]
    ell = Surd.rational(m, 1)
    inst = ThickCantorInstance(params)
    inst.stages.append(ThickCantorStage(0, list(starts), ell, 1))
    for j in range(1, params.J + 1):
        lam = params.lam(j)
        for _ in range(params.n[j - 1]):
            starts, ell = _lambda_op_1d(starts, ell, lam)
        st = ThickCantorStage(j, list(starts), ell, len(starts) ** 2)
        st.gap_min = _min_positive_gap(starts, ell)
        if j % 2 == 0:
            st.D = ell * (_inverse_lambda(params, j) - 2)
            probe = float(st.D) / 3.0
            other = (st.count * float(ell)) ** (-1.0 / (params.s[j - 1] - 1.0))
            st.d = min(probe, other)
        inst.stages.append(st)
    return inst


def _inverse_lambda(params: ThickCantorParams, j: int) -> Surd:
    m = params.field_m
    if j % 2:
        return Surd.rational(m, 2)
    return Surd.pow2(m, m + m // j)


def closed_form_ell(params: ThickCantorParams, j: int) -> Surd:
    out = Surd.rational(params.field_m, 1)
    for i in range(1, j + 1):
        for _ in range(params.n[i - 1]):
            out = out * params.lam(i)
    return out


# ---------------------------------------------------------------------------
# Raster ingestion
# ---------------------------------------------------------------------------


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval <= 255 into a uint8 array (row 0 = top)."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read raster {path}: {exc}") from exc
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError("only binary PGM (P5) is supported")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError("malformed PGM header") from exc
    if not (0 < maxval <= 255) or w <= 0 or h <= 0:
        raise FormatError("PGM must have positive size and maxval <= 255")
    pos += 1
    body = data[pos : pos + w * h]
    if len(body) != w * h:
        raise FormatError("PGM pixel data is truncated")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w)


def raster_to_boxset(grid: np.ndarray, threshold: float) -> BoxSet:
    """Cells with value >= threshold as boxes, normalized into [1/4,3/4]^d.

    A 2D array is read image-style: row 0 is the top, so pixel (row, col)
    becomes the cell [col, col+1] x [rows-1-row, rows-row] scaled by the
    larger side length.
    """
    grid = np.asarray(grid)
    if grid.ndim not in (1, 2) or grid.size == 0:
        raise FormatError("raster must be a nonempty 1D or 2D array")
    lit = grid >= threshold
    if not lit.any():
        raise EmptySetError("no raster cell reaches the threshold")
    n = max(grid.shape)
    if grid.ndim == 1:
        lo = np.nonzero(lit)[0][:, None]
    else:
        rows, cols = np.nonzero(lit)
        lo = np.stack([cols, grid.shape[0] - 1 - rows], axis=1)
    E = BoxSet(lo, np.ones_like(lo), n, {"generator": "raster", "threshold": float(threshold)})
    return E.normalize()


def load_raster(path, threshold: float) -> BoxSet:
    return raster_to_boxset(read_pgm(path), threshold)
