"""Run configuration, suites, deterministic CSV/JSON emitters and reports.

Reports hold no wall-clock data; timings go to a separate file so that
identical configurations give byte-identical reports.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .dimension import (
    DimensionEstimate,
    assouad_dims,
    codimension_estimates,
    is_null_set,
    minkowski_dims_box,
    minkowski_dims_whitney,
    porosity_estimate,
    representative_points,
    uniform_perfectness,
)
from .errors import ConfigError, WhitneyDimError
from .geometry import Ball, BoxSet, load_boxset
from .parallel import (
    boundary_length_profile,
    local_boundary_profile,
    oleksiv_pesin_check,
    per_cube_boundary_checks,
    profile_slope,
    regular_law_check,
    sandwich_check,
    spherical_dims,
    thick_cantor_check,
    unit_field,
)
from .setgen import ThickCantorParams, load_raster, named_set, thick_cantor_generate
from .whitney import generation_counts, whitney_decompose

SIG_DIGITS = 9
SUITES = ("dims", "oracle", "profile", "sandwich", "op", "regular", "percube", "local", "codim", "perfectness", "porosity", "thick")
BOUNDARY_SUITES = {"profile", "sandwich", "op", "regular", "percube", "local"}
ORACLE_TOL = 0.1
CODIM_TOL = 0.15
LOCAL_SLACK = 0.2
PERCUBE_UPPER = 6.0
CHAIN_SLACK = 0.1
RANGE_SLACK = 0.05
SLOPE_TOL = 0.1


# ---------------------------------------------------------------------------
# Emitters
# ---------------------------------------------------------------------------


def fmt_real(x) -> str:
    """Nine significant digits; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x) + 0.0  # -0.0 -> 0.0
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, f".{SIG_DIGITS}g")


def canonical(obj):
    """JSON-ready copy with reals rounded to nine significant digits."""
    if isinstance(obj, dict):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [canonical(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj) + 0.0
        if not math.isfinite(x):
            return fmt_real(x)
        return float(format(x, f".{SIG_DIGITS}g"))
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def dumps_json(record) -> str:
    return json.dumps(canonical(record), indent=2, ensure_ascii=True) + "\n"


def emit_json(record, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(record))


def dumps_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_real(v) if not isinstance(v, str) else v for v in row])
    return buf.getvalue()


def emit_csv(header: Sequence[str], rows: Sequence[Sequence], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dumps_csv(header, rows))


def parse_csv(text: str) -> tuple[list, list]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    return header, [[_parse_value(v) for v in row] for row in body]


def _parse_value(v: str):
    try:
        return int(v)
    except ValueError:
        return float(v)


def counts_table(counts) -> tuple[list, list]:
    return ["k", "count"], [(k, counts.counts[k]) for k in sorted(counts.counts)]


def profile_table(rows) -> tuple[list, list]:
    return ["r", "length", "volume"], sorted(rows, key=lambda r: -r[0])


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    set_name: str | None = None
    set_file: str | None = None
    depth: int = 0
    thick_cantor: str | None = None
    raster: str | None = None
    threshold: float = 128.0
    k_max: int = 12
    grid: int = 11
    regular_grid: int = 12
    tail: int = 4
    offsets: tuple = (2, 4)
    offset_search: int = 3
    ratio_bound: float = 50.0
    samples_cap: int = 256
    suites: tuple = ("dims",)
    out_dir: str | None = None
    seed: int = 0

    def __post_init__(self):
        self.offsets = tuple(int(v) for v in self.offsets)
        self.suites = tuple(self.suites)

    def validate(self) -> None:
        given = [v for v in (self.set_name, self.set_file, self.thick_cantor, self.raster) if v]
        if len(given) != 1:
            raise ConfigError("exactly one of set_name, set_file, thick_cantor, raster is required")
        for path in (self.set_file, self.raster):
            if path and not os.path.isfile(path):
                raise ConfigError(f"input file not found: {path}")
        unknown = [s for s in self.suites if s not in SUITES]
        if unknown:
            raise ConfigError(f"unknown suites: {', '.join(unknown)}")
        if self.k_max < 3:
            raise ConfigError("k_max must be at least 3")
        if self.grid < 4:
            raise ConfigError("grid level must be at least 4")
        if BOUNDARY_SUITES & set(self.suites) and self.grid < self.k_max - 1:
            raise ConfigError("boundary suites need grid >= k_max - 1")
        if self.thick_cantor:
            ThickCantorParams.parse(self.thick_cantor)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["offsets"] = list(self.offsets)
        out["suites"] = list(self.suites)
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(rec) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(sorted(unknown))}")
        return cls(**rec)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc


def build_set(cfg: RunConfig) -> BoxSet:
    """The analysed set, normalized into [1/4,3/4]^d unless it already lies there."""
    if cfg.set_name:
        E = named_set(cfg.set_name, cfg.depth)
    elif cfg.set_file:
        E = load_boxset(cfg.set_file)
    elif cfg.raster:
        return load_raster(cfg.raster, cfg.threshold)
    else:
        E = thick_cantor_generate(ThickCantorParams.parse(cfg.thick_cantor)).to_boxset()
    return E if E.normalized_flag else E.normalize()


# ---------------------------------------------------------------------------
# Suites
# ---------------------------------------------------------------------------


class Context:
    """Lazily computed shared artefacts of one run."""

    def __init__(self, cfg: RunConfig, E: BoxSet):
        self.cfg = cfg
        self.E = E
        self._memo: dict = {}

    def get(self, key: str, make: Callable):
        if key not in self._memo:
            self._memo[key] = make()
        return self._memo[key]

    @property
    def W(self):
        return self.get("W", lambda: whitney_decompose(self.E, self.cfg.k_max))

    @property
    def counts(self):
        return self.get("counts", lambda: generation_counts(self.W))

    @property
    def field(self):
        return self.get("field", lambda: unit_field(self.E, self.cfg.grid))

    @property
    def whitney(self):
        return self.get("whitney", lambda: minkowski_dims_whitney(self.E, self.cfg.k_max, tail=self.cfg.tail, W=self.W))

    @property
    def box(self):
        return self.get("box", lambda: minkowski_dims_box(self.E, self.cfg.k_max, tail=self.cfg.tail))

    @property
    def assouad(self):
        return self.get("assouad", lambda: assouad_dims(self.E, samples_cap=self.cfg.samples_cap))

    @property
    def profile(self):
        return self.get("profile", lambda: boundary_length_profile(self.E, None, self.cfg.grid))

    @property
    def spherical(self):
        return self.get(
            "spherical",
            lambda: spherical_dims(self.E, self.profile, self.W, self.cfg.k_max, self.cfg.grid, self.cfg.tail),
        )

    @property
    def porosity(self):
        return self.get("porosity", lambda: porosity_estimate(self.E, self.field, samples_cap=self.cfg.samples_cap))


def _pair_ok(lo: DimensionEstimate, up: DimensionEstimate) -> bool:
    return lo.value <= up.value + 1e-9


def suite_dims(ctx: Context) -> dict:
    E = ctx.E
    d = E.dim
    ests = list(ctx.box) + list(ctx.whitney) + list(ctx.assouad)
    if d == 2:
        ests += ctx.spherical.estimates()
    in_range = all(-RANGE_SLACK <= e.value <= d + RANGE_SLACK for e in ests)
    ordered = _pair_ok(ctx.box[1], ctx.box[0]) and _pair_ok(ctx.whitney[1], ctx.whitney[0]) and _pair_ok(ctx.assouad[1], ctx.assouad[0])
    a_up, a_lo = ctx.assouad
    chain = {
        "assouad_lower_le_box_lower": a_lo.value - CHAIN_SLACK <= ctx.box[1].value,
        "box_upper_le_assouad_upper": ctx.box[0].value <= a_up.value + CHAIN_SLACK,
    }
    rec = {
        "passed": bool(in_range and ordered and all(chain.values())),
        "estimates": [e.as_record() for e in ests],
        "checks": {"in_range": in_range, "ordered": ordered, **chain},
    }
    if d == 2:
        rec["spherical_discrepancy"] = ctx.spherical.discrepancy
    return rec


def suite_oracle(ctx: Context) -> dict:
    (wu, wl), (bu, bl) = ctx.whitney, ctx.box
    null = is_null_set(ctx.E)
    rho = ctx.porosity.rho
    porous = rho >= 0.05
    rec = {
        "whitney": [wu.value, wl.value],
        "box": [bu.value, bl.value],
        "null_set": null,
        "porosity": rho,
        "equivalence_required": bool(null and porous),
        "lower_inequality": wl.value <= bl.value + ORACLE_TOL,
    }
    ok = rec["lower_inequality"]
    if rec["equivalence_required"]:
        rec["upper_gap"] = abs(wu.value - bu.value)
        rec["lower_gap"] = abs(wl.value - bl.value)
        ok = ok and rec["upper_gap"] <= ORACLE_TOL and rec["lower_gap"] <= ORACLE_TOL
    rec["passed"] = bool(ok)
    return rec


def suite_profile(ctx: Context) -> dict:
    rows = ctx.profile
    vols = [r[2] for r in sorted(rows)]
    monotone = all(a <= b + 1e-15 for a, b in zip(vols, vols[1:]))
    slope = profile_slope(rows)
    rec = {"monotone_volume": bool(monotone), "slope": slope}
    ok = monotone
    s = ctx.E.meta.get("similarity_dim")
    if s is not None:
        rec["expected_slope"] = ctx.E.dim - 1 - s
        rec["slope_matches"] = abs(slope - rec["expected_slope"]) <= SLOPE_TOL
        ok = ok and rec["slope_matches"]
    rec["passed"] = bool(ok)
    rec["rows"] = [list(r) for r in rows]
    return rec


def suite_sandwich(ctx: Context) -> dict:
    cfg = ctx.cfg
    rep = sandwich_check(ctx.E, cfg.offsets, ctx.W, cfg.k_max, cfg.grid, 0, cfg.ratio_bound)
    if not rep.passed and cfg.offset_search:
        rep = sandwich_check(ctx.E, cfg.offsets, ctx.W, cfg.k_max, cfg.grid, cfg.offset_search, cfg.ratio_bound)
    return rep.as_record()


def suite_op(ctx: Context) -> dict:
    return oleksiv_pesin_check(ctx.E, None, ctx.cfg.grid).as_record()


def suite_regular(ctx: Context) -> dict:
    s = ctx.E.meta.get("similarity_dim")
    if s is None or not 0 < s < ctx.E.dim:
        return {"passed": True, "skipped": "no similarity dimension in (0, d)"}
    return regular_law_check(ctx.E, s, K=ctx.cfg.regular_grid).as_record()


def suite_percube(ctx: Context) -> dict:
    k = 6
    rep = per_cube_boundary_checks(ctx.E, 0.75 * 2.0**-k, ctx.W, ctx.cfg.k_max, ctx.cfg.grid, upper_bound=PERCUBE_UPPER)
    return rep.as_record()


def _probe_ball(E: BoxSet) -> Ball:
    x = representative_points(E, 2, 1)[0]
    R = min(0.125, E.diam / 2) if E.diam > 0 else 0.125
    return Ball(tuple(float(v) for v in x), R)


def suite_local(ctx: Context) -> dict:
    B0 = _probe_ball(ctx.E)
    lam = local_boundary_profile(ctx.E, B0, None, ctx.cfg.grid)
    a_up = ctx.assouad[0].value
    return {
        "passed": bool(abs(lam.value - a_up) <= LOCAL_SLACK),
        "lambda": lam.as_record(),
        "assouad_upper": a_up,
        "difference": lam.value - a_up,
    }


def suite_codim(ctx: Context) -> dict:
    lower, upper = codimension_estimates(ctx.E, ctx.field, samples_cap=min(64, ctx.cfg.samples_cap))
    a_up = ctx.assouad[0].value
    gap = a_up + lower.value - ctx.E.dim
    return {
        "passed": bool(abs(gap) <= CODIM_TOL),
        "lower_codim": lower.as_record(),
        "upper_codim": upper.as_record(),
        "assouad_upper": a_up,
        "identity_gap": gap,
    }


def suite_perfectness(ctx: Context) -> dict:
    est = uniform_perfectness(ctx.E)
    a_lo = ctx.assouad[1].value
    ok = a_lo <= 0.1 if est.infinite else a_lo > 0
    return {"passed": bool(ok), "C_hat": est.C_hat, "infinite": est.infinite, "assouad_lower": a_lo, "witnesses": est.witnesses}


def suite_porosity(ctx: Context) -> dict:
    po = ctx.porosity
    a_up = ctx.assouad[0].value
    d = ctx.E.dim
    rec = {"rho": po.rho, "samples": po.sample_centers, "scales": po.scales_tested, "attained_min_at": po.attained_min_at, "assouad_upper": a_up}
    if po.rho > 0:
        rec["implied_c"] = (d - a_up) / po.rho**d
        rec["passed"] = bool(a_up < d)
    else:
        rec["passed"] = True
    return rec


def suite_thick(ctx: Context) -> dict:
    if not ctx.cfg.thick_cantor:
        return {"passed": True, "skipped": "not a thick-Cantor run"}
    return thick_cantor_check(ThickCantorParams.parse(ctx.cfg.thick_cantor)).as_record()


SUITE_FUNCS = {
    "dims": suite_dims,
    "oracle": suite_oracle,
    "profile": suite_profile,
    "sandwich": suite_sandwich,
    "op": suite_op,
    "regular": suite_regular,
    "percube": suite_percube,
    "local": suite_local,
    "codim": suite_codim,
    "perfectness": suite_perfectness,
    "porosity": suite_porosity,
    "thick": suite_thick,
}


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    version: str
    config: dict
    suites: dict
    timings: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(s.get("passed", False) for s in self.suites.values())

    def as_record(self) -> dict:
        return {"version": self.version, "config": self.config, "passed": self.passed, "suites": self.suites}


def run(cfg: RunConfig) -> VerificationReport:
    """Execute the configured suites; write report.json, counts.csv, profile.csv and timings.json."""
    cfg.validate()
    t0 = time.perf_counter()
    E = build_set(cfg)
    ctx = Context(cfg, E)
    timings = {"build": time.perf_counter() - t0}
    results = {}
    for name in cfg.suites:
        t = time.perf_counter()
        if E.dim != 2 and name in BOUNDARY_SUITES:
            results[name] = {"passed": True, "skipped": "boundary suites need d = 2"}
        else:
            try:
                results[name] = SUITE_FUNCS[name](ctx)
            except WhitneyDimError as exc:
                if exc.exit_code != 1:
                    raise
                results[name] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
        timings[name] = time.perf_counter() - t
    report = VerificationReport(__version__, cfg.as_dict(), results, timings)
    if cfg.out_dir:
        os.makedirs(cfg.out_dir, exist_ok=True)
        emit_json(report.as_record(), os.path.join(cfg.out_dir, "report.json"))
        if "W" in ctx._memo:
            emit_csv(*counts_table(ctx.counts), os.path.join(cfg.out_dir, "counts.csv"))
        if "profile" in ctx._memo:
            emit_csv(*profile_table(ctx.profile), os.path.join(cfg.out_dir, "profile.csv"))
        with open(os.path.join(cfg.out_dir, "timings.json"), "w", encoding="utf-8") as fh:
            json.dump({k: round(v, 3) for k, v in timings.items()}, fh, indent=2)
            fh.write("\n")
    return report
