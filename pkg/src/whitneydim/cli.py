"""Command-line entry point: gen | whitney | dims | boundary | verify | run.

Exit codes: 0 all suites pass, 1 suite failure, 2 configuration error,
3 resource limit.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError, WhitneyDimError


def _set_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--in", dest="input", help="BoxSet JSON file")
    p.add_argument("--set", help="built-in set name (or a BoxSet JSON path)")
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--thick-cantor", help='parameters such as "J=2,n=2:6,s=2:1.5"')
    p.add_argument("--raster", help="binary PGM file")
    p.add_argument("--threshold", type=float, default=128.0)


def _config_from(args, **extra):
    from .report import RunConfig

    set_name, set_file = args.set, args.input
    if set_name and set_name.endswith(".json"):
        set_name, set_file = None, set_name
    return RunConfig(
        set_name=set_name,
        set_file=set_file,
        depth=args.depth,
        thick_cantor=args.thick_cantor,
        raster=args.raster,
        threshold=args.threshold,
        **extra,
    )


def _load(args, **extra):
    from .report import build_set

    cfg = _config_from(args, **extra)
    cfg.validate()
    return cfg, build_set(cfg)


def cmd_gen(args) -> int:
    from .geometry import save_boxset
    from .report import build_set

    cfg = _config_from(args)
    cfg.validate()
    if args.raw:
        from .setgen import ThickCantorParams, named_set, thick_cantor_generate

        if cfg.set_name:
            E = named_set(cfg.set_name, cfg.depth)
        elif cfg.thick_cantor:
            E = thick_cantor_generate(ThickCantorParams.parse(cfg.thick_cantor)).to_boxset()
        else:
            E = build_set(cfg)
    else:
        E = build_set(cfg)
    save_boxset(E, args.out)
    print(f"{len(E)} boxes, dim {E.dim}, written to {args.out}")
    return 0


def cmd_whitney(args) -> int:
    from .report import counts_table, dumps_csv, emit_csv, emit_json
    from .whitney import check_sandwich_exact, generation_counts, whitney_decompose

    _, E = _load(args)
    W = whitney_decompose(E, args.kmax)
    counts = generation_counts(W)
    if args.counts_out:
        emit_csv(*counts_table(counts), args.counts_out)
    else:
        sys.stdout.write(dumps_csv(*counts_table(counts)))
    if args.dump:
        emit_json([{"level": c.cube.level, "index": list(c.cube.index), "dist": c.dist_to_E} for c in W.cubes], args.dump)
    if args.check and not check_sandwich_exact(W):
        print("sandwich check failed", file=sys.stderr)
        return 1
    return 0


def cmd_dims(args) -> int:
    from .dimension import assouad_dims, minkowski_dims_box, minkowski_dims_whitney
    from .report import dumps_json, emit_json

    _, E = _load(args)
    out = []
    if args.method in ("box", "all"):
        out += minkowski_dims_box(E, args.kmax, tail=args.window)
    if args.method in ("whitney", "all"):
        out += minkowski_dims_whitney(E, args.kmax, tail=args.window)
    if args.method in ("assouad", "all"):
        out += assouad_dims(E, samples_cap=args.samples)
    records = [e.as_record() for e in out]
    if args.json_out:
        emit_json(records, args.json_out)
    else:
        sys.stdout.write(dumps_json(records))
    return 0


def cmd_boundary(args) -> int:
    from .parallel import boundary_length_profile, parse_schedule
    from .report import dumps_csv, emit_csv, profile_table

    _, E = _load(args)
    schedule = parse_schedule(args.r_schedule) if args.r_schedule else None
    rows = boundary_length_profile(E, schedule, args.grid)
    if args.profile_out:
        emit_csv(*profile_table(rows), args.profile_out)
    else:
        sys.stdout.write(dumps_csv(*profile_table(rows)))
    return 0


def _run_and_report(cfg, json_out) -> int:
    from .report import dumps_json, emit_json, run

    report = run(cfg)
    if json_out:
        emit_json(report.as_record(), json_out)
    elif not cfg.out_dir:
        sys.stdout.write(dumps_json(report.as_record()))
    for name, res in report.suites.items():
        print(f"{name}: {'PASS' if res.get('passed') else 'FAIL'}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_verify(args) -> int:
    suites = tuple(args.suite.split(","))
    cfg = _config_from(
        args,
        k_max=args.kmax,
        grid=args.grid,
        offsets=tuple(int(v) for v in args.offsets.split(",")),
        offset_search=args.search,
        suites=suites,
    )
    return _run_and_report(cfg, args.json_out)


def cmd_run(args) -> int:
    from .report import RunConfig

    if args.config:
        cfg = RunConfig.load(args.config)
        if args.out_dir:
            cfg.out_dir = args.out_dir
    else:
        cfg = _config_from(
            args, k_max=args.kmax, grid=args.grid, suites=tuple(args.suites.split(",")), out_dir=args.out_dir
        )
    return _run_and_report(cfg, args.json_out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="whitneydim", description="Whitney decompositions and fractal dimension estimates.")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for compiled kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a set and write it as BoxSet JSON")
    _set_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--raw", action="store_true", help="skip normalization into [1/4,3/4]^d")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("whitney", help="Whitney decomposition and generation counts")
    _set_args(p)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--counts-out")
    p.add_argument("--dump", help="JSON list of selected cubes")
    p.add_argument("--check", action="store_true", help="exact sandwich check of every cube")
    p.set_defaults(func=cmd_whitney)

    p = sub.add_parser("dims", help="dimension estimates")
    _set_args(p)
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--method", choices=["box", "whitney", "assouad", "all"], default="all")
    p.add_argument("--window", type=int, default=4, help="tail width in generations")
    p.add_argument("--samples", type=int, default=256, help="cap on Assouad centre samples")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_dims)

    p = sub.add_parser("boundary", help="boundary length and volume profile (d = 2)")
    _set_args(p)
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--r-schedule", help="geo:r0,ratio,n")
    p.add_argument("--profile-out")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("verify", help="run verification suites")
    _set_args(p)
    p.add_argument("--suite", default="sandwich", help="comma list of suites")
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--offsets", default="2,4")
    p.add_argument("--search", type=int, default=3)
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="full pipeline from a config file or flags")
    _set_args(p)
    p.add_argument("--config", help="RunConfig JSON")
    p.add_argument("--suites", default="dims")
    p.add_argument("--kmax", type=int, default=12)
    p.add_argument("--grid", type=int, default=11)
    p.add_argument("--out-dir")
    p.add_argument("--json-out")
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if args.threads:
            import numba

            numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
        return args.func(args)
    except WhitneyDimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
