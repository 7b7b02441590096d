import json
import math

import pytest

from whitneydim.cli import main
from whitneydim.errors import ConfigError
from whitneydim.geometry import load_boxset
from whitneydim.report import (
    SUITES,
    RunConfig,
    canonical,
    counts_table,
    dumps_csv,
    dumps_json,
    parse_csv,
    profile_table,
    run,
)
from whitneydim.whitney import GenerationCounts

CARPET = math.log(8) / math.log(3)


def test_counts_table_sorted_by_k():
    header, rows = counts_table(GenerationCounts({5: 3, 3: 1, 4: 2}, (3, 5)))
    assert dumps_csv(header, rows) == "k,count\n3,1\n4,2\n5,3\n"


def test_profile_table_sorted_by_descending_r():
    header, rows = profile_table([(0.1, 1.0, 0.5), (0.4, 2.0, 0.25), (0.2, 1.5, 0.125)])
    text = dumps_csv(header, rows)
    assert text.splitlines()[0] == "r,length,volume"
    assert [r[0] for r in parse_csv(text)[1]] == [0.4, 0.2, 0.1]


def test_reals_have_nine_significant_digits():
    assert dumps_json({"x": math.pi}) == '{\n  "x": 3.14159265\n}\n'
    assert canonical([1 / 3, float("inf")]) == [0.333333333, "inf"]


def test_config_requires_one_source():
    with pytest.raises(ConfigError):
        RunConfig().validate()
    with pytest.raises(ConfigError):
        RunConfig(set_name="point", suites=("nope",)).validate()


def test_config_round_trip(tmp_path):
    cfg = RunConfig(set_name="point", suites=("dims", "codim"), k_max=10, grid=10)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.as_dict()))
    assert RunConfig.load(path) == cfg


def test_point_dims_config_passes(tmp_path):
    report = run(RunConfig(set_name="point", suites=("dims",), out_dir=str(tmp_path)))
    assert report.passed
    ests = report.suites["dims"]["estimates"]
    assert all(abs(e["value"]) <= 0.05 for e in ests)
    assert {"report.json", "counts.csv", "profile.csv", "timings.json"} <= {p.name for p in tmp_path.iterdir()}


def test_missing_input_is_config_error_without_outputs(tmp_path):
    out = tmp_path / "out"
    code = main(["run", "--in", str(tmp_path / "missing.json"), "--out-dir", str(out)])
    assert code == 2
    assert not out.exists()


def test_bad_arguments_exit_2():
    assert main(["dims", "--kmax", "x"]) == 2


def test_gen_then_whitney(tmp_path, capsys):
    path = tmp_path / "c.json"
    assert main(["gen", "--set", "cantor3x3", "--depth", "3", "--out", str(path)]) == 0
    E = load_boxset(path)
    assert E.normalized_flag and len(E) == 64
    counts = tmp_path / "counts.csv"
    assert main(["whitney", "--in", str(path), "--kmax", "8", "--check", "--counts-out", str(counts)]) == 0
    assert counts.read_text().startswith("k,count\n3,")


def test_dims_json(tmp_path):
    out = tmp_path / "d.json"
    assert main(["dims", "--set", "segment", "--method", "box", "--json-out", str(out)]) == 0
    recs = json.loads(out.read_text())
    assert [r["variant"] for r in recs] == ["upper", "lower"]
    assert all(abs(r["value"] - 1) <= 0.05 for r in recs)


def test_boundary_profile(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["boundary", "--set", "point", "--r-schedule", "geo:0.125,0.5,3", "--profile-out", str(out)]) == 0
    header, rows = parse_csv(out.read_text())
    assert header == ["r", "length", "volume"]
    assert rows[0][1] == pytest.approx(2 * math.pi * 0.125, rel=0.015)


def test_thick_cantor_run(tmp_path):
    out = tmp_path / "t.json"
    code = main(["verify", "--thick-cantor", "J=2,n=1:1,s=2:1.5", "--suite", "thick", "--json-out", str(out)])
    rec = json.loads(out.read_text())
    assert rec["suites"]["thick"]["closed_form_ok"]
    assert code == (0 if rec["passed"] else 1)


def test_carpet_all_suites(tmp_path):
    cfg = RunConfig(set_name="carpet", depth=6, suites=tuple(s for s in SUITES if s != "thick"), out_dir=str(tmp_path))
    report = run(cfg)
    rec = json.loads((tmp_path / "report.json").read_text())
    assert rec["suites"]["sandwich"]["passed"]
    box = [e["value"] for e in rec["suites"]["dims"]["estimates"] if e["method"] == "box"]
    assert all(abs(v - CARPET) <= 0.1 for v in box)
    assert rec["passed"] == report.passed
