"""Acceptance criteria 1-10, one PASS/FAIL line each in the terminal summary."""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

import _acceptance as A
from conftest import ACCEPTANCE_LINES
from whitneydim.report import dumps_json

HERE = Path(__file__).parent
RESULTS: dict = {}


def _summary(rec: dict, limit: int = 600) -> str:
    text = json.dumps(rec, default=str)
    return text if len(text) <= limit else text[:limit] + "..."


def _report(i: int, ok: bool, detail: str) -> None:
    line = f"criterion {i}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


@pytest.mark.parametrize("i", range(1, 10))
def test_criterion(i):
    ok, rec, secs = A.run_criterion(i)
    RESULTS[i] = (ok, rec)
    limit = A.LIMITS.get(i)
    in_time = limit is None or secs < limit
    _report(i, ok and in_time, f"({secs:.1f} s{'' if limit is None else f' of {limit} s'}) {_summary(rec)}")
    assert in_time, f"runtime {secs:.1f} s exceeds {limit} s"
    assert ok, _summary(rec, 4000)


def _subprocess_records(threads: int) -> str:
    env = dict(os.environ, NUMBA_NUM_THREADS=str(max(threads, 1)))
    out = subprocess.run(
        [sys.executable, str(HERE / "_acceptance.py"), str(threads)],
        env=env,
        capture_output=True,
        text=True,
        check=True,
        timeout=3600,
    )
    return out.stdout


def test_criterion_10_determinism():
    local = {str(i): {"passed": RESULTS[i][0], "record": RESULTS[i][1]} for i in sorted(RESULTS)}
    if len(local) < 9:
        local = A.all_records()
    reference = dumps_json(local)
    run_a = _subprocess_records(1)
    run_b = _subprocess_records(2)
    ok = reference == run_a == run_b
    _report(10, ok, f"(in-process vs 1 thread vs 2 threads, {len(reference)} bytes each)")
    assert reference == run_a, "second run differs"
    assert run_a == run_b, "thread count changes the report"
