"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line that is printed in the pytest
terminal summary (and immediately, when run with ``-s``).
"""

import time
from pathlib import Path

import pytest

from riskfilter import checks, cli

from .conftest import ACCEPTANCE_LINES

ROOT = Path(__file__).resolve().parents[1]


def report(number, result):
    line = f"[{number:2d}] {result.line()}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert result.passed, line


def test_01_riccati_suite():
    result = checks.riccati_check()
    elapsed = result.metrics["seconds"]
    if elapsed > 30.0:
        result = checks.CheckResult(result.name, False, result.detail + " exceeds 30s budget", result.metrics)
    report(1, result)


def test_02_value_function_oracle():
    report(2, checks.value_function_oracle_check())


def test_03_entropic_optimality():
    report(3, checks.entropic_optimality_check())


def test_04_derivative_checks():
    report(4, checks.derivative_check(draws=50))


def test_05_risk_bounds():
    report(5, checks.risk_bounds_check(samples=1000))


def test_06_theta_limits():
    report(6, checks.theta_limits_check())


def test_07_worst_case_certificates():
    report(7, checks.worst_case_check())


def test_08_error_scaling():
    report(8, checks.error_scaling_check(deltas=(0.2, 0.1, 0.05)))


@pytest.mark.slow
def test_09_risk_table_over_seeds():
    result = checks.table_check(seeds=(11, 12, 13, 14, 15))
    if result.metrics["seconds"] > 300.0:
        result = checks.CheckResult(result.name, False, result.detail + " exceeds 5 min budget", result.metrics)
    report(9, result)


def test_10_determinism(tmp_path):
    preset = ROOT / "presets" / "oscillator_small.toml"
    t0 = time.perf_counter()
    outs = [tmp_path / "a", tmp_path / "b"]
    codes = [cli.main(["run", str(preset), "-o", str(o)]) for o in outs]
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*") if p.is_file())
    differing = [str(f) for f in files if (outs[0] / f).read_bytes() != (outs[1] / f).read_bytes()]
    ok = codes == [0, 0] and not differing and len(files) > 5
    detail = f"{len(files)} artifacts compared, {len(differing)} differ ({time.perf_counter() - t0:.1f}s)"
    report(10, checks.CheckResult("determinism", ok, detail))

