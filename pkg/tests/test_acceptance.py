"""Acceptance criteria, one test each, with their stated tolerances and time budgets.

A PASS/FAIL line per criterion is printed in the terminal summary (see conftest).
"""

from __future__ import annotations

import json
import math
import shutil
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

import oracles
from tridiag_resolvent.jfraction import (
    MomentSequence,
    convergents,
    geometric_subsequence,
    jfraction_to_moments,
    moments_to_jfraction,
)
from tridiag_resolvent.operator_model import CoefficientSpec, build_operator
from tridiag_resolvent.recurrence import (
    casorati_residuals,
    eigen_series_test,
    evaluate_QP,
    evaluate_remainder,
    growth_exponent,
    minimal_solution,
)
from tridiag_resolvent.resolvent import (
    ClassifyParams,
    GammaIllConditioned,
    classify_point,
    decay_fit,
    estimate_gamma,
    finite_section_inverse,
    resolvent_block,
)
from tridiag_resolvent.scan import ScanRegion, csv_text, scan

SQRT3 = math.sqrt(3.0)


@contextmanager
def budget(seconds: float):
    start = time.perf_counter()
    yield
    elapsed = time.perf_counter() - start
    assert elapsed < seconds, f"took {elapsed:.2f} s, budget {seconds} s"


def test_criterion_01_chebyshev_convergents_at_one(chebyshev):
    with budget(1.0):
        table = convergents(evaluate_QP(chebyshev, 1.0, 30))
        for n, value in table.entries[1:]:
            expected = 2 * n / (n + 1)
            assert abs(value - expected) <= 1e-12 * expected, n


def test_criterion_02_symmetric_parity_at_zero(chebyshev):
    with budget(1.0):
        trace = evaluate_QP(chebyshev, 0.0, 101)
        for n in range(51):
            assert trace.P.mantissa[2 * n] == 0, f"P_{2 * n}(0) != 0"
            assert trace.Q.mantissa[2 * n + 1] == 0, f"Q_{2 * n + 1}(0) != 0"


def test_criterion_03_rates_at_two(chebyshev, frozen):
    hp = frozen["chebyshev_rates_lambda_2_N_256"]
    # the high-precision oracle itself sits on the closed-form rates
    assert hp["growth"] == pytest.approx(2 + SQRT3, rel=1e-2)
    assert hp["decay"] == pytest.approx(2 - SQRT3, rel=1e-6)
    assert hp["rho"] == pytest.approx((2 - SQRT3) / (2 + SQRT3), rel=1e-3)
    with budget(5.0):
        trace = evaluate_QP(chebyshev, 2.0, 256)
        growth = growth_exponent(trace)
        gamma = estimate_gamma(trace).gamma
        fit = decay_fit(trace, evaluate_remainder(trace, gamma))
        sub = geometric_subsequence(convergents(trace), gamma)
    assert growth == pytest.approx(2 + SQRT3, rel=0.01)
    assert growth == pytest.approx(hp["growth"], rel=0.01)
    assert fit.q == pytest.approx(2 - SQRT3, rel=0.02)
    assert fit.q == pytest.approx(hp["decay"], rel=0.02)
    assert fit.verdict == "geometric"
    assert sub.rate == pytest.approx((2 - SQRT3) / (2 + SQRT3), rel=0.05)
    assert sub.rate == pytest.approx(hp["rho"], rel=0.05)


@pytest.mark.parametrize("key,lam", [("2", 2.0), ("3i", 3j), ("-1.5+0.5i", -1.5 + 0.5j)])
def test_criterion_04_gamma_matches_quadrature(chebyshev, frozen, key, lam):
    expected = complex(*frozen["phi_quadrature"][key])
    with budget(5.0):
        gamma = estimate_gamma(evaluate_QP(chebyshev, lam, 128)).gamma
    assert abs(gamma - expected) <= 1e-8


def test_criterion_05_resolvent_oracle_equivalence(chebyshev):
    def rel_err(x, y):
        return float(np.max(np.abs(x - y) / np.abs(y)))

    with budget(5.0):
        errors = {}
        for N in (64, 128):
            trace = evaluate_QP(chebyshev, 2.0, N)
            rem = evaluate_remainder(trace, estimate_gamma(trace).gamma)
            closed = resolvent_block(trace, rem, 8, basis="g")
            section = finite_section_inverse(chebyshev, 2.0, N)[:8, :8]
            errors[N] = rel_err(closed, section)
    assert errors[64] <= 1e-8
    assert errors[128] <= max(errors[64], 1e-15)


def _random_bounded_models(seed: int, count: int):
    rng = np.random.default_rng(seed)

    def polar(n, lo, hi):
        return tuple(rng.uniform(lo, hi, n) * np.exp(1j * rng.uniform(0, 2 * np.pi, n)))

    models = []
    for _ in range(count):
        period, head = int(rng.integers(1, 4)), int(rng.integers(0, 4))
        spec = CoefficientSpec(
            "periodic-tail" if period > 1 else "constant-tail",
            alpha=polar(head, 0.3, 1.2), beta=polar(head, 0.0, 1.0), gamma=polar(head, 0.3, 1.2),
            period=period, tail_alpha=polar(period, 0.3, 1.2),
            tail_beta=polar(period, 0.0, 1.0), tail_gamma=polar(period, 0.3, 1.2))
        models.append(build_operator(spec))
    return models, rng


def test_criterion_06_casorati_residuals(chebyshev, perturbed, period_two):
    N = 200
    with budget(10.0):
        models, rng = _random_bounded_models(seed=6, count=20)
        # resolvent, spectrum and gap points; the exact eigenvalue 5.05 is left out
        # because the remainder needs gamma = phi(lambda), which has a pole there
        builtin = {
            chebyshev: (2.0, 0.5, 3j, -1.5 + 0.5j, 0.95),
            perturbed: (5.55, 5.1, 2.0, 0.5, 3j),
            period_two: (0.0, 0.1 + 0.15j, 0.5, 0.9, 3j),
        }
        cases = [(m, lam) for m, lams in builtin.items() for lam in lams]
        cases += [(m, complex(*rng.uniform(-3, 3, 2))) for m in models for _ in range(5)]
        worst = 0.0
        for model, lam in cases:
            trace = evaluate_QP(model, lam, N)
            try:
                gamma = estimate_gamma(trace).gamma
            except GammaIllConditioned:
                gamma = minimal_solution(model, lam, N).phi
            worst = max(worst, float(casorati_residuals(trace, evaluate_remainder(trace, gamma)).max()))
    assert worst <= 1e-8


def test_criterion_07_moments_roundtrip(frozen):
    rng = np.random.default_rng(7)
    with budget(5.0):
        for _ in range(20):
            M = int(rng.integers(1, 9))
            # coefficients in the unit disk, |a_n| >= 0.1
            a = rng.uniform(0.1, 1.0, M) * np.exp(1j * rng.uniform(0, 2 * np.pi, M))
            b = rng.uniform(0.0, 1.0, M) * np.exp(1j * rng.uniform(0, 2 * np.pi, M))
            a_rec, b_rec = moments_to_jfraction(jfraction_to_moments(a, b, M))
            assert np.all(np.abs(a_rec - a) <= 1e-6 * np.abs(a))
            assert np.all(np.abs(b_rec - b) <= 1e-6 * np.maximum(np.abs(b), 1e-300))
        cheb = MomentSequence(tuple(complex(*c) for c in frozen["chebyshev_moments_M_8"]))
        a_rec, b_rec = moments_to_jfraction(cheb)
    assert np.allclose(a_rec, 0.25, rtol=0, atol=1e-6)
    assert np.allclose(b_rec, 0.0, rtol=0, atol=1e-6)


def test_criterion_08_eigenvalue_detection(perturbed, frozen):
    with budget(30.0):
        eig = {N: oracles.largest_real_eigenvalue(perturbed, N) for N in (200, 400)}
        assert abs(eig[200] - eig[400]) <= 1e-8
        assert eig[400] == pytest.approx(frozen["perturbed_eigenvalue"]["400"], abs=1e-12)
        lam0 = eig[400]
        verdict = eigen_series_test(perturbed, lam0, 128)
        label = classify_point(perturbed, lam0).label
        shifted = classify_point(perturbed, lam0 + 0.5).label
    assert verdict.verdict == "converges"
    assert label == "eigenvalue"
    assert shifted == "resolvent"


def test_criterion_09_scan_correctness(chebyshev):
    region = ScanRegion(-2.0, 2.0, -1.0, 1.0, 81, 41)
    params = ClassifyParams()
    with budget(120.0):
        first = scan(chebyshev, region, params, workers=1)
        second = scan(chebyshev, region, params, workers=1)
        parallel = scan(chebyshev, region, params, workers=4)
    for lam, label in zip(first.points, first.labels):
        x, y = lam.real, lam.imag
        dist = abs(y) if abs(x) <= 1 else abs(complex(abs(x) - 1, y))
        if dist > 0.25:
            assert label == "resolvent", lam
        if y == 0 and abs(x) <= 0.9:
            assert label in ("spectrum", "indeterminate"), lam
    text = csv_text(first)
    assert text == csv_text(second)
    assert text == csv_text(parallel)


CLI_CASES = [
    ("probe", "probe_chebyshev.json", 0, "probe_report.json"),
    ("probe", "probe_perturbed.json", 0, "probe_report.json"),
    ("scan", "scan_period2.json", 0, "scan.csv"),
    ("pade", "pade_chebyshev.json", 0, "pade.csv"),
    ("pade", "pade_chebyshev_edge.json", 0, "pade.csv"),
    ("moments", "moments_chebyshev.json", 0, "jfraction.csv"),
    ("moments", "moments_degenerate.json", 2, None),
    ("oracle", "oracle_chebyshev.json", 0, "oracle_report.json"),
    ("oracle", "oracle_spectrum.json", 2, "oracle_report.json"),
]


def _run_cli(*args, cwd):
    return subprocess.run([sys.executable, "-m", "tridiag_resolvent.cli", *args],
                          cwd=cwd, capture_output=True, text=True)


def _check_schema(name: str, path: Path):
    text = path.read_text()
    if name.endswith(".json"):
        report = json.loads(text)
        assert "params_echo" in report
        if name == "probe_report.json":
            assert report["label"] in ("resolvent", "eigenvalue", "spectrum", "indeterminate")
            assert {"evidence", "convergents", "remainder_diagnostics"} <= set(report)
        else:
            assert {"max_rel_error", "pass", "block", "N"} <= set(report)
    elif name == "scan.csv":
        lines = text.splitlines()
        assert lines[0] == "re,im,label,q,growth,residual"
        assert len(lines) == 41 * 21 + 1
    elif name == "pade.csv":
        assert text.startswith("n,re,im,abs_err\n")
        assert any(line.startswith("# verdict = ") for line in text.splitlines())
    elif name == "jfraction.csv":
        assert text.startswith("n,b_re,b_im,a_re,a_im\n")


def test_criterion_10_cli_contract(tmp_path):
    configs = Path(__file__).resolve().parents[1] / "configs"
    work = tmp_path / "configs"
    shutil.copytree(configs, work, ignore=shutil.ignore_patterns("out"))
    with budget(60.0):
        for command, config, code, output in CLI_CASES:
            out = tmp_path / f"out_{command}_{Path(config).stem}"
            proc = _run_cli(command, "--config", config, "--out", str(out), cwd=work)
            assert proc.returncode == code, (config, proc.stderr)
            if output:
                _check_schema(output, out / output)
            else:
                assert not out.exists() or not any(out.iterdir())
        malformed = {
            "bad_json.json": "{not json",
            "missing_operator.json": json.dumps({"operator_file": "nope.json", "lambda": [2, 0]}),
            "bad_lambda.json": json.dumps({"operator_file": "operators/chebyshev.json",
                                           "lambda": 2}),
            "bad_region.json": json.dumps({"operator_file": "operators/chebyshev.json",
                                           "region": {"re_min": 1, "re_max": 1, "im_min": 0,
                                                      "im_max": 1, "nx": 3, "ny": 3}}),
            "zero_alpha.json": json.dumps({"operator": {"kind": "constant-tail", "tail": {
                "alpha": [[0, 0]], "beta": [[0, 0]], "gamma": [[1, 0]]}}, "lambda": [2, 0]}),
            "even_moments.json": json.dumps({"moments": [[1, 0], [0, 0]]}),
        }
        for name, text in malformed.items():
            (work / name).write_text(text)
        for command in ("probe", "scan", "pade", "moments", "oracle"):
            for name in malformed:
                out = tmp_path / f"bad_{command}_{Path(name).stem}"
                proc = _run_cli(command, "--config", name, "--out", str(out), cwd=work)
                assert proc.returncode == 1, (command, name, proc.returncode, proc.stderr)
                assert "Traceback" not in proc.stderr
                assert not out.exists() or not any(out.iterdir()), (command, name)
