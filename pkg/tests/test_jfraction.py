import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from tridiag_resolvent.jfraction import (
    ConvergentTable,
    DegenerateMomentsError,
    MomentSequence,
    convergents,
    geometric_subsequence,
    jfraction_to_moments,
    model_moments,
    moments_to_jfraction,
    read_moments_csv,
    remainder_diagnostics,
    write_convergents_csv,
)
from tridiag_resolvent.operator_model import build_operator, constant_spec
from tridiag_resolvent.recurrence import evaluate_QP

SQRT3 = math.sqrt(3.0)


def test_convergents_at_one(chebyshev, frozen):
    table = convergents(evaluate_QP(chebyshev, 1.0, 30))
    values = table.values()
    assert np.allclose(values[1:].real, frozen["chebyshev_convergents_at_1"], rtol=1e-13, atol=0)
    assert table.entries[0] == (0, 0j)


def test_first_convergent(perturbed):
    lam = 2.0 + 1.0j
    table = convergents(evaluate_QP(perturbed, lam, 4))
    assert table.entries[1][1] == pytest.approx(1 / (lam - 5.0), rel=1e-15)


def test_poles_at_zero(chebyshev):
    trace = evaluate_QP(chebyshev, 0.0, 41)
    table = convergents(trace)
    for n, value in table.entries:
        # pole marker exactly when the scaled mantissa of Q_n is zero
        assert (value is None) == (trace.Q.mantissa[n] == 0)
        assert (value is None) == (n % 2 == 1)
    assert np.isnan(table.values()[1])


def test_remainder_diagnostics_decay_at_two(chebyshev):
    diag = remainder_diagnostics(evaluate_QP(chebyshev, 2.0, 128), 2 * (2 - SQRT3))
    assert diag.rate == pytest.approx(2 - SQRT3, rel=0.02)
    assert np.all(diag.values >= 0)


def test_remainder_diagnostics_at_one_stay_at_two(chebyshev):
    diag = remainder_diagnostics(evaluate_QP(chebyshev, 1.0, 200), 2.0)
    assert np.allclose(diag.values, 2.0, rtol=1e-12, atol=0)


def test_remainder_diagnostics_vanish_at_own_convergent(period_two):
    trace = evaluate_QP(period_two, 0.9 + 0.1j, 60)
    pi_N = (trace.P[60] / trace.Q[60]).to_complex()
    diag = remainder_diagnostics(trace, pi_N)
    assert diag.values[60] <= 1e-12 * diag.values[:60].max()


def test_geometric_subsequence_at_two(chebyshev, frozen):
    table = convergents(evaluate_QP(chebyshev, 2.0, 64))
    sub = geometric_subsequence(table, 2 * (2 - SQRT3))
    assert sub.verdict == "geometric"
    assert sub.rate == pytest.approx(frozen["chebyshev_rates_lambda_2_N_256"]["rho"], rel=0.05)
    assert len(sub.indices) >= 48


def test_geometric_subsequence_at_one_is_not_found(chebyshev):
    table = convergents(evaluate_QP(chebyshev, 1.0, 128))
    assert geometric_subsequence(table, 2.0).verdict == "none-found"


def test_geometric_subsequence_constant_table():
    table = ConvergentTable(0.5, tuple((n, 0.25 + 0j) for n in range(40)))
    sub = geometric_subsequence(table, 0.25)
    assert sub.verdict == "geometric" and sub.rate == 0.0
    assert list(sub.indices) == list(range(1, 40))
    with pytest.raises(ValueError):
        geometric_subsequence(ConvergentTable(0.5, ((0, 1j),)), 1j)


def test_chebyshev_moments_from_matrix_powers(frozen):
    expected = [complex(*c) for c in frozen["chebyshev_moments_M_8"]]
    moments = jfraction_to_moments([0.25] * 8, [0.0] * 8, 8)
    assert np.allclose(moments.c, expected, rtol=1e-14, atol=1e-15)
    assert moments.c[2] == 0.25


def test_moments_are_local(period_two):
    base = model_moments(period_two, 6)
    a = [period_two.a(n) for n in range(1, 20)]
    b = [period_two.b(n) for n in range(20)]
    assert jfraction_to_moments(a, b, 6, size=19).c == base.c
    assert np.allclose(base.c, oracles.matrix_power_moments(a, b, 6), rtol=1e-13, atol=1e-15)


def test_single_level_moment():
    assert jfraction_to_moments([0.3], [0.7], 1).c[:2] == (1, 0.7)


def test_chebyshev_weight_recovery(frozen):
    moments = MomentSequence(tuple(complex(*c) for c in frozen["chebyshev_moments_M_8"]))
    for hp in (False, True):
        a, b = moments_to_jfraction(moments, high_precision=hp)
        assert len(a) == 8 and len(b) == 8
        assert np.allclose(a, 0.25, atol=1e-6) and np.allclose(b, 0.0, atol=1e-6)


def test_single_pole_is_degenerate_at_level_one():
    beta = 0.3
    with pytest.raises(DegenerateMomentsError) as info:
        moments_to_jfraction(MomentSequence((1.0, beta, beta ** 2)))
    assert info.value.level == 1
    assert "level 1" in str(info.value)


def test_moment_sequence_validation():
    with pytest.raises(ValueError):
        MomentSequence((1.0, 0.0))
    with pytest.raises(ValueError):
        MomentSequence((0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        moments_to_jfraction(MomentSequence((1.0,)))


unit_disk = st.builds(complex, st.floats(-0.7, 0.7), st.floats(-0.7, 0.7))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 8).flatmap(lambda M: st.tuples(
    st.lists(unit_disk.filter(lambda z: abs(z) >= 0.1), min_size=M, max_size=M),
    st.lists(unit_disk, min_size=M, max_size=M))))
def test_roundtrip_property(ab):
    a, b = ab
    M = len(a)
    a_rec, b_rec = moments_to_jfraction(jfraction_to_moments(a, b, M), high_precision=True)
    assert np.all(np.abs(a_rec - np.array(a)) <= 1e-6 * np.abs(np.array(a)))
    assert np.all(np.abs(b_rec - np.array(b)) <= 1e-6 * np.maximum(np.abs(np.array(b)), 1e-3))


def test_moments_csv_roundtrip(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("# comment\n1.0,0.0\n\n0.5,-0.25\n0.25,0\n")
    assert read_moments_csv(path).c == (1.0, 0.5 - 0.25j, 0.25)
    path.write_text("1.0,0.0,9\n")
    with pytest.raises(ValueError, match="m.csv:1"):
        read_moments_csv(path)
    path.write_text("1.0,zero\n")
    with pytest.raises(ValueError):
        read_moments_csv(path)


def test_convergents_csv(tmp_path, chebyshev):
    table = convergents(evaluate_QP(chebyshev, 0.0, 5))
    path = tmp_path / "pade.csv"
    write_convergents_csv(table, 1j, path, footer=["verdict = none-found"])
    lines = path.read_text().splitlines()
    assert lines[0] == "n,re,im,abs_err"
    assert lines[2] == "1,nan,nan,nan"
    assert lines[-1] == "# verdict = none-found"
    assert len(lines) == 1 + 6 + 1


def test_moments_of_shifted_model_start_with_diagonal():
    model = build_operator(constant_spec(0.5, 0.3, 0.5))
    assert model_moments(model, 2).c[1] == pytest.approx(0.3)
