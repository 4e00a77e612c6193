"""Recurrence polynomials Q_n, P_n and remainders r_n = Q_n * gamma - P_n.

All three sequences solve

    y_{n+1} = (lam - b_n) y_n - a_n y_{n-1},   n >= 1,

and differ only in their seeds: ``Q_0 = 1, Q_1 = lam - b_0`` and
``P_0 = 0, P_1 = 1``.  ``a_0`` is never used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operator_model import OperatorModel
from .scaled import ScaledArray, ldexp_complex, normalize

# replaces an exactly vanishing denominator in the backward ratio recurrence
_TINY = 1e-30

SERIES_MIN_N = 16


@dataclass(frozen=True)
class RecurrenceTrace:
    lam: complex
    N: int
    Q: ScaledArray
    P: ScaledArray
    prodA: ScaledArray
    model: OperatorModel

    @property
    def log_h(self) -> np.ndarray:
        return self.model.arrays(self.N).log_h

    def log_abs_Qh(self) -> np.ndarray:
        return self.Q.log_abs() + self.log_h


@dataclass(frozen=True)
class MinimalSolution:
    """Recurrence solution obtained by the backward ratio sweep.

    ``f_1 = (lam - b_0) f_0 - 1`` holds by construction, so ``f`` is the remainder
    sequence for ``gamma = phi``; on the resolvent set it is the unique one that
    decays in the weighted norm.
    """

    phi: complex
    f: ScaledArray
    depth: int


@dataclass(frozen=True)
class RemainderTrace:
    """``r_n = Q_n gamma - P_n`` stored as ``offset * Q_n + f_n``.

    ``offset = gamma - minimal.phi``.  Forming ``Q_n gamma - P_n`` directly
    cancels catastrophically once ``Q_n`` dominates, so the decaying part is
    carried separately.  An offset within ``snap_rtol`` of zero is dropped
    (``snapped``): a double-precision gamma cannot resolve it.
    """

    gamma: complex
    r: ScaledArray
    offset: complex
    minimal: MinimalSolution
    snapped: bool


@dataclass(frozen=True)
class SeriesVerdict:
    partial_sums: np.ndarray
    log_partial_sums: np.ndarray
    verdict: str
    tail_ratio: float
    trusted_horizon: int


def _shifts(model: OperatorModel, lam: complex, N: int):
    arr = model.arrays(N)
    return complex(lam) - arr.b, arr.a


def _run(shift, a, y0: complex, y1: complex, N: int) -> ScaledArray:
    mant = np.zeros(N + 1, dtype=np.complex128)
    expo = np.zeros(N + 1, dtype=np.int64)
    mant[0], expo[0] = normalize(y0)
    if N == 0:
        return ScaledArray(mant, expo)
    frame = 0
    prev, cur = complex(y0), complex(y1)
    mant[1], expo[1] = normalize(cur)
    frexp = math.frexp
    for n in range(1, N):
        new = shift[n] * cur - a[n] * prev
        big = max(abs(new), abs(cur))
        if big == 0.0:
            raise ArithmeticError("two consecutive zero terms; recurrence degenerate")
        k = frexp(big)[1]
        prev, cur = ldexp_complex(cur, -k), ldexp_complex(new, -k)
        frame += k
        m, e = normalize(cur)
        mant[n + 1] = m
        expo[n + 1] = 0 if m == 0 else e + frame
    return ScaledArray(mant, expo)


def _cumprod(values) -> ScaledArray:
    n = len(values)
    mant = np.empty(n + 1, dtype=np.complex128)
    expo = np.empty(n + 1, dtype=np.int64)
    mant[0], expo[0] = 0.5, 1
    m, e = 1.0 + 0j, 0
    for k, v in enumerate(values, start=1):
        m, s = normalize(m * complex(v))
        e += s
        mant[k], expo[k] = m, e if m != 0 else 0
    return ScaledArray(mant, expo)


def evaluate_QP(model: OperatorModel, lam: complex, N: int) -> RecurrenceTrace:
    """Q_0..Q_N, P_0..P_N and the products a_1...a_n at ``lam``."""
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    lam = complex(lam)
    shift, a = _shifts(model, lam, N)
    Q = _run(shift, a, 1.0, shift[0], N)
    P = _run(shift, a, 0.0, 1.0, N)
    prodA = _cumprod(a[1:N + 1])
    return RecurrenceTrace(lam, N, Q, P, prodA, model)


def minimal_solution(model: OperatorModel, lam: complex, N: int, extra: int | None = None) -> MinimalSolution:
    """Backward sweep of ratios ``t_n = f_n / f_{n-1}`` started at depth ``N + extra``.

    The start error is damped by the ratio of the minimal to the dominant
    solution per step, so ``extra`` defaults to ``max(64, N)``.
    """
    if extra is None:
        extra = max(64, N)
    depth = N + extra
    shift, a = _shifts(model, lam, depth)
    t = np.zeros(depth + 2, dtype=np.complex128)
    nxt = 0j
    for n in range(depth, 0, -1):
        den = shift[n] - nxt
        if den == 0:
            den = _TINY
        nxt = a[n] / den
        t[n] = nxt
    den = shift[0] - t[1]
    if den == 0:
        den = _TINY
    phi = 1.0 / den
    f = _cumprod(t[1:N + 1])
    m0, e0 = normalize(phi)
    f_mant = f.mantissa * m0
    fm, k = np.frexp(np.abs(f_mant))
    mant = np.where(f_mant != 0, np.ldexp(f_mant.real, -k) + 1j * np.ldexp(f_mant.imag, -k), 0)
    expo = np.where(f_mant != 0, f.exponent + e0 + k, 0)
    return MinimalSolution(phi, ScaledArray(mant, expo), depth)


def evaluate_remainder(trace: RecurrenceTrace, gamma: complex, *, snap_rtol: float = 1e-10,
                       extra: int | None = None) -> RemainderTrace:
    """Remainders ``r_n = Q_n gamma - P_n`` for ``n = 0..N``."""
    gamma = complex(gamma)
    ms = minimal_solution(trace.model, trace.lam, trace.N, extra)
    offset = gamma - ms.phi
    snapped = abs(offset) <= snap_rtol * abs(ms.phi)
    if snapped:
        offset = 0j
    r = trace.Q.combine(ms.f, offset, 1.0)
    return RemainderTrace(gamma, r, offset, ms, snapped)


def _log_sum_exp_cumulative(logs: np.ndarray) -> np.ndarray:
    out = np.empty_like(logs)
    acc = -math.inf
    for i, v in enumerate(logs):
        if v > acc:
            acc = v + math.log1p(math.exp(acc - v)) if acc > -math.inf else v
        elif v > -math.inf:
            acc = acc + math.log1p(math.exp(v - acc))
        out[i] = acc
    return out


def _relative_noise(model: OperatorModel, lam: complex, N: int, eps: float) -> np.ndarray:
    """Estimated relative error of Q_n from perturbing lam (and the coefficients) by ``eps``.

    Runs the lam-derivative recurrence ``Q'_{n+1} = Q_n + (lam - b_n) Q'_n - a_n Q'_{n-1}``
    in a frame shared with Q.
    """
    shift, a = _shifts(model, lam, N)
    scale = eps * (abs(lam) + 1.0)
    rel = np.zeros(N + 1)
    q0, q1 = 1.0 + 0j, complex(shift[0])
    d0, d1 = 0j, 1.0 + 0j
    rel[1] = math.inf if q1 == 0 else scale * abs(d1) / abs(q1)
    frexp = math.frexp
    for n in range(1, N):
        q2 = shift[n] * q1 - a[n] * q0
        d2 = q1 + shift[n] * d1 - a[n] * d0
        big = max(abs(q2), abs(q1), abs(d2), abs(d1))
        k = frexp(big)[1]
        q0, q1 = ldexp_complex(q1, -k), ldexp_complex(q2, -k)
        d0, d1 = ldexp_complex(d1, -k), ldexp_complex(d2, -k)
        rel[n + 1] = math.inf if q1 == 0 else scale * abs(d1) / abs(q1) + (n + 1) * eps
    return rel


def eigen_series_test(model: OperatorModel, lam: complex, N: int, *, rtol: float = 1e-6,
                      growth_factor: float = 10.0, noise_eps: float = 1e-14,
                      noise_max: float = 1e-2, tail_terms: int = 5,
                      tail_ratio_max: float = 0.5,
                      trace: RecurrenceTrace | None = None) -> SeriesVerdict:
    """Decide summability of ``sum |Q_n h_n|^2`` from its first ``N + 1`` terms.

    * ``converges``: either the partial sums settle (relative increment
      ``<= rtol``) over two consecutive doublings ending at ``N``, or the last
      ``tail_terms`` terms before the trusted horizon shrink with every ratio
      ``<= tail_ratio_max`` and the geometric tail bound is ``<= rtol`` of the sum.
    * ``diverges``: partial sums grow by ``>= growth_factor`` over both of the
      last two doublings.
    * ``indeterminate`` otherwise.

    The trusted horizon is the last index before the estimated relative noise
    of ``Q_n`` exceeds ``noise_max``.  At an eigenvalue ``Q`` is the decaying
    solution and a lam perturbation of one ulp already feeds the growing one, so
    terms past the horizon say nothing about the exact point.
    """
    if N < SERIES_MIN_N:
        raise ValueError(f"eigen_series_test needs N >= {SERIES_MIN_N}")
    if trace is None or trace.N != N or trace.lam != complex(lam):
        trace = evaluate_QP(model, lam, N)
    logt = 2.0 * trace.log_abs_Qh()
    logs = _log_sum_exp_cumulative(logt)
    with np.errstate(over="ignore"):
        sums = np.exp(logs)

    def incr(lo, hi):
        return math.expm1(logs[hi] - logs[lo])

    tail_ratio = math.exp(logs[N] - logs[N // 2])
    noise = _relative_noise(model, lam, N, noise_eps)
    bad = np.nonzero(noise > noise_max)[0]
    horizon = int(bad[0] - 1) if len(bad) else N

    verdict = "indeterminate"
    if incr(N // 2, N) <= rtol and incr(N // 4, N // 2) <= rtol:
        verdict = "converges"
    elif horizon >= tail_terms:
        window = logt[horizon - tail_terms + 1: horizon + 1]
        steps = np.diff(window)
        if np.all(np.isfinite(window)) and np.all(steps <= math.log(tail_ratio_max)):
            ratio = math.exp(steps.max())
            log_tail = window[-1] + math.log(ratio / (1.0 - ratio))
            if log_tail - logs[horizon] <= math.log(rtol):
                verdict = "converges"
    if verdict == "indeterminate":
        if (logs[N] - logs[N // 2] >= math.log(growth_factor)
                and logs[N // 2] - logs[N // 4] >= math.log(growth_factor)):
            verdict = "diverges"
    return SeriesVerdict(sums, logs, verdict, tail_ratio, horizon)


def growth_exponent(trace: RecurrenceTrace) -> float:
    """``max |Q_n h_n|^(1/n)`` over ``n`` in ``[N/2, N]``."""
    if trace.N < 32:
        raise ValueError("growth_exponent needs a trace with N >= 32")
    lq = trace.log_abs_Qh()
    n = np.arange(trace.N // 2, trace.N + 1)
    return float(np.exp(np.max(lq[n] / n)))


def _ratio_to_complex(m_num, e_num, m_den, e_den) -> np.ndarray:
    with np.errstate(over="ignore", invalid="ignore"):
        z = m_num / m_den
        k = (e_num - e_den).astype(np.int64)
        return np.ldexp(z.real, k) + 1j * np.ldexp(z.imag, k)


def _casorati_terms(trace: RecurrenceTrace, Y: ScaledArray):
    """``Q_{n-1} Y_n / A_{n-1}`` and ``Q_n Y_{n-1} / A_{n-1}`` for n = 1..N (``A`` = prodA)."""
    Q = trace.Q
    pm, pe = trace.prodA.mantissa[:-1], trace.prodA.exponent[:-1]
    t1 = _ratio_to_complex(Q.mantissa[:-1] * Y.mantissa[1:], Q.exponent[:-1] + Y.exponent[1:], pm, pe)
    t2 = _ratio_to_complex(Q.mantissa[1:] * Y.mantissa[:-1], Q.exponent[1:] + Y.exponent[:-1], pm, pe)
    return t1, t2


def _residual(t1, t2, sign: float) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        res = np.abs(sign * (t1 - t2) + 1.0)
    # inf - inf: the terms overflowed, so the identity cannot be checked in double
    return np.where(np.isnan(res), np.inf, res)


def casorati_residuals(trace: RecurrenceTrace, remainder: RemainderTrace | None = None) -> np.ndarray:
    """Relative residuals for ``n = 1..N`` (index 0 of the result is ``n = 1``).

    With a remainder: ``|Q_{n-1} r_n - Q_n r_{n-1} + a_1...a_{n-1}| / |a_1...a_{n-1}|``.
    Without one, the same check with ``P`` in place of ``r`` and the sign flipped.

    Every ``c Q - P`` gives the same Casorati sum with ``Q`` because the ``Q``
    part cancels identically.  For a remainder the sum is therefore evaluated,
    index by index, in whichever of ``-P`` and the minimal solution ``f`` has the
    smaller terms: ``f`` away from the spectrum, where ``P`` grows like ``Q``, and
    ``-P`` where no decaying solution exists and the sweep for ``f`` breaks down.
    """
    t1p, t2p = _casorati_terms(trace, trace.P)
    res_p = _residual(t1p, t2p, -1.0)
    if remainder is None:
        return res_p
    t1f, t2f = _casorati_terms(trace, remainder.minimal.f)
    res_f = _residual(t1f, t2f, 1.0)
    with np.errstate(invalid="ignore"):
        cond_p = np.maximum(np.abs(t1p), np.abs(t2p))
        cond_f = np.maximum(np.abs(t1f), np.abs(t2f))
    use_f = ~(cond_p < cond_f)
    return np.where(use_f, res_f, res_p)


def casorati_residual(trace: RecurrenceTrace, n: int, remainder: RemainderTrace | None = None) -> float:
    if not 1 <= n <= trace.N:
        raise IndexError(f"n must lie in [1, {trace.N}]")
    return float(casorati_residuals(trace, remainder)[n - 1])
