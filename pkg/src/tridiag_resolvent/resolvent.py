"""Resolvent-set criterion: gamma recovery, closed-form resolvent entries, decay fit.

Columns of ``B = (lam I - A)^{-1}`` in the e-basis are built from ``Q`` and the
remainders ``r``::

    B[i, j] = Q_i r_j / (a_1 ... a_j)   for i <= j
    B[i, j] = r_i Q_j / (a_1 ... a_j)   for i >= j

Entries in the orthonormal g-basis are ``B[i, j] d_j / d_i``; their moduli are
``|B[i, j]| h_i / h_j``, the weighted entries whose geometric decay in
``|i - j|`` characterises the resolvent set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg

from .operator_model import OperatorModel, UnboundedOperatorError, norm_upper_bound
from .recurrence import (
    RecurrenceTrace,
    RemainderTrace,
    eigen_series_test,
    evaluate_QP,
    evaluate_remainder,
    growth_exponent,
)
from .scaled import ScaledComplex

LABELS = ("resolvent", "eigenvalue", "spectrum", "indeterminate")


class GammaIllConditioned(ArithmeticError):
    pass


class SingularTruncationError(ArithmeticError):
    def __init__(self, pivot_index: int, pivot: float):
        self.pivot_index = pivot_index
        super().__init__(f"finite section is numerically singular at pivot {pivot_index} (|pivot| = {pivot:.3e})")


@dataclass(frozen=True)
class GammaEstimate:
    gamma: complex
    residual: float
    condition: float


@dataclass(frozen=True)
class ResolventEntry:
    i: int
    j: int
    value: ScaledComplex


@dataclass(frozen=True)
class DecayFit:
    C: float
    q: float
    fit_window: tuple[int, int]
    max_offset: int
    rms_residual: float
    verdict: str


@dataclass(frozen=True)
class ClassifyParams:
    n_max: int = 128
    escalate_n: int | None = 256
    q_max: float = 0.95
    rms_max: float = 0.5
    growth_margin: float = 0.05
    gamma_threshold: float = 1e-3
    series_rtol: float = 1e-6
    series_growth: float = 10.0
    snap_rtol: float = 1e-10
    fast_path: bool = True

    def __post_init__(self):
        if self.n_max < 64:
            raise ValueError("n_max must be >= 64 (decay fit minimum)")
        for name in ("q_max", "rms_max", "growth_margin", "gamma_threshold", "series_rtol",
                     "series_growth", "snap_rtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PointClassification:
    lam: complex
    label: str
    evidence: dict

    @property
    def q(self) -> float:
        decay = self.evidence.get("decay")
        return decay["q"] if decay else self.evidence.get("q", math.nan)

    @property
    def growth(self) -> float:
        g = self.evidence.get("growth")
        return math.nan if g is None else g

    @property
    def residual(self) -> float:
        g = self.evidence.get("gamma")
        return math.nan if not g else g["residual"]


def _weighted_cplx(trace: RecurrenceTrace, lscale: float):
    """Q_n h_n and P_n h_n as plain complex numbers scaled by ``exp(-lscale)``."""
    lh = trace.log_h
    out = []
    for arr in (trace.Q, trace.P):
        mag = np.abs(arr.mantissa)
        phase = np.divide(arr.mantissa, mag, out=np.zeros_like(arr.mantissa), where=mag > 0)
        with np.errstate(divide="ignore", under="ignore"):
            out.append(phase * np.exp(arr.log_abs() + lh - lscale))
    return out


def estimate_gamma(trace: RecurrenceTrace, *, threshold: float = 1e-3,
                   snap_rtol: float = 1e-10) -> GammaEstimate:
    """Least-squares gamma minimising ``sum_{n<=N} |Q_n g - P_n|^2 h_n^2``.

    ``residual`` is that sum restricted to ``[N/2, N]`` at the minimiser;
    ``condition`` is ``1 / sqrt(sum_{[N/2, N]} |Q_n h_n|^2)``, the amplification
    of unit noise in the tail into gamma.
    """
    N = trace.N
    if N < 32:
        raise ValueError("estimate_gamma needs a trace with N >= 32")
    lq = trace.log_abs_Qh()
    lscale = float(np.max(lq[np.isfinite(lq)]))
    q, p = _weighted_cplx(trace, lscale)
    den = float(np.sum(np.abs(q) ** 2))
    gamma = complex(np.sum(np.conj(q) * p) / den)
    win = lq[N // 2:]
    win = win[np.isfinite(win)]
    if len(win) == 0:
        raise GammaIllConditioned("Q_n h_n vanishes on the whole window")
    m = float(win.max())
    log_sum = m + 0.5 * math.log(float(np.sum(np.exp(2 * (win - m)))))  # log sqrt(sum)
    if 2 * log_sum < math.log(threshold):
        raise GammaIllConditioned(
            f"sum |Q_n h_n|^2 over [N/2, N] is {math.exp(2 * log_sum):.3e} < {threshold}"
        )
    rem = evaluate_remainder(trace, gamma, snap_rtol=snap_rtol)
    lr = rem.r.log_abs()[N // 2:] + trace.log_h[N // 2:]
    lr = lr[np.isfinite(lr)]
    if len(lr):
        mr = float(lr.max())
        with np.errstate(over="ignore"):
            residual = float(np.exp(2 * mr) * np.sum(np.exp(2 * (lr - mr))))
    else:
        residual = 0.0
    return GammaEstimate(gamma, residual, math.exp(-log_sum))


def _check_index(trace: RecurrenceTrace, i: int, j: int):
    if not (0 <= i <= trace.N and 0 <= j <= trace.N):
        raise IndexError(f"entry ({i}, {j}) outside 0..{trace.N}")


def resolvent_entry(trace: RecurrenceTrace, remainder: RemainderTrace, i: int, j: int) -> ResolventEntry:
    """Entry ``(i, j)`` of the e-basis resolvent matrix."""
    _check_index(trace, i, j)
    lo, hi = min(i, j), max(i, j)
    value = trace.Q[lo] * remainder.r[hi] / trace.prodA[j]
    return ResolventEntry(i, j, value)


def _entry_logs(trace: RecurrenceTrace, remainder: RemainderTrace, I: np.ndarray, J: np.ndarray):
    """log|B[i, j]| h_i / h_j for index arrays."""
    lq, lr = trace.Q.log_abs(), remainder.r.log_abs()
    lp, lh = trace.prodA.log_abs(), trace.log_h
    lo, hi = np.minimum(I, J), np.maximum(I, J)
    return lq[lo] + lr[hi] - lp[J] + lh[I] - lh[J]


def resolvent_block(trace: RecurrenceTrace, remainder: RemainderTrace, size: int,
                    basis: str = "e") -> np.ndarray:
    """Top-left ``size x size`` block as a complex array (e- or g-basis)."""
    if size - 1 > trace.N:
        raise IndexError("block exceeds trace length")
    Q, r, pa = trace.Q, remainder.r, trace.prodA
    d = trace.model.arrays(trace.N).d
    out = np.empty((size, size), dtype=np.complex128)
    for i in range(size):
        for j in range(size):
            lo, hi = min(i, j), max(i, j)
            v = Q[lo] * r[hi] / pa[j]
            if basis == "g":
                v = v * d[j] / d[i]
            out[i, j] = v.to_complex()
    return out


def decay_fit(trace: RecurrenceTrace, remainder: RemainderTrace, *, q_max: float = 0.95,
              rms_max: float = 0.5, min_offsets: int = 16) -> DecayFit:
    """Fit ``max_i |B[i, i +- k]| h_i / h_j ~ C q^k`` for offsets ``k = 0..N//4``.

    For each offset the maximum over rows ``0..N - N//4`` of both the upper and
    the lower diagonal is taken.  The fit runs on the smallest non-increasing
    majorant of those maxima: a bound ``C q^k`` must hold at every offset, and
    periodic coefficients can make alternate offsets much smaller than the bound.
    """
    N = trace.N
    if N < 64:
        raise ValueError("decay_fit needs a trace with N >= 64")
    K = N // 4
    rows = np.arange(0, N - K + 1)
    ks, env = [], []
    for k in range(K + 1):
        up = _entry_logs(trace, remainder, rows, rows + k)
        low = _entry_logs(trace, remainder, rows + k, rows)
        vals = np.concatenate([up, low])
        vals = vals[~np.isnan(vals)]
        if len(vals) and np.isfinite(vals.max()):
            ks.append(k)
            env.append(float(vals.max()))
    window = (0, N - K)
    if len(ks) < min_offsets:
        return DecayFit(math.nan, math.nan, window, K, math.nan, "insufficient-data")
    ks_a = np.array(ks, dtype=float)
    env_a = np.maximum.accumulate(np.array(env)[::-1])[::-1]
    slope, intercept = np.polyfit(ks_a, env_a, 1)
    rms = float(np.sqrt(np.mean((env_a - (intercept + slope * ks_a)) ** 2)))
    q = math.exp(slope)
    verdict = "geometric" if (q <= q_max and rms <= rms_max) else "not-geometric"
    with np.errstate(over="ignore"):
        C = float(np.exp(intercept))
    return DecayFit(C, q, window, K, rms, verdict)


def finite_section_matrix(model: OperatorModel, N: int) -> np.ndarray:
    """N x N top-left section of A in the orthonormal basis."""
    A = np.zeros((N, N), dtype=np.complex128)
    for n in range(N):
        A[n, n] = model.beta(n)
        if n + 1 < N:
            A[n, n + 1] = model.gamma(n)
            A[n + 1, n] = model.alpha(n + 1)
    return A


def finite_section_inverse(model: OperatorModel, lam: complex, N: int, *,
                           pivot_rtol: float = 1e-12) -> np.ndarray:
    """``(lam I - A_N)^{-1}`` in the orthonormal basis by LU with partial pivoting."""
    if N < 1:
        raise ValueError("N must be >= 1")
    T = complex(lam) * np.eye(N) - finite_section_matrix(model, N)
    scale = float(np.abs(T).max())
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(T, check_finite=False)
    pivots = np.abs(np.diag(lu))
    small = np.nonzero(pivots < pivot_rtol * scale)[0]
    if scale == 0 or len(small):
        k = int(small[0]) if len(small) else 0
        raise SingularTruncationError(k, float(pivots[k]))
    return scipy.linalg.lu_solve((lu, piv), np.eye(N, dtype=np.complex128), check_finite=False)


def finite_section_eigenvalues(model: OperatorModel, N: int) -> np.ndarray:
    return np.linalg.eigvals(finite_section_matrix(model, N))


def oracle_comparison(model: OperatorModel, lam: complex, N: int, block: int = 8, *,
                      tol: float = 1e-8) -> dict:
    """Compare closed-form entries with the finite-section inverse on a top-left block.

    For ``N >= 32`` the closed form uses the least-squares gamma of the infinite
    operator.  Shorter sections use ``gamma = pi_N``, for which the closed form
    is the exact inverse of the N x N section.
    """
    lam = complex(lam)
    block = min(block, N)
    report = {"lambda": [lam.real, lam.imag], "N": N, "block": block, "tolerance": tol}

    def closed_form(n_trace: int):
        if n_trace >= 32:
            trace = evaluate_QP(model, lam, n_trace)
            g = estimate_gamma(trace).gamma
            rem = evaluate_remainder(trace, g)
            return resolvent_block(trace, rem, block, basis="g"), g, "least-squares"
        trace = evaluate_QP(model, lam, max(n_trace, 1))
        g = (trace.P[n_trace] / trace.Q[n_trace]).to_complex()
        Bc = np.empty((block, block), dtype=np.complex128)
        Q, P = trace.Q.to_complex(), trace.P.to_complex()
        r = Q * g - P
        pa = trace.prodA.to_complex()
        d = model.arrays(trace.N).d.to_complex()
        for i in range(block):
            for j in range(block):
                lo, hi = min(i, j), max(i, j)
                Bc[i, j] = Q[lo] * r[hi] / pa[j] * d[j] / d[i]
        return Bc, g, "section convergent"

    def rel_err(X, Y):
        # symmetric relative error: bounded by 2 when one side is exactly zero
        with np.errstate(divide="ignore", invalid="ignore"):
            e = np.abs(X - Y) / np.maximum(np.abs(X), np.abs(Y))
        e[(X == Y)] = 0.0
        return float(np.max(e))

    fs = finite_section_inverse(model, lam, N)[:block, :block]
    cf, g, how = closed_form(N)
    err = rel_err(cf, fs)
    report.update({"gamma": [g.real, g.imag], "gamma_source": how, "max_rel_error": err})
    try:
        fs2 = finite_section_inverse(model, lam, 2 * N)[:block, :block]
    except SingularTruncationError as exc:
        report.update({"max_rel_error_2N": None, "section_change_N_to_2N": None,
                       "stabilized": False, "section_2N_error": str(exc), "pass": False})
        report["note"] = "the doubled finite section is singular at lambda; lambda is likely in the spectrum"
        return report
    report["max_rel_error_2N"] = rel_err(cf if N >= 32 else closed_form(2 * N)[0], fs2)
    report["section_change_N_to_2N"] = rel_err(fs, fs2)
    report["stabilized"] = report["section_change_N_to_2N"] <= tol
    report["pass"] = err <= tol and report["max_rel_error_2N"] <= max(err, tol)
    if not report["stabilized"]:
        report["note"] = "finite-section block does not stabilize under doubling N; lambda is likely in the spectrum"
    return report


def _classify_at(model: OperatorModel, lam: complex, N: int, params: ClassifyParams):
    ev: dict = {"n_used": N}
    trace = evaluate_QP(model, lam, N)
    series = eigen_series_test(model, lam, N, rtol=params.series_rtol,
                               growth_factor=params.series_growth, trace=trace)
    ev["series"] = {"verdict": series.verdict, "tail_ratio": series.tail_ratio,
                    "trusted_horizon": series.trusted_horizon}
    growth = growth_exponent(trace)
    ev["growth"] = growth
    if series.verdict == "converges":
        ev["gamma"] = None
        ev["decay"] = None
        return "eigenvalue", ev
    try:
        est = estimate_gamma(trace, threshold=params.gamma_threshold, snap_rtol=params.snap_rtol)
    except GammaIllConditioned as exc:
        ev["gamma"] = None
        ev["decay"] = None
        ev["gamma_error"] = str(exc)
        return "indeterminate", ev
    ev["gamma"] = {"re": est.gamma.real, "im": est.gamma.imag, "residual": est.residual,
                   "condition": est.condition}
    rem = evaluate_remainder(trace, est.gamma, snap_rtol=params.snap_rtol)
    fit = decay_fit(trace, rem, q_max=params.q_max, rms_max=params.rms_max)
    ev["decay"] = {"C": fit.C, "q": fit.q, "rms_residual": fit.rms_residual,
                   "fit_window": list(fit.fit_window), "max_offset": fit.max_offset,
                   "verdict": fit.verdict}
    growing = growth > 1.0 + params.growth_margin
    if fit.verdict == "geometric" and growing and series.verdict == "diverges":
        return "resolvent", ev
    if fit.verdict != "geometric" and not growing:
        return "spectrum", ev
    return "indeterminate", ev


def classify_point(model: OperatorModel, lam: complex, params: ClassifyParams | None = None) -> PointClassification:
    """Label ``lam`` as resolvent, eigenvalue, spectrum or indeterminate.

    * eigenvalue: the weighted series of ``Q_n`` is certified summable.
    * resolvent: geometric decay of the weighted resolvent entries, growth
      exponent above ``1 + growth_margin`` and a divergent series.
    * spectrum: no geometric decay and growth exponent at most ``1 + growth_margin``.

    Points beyond the norm bound are resolvent without further work when
    ``fast_path`` is set.  An indeterminate result at ``n_max`` is retried once
    at ``escalate_n``.
    """
    params = params or ClassifyParams()
    lam = complex(lam)
    if not (math.isfinite(lam.real) and math.isfinite(lam.imag)):
        raise ValueError("lambda must be finite")
    evidence: dict = {"params": params.to_dict()}
    if params.fast_path:
        try:
            bound = norm_upper_bound(model).value
        except UnboundedOperatorError:
            bound = None
        evidence["norm_bound"] = bound
        if bound is not None and abs(lam) > bound:
            evidence.update({"fast_path": True, "q": 0.0, "growth": None, "gamma": None,
                             "decay": None, "series": None})
            return PointClassification(lam, "resolvent", evidence)
    evidence["fast_path"] = False
    try:
        label, ev = _classify_at(model, lam, params.n_max, params)
        if label == "indeterminate" and params.escalate_n and params.escalate_n > params.n_max:
            label, ev = _classify_at(model, lam, params.escalate_n, params)
            ev["escalated"] = True
    except (ArithmeticError, OverflowError, ValueError) as exc:
        label, ev = "indeterminate", {"failure": f"{type(exc).__name__}: {exc}"}
    evidence.update(ev)
    return PointClassification(lam, label, evidence)
