"""J-fraction convergents, remainder diagnostics and the moment <-> coefficient maps."""

from __future__ import annotations

import contextlib
import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import mpmath
import numpy as np

from .recurrence import RecurrenceTrace, evaluate_remainder

HIGH_PRECISION_DPS = 60


class DegenerateMomentsError(ArithmeticError):
    """A pivot of the Chebyshev algorithm vanished (non-normal moment sequence)."""

    def __init__(self, level: int, message: str = ""):
        self.level = level
        super().__init__(message or f"degenerate moment sequence at level {level}")


@dataclass(frozen=True)
class ConvergentTable:
    lam: complex
    entries: tuple[tuple[int, complex | None], ...]
    trace: RecurrenceTrace | None = None

    def values(self) -> np.ndarray:
        """pi_n as a complex array with NaN at poles."""
        return np.array([complex("nan+nanj") if v is None else v for _, v in self.entries])


@dataclass(frozen=True)
class MomentSequence:
    c: tuple[complex, ...]

    def __post_init__(self):
        object.__setattr__(self, "c", tuple(complex(x) for x in self.c))
        if len(self.c) % 2 != 1:
            raise ValueError(f"need an odd number 2M+1 of moments, got {len(self.c)}")
        if self.c[0] == 0:
            raise ValueError("c_0 must be nonzero")

    @property
    def levels(self) -> int:
        return (len(self.c) - 1) // 2


@dataclass(frozen=True)
class RemainderDiagnostics:
    values: np.ndarray
    rate: float
    rms_residual: float


@dataclass(frozen=True)
class GeometricSubsequence:
    indices: np.ndarray
    rate: float
    C: float
    rms_residual: float
    verdict: str


def convergents(trace: RecurrenceTrace) -> ConvergentTable:
    """pi_n = P_n / Q_n for n = 0..N; ``None`` marks a pole (Q_n exactly zero)."""
    entries = []
    for n in range(trace.N + 1):
        q = trace.Q[n]
        entries.append((n, None if q.is_zero else (trace.P[n] / q).to_complex()))
    return ConvergentTable(trace.lam, tuple(entries), trace)


def _loglinear_fit(n: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Least-squares ``y ~ c + s n``; returns ``(c, s, rms)``."""
    if len(n) < 2:
        return (float(y[0]) if len(y) else 0.0), 0.0, 0.0
    s, c = np.polyfit(n.astype(float), y, 1)
    rms = float(np.sqrt(np.mean((y - (c + s * n)) ** 2)))
    return float(c), float(s), rms


def remainder_diagnostics(trace: RecurrenceTrace, phi: complex) -> RemainderDiagnostics:
    """``|Q_n phi - P_n| h_n`` for n = 0..N with a fitted geometric rate."""
    rem = evaluate_remainder(trace, phi)
    logs = rem.r.log_abs() + trace.log_h
    with np.errstate(over="ignore"):
        values = np.exp(logs)
    n = np.arange(trace.N + 1)
    ok = np.isfinite(logs)
    _, slope, rms = _loglinear_fit(n[ok], logs[ok])
    return RemainderDiagnostics(values, math.exp(slope), rms)


def _pi_errors_log(table: ConvergentTable, phi: complex) -> np.ndarray:
    """log |phi - pi_n| per table entry (``nan`` at poles)."""
    out = np.full(len(table.entries), np.nan)
    if table.trace is not None:
        # |phi - pi_n| = |r_n| / |Q_n|, with r_n free of cancellation
        trace = table.trace
        rem = evaluate_remainder(trace, phi)
        lr, lq = rem.r.log_abs(), trace.Q.log_abs()
        for i, (n, v) in enumerate(table.entries):
            if v is not None:
                out[i] = lr[n] - lq[n]
    else:
        for i, (_, v) in enumerate(table.entries):
            if v is not None:
                err = abs(complex(phi) - v)
                out[i] = math.log(err) if err > 0 else -math.inf
    return out


def geometric_subsequence(table: ConvergentTable, phi: complex, *, seed_size: int = 8,
                          slack: float = math.log(4.0), rate_max: float = 0.95,
                          rms_max: float = 0.5) -> GeometricSubsequence:
    """Indices n with ``|phi - pi_n| <= C rate**n``, grown greedily from the tail.

    The last ``seed_size`` finite entries fix a first line through
    ``log|phi - pi_n|``; earlier entries join while they lie at most ``slack``
    above the refitted line.  ``C`` is raised at the end so the envelope bounds
    every chosen entry.  The verdict is ``geometric`` when the rate is at most
    ``rate_max``, the fit rms at most ``rms_max`` and at least ``ceil(N/4)``
    indices qualify; otherwise ``none-found``.  Exactly matching convergents
    count as qualifying and, if all are exact, the rate is the floor value 0.
    """
    if len(table.entries) < 32:
        raise ValueError("geometric_subsequence needs at least 32 convergents")
    logs = _pi_errors_log(table, phi)
    ns = np.array([n for n, _ in table.entries])
    N = int(ns.max())
    keep = (ns >= 1) & ~np.isnan(logs)
    cand_n, cand_l = ns[keep], logs[keep]
    need = math.ceil(N / 4)
    exact = np.isneginf(cand_l)
    if exact.all():
        return GeometricSubsequence(cand_n, 0.0, 0.0, 0.0,
                                    "geometric" if len(cand_n) >= need else "none-found")
    fin_n, fin_l = cand_n[~exact], cand_l[~exact]
    chosen = list(range(max(0, len(fin_n) - seed_size), len(fin_n)))
    c, s, rms = _loglinear_fit(fin_n[chosen], fin_l[chosen])
    for i in range(len(fin_n) - seed_size - 1, -1, -1):
        if fin_l[i] <= c + s * fin_n[i] + slack:
            chosen.insert(0, i)
            c, s, rms = _loglinear_fit(fin_n[chosen], fin_l[chosen])
    chosen_n = fin_n[chosen]
    logC = float(np.max(fin_l[chosen] - s * chosen_n))
    indices = np.sort(np.concatenate([chosen_n, cand_n[exact]]))
    rate = math.exp(s)
    ok = rate <= rate_max and rms <= rms_max and len(indices) >= need
    return GeometricSubsequence(indices, rate, math.exp(logC), rms,
                                "geometric" if ok else "none-found")


def _chebyshev_algorithm(c, eps):
    M = (len(c) - 1) // 2
    a = [None] * (M + 1)
    b = [None] * M
    prev2 = [0 * c[0]] * len(c)  # sigma_{k-2, .}
    prev = list(c)  # sigma_{k-1, .}
    if abs(c[0]) == 0:
        raise DegenerateMomentsError(0)
    b[0] = c[1] / c[0]
    a_prev = c[0]
    for k in range(1, M + 1):
        cur = [None] * len(c)
        for l in range(k, 2 * M - k + 1):
            t1, t2, t3 = prev[l + 1], b[k - 1] * prev[l], a_prev * prev2[l]
            cur[l] = t1 - t2 - t3
            if l == k and abs(cur[l]) <= 64 * eps * (abs(t1) + abs(t2) + abs(t3)):
                raise DegenerateMomentsError(k)
        a[k] = cur[k] / prev[k - 1]
        if k < M:
            b[k] = cur[k + 1] / cur[k] - prev[k] / prev[k - 1]
        a_prev = a[k]
        prev2, prev = prev, cur
    return a[1:], b


def moments_to_jfraction(moments: MomentSequence, *, high_precision: bool = False):
    """Recover ``(a, b)`` from ``c_0..c_{2M}`` by the Chebyshev algorithm.

    Returns numpy arrays ``a = [a_1..a_M]`` and ``b = [b_0..b_{M-1}]``.  The
    moments fix exactly these 2M numbers; ``b_M`` first enters ``c_{2M+1}``.
    A vanishing ``a_k`` raises :class:`DegenerateMomentsError` with level ``k``.
    """
    if moments.levels < 1:
        raise ValueError("need at least 3 moments (M >= 1)")
    if high_precision:
        with mpmath.workdps(HIGH_PRECISION_DPS):
            c = [mpmath.mpc(x) for x in moments.c]
            a, b = _chebyshev_algorithm(c, mpmath.mpf(2) ** (-mpmath.mp.prec))
            return (np.array([complex(x) for x in a]), np.array([complex(x) for x in b]))
    a, b = _chebyshev_algorithm(list(moments.c), np.finfo(float).eps)
    return np.array(a, dtype=np.complex128), np.array(b, dtype=np.complex128)


def jfraction_to_moments(a, b, M: int, *, size: int | None = None,
                         high_precision: bool = False) -> MomentSequence:
    """Moments ``c_k = (A^k)_{00}`` for k = 0..2M of the e-basis matrix.

    ``a`` holds ``a_1..a_M`` and ``b`` holds ``b_0..b_{M-1}`` (longer inputs are
    allowed).  ``c_k`` is the first entry of ``A^k e_0``, built by repeated
    tridiagonal products on a section of ``size`` (default ``M + 1``) rows,
    which already contains every path of length ``<= 2M`` from row 0.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    size = M + 1 if size is None else size
    if size < M + 1:
        raise ValueError("size must be at least M + 1")
    if len(a) < min(M, size - 1) or len(b) < M:
        raise ValueError("need a_1..a_M and b_0..b_{M-1}")
    if any(x == 0 for x in list(a)[:M]):
        raise ValueError("a_n must be nonzero")

    def coef(seq, i, default):
        return complex(seq[i]) if i < len(seq) else default

    ctx = mpmath.workdps(HIGH_PRECISION_DPS) if high_precision else contextlib.nullcontext()
    conv = mpmath.mpc if high_precision else complex
    with ctx:
        # a_full[n] = a_n, b_full[n] = b_n; beyond the given data the entries are 0
        # (1 for a) and cannot reach c_{2M}
        a_full = [conv(0)] + [conv(coef(a, i - 1, 1.0)) for i in range(1, size)]
        b_full = [conv(coef(b, i, 0.0)) for i in range(size)]
        v = [conv(0)] * size
        v[0] = conv(1)
        c = [v[0]]
        for _ in range(2 * M):
            w = [conv(0)] * size
            for n in range(size):
                acc = b_full[n] * v[n]
                if n >= 1:
                    acc += a_full[n] * v[n - 1]
                if n + 1 < size:
                    acc += v[n + 1]
                w[n] = acc
            v = w
            c.append(v[0])
        return MomentSequence(tuple(complex(x) for x in c))


def model_moments(model, M: int, **kw) -> MomentSequence:
    a = [model.a(n) for n in range(1, M + 1)]
    b = [model.b(n) for n in range(M)]
    return jfraction_to_moments(a, b, M, **kw)


def read_moments_csv(path) -> MomentSequence:
    """One moment per row as ``re,im``; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not row[0].strip() or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{lineno}: expected 're,im', got {row!r}")
            try:
                values.append(complex(float(row[0]), float(row[1])))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return MomentSequence(tuple(values))


def convergent_rows(table: ConvergentTable, phi: complex):
    """Rows ``(n, re pi_n, im pi_n, |phi - pi_n|)``; poles give ``nan`` fields."""
    logs = _pi_errors_log(table, phi)
    for (n, v), le in zip(table.entries, logs):
        if v is None:
            yield n, math.nan, math.nan, math.nan
        else:
            yield n, v.real, v.imag, (math.exp(le) if le < 709 else math.inf)


def convergents_csv_text(table: ConvergentTable, phi: complex, footer: list[str] = ()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "re", "im", "abs_err"])
    for n, re, im, err in convergent_rows(table, phi):
        w.writerow([n, repr(float(re)), repr(float(im)), repr(float(err))])
    for line in footer:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def write_convergents_csv(table: ConvergentTable, phi: complex, path, footer: list[str] = ()):
    text = convergents_csv_text(table, phi, footer)
    with open(Path(path), "w", newline="") as fh:
        fh.write(text)
