"""Tridiagonal operators and the diagonal change of basis.

The operator is given by its three diagonals in an orthonormal basis ``g_n``::

    A g-matrix:  row n = (alpha_n, beta_n, gamma_n)  at columns (n-1, n, n+1)

Rescaling the basis to ``e_n = g_n / d_n`` with ``d_n = gamma_0 ... gamma_{n-1}``
turns the superdiagonal into ones and the subdiagonal into
``a_n = alpha_n * gamma_{n-1}``; the diagonal ``b_n = beta_n`` is unchanged and
``||e_n|| = h_n = 1 / |d_n|``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scaled import ScaledArray, ScaledComplex, normalize

KINDS = ("explicit-list", "constant-tail", "periodic-tail", "asymptotically-periodic-tail")


class InvalidOperatorError(ValueError):
    """Coefficient data that does not describe an admissible operator."""


class UnboundedOperatorError(ValueError):
    """Raised when a bound is requested for data with no tail rule."""


def _ctuple(values) -> tuple[complex, ...]:
    return tuple(complex(v) for v in values)


@dataclass(frozen=True)
class CoefficientSpec:
    """Coefficient sequences: an explicit head followed by a tail rule.

    Each of ``alpha``, ``beta``, ``gamma`` has its own head; index ``k`` beyond
    the head of a sequence falls into that sequence's tail at position
    ``j = k - len(head)``.  The tail value is ``tail[j % period]`` plus
    ``corrections[j]`` while ``j < len(corrections)``.  ``alpha[0]`` is stored
    for uniformity but never enters the matrix.
    """

    kind: str
    alpha: tuple[complex, ...] = ()
    beta: tuple[complex, ...] = ()
    gamma: tuple[complex, ...] = ()
    period: int = 1
    tail_alpha: tuple[complex, ...] = ()
    tail_beta: tuple[complex, ...] = ()
    tail_gamma: tuple[complex, ...] = ()
    corr_alpha: tuple[complex, ...] = ()
    corr_beta: tuple[complex, ...] = ()
    corr_gamma: tuple[complex, ...] = ()

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "tail_alpha", "tail_beta", "tail_gamma",
                     "corr_alpha", "corr_beta", "corr_gamma"):
            object.__setattr__(self, name, _ctuple(getattr(self, name)))

    @property
    def has_tail(self) -> bool:
        return self.kind != "explicit-list"

    def _value(self, which: str, k: int) -> complex:
        if k < 0:
            raise IndexError(f"negative coefficient index {k}")
        head = getattr(self, which)
        if k < len(head):
            return head[k]
        if not self.has_tail:
            raise IndexError(
                f"{which}_{k} is beyond the explicit list (length {len(head)}) and no tail is given"
            )
        j = k - len(head)
        value = getattr(self, "tail_" + which)[j % self.period]
        corr = getattr(self, "corr_" + which)
        if j < len(corr):
            value = value + corr[j]
        return value

    def all_values(self, which: str) -> tuple[complex, ...]:
        """Every distinct value the sequence can take (head, tail, corrected tail)."""
        head = getattr(self, which)
        if not self.has_tail:
            return head
        tail = getattr(self, "tail_" + which)
        corr = getattr(self, "corr_" + which)
        corrected = tuple(tail[j % self.period] + c for j, c in enumerate(corr))
        return head + tail + corrected


def constant_spec(alpha_tail: complex, beta_tail: complex, gamma_tail: complex,
                  **head) -> CoefficientSpec:
    """Constant tail with optional head sequences passed as ``alpha=``, ``beta=``, ``gamma=``."""
    return CoefficientSpec("constant-tail", period=1, tail_alpha=(alpha_tail,),
                           tail_beta=(beta_tail,), tail_gamma=(gamma_tail,), **head)


def chebyshev_spec() -> CoefficientSpec:
    """alpha = gamma = 1/2, beta = 0: the spectral measure is the semicircle on [-1, 1]."""
    return constant_spec(0.5, 0.0, 0.5)


def perturbed_chebyshev_spec(b0: complex = 5.0) -> CoefficientSpec:
    return constant_spec(0.5, 0.0, 0.5, beta=(b0,))


def period_two_spec() -> CoefficientSpec:
    """Symmetric period-2 model with a_n alternating 1/4 (n odd) and 1/16 (n even)."""
    return CoefficientSpec("periodic-tail", period=2, tail_alpha=(0.25, 0.5),
                           tail_beta=(0.0, 0.0), tail_gamma=(0.5, 0.25))


@dataclass(frozen=True)
class NormBound:
    value: float


@dataclass(frozen=True, eq=False)
class OperatorModel:
    spec: CoefficientSpec
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def alpha(self, k: int) -> complex:
        return self.spec._value("alpha", k)

    def beta(self, k: int) -> complex:
        return self.spec._value("beta", k)

    def gamma(self, k: int) -> complex:
        return self.spec._value("gamma", k)

    def a(self, n: int) -> complex:
        if n < 1:
            raise IndexError("a_n is defined for n >= 1 only")
        return self.alpha(n) * self.gamma(n - 1)

    def b(self, n: int) -> complex:
        return self.beta(n)

    def d(self, n: int) -> ScaledComplex:
        return self.arrays(n).d[n]

    def log_h(self, n: int) -> float:
        return -self.d(n).log_abs()

    def h(self, n: int) -> float:
        dn = self.d(n)
        return math.ldexp(1.0 / abs(dn.mantissa), -dn.exponent)

    def arrays(self, N: int) -> CoefficientArrays:
        """Coefficients for indices ``0..N`` as numpy arrays (``a[0]`` is a 0 placeholder)."""
        cached = self._cache.get("arrays")
        if cached is not None and cached.N >= N:
            return cached if cached.N == N else cached.head(N)
        arr = _build_arrays(self, N)
        self._cache["arrays"] = arr
        return arr


@dataclass(frozen=True)
class CoefficientArrays:
    N: int
    a: np.ndarray
    b: np.ndarray
    d: ScaledArray

    @property
    def log_h(self) -> np.ndarray:
        return -self.d.log_abs()

    def head(self, N: int) -> CoefficientArrays:
        return CoefficientArrays(N, self.a[: N + 1], self.b[: N + 1],
                                 ScaledArray(self.d.mantissa[: N + 1], self.d.exponent[: N + 1]))


def _build_arrays(model: OperatorModel, N: int) -> CoefficientArrays:
    a = np.zeros(N + 1, dtype=np.complex128)
    b = np.array([model.beta(n) for n in range(N + 1)], dtype=np.complex128)
    for n in range(1, N + 1):
        a[n] = model.a(n)
    dm = np.empty(N + 1, dtype=np.complex128)
    de = np.empty(N + 1, dtype=np.int64)
    m, e = 1.0 + 0j, 0
    dm[0], de[0] = 0.5 + 0j, 1
    for n in range(1, N + 1):
        m, k = normalize(m * model.gamma(n - 1))
        e += k
        dm[n], de[n] = m, e
    # d_0 = 1 stored normalized as 0.5 * 2**1
    return CoefficientArrays(N, a, b, ScaledArray(dm, de))


def build_operator(spec: CoefficientSpec) -> OperatorModel:
    """Validate ``spec`` and wrap it as an operator."""
    if spec.kind not in KINDS:
        raise InvalidOperatorError(f"unknown kind {spec.kind!r}; expected one of {KINDS}")
    if spec.has_tail:
        if spec.period < 1:
            raise InvalidOperatorError(f"period must be >= 1, got {spec.period}")
        if spec.kind == "constant-tail" and spec.period != 1:
            raise InvalidOperatorError("constant-tail requires period 1")
        for which in ("alpha", "beta", "gamma"):
            tail = getattr(spec, "tail_" + which)
            if len(tail) != spec.period:
                raise InvalidOperatorError(
                    f"tail {which} has {len(tail)} values, period is {spec.period}"
                )
        if spec.kind != "asymptotically-periodic-tail" and any(
            getattr(spec, "corr_" + w) for w in ("alpha", "beta", "gamma")
        ):
            raise InvalidOperatorError("corrections are only allowed for asymptotically-periodic-tail")
    else:
        if not (spec.alpha or spec.beta or spec.gamma):
            raise InvalidOperatorError("explicit-list needs at least one coefficient")
    for which in ("alpha", "beta", "gamma"):
        for v in spec.all_values(which):
            if not (math.isfinite(v.real) and math.isfinite(v.imag)):
                raise InvalidOperatorError(f"non-finite {which} coefficient {v!r}")
    for which in ("alpha", "gamma"):
        head = getattr(spec, which)
        for k, v in enumerate(head):
            if v == 0 and not (which == "alpha" and k == 0):
                raise InvalidOperatorError(f"{which}_{k} = 0; off-diagonal entries must be nonzero")
        if spec.has_tail:
            for k, v in enumerate(getattr(spec, "tail_" + which)):
                if v == 0:
                    raise InvalidOperatorError(f"tail {which}[{k}] = 0")
            tail = getattr(spec, "tail_" + which)
            for j, c in enumerate(getattr(spec, "corr_" + which)):
                if tail[j % spec.period] + c == 0:
                    raise InvalidOperatorError(f"corrected tail {which} vanishes at tail position {j}")
    return OperatorModel(spec)


def coefficient_at(model: OperatorModel, n: int) -> tuple[complex | None, complex, float]:
    """``(a_n, b_n, h_n)``; ``a_0`` does not exist and is returned as ``None``."""
    if n < 0:
        raise IndexError(f"index must be >= 0, got {n}")
    a = model.a(n) if n >= 1 else None
    return a, model.b(n), model.h(n)


def norm_upper_bound(model: OperatorModel) -> NormBound:
    """``sup|alpha| + sup|beta| + sup|gamma|``.

    This dominates both the largest row sum and the largest column sum of the
    g-matrix, hence ``||A|| <= sqrt(||A||_1 ||A||_inf)`` is below it.
    """
    spec = model.spec
    if not spec.has_tail:
        raise UnboundedOperatorError("explicit-list data has no tail rule; boundedness is not certified")
    total = 0.0
    for which in ("alpha", "beta", "gamma"):
        total += max(abs(v) for v in spec.all_values(which))
    return NormBound(total)
