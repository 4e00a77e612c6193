"""Mantissa/exponent complex numbers.

Polynomial values grow or decay geometrically in the recurrence index, so every
quantity that is indexed by ``n`` is carried as ``mantissa * 2**exponent`` with
``|mantissa|`` in ``[1/2, 1)`` (or exactly zero).  Rescaling by powers of two is
exact, so the representation never loses precision relative to plain floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LN2 = math.log(2.0)


def ldexp_complex(z: complex, k: int) -> complex:
    """Return ``z * 2**k`` without forming the power of two."""
    return complex(math.ldexp(z.real, k), math.ldexp(z.imag, k))


def normalize(z: complex) -> tuple[complex, int]:
    """Split ``z`` into ``(mantissa, exponent)``; zero maps to ``(0j, 0)``."""
    mag = abs(z)
    if mag == 0.0:
        return 0j, 0
    if not math.isfinite(mag):
        raise OverflowError(f"non-finite value {z!r} in scaled arithmetic")
    _, e = math.frexp(mag)
    return ldexp_complex(z, -e), e


@dataclass(frozen=True)
class ScaledComplex:
    mantissa: complex
    exponent: int = 0

    @classmethod
    def from_complex(cls, z: complex) -> ScaledComplex:
        return cls(*normalize(complex(z)))

    @property
    def is_zero(self) -> bool:
        return self.mantissa == 0

    def to_complex(self) -> complex:
        """Plain value; overflows to inf / underflows to 0 outside float range."""
        if self.is_zero:
            return 0j
        k = self.exponent
        # split the shift so a huge exponent with a small mantissa does not overflow early
        try:
            return ldexp_complex(ldexp_complex(self.mantissa, k // 2), k - k // 2)
        except OverflowError:
            m = self.mantissa
            return complex(math.copysign(math.inf, m.real) if m.real else 0.0,
                           math.copysign(math.inf, m.imag) if m.imag else 0.0)

    def log_abs(self) -> float:
        """Natural log of the magnitude (``-inf`` for zero)."""
        if self.is_zero:
            return -math.inf
        return math.log(abs(self.mantissa)) + self.exponent * LN2

    def __abs__(self) -> float:
        return abs(self.to_complex())

    def __neg__(self) -> ScaledComplex:
        return ScaledComplex(-self.mantissa, self.exponent)

    def __mul__(self, other) -> ScaledComplex:
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        m, e = normalize(self.mantissa * other.mantissa)
        if m == 0:
            return ScaledComplex(0j, 0)
        return ScaledComplex(m, e + self.exponent + other.exponent)

    __rmul__ = __mul__

    def __truediv__(self, other) -> ScaledComplex:
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        if other.is_zero:
            raise ZeroDivisionError("division by a zero ScaledComplex")
        m, e = normalize(self.mantissa / other.mantissa)
        if m == 0:
            return ScaledComplex(0j, 0)
        return ScaledComplex(m, e + self.exponent - other.exponent)

    def __add__(self, other) -> ScaledComplex:
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        e = max(self.exponent, other.exponent)
        z = (ldexp_complex(self.mantissa, self.exponent - e)
             + ldexp_complex(other.mantissa, other.exponent - e))
        m, k = normalize(z)
        if m == 0:
            return ScaledComplex(0j, 0)
        return ScaledComplex(m, e + k)

    __radd__ = __add__

    def __sub__(self, other) -> ScaledComplex:
        if not isinstance(other, ScaledComplex):
            other = ScaledComplex.from_complex(other)
        return self + (-other)


class ScaledArray:
    """Vector of scaled complex numbers stored as two parallel numpy arrays."""

    def __init__(self, mantissa, exponent):
        self.mantissa = np.asarray(mantissa, dtype=np.complex128)
        self.exponent = np.asarray(exponent, dtype=np.int64)
        if self.mantissa.shape != self.exponent.shape:
            raise ValueError("mantissa and exponent shapes differ")

    @classmethod
    def from_values(cls, values) -> ScaledArray:
        pairs = [normalize(complex(v)) for v in values]
        return cls([p[0] for p in pairs], [p[1] for p in pairs])

    def __len__(self) -> int:
        return len(self.mantissa)

    def __getitem__(self, n: int) -> ScaledComplex:
        return ScaledComplex(complex(self.mantissa[n]), int(self.exponent[n]))

    def __iter__(self):
        for n in range(len(self)):
            yield self[n]

    def log_abs(self) -> np.ndarray:
        mag = np.abs(self.mantissa)
        with np.errstate(divide="ignore"):
            return np.where(mag > 0, np.log(mag) + self.exponent * LN2, -np.inf)

    def to_complex(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.ldexp(self.mantissa.real, self.exponent) + 1j * np.ldexp(
                self.mantissa.imag, self.exponent
            )

    def combine(self, other: ScaledArray, c_self: complex, c_other: complex) -> ScaledArray:
        """Elementwise ``c_self * self + c_other * other`` in scaled arithmetic."""
        e = np.maximum(self.exponent, other.exponent)
        with np.errstate(under="ignore"):
            z = c_self * _ldexp_c(self.mantissa, self.exponent - e) + c_other * _ldexp_c(
                other.mantissa, other.exponent - e
            )
        return renormalized(z, e)


def _ldexp_c(m: np.ndarray, k: np.ndarray) -> np.ndarray:
    return np.ldexp(m.real, k) + 1j * np.ldexp(m.imag, k)


def renormalized(z: np.ndarray, base_exponent: np.ndarray) -> ScaledArray:
    """Normalize ``z * 2**base_exponent`` elementwise into a ScaledArray."""
    z = np.asarray(z, dtype=np.complex128)
    _, k = np.frexp(np.abs(z))
    k = k.astype(np.int64)
    m = _ldexp_c(z, -k)
    zero = z == 0
    m[zero] = 0
    e = np.where(zero, 0, np.asarray(base_exponent, dtype=np.int64) + k)
    return ScaledArray(m, e)
