"""Gaussian-rational scalars: the exact amplitude backend.

An ExactComplex is a complex number with Fraction real and imaginary parts.
It carries machine amplitudes, channel precisions and mixture weights
exactly; the float backend reads it through `.shadow`.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Union

Rational = Union[int, Fraction]


class ExactComplex:
    """Immutable complex number over the rationals."""

    __slots__ = ("re", "im")

    def __init__(self, re: Rational = 0, im: Rational = 0):
        object.__setattr__(self, "re", Fraction(re))
        object.__setattr__(self, "im", Fraction(im))

    def __setattr__(self, name, value):
        raise AttributeError("ExactComplex is immutable")

    @classmethod
    def coerce(cls, value) -> "ExactComplex":
        if isinstance(value, ExactComplex):
            return value
        if isinstance(value, (int, Fraction)):
            return cls(value)
        raise TypeError(f"cannot coerce {type(value).__name__} to ExactComplex")

    def __add__(self, other):
        other = ExactComplex.coerce(other)
        return ExactComplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = ExactComplex.coerce(other)
        return ExactComplex(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return ExactComplex.coerce(other) - self

    def __mul__(self, other):
        other = ExactComplex.coerce(other)
        return ExactComplex(
            self.re * other.re - self.im * other.im,
            self.re * other.im + self.im * other.re,
        )

    __rmul__ = __mul__

    def __neg__(self):
        return ExactComplex(-self.re, -self.im)

    def __truediv__(self, other):
        other = ExactComplex.coerce(other)
        d = other.re * other.re + other.im * other.im
        if d == 0:
            raise ZeroDivisionError("division by exact zero")
        return ExactComplex(
            (self.re * other.re + self.im * other.im) / d,
            (self.im * other.re - self.re * other.im) / d,
        )

    def conjugate(self) -> "ExactComplex":
        return ExactComplex(self.re, -self.im)

    def abs2(self) -> Fraction:
        """Squared magnitude, exact."""
        return self.re * self.re + self.im * self.im

    @property
    def shadow(self) -> complex:
        """Correctly rounded float image."""
        return complex(float(self.re), float(self.im))

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def is_real(self) -> bool:
        return self.im == 0

    def __eq__(self, other):
        if isinstance(other, (int, Fraction, ExactComplex)):
            other = ExactComplex.coerce(other)
            return self.re == other.re and self.im == other.im
        return NotImplemented

    def __hash__(self):
        return hash((self.re, self.im))

    def __repr__(self):
        return f"ExactComplex({self.re!r}, {self.im!r})"

    def __str__(self):
        if self.im == 0:
            return str(self.re)
        return f"{self.re}{'+' if self.im >= 0 else ''}{self.im}i"


EXACT_ZERO = ExactComplex(0)
EXACT_ONE = ExactComplex(1)


class AmplitudeSyntaxError(ValueError):
    """Raised for malformed amplitude tokens (including zero denominators)."""


def parse_rational_token(token: str) -> tuple[Fraction, bool]:
    """Parse one amplitude component.

    Accepts `p/q` and integer tokens (exact) and decimal tokens (float
    intent: the value is still stored as the exact decimal rational, but the
    machine is flagged non-exact because decimals stand in for irrationals).
    Returns (value, declared_exact).
    """
    token = token.strip()
    if not token:
        raise AmplitudeSyntaxError("empty amplitude token")
    if "/" in token:
        num, _, den = token.partition("/")
        try:
            n, d = int(num), int(den)
        except ValueError as exc:
            raise AmplitudeSyntaxError(f"bad rational {token!r}") from exc
        if d == 0:
            raise AmplitudeSyntaxError(f"zero denominator in {token!r}")
        return Fraction(n, d), True
    if "." in token or "e" in token or "E" in token:
        try:
            return Fraction(token), False
        except ValueError as exc:
            raise AmplitudeSyntaxError(f"bad decimal {token!r}") from exc
    try:
        return Fraction(int(token)), True
    except ValueError as exc:
        raise AmplitudeSyntaxError(f"bad amplitude {token!r}") from exc


def format_rational(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def dyadic_round(value: Fraction, bits: int) -> Fraction:
    """Nearest multiple of 2^-bits (ties away from zero)."""
    scaled = value * (1 << bits)
    n = scaled.numerator
    d = scaled.denominator
    q, r = divmod(abs(n), d)
    if 2 * r >= d:
        q += 1
    if n < 0:
        q = -q
    return Fraction(q, 1 << bits)
