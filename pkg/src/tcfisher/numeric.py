"""Scalar arithmetic backends.

Two interchangeable backends are provided: ``EXACT`` works on arbitrary
precision rationals (``gmpy2.mpq`` when available, else
:class:`fractions.Fraction`) and compares exactly, ``FLOAT64`` works on
Python floats and treats ``|a - b| <= tol * max(1, |a|, |b|)`` as equality.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

try:  # GMP rationals are roughly ten times faster than Fraction
    from gmpy2 import mpq as rational
except ImportError:  # pragma: no cover
    rational = Fraction

ENV_VAR = "TCFISHER_NUMERIC"
DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class Numeric:
    exact: bool
    tol: float = DEFAULT_TOL

    @property
    def name(self) -> str:
        return "exact" if self.exact else "float64"

    def num(self, v):
        if self.exact:
            if isinstance(v, float):
                # str() keeps the shortest round-tripping decimal, which is
                # what the user typed in nearly every case
                return rational(Fraction(str(v)))
            return rational(v)
        return float(v)

    def vec(self, values):
        return [self.num(v) for v in values]

    def mat(self, rows):
        return [[self.num(v) for v in row] for row in rows]

    def eq(self, a, b) -> bool:
        if self.exact:
            return a == b
        return abs(a - b) <= self.tol * max(1.0, abs(a), abs(b))

    def is_zero(self, a, scale=1) -> bool:
        if self.exact:
            return a == 0
        return abs(a) <= self.tol * scale

    def positive(self, a, scale=1) -> bool:
        """``a > 0`` beyond the zero threshold."""
        if self.exact:
            return a > 0
        return a > self.tol * scale

    def geq(self, a, b) -> bool:
        return a >= b or self.eq(a, b)

    def gt(self, a, b) -> bool:
        return a > b and not self.eq(a, b)


EXACT = Numeric(exact=True)
FLOAT64 = Numeric(exact=False)


def get_backend(name: str | None = None, tol: float = DEFAULT_TOL) -> Numeric:
    """Resolve a backend by name; ``None`` falls back to ``$TCFISHER_NUMERIC``
    and then to exact."""
    if name is None:
        name = os.environ.get(ENV_VAR, "exact")
    name = name.lower()
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    if name == "exact":
        return EXACT
    if name in ("float64", "float"):
        return Numeric(exact=False, tol=tol)
    raise ValueError(f"unknown numeric mode {name!r}")


def infer_backend(*arrays) -> Numeric:
    """EXACT when every scalar in ``arrays`` is rational, FLOAT64 otherwise."""

    def walk(a):
        if isinstance(a, (list, tuple)):
            for v in a:
                yield from walk(v)
        elif hasattr(a, "tolist"):
            yield from walk(a.tolist())
        else:
            yield a

    for arr in arrays:
        for v in walk(arr):
            if not isinstance(v, Rational):
                return FLOAT64
    return EXACT


def to_float(v) -> float:
    return float(v)
