"""Coefficient rings: exact rationals, polynomials in t over the rationals, and floats.

Rationals are :class:`fractions.Fraction` (always in lowest terms with a
positive denominator).  Polynomials in the formal heat time ``t`` are
:class:`TPoly`.  Floats are plain Python floats.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Union

from .errors import UsageError

RATIONAL = "rational"
TPOLY = "tpoly"
FLOAT = "float"
RINGS = (RATIONAL, TPOLY, FLOAT)


class TPoly:
    """Immutable univariate polynomial in ``t`` with Fraction coefficients.

    ``coeffs[j]`` is the coefficient of ``t**j``; trailing zeros are stripped,
    so the zero polynomial has ``coeffs == ()``.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [Fraction(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        object.__setattr__(self, "coeffs", tuple(cs))

    def __setattr__(self, name, value):
        raise AttributeError("TPoly is immutable")

    @classmethod
    def const(cls, c) -> "TPoly":
        return cls((c,))

    @classmethod
    def monomial(cls, power: int, c=1) -> "TPoly":
        return cls([0] * power + [c])

    @property
    def degree(self) -> int:
        """Degree in t; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def __bool__(self):
        return bool(self.coeffs)

    def _coerce(self, other) -> "TPoly":
        if isinstance(other, TPoly):
            return other
        if isinstance(other, (int, Fraction)):
            return TPoly.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        a, b = self.coeffs, other.coeffs
        n = max(len(a), len(b))
        return TPoly(
            (a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)
        )

    __radd__ = __add__

    def __neg__(self):
        return TPoly(-c for c in self.coeffs)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            return TPoly(c * other for c in self.coeffs)
        if not isinstance(other, TPoly):
            return NotImplemented
        if not self.coeffs or not other.coeffs:
            return TPoly()
        out = [Fraction(0)] * (len(self.coeffs) + len(other.coeffs) - 1)
        for i, a in enumerate(self.coeffs):
            if a:
                for j, b in enumerate(other.coeffs):
                    out[i + j] += a * b
        return TPoly(out)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, (int, Fraction)):
            other = TPoly.const(other)
        if not isinstance(other, TPoly):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(("TPoly", self.coeffs))

    def __call__(self, t):
        """Evaluate at ``t`` (Horner); exact for rational ``t``."""
        acc = 0
        for c in reversed(self.coeffs):
            acc = acc * t + c
        return acc

    def evalf(self, t: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * t + float(c)
        return acc

    def __repr__(self):
        return f"TPoly({[str(c) for c in self.coeffs]})"

    def __str__(self):
        return render_tpoly(self)


Coefficient = Union[Fraction, TPoly, float]


def ring_of(c) -> str:
    if isinstance(c, TPoly):
        return TPOLY
    if isinstance(c, (Fraction, int)) and not isinstance(c, bool):
        return RATIONAL
    if isinstance(c, float):
        return FLOAT
    raise UsageError(f"unsupported coefficient type {type(c).__name__}")


def coerce(c, ring: str) -> Coefficient:
    """Convert ``c`` into ``ring``; lossy conversions (float -> exact) are refused."""
    if ring == RATIONAL:
        if isinstance(c, (int, Fraction)) and not isinstance(c, bool):
            return Fraction(c)
    elif ring == TPOLY:
        if isinstance(c, TPoly):
            return c
        if isinstance(c, (int, Fraction)) and not isinstance(c, bool):
            return TPoly.const(c)
    elif ring == FLOAT:
        if isinstance(c, (int, Fraction, float)) and not isinstance(c, bool):
            return float(c)
    else:
        raise UsageError(f"unknown coefficient ring {ring!r}")
    raise UsageError(f"cannot coerce {type(c).__name__} into ring {ring!r}")


def zero(ring: str) -> Coefficient:
    return {RATIONAL: Fraction(0), TPOLY: TPoly(), FLOAT: 0.0}[ring]


def is_zero(c) -> bool:
    return not c


def parse_rational(text: str) -> Fraction:
    """Parse ``"p/q"``, an integer, or a finite decimal string exactly."""
    s = str(text).strip()
    if not s:
        raise ValueError("empty rational")
    return Fraction(s)


def rational_to_json(q: Fraction) -> dict:
    q = Fraction(q)
    return {"num": str(q.numerator), "den": str(q.denominator)}


def rational_from_json(obj) -> Fraction:
    if isinstance(obj, dict):
        den = int(obj["den"])
        if den == 0:
            raise ValueError("zero denominator")
        return Fraction(int(obj["num"]), den)
    if isinstance(obj, str):
        return parse_rational(obj)
    if isinstance(obj, int) and not isinstance(obj, bool):
        return Fraction(obj)
    raise ValueError(f"not a rational: {obj!r}")


def coeff_to_json(c, ring: str):
    if ring == RATIONAL:
        return rational_to_json(c)
    if ring == TPOLY:
        return [rational_to_json(x) for x in c.coeffs]
    return float(c)


def coeff_from_json(obj, ring: str) -> Coefficient:
    if ring == RATIONAL:
        return rational_from_json(obj)
    if ring == TPOLY:
        if not isinstance(obj, list):
            raise ValueError("t-polynomial coefficient must be a list")
        return TPoly(rational_from_json(x) for x in obj)
    if ring == FLOAT:
        if isinstance(obj, bool) or not isinstance(obj, (int, float)):
            raise ValueError(f"float coefficient expected, got {obj!r}")
        return float(obj)
    raise ValueError(f"unknown ring {ring!r}")


def render_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def render_tpoly(p: TPoly, var: str = "t") -> str:
    if p.is_zero():
        return "0"
    parts = []
    for j, c in enumerate(p.coeffs):
        if c == 0:
            continue
        mag = abs(c)
        if j == 0:
            body = render_rational(mag)
        else:
            pw = var if j == 1 else f"{var}^{j}"
            if mag == 1:
                body = pw
            elif mag.denominator == 1:
                body = f"{mag.numerator}{pw}"
            else:
                body = f"({render_rational(mag)}){pw}"
        sign = "-" if c < 0 else "+"
        parts.append((sign, body))
    first_sign, first = parts[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, body in parts[1:]:
        out += f" {sign} {body}"
    return out
