"""Trace polynomials in a single unitary variable and the large-N Laplacian.

A trace monomial is ``U^k tr(U^l1) ... tr(U^lM)`` with ``tr`` the normalized
trace.  Because every factor is a function of the same matrix, untraced
powers commute and collect into a single ``U^k``; traced factors are scalars.
The canonical form stores ``k`` once and the traced powers sorted descending.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping

from . import coeffs as C
from .coeffs import TPoly
from .errors import CapExceededError, DomainError, UsageError

DEFAULT_DEGREE_CAP = 24


@dataclass(frozen=True)
class TraceMonomial:
    """``U^k`` times a product of normalized traces ``tr(U^l)``.

    Construction canonicalizes: ``traces`` is re-sorted descending, so two
    monomials compare equal exactly when they denote the same function.
    """

    k: int = 0
    traces: tuple = ()

    def __post_init__(self):
        k = self.k
        if isinstance(k, bool) or not isinstance(k, int):
            raise DomainError(f"untraced power must be an integer, got {k!r}")
        if k < 0:
            raise DomainError(f"negative untraced power {k} (Laurent terms are not supported)")
        ts = tuple(self.traces)
        for l in ts:
            if isinstance(l, bool) or not isinstance(l, int):
                raise DomainError(f"trace power must be an integer, got {l!r}")
            if l < 1:
                raise DomainError(f"trace power must be >= 1, got {l}")
        object.__setattr__(self, "traces", tuple(sorted(ts, reverse=True)))

    @property
    def degree(self) -> int:
        return self.k + sum(self.traces)

    @property
    def factor_count(self) -> int:
        """Number of factors; ``U^k`` counts as one factor only when ``k > 0``."""
        return (1 if self.k > 0 else 0) + len(self.traces)

    @property
    def is_scalar(self) -> bool:
        return self.k == 0

    @property
    def is_identity(self) -> bool:
        return self.k == 0 and not self.traces

    def sort_key(self):
        return (self.factor_count, self.k, self.traces)

    def __mul__(self, other: "TraceMonomial") -> "TraceMonomial":
        if not isinstance(other, TraceMonomial):
            return NotImplemented
        return TraceMonomial(self.k + other.k, self.traces + other.traces)

    def render(self, var: str = "U") -> str:
        parts = []
        if self.k:
            parts.append(var if self.k == 1 else f"{var}^{self.k}")
        # group repeated traces: tr(U)^2
        i = 0
        ts = self.traces
        while i < len(ts):
            j = i
            while j < len(ts) and ts[j] == ts[i]:
                j += 1
            inner = var if ts[i] == 1 else f"{var}^{ts[i]}"
            mult = j - i
            parts.append(f"tr({inner})" + (f"^{mult}" if mult > 1 else ""))
            i = j
        return " ".join(parts) if parts else "I"

    def __str__(self):
        return self.render()


IDENTITY = TraceMonomial()


def canonicalize(k: int, traces: Iterable[int] = ()) -> TraceMonomial:
    return TraceMonomial(k, tuple(traces))


def degree(m: TraceMonomial) -> int:
    return m.degree


def trace_close(m: TraceMonomial) -> TraceMonomial:
    """Apply the normalized trace: ``tr(U^k * scalar) = tr(U^k) * scalar``."""
    if m.k == 0:
        return m
    return TraceMonomial(0, m.traces + (m.k,))


class TracePolynomial:
    """Finite linear combination of trace monomials over one coefficient ring.

    Immutable; zero coefficients are never stored.
    """

    __slots__ = ("_terms", "ring")

    def __init__(self, terms: Mapping[TraceMonomial, object] | None = None, ring: str = C.RATIONAL):
        if ring not in C.RINGS:
            raise UsageError(f"unknown coefficient ring {ring!r}")
        clean = {}
        for m, c in (terms or {}).items():
            if not isinstance(m, TraceMonomial):
                raise UsageError(f"term key must be a TraceMonomial, got {type(m).__name__}")
            c = C.coerce(c, ring)
            if not C.is_zero(c):
                clean[m] = c
        object.__setattr__(self, "_terms", clean)
        object.__setattr__(self, "ring", ring)

    def __setattr__(self, name, value):
        raise AttributeError("TracePolynomial is immutable")

    @classmethod
    def monomial(cls, m: TraceMonomial, coeff=1, ring: str = C.RATIONAL) -> "TracePolynomial":
        return cls({m: coeff}, ring)

    @classmethod
    def power(cls, k: int, ring: str = C.RATIONAL) -> "TracePolynomial":
        return cls.monomial(TraceMonomial(k), 1, ring)

    @classmethod
    def traced_power(cls, k: int, ring: str = C.RATIONAL) -> "TracePolynomial":
        return cls.monomial(TraceMonomial(0, (k,)), 1, ring)

    @classmethod
    def zero(cls, ring: str = C.RATIONAL) -> "TracePolynomial":
        return cls({}, ring)

    @classmethod
    def _raw(cls, terms: dict, ring: str) -> "TracePolynomial":
        # trusted constructor: terms already coerced, zeros still pruned
        obj = object.__new__(cls)
        object.__setattr__(obj, "_terms", {m: c for m, c in terms.items() if not C.is_zero(c)})
        object.__setattr__(obj, "ring", ring)
        return obj

    # -- mapping-ish access
    @property
    def terms(self) -> dict:
        return dict(self._terms)

    def __iter__(self) -> Iterator[TraceMonomial]:
        return iter(self.sorted_monomials())

    def items(self):
        return [(m, self._terms[m]) for m in self.sorted_monomials()]

    def sorted_monomials(self) -> list:
        return sorted(self._terms, key=lambda m: (m.degree,) + m.sort_key())

    def __len__(self):
        return len(self._terms)

    def __getitem__(self, m: TraceMonomial):
        return self._terms.get(m, C.zero(self.ring))

    def __contains__(self, m):
        return m in self._terms

    def is_zero(self) -> bool:
        return not self._terms

    @property
    def degrees(self) -> list:
        return sorted({m.degree for m in self._terms})

    @property
    def max_degree(self) -> int:
        return max((m.degree for m in self._terms), default=0)

    def homogeneous_components(self) -> dict:
        out: dict = {}
        for m, c in self._terms.items():
            out.setdefault(m.degree, {})[m] = c
        return {d: TracePolynomial._raw(t, self.ring) for d, t in sorted(out.items())}

    def is_scalar(self) -> bool:
        return all(m.k == 0 for m in self._terms)

    # -- arithmetic
    def _check(self, other: "TracePolynomial"):
        if not isinstance(other, TracePolynomial):
            raise UsageError(f"expected TracePolynomial, got {type(other).__name__}")
        if other.ring != self.ring:
            raise UsageError(f"coefficient rings differ: {self.ring!r} vs {other.ring!r}")

    def __add__(self, other):
        if not isinstance(other, TracePolynomial):
            return NotImplemented
        self._check(other)
        out = dict(self._terms)
        for m, c in other._terms.items():
            out[m] = out[m] + c if m in out else c
        return TracePolynomial._raw(out, self.ring)

    def __neg__(self):
        return TracePolynomial._raw({m: -c for m, c in self._terms.items()}, self.ring)

    def __sub__(self, other):
        if not isinstance(other, TracePolynomial):
            return NotImplemented
        return self + (-other)

    def scale(self, a) -> "TracePolynomial":
        a = C.coerce(a, self.ring)
        return TracePolynomial._raw({m: a * c for m, c in self._terms.items()}, self.ring)

    def __mul__(self, other):
        if isinstance(other, TracePolynomial):
            return multiply(self, other)
        if isinstance(other, (int, Fraction, float, TPoly)) and not isinstance(other, bool):
            return self.scale(other)
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, Fraction, float, TPoly)) and not isinstance(other, bool):
            return self.scale(other)
        return NotImplemented

    def __eq__(self, other):
        if not isinstance(other, TracePolynomial):
            return NotImplemented
        return self.ring == other.ring and self._terms == other._terms

    def __hash__(self):
        return hash((self.ring, frozenset(self._terms.items())))

    def map_coeffs(self, fn, ring: str) -> "TracePolynomial":
        return TracePolynomial({m: fn(c) for m, c in self._terms.items()}, ring)

    def to_ring(self, ring: str) -> "TracePolynomial":
        return self.map_coeffs(lambda c: c, ring) if ring != self.ring else self

    def map_monomials(self, fn) -> "TracePolynomial":
        """Linear extension of a monomial -> monomial map (terms that collide add up)."""
        out: dict = {}
        for m, c in self._terms.items():
            key = fn(m)
            out[key] = out[key] + c if key in out else c
        return TracePolynomial._raw(out, self.ring)

    # -- rendering / serialization
    def render(self, var: str = "U") -> str:
        if not self._terms:
            return "0"
        chunks = []
        for m, c in self.items():
            chunks.append(_render_term(c, m, var, self.ring))
        out = chunks[0]
        for ch in chunks[1:]:
            out += " - " + ch[1:] if ch.startswith("-") else " + " + ch
        return out

    def __str__(self):
        return self.render()

    def __repr__(self):
        return f"TracePolynomial({self.render()!r}, ring={self.ring!r})"

    def to_json(self) -> dict:
        return {
            "ring": self.ring,
            "terms": [
                {"k": m.k, "traces": list(m.traces), "coeff": C.coeff_to_json(c, self.ring)}
                for m, c in self.items()
            ],
        }

    @classmethod
    def from_json(cls, doc) -> "TracePolynomial":
        if isinstance(doc, str):
            doc = json.loads(doc)
        if not isinstance(doc, dict) or "ring" not in doc or "terms" not in doc:
            raise ValueError("trace polynomial document needs 'ring' and 'terms'")
        ring = doc["ring"]
        if ring not in C.RINGS:
            raise ValueError(f"unknown ring {ring!r}")
        terms: dict = {}
        for t in doc["terms"]:
            m = TraceMonomial(int(t["k"]), tuple(int(x) for x in t.get("traces", [])))
            c = C.coeff_from_json(t["coeff"], ring)
            terms[m] = terms[m] + c if m in terms else c
        return cls(terms, ring)


def _render_term(c, m: TraceMonomial, var: str, ring: str) -> str:
    mono = m.render(var)
    if ring == C.TPOLY:
        body = c.__str__()
        if len([x for x in c.coeffs if x]) > 1:
            body = f"({body})"
        if body == "1":
            return mono
        if body == "-1":
            return "-" + mono
        return body if m.is_identity else f"{body} {mono}"
    if ring == C.RATIONAL:
        if c == 1:
            return mono
        if c == -1:
            return "-" + mono
        body = C.render_rational(c)
    else:
        body = repr(float(c))
    return body if m.is_identity else f"{body} {mono}"


def multiply(p: TracePolynomial, q: TracePolynomial) -> TracePolynomial:
    """Bilinear product; untraced powers add and traced multisets merge."""
    if not isinstance(p, TracePolynomial) or not isinstance(q, TracePolynomial):
        raise UsageError("multiply expects two TracePolynomials")
    if p.ring != q.ring:
        raise UsageError(f"coefficient rings differ: {p.ring!r} vs {q.ring!r}")
    out: dict = {}
    for m1, c1 in p._terms.items():
        for m2, c2 in q._terms.items():
            m = m1 * m2
            c = c1 * c2
            out[m] = out[m] + c if m in out else c
    return TracePolynomial._raw(out, p.ring)


def _check_power(k):
    if isinstance(k, bool) or not isinstance(k, int) or k <= 0:
        raise DomainError(f"power must be a positive integer, got {k!r}")


@lru_cache(maxsize=None)
def _power_terms(k: int) -> tuple:
    # (coeff, untraced m, traced k-m) pairs of -kU^k - 2 sum_m m U^m tr(U^{k-m})
    out = [(-k, k, None)]
    out += [(-2 * m, m, k - m) for m in range(1, k)]
    return tuple(out)


def laplacian_power(k: int) -> TracePolynomial:
    """Laplacian of ``U^k``: ``-k U^k - 2 sum_{m<k} m U^m tr(U^{k-m})``, exact for every N."""
    _check_power(k)
    terms: dict = {}
    for c, m, l in _power_terms(k):
        mono = TraceMonomial(m, () if l is None else (l,))
        terms[mono] = terms.get(mono, 0) + c
    return TracePolynomial(terms)


def laplacian_traced_power(k: int) -> TracePolynomial:
    """Laplacian of ``tr(U^k)``, the traced form of :func:`laplacian_power`."""
    _check_power(k)
    return laplacian_power(k).map_monomials(trace_close)


@lru_cache(maxsize=4096)
def _leading_on_monomial(m: TraceMonomial) -> tuple:
    acc: dict = {}

    def add(mono, c):
        acc[mono] = acc.get(mono, 0) + c

    if m.k > 0:
        for c, p, l in _power_terms(m.k):
            add(TraceMonomial(p, m.traces + (() if l is None else (l,))), c)
    ts = m.traces
    for i, l in enumerate(ts):
        if i > 0 and ts[i - 1] == l:
            continue
        mult = ts.count(l)
        rest = ts[:i] + ts[i + 1:]
        for c, p, q in _power_terms(l):
            new = (p,) if q is None else (p, q)
            add(TraceMonomial(m.k, rest + new), mult * c)
    return tuple((mono, c) for mono, c in acc.items() if c)


def laplacian_leading(p: TracePolynomial, degree_cap: int = DEFAULT_DEGREE_CAP) -> TracePolynomial:
    """Large-N Laplacian: sum over factors of (Laplacian of the factor) x (other factors).

    The ``O(1/N^2)`` cross terms of the finite-N operator are dropped.
    """
    if p.max_degree > degree_cap:
        raise CapExceededError(f"degree {p.max_degree} exceeds cap {degree_cap}")
    out: dict = {}
    for m, c in p._terms.items():
        for mono, a in _leading_on_monomial(m):
            v = c * a
            out[mono] = out[mono] + v if mono in out else v
    return TracePolynomial._raw(out, p.ring)
