"""Exact large-N heat semigroup on trace polynomials and the free Hall transform.

The large-N Laplacian preserves degree, and on a degree-``d`` block it equals
``-d*I + L`` with ``L`` strictly increasing the number of factors.  Hence
``L`` is nilpotent and

    exp(t/2 * Delta) = exp(-d t / 2) * sum_{j < d} (t/2)^j L^j / j!

is a finite sum with exact rational coefficients.  Results keep the
``exp(-d t / 2)`` prefactor implicit and store only the polynomial in t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

from . import coeffs as C
from .coeffs import TPoly
from .errors import CapExceededError, DomainError, UsageError
from .trace_algebra import (
    DEFAULT_DEGREE_CAP,
    TraceMonomial,
    TracePolynomial,
    laplacian_leading,
    trace_close,
)

UNITARY = "unitary"
GENERAL_LINEAR = "general_linear"


@dataclass(frozen=True)
class HomogeneousBlock:
    """Large-N Laplacian restricted to the span of monomials reachable from a seed.

    ``columns[j]`` maps basis index -> coefficient of the generator applied to
    ``basis[j]``; :attr:`matrix` gives the dense form.
    """

    degree: int
    basis: tuple
    columns: tuple = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.basis)

    @property
    def index(self) -> dict:
        return {m: i for i, m in enumerate(self.basis)}

    @property
    def matrix(self) -> list:
        n = self.size
        rows = [[Fraction(0)] * n for _ in range(n)]
        for j, col in enumerate(self.columns):
            for i, c in col.items():
                rows[i][j] = c
        return rows

    def nilpotent_part(self) -> list:
        """Dense ``generator + d*I``."""
        mat = self.matrix
        for i in range(self.size):
            mat[i][i] += self.degree
        return mat

    def apply_nilpotent(self, vec: dict) -> dict:
        out: dict = {}
        for j, a in vec.items():
            for i, c in self.columns[j].items():
                if i == j:
                    c = c + self.degree
                if c:
                    out[i] = out.get(i, 0) + a * c
        return {i: c for i, c in out.items() if c}


def build_block(seeds, degree_cap: int = DEFAULT_DEGREE_CAP) -> HomogeneousBlock:
    """Close one or more same-degree seed monomials under the large-N Laplacian."""
    if isinstance(seeds, TraceMonomial):
        seeds = [seeds]
    seeds = list(seeds)
    if not seeds:
        raise DomainError("build_block needs at least one seed monomial")
    d = seeds[0].degree
    if any(s.degree != d for s in seeds):
        raise DomainError("block seeds must share one degree")
    if d > degree_cap:
        raise CapExceededError(f"degree {d} exceeds cap {degree_cap}")

    images: dict = {}
    frontier = list(dict.fromkeys(seeds))
    while frontier:
        nxt = []
        for m in frontier:
            if m in images:
                continue
            img = laplacian_leading(TracePolynomial.monomial(m), degree_cap)
            images[m] = img
            nxt.extend(x for x in img if x not in images)
        frontier = nxt

    basis = tuple(sorted(images, key=TraceMonomial.sort_key))
    idx = {m: i for i, m in enumerate(basis)}
    columns = tuple({idx[x]: c for x, c in images[m].items()} for m in basis)
    return HomogeneousBlock(d, basis, columns)


def matrix_power(mat: list, n: int) -> list:
    size = len(mat)
    result = [[Fraction(int(i == j)) for j in range(size)] for i in range(size)]
    for _ in range(n):
        result = [
            [sum((result[i][k] * mat[k][j] for k in range(size) if result[i][k]), Fraction(0))
             for j in range(size)]
            for i in range(size)
        ]
    return result


@dataclass(frozen=True)
class HeatPolynomial:
    """``exp(-degree*t/2) * body`` with ``body`` a trace polynomial over t-polynomials."""

    degree: int
    body: TracePolynomial
    domain: str = UNITARY

    def __post_init__(self):
        if self.body.ring != C.TPOLY:
            raise UsageError("heat polynomial body must use the t-polynomial ring")
        if self.domain not in (UNITARY, GENERAL_LINEAR):
            raise UsageError(f"unknown domain {self.domain!r}")

    @property
    def halfrate(self) -> int:
        return self.degree

    def at_zero(self) -> TracePolynomial:
        return self.body.map_coeffs(lambda c: c(Fraction(0)), C.RATIONAL)

    def at(self, t: float) -> TracePolynomial:
        """Numeric float trace polynomial at time ``t`` with the prefactor folded in."""
        pref = math.exp(-self.degree * t / 2.0)
        return self.body.map_coeffs(lambda c: pref * c.evalf(t), C.FLOAT)

    def render(self) -> str:
        var = "Z" if self.domain == GENERAL_LINEAR else "U"
        return f"{render_prefactor(self.degree)}{{{self.body.render(var)}}}"

    def to_json(self) -> dict:
        return {
            "degree": self.degree,
            "prefactor_halfrate": self.degree,
            "domain": self.domain,
            "body": self.body.to_json(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "HeatPolynomial":
        return cls(int(doc["degree"]), TracePolynomial.from_json(doc["body"]), doc.get("domain", UNITARY))


def render_prefactor(halfrate: int) -> str:
    if halfrate == 0:
        return ""
    if halfrate % 2 == 0:
        rate = halfrate // 2
        return "e^{-t}" if rate == 1 else f"e^{{-{rate}t}}"
    return "e^{-t/2}" if halfrate == 1 else f"e^{{-{halfrate}t/2}}"


def _heat_component(p: TracePolynomial, degree_cap: int) -> HeatPolynomial:
    d = p.max_degree
    block = build_block(list(p), degree_cap)
    idx = block.index
    vec = {idx[m]: c for m, c in p.items()}
    acc: dict = {}
    j = 0
    scale = Fraction(1)
    while vec:
        for i, c in vec.items():
            acc[i] = acc.get(i, TPoly()) + TPoly.monomial(j, c * scale)
        j += 1
        scale /= 2 * j
        vec = block.apply_nilpotent(vec)
    body = TracePolynomial({block.basis[i]: c for i, c in acc.items()}, C.TPOLY)
    return HeatPolynomial(d, body)


def heat_apply(p: TracePolynomial, degree_cap: int = DEFAULT_DEGREE_CAP) -> list:
    """``exp(t/2 * Delta_infinity) p`` as one :class:`HeatPolynomial` per degree."""
    if p.ring != C.RATIONAL:
        raise UsageError("heat_apply expects exact rational coefficients")
    return [_heat_component(comp, degree_cap) for comp in p.homogeneous_components().values()]


def holomorphic_extend(h: HeatPolynomial) -> HeatPolynomial:
    """Relabel ``U`` in U(N) as ``Z`` in GL(N, C); coefficients are untouched."""
    return HeatPolynomial(h.degree, h.body, GENERAL_LINEAR)


def traces_to_one(p: TracePolynomial) -> dict:
    """Set every ``tr(Z^l)`` to 1 and collect by untraced power."""
    out: dict = {}
    for m, c in p.items():
        out[m.k] = out[m.k] + c if m.k in out else c
    return {k: c for k, c in out.items() if not C.is_zero(c)}


@dataclass(frozen=True)
class ExpPoly:
    """``exp(-halfrate * t / 2) * poly(t)``."""

    halfrate: int
    poly: TPoly

    def __call__(self, t: float) -> float:
        return math.exp(-self.halfrate * t / 2.0) * self.poly.evalf(t)

    def render(self) -> str:
        body = self.poly.__str__()
        if self.halfrate == 0:
            return body
        return f"{render_prefactor(self.halfrate)}({body})"

    def to_json(self) -> dict:
        return {"prefactor_halfrate": self.halfrate, "poly": [C.rational_to_json(c) for c in self.poly.coeffs]}


class SingleVariablePolynomial:
    """Polynomial in one variable whose coefficients are sums of ``exp(-d t/2) * poly_d(t)``.

    ``components[d][j]`` is the t-polynomial multiplying ``z^j`` inside the
    degree-``d`` component.  A plain input ``c_0 + c_1 u + ...`` is stored with
    ``components[j] = {j: c_j}`` (constant t-polynomials), which is exactly the
    t = 0 value of its transform.
    """

    def __init__(self, components: dict | None = None, var: str = "z"):
        clean = {}
        for d, by_power in (components or {}).items():
            row = {int(j): C.coerce(c, C.TPOLY) for j, c in by_power.items()}
            row = {j: c for j, c in row.items() if not c.is_zero()}
            if row:
                clean[int(d)] = dict(sorted(row.items(), reverse=True))
        self.components = dict(sorted(clean.items()))
        self.var = var

    @classmethod
    def from_coefficients(cls, coeffs, var: str = "u") -> "SingleVariablePolynomial":
        """``coeffs[j]`` multiplies ``u^j``."""
        return cls({j: {j: Fraction(c)} for j, c in enumerate(coeffs)}, var)

    @property
    def degree(self) -> int:
        return max((j for row in self.components.values() for j in row), default=-1)

    def coefficients(self) -> list:
        """Exact rational coefficients; only valid when every component is t-free."""
        out = [Fraction(0)] * (self.degree + 1)
        for row in self.components.values():
            for j, c in row.items():
                if c.degree > 0:
                    raise UsageError("coefficients depend on t; use coefficient(j) or evaluate(t)")
                out[j] += c(Fraction(0))
        return out

    def coefficient(self, power: int) -> list:
        """Coefficient of ``z^power`` as a list of :class:`ExpPoly` (one per component)."""
        return [ExpPoly(d, row[power]) for d, row in self.components.items() if power in row]

    def evaluate(self, t: float) -> list:
        """Numeric coefficients (index = power) at time ``t``."""
        out = [0.0] * (self.degree + 1)
        for d, row in self.components.items():
            pref = math.exp(-d * t / 2.0)
            for j, c in row.items():
                out[j] += pref * c.evalf(t)
        return out

    def __eq__(self, other):
        if not isinstance(other, SingleVariablePolynomial):
            return NotImplemented
        return self.components == other.components

    def __add__(self, other: "SingleVariablePolynomial") -> "SingleVariablePolynomial":
        comps = {d: dict(row) for d, row in self.components.items()}
        for d, row in other.components.items():
            tgt = comps.setdefault(d, {})
            for j, c in row.items():
                tgt[j] = tgt.get(j, TPoly()) + c
        return SingleVariablePolynomial(comps, self.var)

    def scale(self, a) -> "SingleVariablePolynomial":
        a = Fraction(a)
        return SingleVariablePolynomial(
            {d: {j: c * a for j, c in row.items()} for d, row in self.components.items()}, self.var
        )

    def render(self) -> str:
        if not self.components:
            return "0"
        pieces = []
        for d, row in sorted(self.components.items(), reverse=True):
            inner = _render_row(row, self.var)
            pref = render_prefactor(d)
            pieces.append(f"{pref}({inner})" if pref else inner)
        return " + ".join(pieces)

    def __str__(self):
        return self.render()

    def __repr__(self):
        return f"SingleVariablePolynomial({self.render()!r})"

    def to_json(self) -> dict:
        return {
            "degree_components": [
                {
                    "d": d,
                    "prefactor_halfrate": d,
                    "coeffs_by_power": {
                        str(j): [C.rational_to_json(x) for x in c.coeffs] for j, c in row.items()
                    },
                }
                for d, row in self.components.items()
            ]
        }

    @classmethod
    def from_json(cls, doc: dict, var: str = "z") -> "SingleVariablePolynomial":
        comps = {}
        for comp in doc["degree_components"]:
            d = int(comp["d"])
            if int(comp.get("prefactor_halfrate", d)) != d:
                raise ValueError("prefactor_halfrate must equal d")
            comps[d] = {
                int(j): TPoly(C.rational_from_json(x) for x in arr)
                for j, arr in comp["coeffs_by_power"].items()
            }
        return cls(comps, var)


def _render_row(row: dict, var: str) -> str:
    out = ""
    for j, c in sorted(row.items(), reverse=True):
        zp = "" if j == 0 else (var if j == 1 else f"{var}^{j}")
        nz = [x for x in c.coeffs if x]
        if len(nz) == 1 and c.coeffs[-1] == nz[0]:
            # single t-power: fold the sign out
            neg = nz[0] < 0
            body = render_tpoly_abs(c)
        else:
            neg = False
            body = f"({c})"
        if zp:
            term = zp if body == "1" else f"{body}{' ' if body else ''}{zp}"
        else:
            term = body
        if not out:
            out = ("-" if neg else "") + term
        else:
            out += (" - " if neg else " + ") + term
    return out


def render_tpoly_abs(c: TPoly) -> str:
    return C.render_tpoly(TPoly(abs(x) for x in c.coeffs))


def evaluate_traces_one(h: HeatPolynomial) -> SingleVariablePolynomial:
    """Replace every ``tr(Z^l)`` by 1 in a GL-tagged heat polynomial."""
    if h.domain != GENERAL_LINEAR:
        raise DomainError("evaluate_traces_one needs a holomorphically extended (GL) polynomial")
    return SingleVariablePolynomial({h.degree: traces_to_one(h.body)}, "z")


def free_hall_transform(p: SingleVariablePolynomial, degree_cap: int = DEFAULT_DEGREE_CAP) -> SingleVariablePolynomial:
    """Large-N limit ``p -> q_t``: heat-evolve, extend to GL(N, C), set traces to 1."""
    out = SingleVariablePolynomial({}, "z")
    for j, c in enumerate(p.coefficients()):
        if c == 0:
            continue
        if j == 0:
            out = out + SingleVariablePolynomial({0: {0: c}}, "z")
            continue
        for h in heat_apply(TracePolynomial.power(j), degree_cap):
            out = out + evaluate_traces_one(holomorphic_extend(h)).scale(c)
    return out


def free_hall_transform_coeffs(coeffs, degree_cap: int = DEFAULT_DEGREE_CAP) -> SingleVariablePolynomial:
    return free_hall_transform(SingleVariablePolynomial.from_coefficients(coeffs), degree_cap)


def moment_nu(k: int, degree_cap: int = DEFAULT_DEGREE_CAP) -> ExpPoly:
    """Large-N limit of ``E tr(U^k)`` under the heat kernel at time t."""
    if isinstance(k, bool) or not isinstance(k, int) or k <= 0:
        raise DomainError(f"moment index must be a positive integer, got {k!r}")
    (h,) = heat_apply(TracePolynomial.traced_power(k), degree_cap)
    vals = traces_to_one(h.body)
    return ExpPoly(k, vals.get(0, TPoly()))


def heat_trace_close(h: HeatPolynomial) -> HeatPolynomial:
    return HeatPolynomial(h.degree, h.body.map_monomials(trace_close), h.domain)


def heat_difference_from_limit(h: HeatPolynomial) -> TracePolynomial:
    """``body - (body with traces set to 1)`` as a t-polynomial trace polynomial.

    Terms without traced factors cancel exactly.
    """
    collapsed = TracePolynomial(
        {TraceMonomial(k): c for k, c in traces_to_one(h.body).items()}, C.TPOLY
    )
    return h.body - collapsed
