import math
from fractions import Fraction
from math import comb, factorial

import pytest
import sympy
from hypothesis import given, settings, strategies as st

from traceflow.coeffs import TPoly
from traceflow.errors import CapExceededError, DomainError
from traceflow.heat_engine import (
    GENERAL_LINEAR,
    HeatPolynomial,
    SingleVariablePolynomial as SVP,
    build_block,
    evaluate_traces_one,
    free_hall_transform_coeffs,
    heat_apply,
    heat_trace_close,
    holomorphic_extend,
    matrix_power,
    moment_nu,
    traces_to_one,
)
from traceflow.trace_algebra import TraceMonomial as M, TracePolynomial as TP

F = Fraction


def tp(*cs):
    return TPoly(cs)


# -- blocks

def test_block_examples():
    b = build_block(M(2))
    assert set(b.basis) == {M(2), M(1, (1,))} and b.size == 2
    b = build_block(M(1))
    assert b.basis == (M(1),) and b.matrix == [[F(-1)]]
    b = build_block(M(3))
    assert set(b.basis) == {M(3), M(2, (1,)), M(1, (2,)), M(1, (1, 1))}


def test_block_structure():
    for seed in (M(6), M(0, (6,)), M(3, (2, 1))):
        b = build_block(seed)
        d = seed.degree
        assert all(m.degree == d for m in b.basis)
        mat = b.matrix
        for i in range(b.size):
            assert mat[i][i] == -d
            for j in range(i + 1, b.size):
                assert mat[i][j] == 0  # strictly lower triangular off the diagonal


@pytest.mark.parametrize("d", range(1, 9))
def test_nilpotency(d):
    for seed in (M(d), M(0, (d,))):
        b = build_block(seed)
        L = b.nilpotent_part()
        assert all(x == 0 for row in matrix_power(L, d) for x in row)


def test_block_cap():
    with pytest.raises(CapExceededError):
        build_block(M(25))


# -- heat semigroup

def test_heat_examples():
    (h,) = heat_apply(TP.power(2))
    assert h.degree == 2
    assert h.body == TP({M(2): tp(1), M(1, (1,)): tp(0, -1)}, "tpoly")
    (h,) = heat_apply(TP.power(1))
    assert h.degree == 1 and h.body == TP({M(1): tp(1)}, "tpoly")
    (h,) = heat_apply(TP.power(3))
    assert h.body == TP({
        M(3): tp(1),
        M(1, (2,)): tp(0, -1),
        M(2, (1,)): tp(0, -2),
        M(1, (1, 1)): tp(0, 0, F(3, 2)),
    }, "tpoly")


def test_heat_mixed_degree_splits():
    p = TP.power(0).scale(5) + TP.power(1).scale(2) + TP.power(3)
    hs = heat_apply(p)
    assert [h.degree for h in hs] == [0, 1, 3]
    assert hs[0].body == TP({M(): tp(5)}, "tpoly")


@given(st.dictionaries(
    st.builds(lambda k, ts: M(k, tuple(ts)), st.integers(0, 3), st.lists(st.integers(1, 3), max_size=2)),
    st.fractions(min_value=-3, max_value=3, max_denominator=5), max_size=4))
@settings(max_examples=40)
def test_heat_at_zero_is_identity(terms):
    p = TP(terms)
    back = TP.zero()
    for h in heat_apply(p):
        back = back + h.at_zero()
    assert back == p


def test_heat_t_degree_bound():
    for k in range(1, 8):
        (h,) = heat_apply(TP.power(k))
        assert all(c.degree <= k - 1 for _, c in h.body.items())


def _rational_heat(p: TP, s: Fraction) -> dict:
    """Exact body at time s per degree (prefactor kept aside)."""
    return {h.degree: h.body.map_coeffs(lambda c: c(s), "rational") for h in heat_apply(p)}


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("s,t", [(F(3, 10), F(7, 10)), (F(1), F(1))])
def test_semigroup(k, s, t):
    (h_s,) = heat_apply(TP.power(k))
    mid = h_s.body.map_coeffs(lambda c: c(s), "rational")
    (h_st,) = heat_apply(mid)
    (h_total,) = heat_apply(TP.power(k))
    two_step = h_st.at(float(t)).scale(math.exp(-k * float(s) / 2))
    direct = h_total.at(float(s + t))
    assert set(two_step.terms) == set(direct.terms)
    for m, c in direct.items():
        assert abs(two_step[m] - c) <= 1e-12 * abs(c)
    # and exactly, on the polynomial parts
    assert h_st.body.map_coeffs(lambda c: c(t), "rational") == h_total.body.map_coeffs(lambda c: c(s + t), "rational")


@pytest.mark.parametrize("k", range(1, 9))
def test_trace_compatibility(k):
    (h,) = heat_apply(TP.power(k))
    (g,) = heat_apply(TP.traced_power(k))
    assert heat_trace_close(h).body == g.body


# -- extension and trace evaluation

def test_holomorphic_extend_examples():
    (h,) = heat_apply(TP.power(2))
    z = holomorphic_extend(h)
    assert z.domain == GENERAL_LINEAR and z.body == h.body
    assert z.render() == "e^{-t}{Z^2 - t Z tr(Z)}"
    (i,) = heat_apply(TP.power(0))
    assert holomorphic_extend(i).body == i.body
    (c,) = heat_apply(TP.traced_power(3))
    assert "tr(Z^3)" in holomorphic_extend(c).render()


def test_evaluate_traces_one_examples():
    (h,) = heat_apply(TP.power(2))
    q = evaluate_traces_one(holomorphic_extend(h))
    assert q.components == {2: {2: tp(1), 1: tp(0, -1)}}
    prod = HeatPolynomial(3, TP({M(0, (2, 1)): tp(1)}, "tpoly"), GENERAL_LINEAR)
    assert evaluate_traces_one(prod).components == {3: {0: tp(1)}}
    zk = HeatPolynomial(4, TP({M(4): tp(1)}, "tpoly"), GENERAL_LINEAR)
    assert evaluate_traces_one(zk).components == {4: {4: tp(1)}}


def test_evaluate_traces_needs_gl():
    (h,) = heat_apply(TP.power(2))
    with pytest.raises(DomainError):
        evaluate_traces_one(h)


scalar_polys = st.dictionaries(
    st.builds(lambda ts: M(0, tuple(ts)), st.lists(st.integers(1, 3), min_size=1, max_size=2)),
    st.fractions(min_value=-3, max_value=3, max_denominator=4), min_size=1, max_size=3,
).map(TP)


@given(scalar_polys, scalar_polys)
@settings(max_examples=40)
def test_trace_evaluation_is_homomorphism(f, g):
    assert traces_to_one(f * g).get(0, 0) == traces_to_one(f).get(0, 0) * traces_to_one(g).get(0, 0)


def _heat_sum(p):
    """Heat result as {degree: body}."""
    return {h.degree: h.body for h in heat_apply(p)}


@given(st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
@settings(max_examples=20, deadline=None)
def test_heat_multiplicative_on_scalars(a, b, c):
    # large-N form of exp(tD/2)(fg) = exp(tD/2)f * exp(tD/2)g; prefactors multiply automatically
    f = TP.traced_power(a)
    g = TP.monomial(M(0, (b, c)))
    (hf,), (hg,), (hfg,) = heat_apply(f), heat_apply(g), heat_apply(f * g)
    assert hfg.degree == hf.degree + hg.degree
    assert hfg.body == hf.body * hg.body


# -- free Hall transform

def test_free_hall_examples():
    q2 = free_hall_transform_coeffs([0, 0, 1])
    assert q2.components == {2: {2: tp(1), 1: tp(0, -1)}}
    q1 = free_hall_transform_coeffs([0, 1])
    assert q1.components == {1: {1: tp(1)}}
    q3 = free_hall_transform_coeffs([0, 0, 0, 1])
    assert q3.components == {3: {3: tp(1), 2: tp(0, -2), 1: tp(0, -1, F(3, 2))}}


def test_free_hall_constant_and_linearity():
    assert free_hall_transform_coeffs([1]).components == {0: {0: tp(1)}}
    a = free_hall_transform_coeffs([1, 2, 0, 3])
    b = free_hall_transform_coeffs([1]) + free_hall_transform_coeffs([0, 2]) + free_hall_transform_coeffs([0, 0, 0, 3])
    assert a == b


@pytest.mark.parametrize("k", range(1, 9))
def test_leading_coefficient(k):
    q = free_hall_transform_coeffs([0] * k + [1])
    assert q.degree == k
    assert q.coefficient(k)[0].halfrate == k and q.coefficient(k)[0].poly == tp(1)


def test_free_hall_numeric_evaluation():
    q = free_hall_transform_coeffs([0, 0, 1])
    t = 0.7
    assert q.evaluate(t) == pytest.approx([0.0, -t * math.exp(-t), math.exp(-t)], rel=1e-15)


def test_svp_json_round_trip():
    q = free_hall_transform_coeffs([F(1, 3), 0, 2, -1])
    assert SVP.from_json(q.to_json()) == q


# -- moments

def biane_moment(k):
    """Closed form e^{-kt/2} sum_j (-t)^j/j! k^{j-1} C(k, j+1), as a t-polynomial."""
    return TPoly(F((-1) ** j * k ** (j - 1) * comb(k, j + 1)) / factorial(j) for j in range(k))


def test_moment_examples():
    assert moment_nu(1).halfrate == 1 and moment_nu(1).poly == tp(1)
    assert moment_nu(2).halfrate == 2 and moment_nu(2).poly == tp(1, -1)
    assert moment_nu(3).poly == tp(1, -3, F(3, 2))


@pytest.mark.parametrize("k", range(1, 9))
def test_moments_against_closed_form(k):
    nu = moment_nu(k)
    assert nu.halfrate == k and nu.poly == biane_moment(k)
    assert nu.poly.degree <= k - 1


def test_nu2_from_block_matrix_exponential():
    # basis (tr(U^2), tr(U)^2): D tr(U^2) = -2 tr(U^2) - 2 tr(U)^2, D tr(U)^2 = -2 tr(U)^2
    t = sympy.Symbol("t")
    G = sympy.Matrix([[-2, 0], [-2, -2]])
    vec = (t / 2 * G).exp() * sympy.Matrix([1, 0])
    nu2 = sympy.simplify(vec[0] + vec[1])
    assert sympy.simplify(nu2 - sympy.exp(-t) * (1 - t)) == 0


def test_nu3_from_block_matrix_exponential():
    t = sympy.Symbol("t")
    b = build_block(M(0, (3,)))
    G = sympy.Matrix([[sympy.Rational(x.numerator, x.denominator) for x in row] for row in b.matrix])
    e0 = sympy.Matrix([1 if m == M(0, (3,)) else 0 for m in b.basis])
    vec = (t / 2 * G).exp() * e0
    nu3 = sympy.simplify(sum(vec))
    expected = sympy.exp(-3 * t / 2) * (1 - 3 * t + sympy.Rational(3, 2) * t**2)
    assert sympy.simplify(nu3 - expected) == 0


def test_moment_domain():
    with pytest.raises(DomainError):
        moment_nu(0)
