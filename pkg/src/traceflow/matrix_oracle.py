"""Exact finite-N Laplacian of trace-polynomial functions on U(N).

The Laplacian of the bi-invariant metric ``<X, Y> = N Trace(X* Y)`` is
``sum_j d^2/ds^2 f(P exp(s X_j))`` over an orthonormal basis ``X_j`` of u(N).
Second derivatives are obtained algebraically (no finite differences):
with ``Q(s) = P exp(sX)`` we have ``Q' = PX`` and ``Q'' = PX^2`` at s = 0,
and powers/products follow from the Leibniz rule.  All basis directions are
processed as one batched array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapExceededError, DomainError, UsageError
from .trace_algebra import (
    TraceMonomial,
    TracePolynomial,
    laplacian_power,
    laplacian_traced_power,
)

UNITARY = "unitary"
INVERTIBLE = "invertible"

MAX_N = 32
MAX_DEGREE = 8
EXACT_TOL = 1e-9
SLOPE_WINDOW = 0.15


@dataclass(frozen=True)
class LieBasis:
    """Orthonormal basis of u(N) under ``N * Trace(X* Y)``, stacked as (N^2, N, N)."""

    N: int
    elements: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.elements)

    def gram(self) -> np.ndarray:
        E = self.elements.reshape(len(self), -1)
        return (self.N * (E.conj() @ E.T)).real


def _pair_indices(N: int):
    return np.triu_indices(N, 1)


def lie_onb(N: int) -> LieBasis:
    """``i E_jj / sqrt(N)``, then for each ``j < k`` the pair
    ``(E_jk - E_kj) / sqrt(2N)`` and ``i (E_jk + E_kj) / sqrt(2N)``."""
    if isinstance(N, bool) or not isinstance(N, (int, np.integer)) or N < 1:
        raise DomainError(f"matrix size must be a positive integer, got {N!r}")
    return LieBasis(int(N), lie_combination(np.eye(N * N), int(N)))


def lie_combination(coeffs: np.ndarray, N: int) -> np.ndarray:
    """``sum_j coeffs[..., j] X_j`` for the :func:`lie_onb` ordering, without forming the basis."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != N * N:
        raise UsageError(f"expected {N * N} coefficients, got {coeffs.shape[-1]}")
    batch = coeffs.shape[:-1]
    out = np.zeros(batch + (N, N), dtype=complex)
    diag = np.arange(N)
    out[..., diag, diag] = 1j * coeffs[..., :N] / math.sqrt(N)
    if N > 1:
        ju, ku = _pair_indices(N)
        s = 1.0 / math.sqrt(2 * N)
        a = coeffs[..., N::2] * s
        b = coeffs[..., N + 1::2] * s
        out[..., ju, ku] = a + 1j * b
        out[..., ku, ju] = -a + 1j * b
    return out


@dataclass(frozen=True)
class MatrixPoint:
    """A point of U(N) or GL(N, C)."""

    matrix: np.ndarray = field(repr=False)
    domain: str = UNITARY

    def __post_init__(self):
        M = np.asarray(self.matrix, dtype=complex)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DomainError(f"expected a square matrix, got shape {M.shape}")
        if self.domain == UNITARY:
            err = np.linalg.norm(M.conj().T @ M - np.eye(M.shape[0]))
            if not err <= 1e-10:
                raise DomainError(f"matrix is not unitary: ||U*U - I||_F = {err:.3g}")
        elif self.domain == INVERTIBLE:
            cond = np.linalg.cond(M)
            if not np.isfinite(cond):
                raise DomainError("matrix is singular")
        else:
            raise UsageError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "matrix", M)

    @property
    def N(self) -> int:
        return self.matrix.shape[0]


def _as_matrix(P) -> np.ndarray:
    return P.matrix if isinstance(P, MatrixPoint) else np.asarray(P, dtype=complex)


def random_unitary(N: int, rng: np.random.Generator) -> np.ndarray:
    """QR of a complex Gaussian matrix with the diagonal phases of R divided out."""
    G = (rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))) / math.sqrt(2)
    Q, R = np.linalg.qr(G)
    d = np.diagonal(R)
    return Q * (d / np.abs(d))


def ntrace(A: np.ndarray) -> np.ndarray:
    """Normalized trace over the last two axes."""
    return np.trace(A, axis1=-2, axis2=-1) / A.shape[-1]


def hs_norm(A: np.ndarray) -> float:
    """``sqrt(tr(A* A))`` with the normalized trace."""
    return float(np.linalg.norm(A) / math.sqrt(A.shape[-1]))


def eval_monomial(m: TraceMonomial, P) -> np.ndarray:
    M = _as_matrix(P)
    N = M.shape[0]
    out = np.linalg.matrix_power(M, m.k) if m.k else np.eye(N, dtype=complex)
    scal = 1.0 + 0j
    for l in m.traces:
        scal *= ntrace(np.linalg.matrix_power(M, l))
    return scal * out


def eval_polynomial(p: TracePolynomial, P, coeff=None) -> np.ndarray:
    """Evaluate a float/rational trace polynomial (``coeff`` maps coefficients to numbers)."""
    M = _as_matrix(P)
    N = M.shape[0]
    conv = coeff or complex
    powers = _power_cache(M, p.max_degree)
    tr_cache: dict = {}
    out = np.zeros((N, N), dtype=complex)
    for m, c in p.items():
        scal = complex(conv(c))
        for l in m.traces:
            if l not in tr_cache:
                tr_cache[l] = ntrace(powers[l])
            scal *= tr_cache[l]
        out += scal * powers[m.k]
    return out


def _power_cache(M: np.ndarray, top: int) -> list:
    out = [np.eye(M.shape[0], dtype=complex)]
    for _ in range(top):
        out.append(out[-1] @ M)
    return out


def _jets_of_power(P: np.ndarray, X: np.ndarray, k: int):
    """Value and first two s-derivatives of ``(P exp(sX))^k`` at s=0, batched over X."""
    N = P.shape[0]
    I = np.broadcast_to(np.eye(N, dtype=complex), X.shape)
    PX = P @ X
    PX2 = PX @ X
    v, d1, d2 = np.eye(N, dtype=complex), np.zeros_like(X), np.zeros_like(X)
    for _ in range(k):
        v, d1, d2 = v @ P, d1 @ P + v @ PX, d2 @ P + 2 * (d1 @ PX) + v @ PX2
    return np.broadcast_to(v, X.shape) if k else I, d1, d2


def _combine(a, b):
    # (fg)'' = f'' g + 2 f' g' + f g''
    (v, d1, d2), (w, e1, e2) = a, b
    return v * w, v * e1 + d1 * w, d2 * w + 2 * d1 * e1 + v * e2


def _monomial_jets(m: TraceMonomial, P: np.ndarray, X: np.ndarray):
    B = X.shape[0]
    jets = _jets_of_power(P, X, m.k)
    for l in m.traces:
        v, d1, d2 = _jets_of_power(P, X, l)
        sv = ntrace(v).reshape(-1, 1, 1) * np.ones((B, 1, 1))
        jets = _combine(jets, (sv, ntrace(d1).reshape(B, 1, 1), ntrace(d2).reshape(B, 1, 1)))
    return jets


def second_directional(m: TraceMonomial, X, P) -> np.ndarray:
    """``d^2/ds^2 m(P exp(sX))`` at ``s = 0``; ``X`` may be one matrix or a stack."""
    M = _as_matrix(P)
    Xa = np.asarray(X, dtype=complex)
    single = Xa.ndim == 2
    Xb = Xa[None] if single else Xa
    _, _, d2 = _monomial_jets(m, M, Xb)
    return d2[0] if single else d2


def _check_caps(N: int, deg: int):
    if N > MAX_N:
        raise CapExceededError(f"N = {N} exceeds oracle cap {MAX_N}")
    if deg > MAX_DEGREE:
        raise CapExceededError(f"degree {deg} exceeds oracle cap {MAX_DEGREE}")


def laplacian_exact(m, P, basis: LieBasis | None = None) -> np.ndarray:
    """Finite-N Laplacian at ``P`` of a monomial or rational/float trace polynomial."""
    M = _as_matrix(P)
    N = M.shape[0]
    if isinstance(P, MatrixPoint) and P.domain != UNITARY:
        raise DomainError("the U(N) Laplacian needs a unitary point")
    X = (basis or lie_onb(N)).elements
    if isinstance(m, TraceMonomial):
        _check_caps(N, m.degree)
        # numpy's pairwise summation over a fixed axis is deterministic
        return second_directional(m, X, M).sum(axis=0)
    _check_caps(N, m.max_degree)
    out = np.zeros((N, N), dtype=complex)
    for mono, c in m.items():
        out += complex(c) * second_directional(mono, X, M).sum(axis=0)
    return out


@dataclass
class ResidualReport:
    identity: str
    params: dict
    max_residual: float
    residuals: list
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tolerance

    def to_json(self) -> dict:
        return {
            "identity": self.identity,
            "params": self.params,
            "max_residual": self.max_residual,
            "residuals": self.residuals,
            "tolerance": self.tolerance,
            "passed": self.passed,
        }


SUITES = ("power_formula", "traced_power_formula", "cross_term", "eigenrelation")


def _relative(lhs: np.ndarray, rhs: np.ndarray) -> float:
    scale = max(np.linalg.norm(rhs), np.linalg.norm(lhs), 1e-300)
    return float(np.linalg.norm(lhs - rhs) / scale)


def _suite_terms(suite: str, k, l, N: int):
    """(function, symbolic right-hand side as a callable of P)."""
    if suite == "eigenrelation":
        f = TraceMonomial(1)
        return f, lambda P: -P
    if k is None or k < 1:
        raise DomainError(f"suite {suite!r} needs k >= 1")
    if suite == "power_formula":
        rhs = laplacian_power(k)
        return TraceMonomial(k), lambda P: eval_polynomial(rhs, P)
    if suite == "traced_power_formula":
        rhs = laplacian_traced_power(k)
        return TraceMonomial(0, (k,)), lambda P: eval_polynomial(rhs, P)
    if suite == "cross_term":
        if l is None or l < 1:
            raise DomainError("cross_term needs l >= 1")
        leib = laplacian_power(k) * TracePolynomial.traced_power(l) + TracePolynomial.power(k) * laplacian_traced_power(l)
        corr = 2.0 * k * l / N**2
        return TraceMonomial(k, (l,)), lambda P: eval_polynomial(leib, P) - corr * np.linalg.matrix_power(P, k + l)
    raise UsageError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")


def verify_identity(suite: str, k: int | None = None, l: int | None = None, N: int = 2,
                    trials: int = 10, seed: int = 0, tolerance: float = EXACT_TOL) -> ResidualReport:
    """Compare the exact finite-N Laplacian with a symbolic formula at random unitary points."""
    f, rhs = _suite_terms(suite, k, l, N)
    _check_caps(N, f.degree)
    rng = np.random.default_rng([seed, N, f.degree])
    basis = lie_onb(N)
    residuals = []
    for _ in range(trials):
        P = MatrixPoint(random_unitary(N, rng))
        residuals.append(_relative(laplacian_exact(f, P, basis), rhs(P.matrix)))
    params = {"k": k, "l": l, "N": N, "trials": trials, "seed": seed}
    return ResidualReport(suite, params, max(residuals, default=0.0), residuals, tolerance)


def product_rule_defect(f: TraceMonomial, g: TraceMonomial, P, basis: LieBasis | None = None) -> np.ndarray:
    """``Delta(fg) - Delta(f) g - f Delta(g)`` at ``P``; ``g`` must be scalar (no untraced power)."""
    if g.k != 0:
        raise DomainError("product_rule_defect needs a scalar g (untraced power 0)")
    M = _as_matrix(P)
    basis = basis or lie_onb(M.shape[0])
    F, G = eval_monomial(f, M), eval_monomial(g, M)
    return laplacian_exact(f * g, M, basis) - laplacian_exact(f, M, basis) @ G - F @ laplacian_exact(g, M, basis)


def spread_point(N: int, rng: np.random.Generator | None = None, width: float = 1.0) -> np.ndarray:
    """Unitary with eigenangles at the midpoint quantiles of Uniform[-width, width].

    As N grows its normalized traces converge to ``sin(k w)/(k w)``, so trace
    polynomials evaluated here tend to fixed nonzero values.  An optional
    random conjugation hides the diagonal structure.
    """
    theta = width * (2 * (np.arange(N) + 0.5) / N - 1)
    D = np.diag(np.exp(1j * theta))
    if rng is None:
        return D
    V = random_unitary(N, rng)
    return V @ D @ V.conj().T


def loglog_slope(xs, ys):
    """Least-squares slope and intercept of log(y) against log(x)."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


DEFAULT_SCALING_PAIRS = (
    (TraceMonomial(2), TraceMonomial(0, (2,))),
    (TraceMonomial(1, (1,)), TraceMonomial(0, (2,))),
    (TraceMonomial(2), TraceMonomial(0, (2, 1))),
)


@dataclass
class ScalingReport:
    f: str
    g: str
    Ns: list
    norms: list
    slope: float
    target: float = -2.0
    window: float = SLOPE_WINDOW

    @property
    def passed(self) -> bool:
        return abs(self.slope - self.target) <= self.window

    def to_json(self) -> dict:
        return {"identity": "product_rule_scaling", "f": self.f, "g": self.g, "N": self.Ns,
                "defect_norms": self.norms, "slope": self.slope, "target": self.target,
                "window": self.window, "passed": self.passed}


def product_rule_scaling(f: TraceMonomial, g: TraceMonomial, Ns=(2, 4, 8, 16), seed: int = 0) -> ScalingReport:
    """Normalized HS norm of the product-rule defect at spread points, fitted on log-log axes."""
    rng = np.random.default_rng(seed)
    norms = []
    for N in Ns:
        _check_caps(N, f.degree + g.degree)
        P = MatrixPoint(spread_point(N, rng))
        norms.append(hs_norm(product_rule_defect(f, g, P)))
    slope, _ = loglog_slope(Ns, norms)
    return ScalingReport(f.render(), g.render(), list(Ns), norms, slope)
