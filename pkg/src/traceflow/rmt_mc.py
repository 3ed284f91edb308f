"""Monte Carlo for the heat-kernel measures on U(N) and GL(N, C).

Both samplers use a geodesic Euler scheme: right-multiply by the group
exponential of a Gaussian Lie-algebra increment.

* unitary:  ``U <- U exp(sqrt(dt) * sum_j xi_j X_j)`` (generator Delta/2),
  exactly unitary at every step.
* general linear:  ``Z <- Z exp(sqrt(dt/2) * sum_j (xi_j X_j + eta_j i X_j))``.
  The increment is a Ginibre-type matrix, so ``E[Z] = I`` for every step size.

Every sample ``i`` owns the substream ``SeedSequence([seed, shard, i])``; a
sample therefore does not depend on chunking or on the worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy import stats

from . import coeffs as C
from .errors import DomainError, NumericError, UsageError
from .heat_engine import (
    SingleVariablePolynomial,
    heat_apply,
    heat_difference_from_limit,
    moment_nu,
)
from .matrix_oracle import INVERTIBLE, UNITARY, MatrixPoint, eval_polynomial, lie_combination, ntrace
from .trace_algebra import TracePolynomial

GROUP_UNITARY = "unitary"
GROUP_GL = "general_linear"
GROUP_ALIASES = {"u": GROUP_UNITARY, "unitary": GROUP_UNITARY, "gl": GROUP_GL,
                 "general_linear": GROUP_GL}

HIST_BINS = 64
NOISE_BLOCK_BYTES = 32 * 2**20


def default_steps(t: float) -> int:
    return max(200, math.ceil(50 * t))


@dataclass(frozen=True)
class SamplerConfig:
    N: int
    t: float
    steps: int | None = None
    samples: int = 1
    seed: int = 0
    group: str = GROUP_UNITARY
    shard: int = 0

    def __post_init__(self):
        group = GROUP_ALIASES.get(self.group)
        if group is None:
            raise DomainError(f"unknown group {self.group!r}")
        object.__setattr__(self, "group", group)
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if not self.t >= 0:
            raise DomainError("t must be >= 0")
        if self.steps is None:
            object.__setattr__(self, "steps", default_steps(self.t))
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if self.samples < 1:
            raise DomainError("samples must be >= 1")
        if self.seed < 0 or self.shard < 0:
            raise DomainError("seed and shard must be non-negative")

    @property
    def dt(self) -> float:
        return self.t / self.steps

    def echo(self) -> dict:
        return asdict(self)


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("TRACEFLOW_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def expm_skew(A: np.ndarray) -> np.ndarray:
    """Exponential of a stack of skew-Hermitian matrices via ``eigh`` of ``-iA``."""
    try:
        w, V = np.linalg.eigh(-1j * A)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigh failed on skew-Hermitian increment: {exc}") from exc
    return (V * np.exp(1j * w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


def _substream(cfg: SamplerConfig, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, cfg.shard, index])))


def _run_chunk(cfg: SamplerConfig, indices: Sequence[int]) -> np.ndarray:
    N = cfg.N
    n2 = N * N
    dim = n2 if cfg.group == GROUP_UNITARY else 2 * n2
    out = np.broadcast_to(np.eye(N, dtype=complex), (len(indices), N, N)).copy()
    if cfg.t == 0:
        return out
    gens = [_substream(cfg, i) for i in indices]
    block = max(1, min(cfg.steps, NOISE_BLOCK_BYTES // (8 * dim * len(indices))))
    done = 0
    if cfg.group == GROUP_UNITARY:
        scale = math.sqrt(cfg.dt)
    else:
        scale = math.sqrt(cfg.dt / 2)
    while done < cfg.steps:
        nb = min(block, cfg.steps - done)
        noise = np.stack([g.standard_normal((nb, dim)) for g in gens])
        for s in range(nb):
            xi = noise[:, s, :n2]
            if cfg.group == GROUP_UNITARY:
                out = out @ expm_skew(scale * lie_combination(xi, N))
            else:
                W = scale * (lie_combination(xi, N) + 1j * lie_combination(noise[:, s, n2:], N))
                out = out @ scipy.linalg.expm(W)
        done += nb
    return out


def _chunk_size(N: int) -> int:
    return max(1, min(4096, 2**16 // (N * N)))


def sample_batch(cfg: SamplerConfig, threads: int | None = None,
                 indices: Iterable[int] | None = None) -> np.ndarray:
    """All ``cfg.samples`` matrices as an array of shape (samples, N, N)."""
    idx = list(range(cfg.samples)) if indices is None else list(indices)
    size = _chunk_size(cfg.N)
    chunks = [idx[i:i + size] for i in range(0, len(idx), size)]
    workers = min(resolve_threads(threads), max(1, len(chunks)))
    if workers == 1:
        parts = [_run_chunk(cfg, ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda ch: _run_chunk(cfg, ch), chunks))
    if not parts:
        return np.zeros((0, cfg.N, cfg.N), dtype=complex)
    return np.concatenate(parts, axis=0)


def sample_unitary_heat(cfg: SamplerConfig, index: int = 0) -> MatrixPoint:
    if cfg.group != GROUP_UNITARY:
        raise UsageError("sample_unitary_heat needs group 'unitary'")
    return MatrixPoint(_run_chunk(cfg, [index])[0], UNITARY)


def sample_gl_heat(cfg: SamplerConfig, index: int = 0) -> MatrixPoint:
    if cfg.group != GROUP_GL:
        raise UsageError("sample_gl_heat needs group 'general_linear'")
    return MatrixPoint(_run_chunk(cfg, [index])[0], INVERTIBLE)


def empirical_eigs(P) -> np.ndarray:
    """Sorted eigenangles in [-pi, pi) of a unitary point."""
    if isinstance(P, MatrixPoint):
        if P.domain != UNITARY:
            raise DomainError("empirical_eigs needs a unitary point")
        M = P.matrix
    else:
        M = np.asarray(P, dtype=complex)
    if not np.all(np.isfinite(M)):
        raise NumericError("matrix has non-finite entries")
    try:
        lam = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"eigensolver failed for N={M.shape[0]}: {exc}") from exc
    ang = np.angle(lam)
    ang = np.where(ang >= np.pi, ang - 2 * np.pi, ang)
    return np.sort(ang)


@dataclass
class SpectralHistogram:
    angles: np.ndarray = field(repr=False)
    edges: np.ndarray
    counts: np.ndarray
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for a, b, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            w.writerow([repr(float(a)), repr(float(b)), int(c)])
        return buf.getvalue()


def spectral_histogram(mats: np.ndarray, bins: int = HIST_BINS, meta: dict | None = None) -> SpectralHistogram:
    angles = np.stack([empirical_eigs(M) for M in mats])
    edges = np.linspace(-np.pi, np.pi, bins + 1)
    counts, _ = np.histogram(angles.ravel(), bins=edges)
    return SpectralHistogram(angles, edges, counts, dict(meta or {}))


class Moments:
    """Exact sufficient statistics (count, sums, sums of squares) of real and imaginary parts.

    Sums are kept as Fractions of the float inputs, so merging shards gives
    exactly the same numbers as one pass over the union.
    """

    __slots__ = ("n", "s_re", "s_re2", "s_im", "s_im2")

    def __init__(self):
        self.n = 0
        self.s_re = self.s_re2 = self.s_im = self.s_im2 = Fraction(0)

    @classmethod
    def of(cls, values) -> "Moments":
        m = cls()
        m.extend(values)
        return m

    def extend(self, values):
        for v in np.asarray(values, dtype=complex).ravel():
            re, im = Fraction(float(v.real)), Fraction(float(v.imag))
            self.n += 1
            self.s_re += re
            self.s_re2 += re * re
            self.s_im += im
            self.s_im2 += im * im

    def merge(self, other: "Moments") -> "Moments":
        out = Moments()
        out.n = self.n + other.n
        out.s_re = self.s_re + other.s_re
        out.s_re2 = self.s_re2 + other.s_re2
        out.s_im = self.s_im + other.s_im
        out.s_im2 = self.s_im2 + other.s_im2
        return out

    def __eq__(self, other):
        return isinstance(other, Moments) and all(getattr(self, a) == getattr(other, a) for a in self.__slots__)

    def _var(self, s, s2) -> Fraction:
        if self.n < 2:
            return Fraction(0)
        return (s2 - s * s / self.n) / (self.n - 1)

    @property
    def mean(self) -> float:
        return float(self.s_re / self.n)

    @property
    def mean_imag(self) -> float:
        return float(self.s_im / self.n)

    @property
    def var_real(self) -> float:
        return float(self._var(self.s_re, self.s_re2))

    @property
    def variance(self) -> float:
        """Complex variance ``E|X - EX|^2`` (the real variance for real data)."""
        return float(self._var(self.s_re, self.s_re2) + self._var(self.s_im, self.s_im2))

    @property
    def se(self) -> float:
        """Standard error of the real-part mean."""
        return math.sqrt(self.var_real / self.n)


@dataclass
class StatEntry:
    N: int
    statistic: str
    mean: float
    se: float
    variance: float
    count: int
    mean_imag: float = 0.0
    target: float | None = None

    @classmethod
    def from_moments(cls, N, statistic, m: Moments, target=None) -> "StatEntry":
        return cls(N, statistic, m.mean, m.se, m.variance, m.n, m.mean_imag, target)

    @property
    def z_score(self) -> float | None:
        if self.target is None:
            return None
        if self.se == 0:
            return 0.0 if self.mean == self.target else math.inf
        return (self.mean - self.target) / self.se


@dataclass
class SlopeFit:
    quantity: str
    slope: float
    intercept: float
    halfwidth: float
    points: int

    def to_json(self) -> dict:
        return asdict(self)


def fit_loglog(Ns, values, quantity: str = "") -> SlopeFit:
    """Log-log least squares; half-width is the 95% t-interval on the slope."""
    if len(Ns) < 3:
        raise DomainError("a slope fit needs at least 3 N values")
    res = stats.linregress(np.log(np.asarray(Ns, float)), np.log(np.asarray(values, float)))
    hw = float(stats.t.ppf(0.975, len(Ns) - 2) * res.stderr)
    return SlopeFit(quantity, float(res.slope), float(res.intercept), hw, len(Ns))


@dataclass
class StatReport:
    name: str
    entries: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def select(self, statistic: str) -> list:
        return [e for e in self.entries if e.statistic == statistic]

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "config": self.config,
            "entries": [asdict(e) for e in self.entries],
            "fits": {k: v.to_json() for k, v in self.fits.items()},
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["N", "statistic", "mean", "se", "variance"])
        for e in self.entries:
            w.writerow([e.N, e.statistic, repr(e.mean), repr(e.se), repr(e.variance)])
        return buf.getvalue()


def norm_integrand(F: np.ndarray) -> float:
    """``tr(F* F)`` with the normalized trace."""
    return float(np.vdot(F, F).real / F.shape[-1])



def estimate_norm(f: TracePolynomial, cfg: SamplerConfig, threads: int | None = None) -> StatReport:
    """Monte Carlo ``E tr(f(P)* f(P))`` under the configured heat-kernel measure."""
    if f.ring == C.TPOLY:
        raise UsageError("evaluate t first (HeatPolynomial.at) before estimating a norm")
    mats = sample_batch(cfg, threads)
    vals = [norm_integrand(eval_polynomial(f, M)) for M in mats]
    rep = StatReport("norm", config=cfg.echo())
    rep.entries.append(StatEntry.from_moments(cfg.N, "norm2", Moments.of(vals)))
    return rep


def trace_powers(mats: np.ndarray, top: int) -> np.ndarray:
    """``tr(M^k)`` for k = 1..top; shape (samples, top)."""
    out = np.empty((len(mats), top), dtype=complex)
    P = mats.copy()
    for k in range(top):
        if k:
            P = P @ mats
        out[:, k] = ntrace(P)
    return out


def _targets(powers, t: float, group: str) -> dict:
    if group == GROUP_GL:
        return {k: 1.0 for k in powers}
    return {k: moment_nu(k)(t) for k in powers}


def concentration_experiment(powers: Sequence[int], t: float, Ns: Sequence[int], samples: int,
                             seed: int = 0, group: str = GROUP_UNITARY, steps: int | None = None,
                             threads: int | None = None) -> StatReport:
    """Mean and variance of ``tr(U^k)`` per N against the large-N constant, with
    log-log variance fits, plus the untraced residual ``||U tr(U^k) - C U||^2``."""
    powers = sorted(set(int(k) for k in powers))
    if not powers or powers[0] < 1:
        raise DomainError("powers must be positive integers")
    group = GROUP_ALIASES.get(group, group)
    targets = _targets(powers, t, group)
    cfg0 = SamplerConfig(Ns[0], t, steps, samples, seed, group)
    rep = StatReport("concentration", config={
        "powers": powers, "t": t, "N": list(Ns), "samples": samples, "seed": seed,
        "group": group, "steps": cfg0.steps,
    })
    for N in Ns:
        cfg = SamplerConfig(N, t, steps, samples, seed, group)
        mats = sample_batch(cfg, threads)
        trs = trace_powers(mats, powers[-1])
        sq = np.einsum("sij,sij->s", mats.conj(), mats).real / N
        for k in powers:
            v = trs[:, k - 1]
            rep.entries.append(StatEntry.from_moments(N, f"tr{k}", Moments.of(v), targets[k]))
            resid = np.abs(v - targets[k]) ** 2 * sq
            rep.entries.append(StatEntry.from_moments(N, f"untraced{k}", Moments.of(resid)))
    if len(Ns) >= 3:
        for k in powers:
            es = rep.select(f"tr{k}")
            if all(e.variance > 0 for e in es):
                rep.fits[f"var_tr{k}"] = fit_loglog([e.N for e in es], [e.variance for e in es], f"var tr{k}")
    return rep


def limit_residual_polynomial(p: SingleVariablePolynomial, t: float) -> TracePolynomial:
    """Float trace polynomial ``(extended heat-evolved p) - (q_t)_N`` at time ``t``."""
    out = TracePolynomial.zero(C.FLOAT)
    for j, c in enumerate(p.coefficients()):
        if c == 0 or j == 0:
            continue
        for h in heat_apply(TracePolynomial.power(j)):
            pref = math.exp(-h.degree * t / 2.0) * float(c)
            diff = heat_difference_from_limit(h)
            out = out + diff.map_coeffs(lambda x: pref * x.evalf(t), C.FLOAT)
    return out


def limit_transform_experiment(p: SingleVariablePolynomial, t: float, Ns: Sequence[int], samples: int,
                               seed: int = 0, steps: int | None = None,
                               threads: int | None = None) -> StatReport:
    """``|| heat-evolved p (traces kept) - (q_t)_N ||^2`` in L^2(mu_t), per N."""
    if p.degree > 6:
        raise DomainError("limit_transform_experiment supports degree <= 6")
    D = limit_residual_polynomial(p, t)
    cfg0 = SamplerConfig(Ns[0], t, steps, samples, seed, GROUP_GL)
    rep = StatReport("limit_transform", config={
        "p": [str(c) for c in p.coefficients()], "t": t, "N": list(Ns), "samples": samples,
        "seed": seed, "group": GROUP_GL, "steps": cfg0.steps,
    })
    for N in Ns:
        if D.is_zero():
            vals = [0.0] * samples
        else:
            mats = sample_batch(SamplerConfig(N, t, steps, samples, seed, GROUP_GL), threads)
            vals = [norm_integrand(eval_polynomial(D, M)) for M in mats]
        rep.entries.append(StatEntry.from_moments(N, "limit_residual", Moments.of(vals), 0.0))
    es = rep.entries
    if len(Ns) >= 3 and all(e.mean > 0 for e in es):
        rep.fits["limit_residual"] = fit_loglog([e.N for e in es], [e.mean for e in es], "limit residual")
    return rep


def moment_experiment(ks: Sequence[int], N: int, t: float, samples: int, seed: int = 0,
                      steps: int | None = None, threads: int | None = None) -> StatReport:
    """Spectral moments ``(1/N) sum_j exp(i k theta_j)`` from eigenangles, against nu_k(t)."""
    cfg = SamplerConfig(N, t, steps, samples, seed, GROUP_UNITARY)
    mats = sample_batch(cfg, threads)
    angles = np.stack([empirical_eigs(M) for M in mats])
    rep = StatReport("spectral_moments", config=cfg.echo())
    for k in ks:
        v = np.exp(1j * k * angles).mean(axis=1)
        rep.entries.append(StatEntry.from_moments(N, f"moment{k}", Moments.of(v), moment_nu(k)(t)))
    return rep


def isometry_experiment(ks: Sequence[int], t: float, samples: int, seed: int = 0,
                        steps: int | None = None, threads: int | None = None) -> StatReport:
    """N = 1 check of the GL normalization: ``exp(-k^2 t) E|z|^(2k)`` should be 1."""
    cfg = SamplerConfig(1, t, steps, samples, seed, GROUP_GL)
    z = sample_batch(cfg, threads)[:, 0, 0]
    rep = StatReport("n1_isometry", config=cfg.echo())
    for k in ks:
        v = np.exp(-k * k * t) * np.abs(z) ** (2 * k)
        rep.entries.append(StatEntry.from_moments(1, f"isometry{k}", Moments.of(v), 1.0))
    return rep


def discretization_pair(cfg: SamplerConfig, threads: int | None = None):
    """Unitary samples at ``cfg.steps`` and ``2 * cfg.steps`` driven by one Brownian path.

    The coarse increment is the normalized sum of two fine ones, so the two
    arrays differ only by time-discretization error.
    """
    if cfg.group != GROUP_UNITARY:
        raise UsageError("discretization_pair is implemented for the unitary group")
    N, n2, m = cfg.N, cfg.N * cfg.N, cfg.steps
    fine_scale = math.sqrt(cfg.t / (2 * m))
    coarse_scale = math.sqrt(cfg.t / m)

    def run(indices):
        gens = [_substream(cfg, i) for i in indices]
        coarse = np.broadcast_to(np.eye(N, dtype=complex), (len(indices), N, N)).copy()
        fine = coarse.copy()
        for _ in range(m):
            xi = np.stack([g.standard_normal((2, n2)) for g in gens])
            fine = fine @ expm_skew(fine_scale * lie_combination(xi[:, 0], N))
            fine = fine @ expm_skew(fine_scale * lie_combination(xi[:, 1], N))
            joint = (xi[:, 0] + xi[:, 1]) / math.sqrt(2)
            coarse = coarse @ expm_skew(coarse_scale * lie_combination(joint, N))
        return coarse, fine

    idx = list(range(cfg.samples))
    size = _chunk_size(N)
    chunks = [idx[i:i + size] for i in range(0, len(idx), size)]
    workers = min(resolve_threads(threads), len(chunks))
    if workers == 1:
        parts = [run(ch) for ch in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])
