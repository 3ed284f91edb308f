import math

import numpy as np
import pytest

import traceflow.rmt_mc as mc
from traceflow.errors import DomainError, UsageError
from traceflow.heat_engine import SingleVariablePolynomial as SVP, moment_nu
from traceflow.matrix_oracle import MatrixPoint, ntrace
from traceflow.rmt_mc import (
    Moments,
    SamplerConfig,
    concentration_experiment,
    discretization_pair,
    empirical_eigs,
    estimate_norm,
    fit_loglog,
    limit_transform_experiment,
    moment_experiment,
    sample_batch,
    sample_gl_heat,
    sample_unitary_heat,
    spectral_histogram,
)
from traceflow.trace_algebra import IDENTITY, TraceMonomial as M, TracePolynomial as TP


def within(mean, target, se, nse=3.0):
    return abs(mean - target) <= nse * se


def test_config_validation():
    assert SamplerConfig(4, 1.0).steps == 200
    assert SamplerConfig(4, 10.0).steps == 500
    assert SamplerConfig(4, 1.0, group="gl").group == "general_linear"
    for bad in (dict(N=0, t=1.0), dict(N=2, t=-1.0), dict(N=2, t=1.0, steps=0),
                dict(N=2, t=1.0, samples=0), dict(N=2, t=1.0, group="so")):
        with pytest.raises(DomainError):
            SamplerConfig(**bad)


@pytest.mark.parametrize("group", ["unitary", "general_linear"])
def test_t_zero_gives_identity(group):
    mats = sample_batch(SamplerConfig(3, 0.0, samples=4, group=group))
    assert np.array_equal(mats, np.broadcast_to(np.eye(3), (4, 3, 3)))


def test_single_sample_helpers():
    P = sample_unitary_heat(SamplerConfig(3, 0.5, steps=50))
    assert isinstance(P, MatrixPoint) and P.domain == "unitary"
    Z = sample_gl_heat(SamplerConfig(3, 0.5, steps=50, group="gl"))
    assert Z.domain == "invertible"
    with pytest.raises(UsageError):
        sample_unitary_heat(SamplerConfig(3, 0.5, group="gl"))


def test_unitary_samples_exactly_unitary():
    mats = sample_batch(SamplerConfig(6, 2.0, steps=400, samples=8))
    err = np.linalg.norm(mats.conj().transpose(0, 2, 1) @ mats - np.eye(6), axis=(1, 2))
    assert err.max() <= 1e-10


def test_reproducible_and_thread_invariant():
    cfg = SamplerConfig(4, 1.0, steps=40, samples=300, seed=11)
    a = sample_batch(cfg, threads=1)
    b = sample_batch(cfg, threads=1)
    c = sample_batch(cfg, threads=3)
    assert np.array_equal(a, b) and np.array_equal(a, c)
    assert np.array_equal(sample_batch(cfg, indices=[7, 250])[1], a[250])
    assert not np.array_equal(a, sample_batch(SamplerConfig(4, 1.0, steps=40, samples=300, seed=12)))


def test_noise_blocking_does_not_change_stream(monkeypatch):
    cfg = SamplerConfig(3, 1.0, steps=30, samples=5, seed=3, group="gl")
    a = sample_batch(cfg)
    monkeypatch.setattr(mc, "NOISE_BLOCK_BYTES", 1)
    assert np.array_equal(a, sample_batch(cfg))


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("TRACEFLOW_THREADS", "3")
    assert mc.resolve_threads() == 3
    assert mc.resolve_threads(2) == 2


def test_shard_merge_equals_union():
    a = np.array([0.25, 1.5, -2.0 + 1j])
    b = np.array([3.0, 1e-9j])
    assert Moments.of(a).merge(Moments.of(b)) == Moments.of(np.concatenate([a, b]))
    vals = ntrace(sample_batch(SamplerConfig(3, 1.0, steps=20, samples=10, seed=1, shard=0)))
    more = ntrace(sample_batch(SamplerConfig(3, 1.0, steps=20, samples=10, seed=1, shard=1)))
    merged = Moments.of(vals).merge(Moments.of(more))
    single = Moments.of(np.concatenate([vals, more]))
    assert merged == single and merged.mean == single.mean and merged.se == single.se


def test_moments_statistics():
    m = Moments.of([1.0, 2.0, 3.0, 4.0])
    assert m.mean == 2.5
    assert m.variance == pytest.approx(np.var([1, 2, 3, 4], ddof=1))
    assert m.se == pytest.approx(math.sqrt(m.variance / 4))
    z = Moments.of([1j, -1j])
    assert z.mean_imag == 0 and z.variance == pytest.approx(2.0)


def test_n1_unitary_wrapped_gaussian():
    # angle is Gaussian with variance t, so E e^{i theta} = e^{-t/2}
    cfg = SamplerConfig(1, 1.0, samples=100_000, seed=0)
    z = sample_batch(cfg)[:, 0, 0]
    m = Moments.of(z)
    assert within(m.mean, math.exp(-0.5), m.se)
    assert np.allclose(np.abs(z), 1.0, atol=1e-12)


def test_trace_mean_n8():
    cfg = SamplerConfig(8, 1.0, samples=400, seed=0)
    m = Moments.of(ntrace(sample_batch(cfg)))
    assert within(m.mean, math.exp(-0.5), m.se)


def test_entrywise_mean_of_u():
    # E[U] = e^{-t/2} I exactly because U is a Laplacian eigenfunction
    cfg = SamplerConfig(3, 1.0, steps=100, samples=3000, seed=2)
    mats = sample_batch(cfg)
    target = math.exp(-0.5) * np.eye(3)
    for i in range(3):
        for j in range(3):
            m = Moments.of(mats[:, i, j])
            assert within(m.mean, target[i, j], m.se), (i, j)
            assert abs(m.mean_imag) <= 3 * math.sqrt(max(m.variance - m.var_real, 0) / m.n) + 1e-12


def test_gl_trace_mean_n16():
    cfg = SamplerConfig(16, 1.0, samples=200, seed=0, group="gl")
    m = Moments.of(ntrace(sample_batch(cfg)))
    assert within(m.mean, 1.0, m.se)


def test_gl_n1_second_moment():
    cfg = SamplerConfig(1, 0.5, samples=20_000, seed=5, group="gl")
    z = sample_batch(cfg)[:, 0, 0]
    m = Moments.of(np.abs(z) ** 2)
    assert within(m.mean, math.exp(0.5), m.se)


def test_empirical_eigs_examples():
    assert np.array_equal(empirical_eigs(np.eye(4)), np.zeros(4))
    assert np.allclose(empirical_eigs(np.diag([1j, -1j])), [-np.pi / 2, np.pi / 2])
    assert empirical_eigs(np.array([[-1.0]]))[0] == -np.pi  # [-pi, pi) convention
    with pytest.raises(DomainError):
        empirical_eigs(MatrixPoint(2 * np.eye(2), "invertible"))


def test_spectral_moments_n32():
    rep = moment_experiment([1, 2, 3, 4], N=32, t=1.0, samples=200, seed=0)
    for e in rep.entries:
        assert within(e.mean, e.target, e.se), e


def test_histogram_counts():
    mats = sample_batch(SamplerConfig(5, 1.0, steps=20, samples=7))
    h = spectral_histogram(mats)
    assert h.counts.sum() == 5 * 7 and len(h.edges) == 65
    assert all(np.all(np.diff(a) >= 0) for a in h.angles)
    assert h.to_csv().splitlines()[0] == "bin_left,bin_right,count"
    h0 = spectral_histogram(sample_batch(SamplerConfig(2, 0.0)))
    assert h0.counts[32] == 2 and h0.counts.sum() == 2


def test_estimate_norm_trivial():
    cfg = SamplerConfig(4, 1.0, steps=20, samples=20)
    rep = estimate_norm(TP.monomial(IDENTITY), cfg)
    (e,) = rep.entries
    assert e.mean == 1.0 and e.se == 0.0
    (e,) = estimate_norm(TP.power(1), cfg).entries
    assert e.mean == pytest.approx(1.0, abs=1e-14) and e.se <= 1e-14
    with pytest.raises(UsageError):
        estimate_norm(TP.power(1, ring="tpoly"), cfg)


def test_estimate_norm_concentration_rate():
    t = 1.0
    f = TP({M(0, (1,)): 1.0, IDENTITY: -math.exp(-t / 2)}, "float")
    Ns = [8, 16, 32]
    vals = [estimate_norm(f, SamplerConfig(N, t, samples=300, seed=0)).entries[0].mean for N in Ns]
    fit = fit_loglog(Ns, vals)
    assert abs(fit.slope + 2) <= 0.3


def test_concentration_small():
    rep = concentration_experiment([1, 2], 1.0, [8, 16], samples=300, seed=0)
    for e in rep.select("tr2"):
        assert e.target == 0.0 and within(e.mean, 0.0, e.se)
    for e in rep.select("tr1"):
        assert within(e.mean, moment_nu(1)(1.0), e.se)
    assert rep.config["group"] == "unitary"
    assert rep.to_csv().splitlines()[0] == "N,statistic,mean,se,variance"


def test_fit_needs_three_points():
    with pytest.raises(DomainError):
        fit_loglog([2, 4], [1, 2])
    fit = fit_loglog([2, 4, 8], [1 / 4, 1 / 16, 1 / 64])
    assert fit.slope == pytest.approx(-2) and fit.halfwidth == pytest.approx(0, abs=1e-9)


def test_limit_transform_linear_is_zero():
    rep = limit_transform_experiment(SVP.from_coefficients([0, 1]), 0.7, [4, 8, 16], samples=5)
    assert all(e.mean == 0.0 and e.se == 0.0 for e in rep.entries)


def test_limit_transform_residual_polynomial():
    # for u^2: e^{-t}(Z^2 - t Z tr Z) - e^{-t}(Z^2 - t Z) = -t e^{-t} (Z tr Z - Z)
    t = 1.0
    D = mc.limit_residual_polynomial(SVP.from_coefficients([0, 0, 1]), t)
    assert D == TP({M(1, (1,)): -t * math.exp(-t), M(1): t * math.exp(-t)}, "float")


def test_limit_transform_u3_decay():
    rep = limit_transform_experiment(SVP.from_coefficients([0, 0, 0, 1]), 0.5, [8, 64], samples=100, seed=0)
    e8, e64 = rep.entries
    assert e64.mean * 4 <= e8.mean


@pytest.mark.slow
def test_discretization_control():
    # shared Brownian path at m and 2m steps isolates the time-discretization bias
    coarse, fine = discretization_pair(SamplerConfig(8, 1.0, steps=200, samples=10_000, seed=0))
    a, b = Moments.of(ntrace(coarse)), Moments.of(ntrace(fine))
    assert abs(a.mean - b.mean) < a.se


def test_n1_isometry_within_standard_errors():
    # exact e^{k^2 t} moments for the GL normalization; judged in SE units since
    # the relative SE for k >= 2 is comparable to a few percent at 1e5 samples
    rep = mc.isometry_experiment([1, 2, 3], 0.5, samples=100_000, seed=0)
    for e in rep.entries:
        assert abs(e.z_score) <= 3, e
