import math

import mpmath
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import special, stats as sps

from rmtlab.ensembles import EnsembleSpec
from rmtlab.errors import UndefinedBoundError
from rmtlab.moments import (
    aggregate_moments,
    beta_log_moments,
    beta_projection_variance,
    clt_ks_rate,
    concentration_params,
    delta_method_log,
    digamma,
    frame_deviation_allowance,
    latala_moment_bound,
    mixed_tail_bound,
    mixed_tail_crossover,
    skorski_params,
    skorski_tail_bound,
    trigamma,
)

positive = st.floats(min_value=1e-3, max_value=1e4, allow_nan=False)


@pytest.mark.parametrize("x", [1e-3, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 9.99, 10.0, 25.0, 1e3, 1e6])
def test_digamma_trigamma_against_mpmath(x):
    assert digamma(x) == pytest.approx(float(mpmath.digamma(x)), rel=1e-13, abs=1e-13)
    assert trigamma(x) == pytest.approx(float(mpmath.polygamma(1, x)), rel=1e-13)


@settings(max_examples=200)
@given(positive)
def test_digamma_trigamma_against_scipy(x):
    assert digamma(x) == pytest.approx(special.psi(x), rel=1e-12, abs=1e-12)
    assert trigamma(x) == pytest.approx(special.polygamma(1, x), rel=1e-12)


@settings(max_examples=200)
@given(st.floats(min_value=1e-2, max_value=1e3))
def test_recurrences(x):
    assert digamma(x + 1) == pytest.approx(digamma(x) + 1 / x, rel=1e-12, abs=1e-12)
    assert trigamma(x + 1) == pytest.approx(trigamma(x) - 1 / x**2, rel=1e-11, abs=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, float("nan")])
def test_special_functions_reject_nonpositive(bad):
    with pytest.raises(ValueError):
        digamma(bad)
    with pytest.raises(ValueError):
        trigamma(bad)


def test_known_values():
    assert digamma(1.0) == pytest.approx(-0.5772156649015329, rel=1e-15)
    assert trigamma(1.0) == pytest.approx(math.pi**2 / 6, rel=1e-15)
    m = beta_log_moments(4, 4)
    assert m.mean == pytest.approx(-5 / 6, rel=1e-14)
    assert m.variance == pytest.approx(13 / 36, rel=1e-14)
    m = beta_log_moments(2, 2)  # log of a uniform variable
    assert (m.mean, m.variance) == pytest.approx((-1.0, 1.0), rel=1e-14)
    assert beta_log_moments(3, 0) == beta_log_moments(1, 0)
    assert beta_log_moments(3, 0).mean == 0.0


@pytest.mark.parametrize("n,l", [(1, 1), (2, 5), (4, 4), (7, 2)])
def test_beta_log_moments_by_quadrature(n, l):
    law = sps.beta(n / 2, l / 2)
    mean = law.expect(math.log)
    second = law.expect(lambda t: math.log(t) ** 2)
    m = beta_log_moments(n, l)
    assert m.mean == pytest.approx(mean, rel=1e-7)
    assert m.variance == pytest.approx(second - mean**2, rel=1e-6)


def test_aggregate_moments():
    spec = EnsembleSpec(4, 3, (4, 0, 2))
    agg = aggregate_moments(spec)
    parts = [beta_log_moments(4, l) for l in (4, 0, 2)]
    assert agg.mu == pytest.approx(sum(p.mean for p in parts) / 3)
    assert agg.sigma2 == pytest.approx(sum(p.variance for p in parts) / 9)
    uniform = aggregate_moments(EnsembleSpec.uniform(4, 2000, 4))
    assert uniform.mu == pytest.approx(-5 / 6)
    assert uniform.sigma2 == pytest.approx(13 / 36 / 2000)


def test_concentration_params():
    spec = EnsembleSpec(2, 3, (2, 6, 4))
    cp = concentration_params(spec)
    expected = [4 * (2 + l + 2) / (2 + l) ** 2 for l in (2, 6, 4)]
    assert cp.M_list == pytest.approx(expected)
    assert cp.M == pytest.approx(min(expected))
    assert cp.M_N == pytest.approx(expected[-1])
    assert cp.M_hat == pytest.approx(sum(1 / v for v in expected))
    assert cp.p0 == pytest.approx(expected[-1] ** 2 * cp.M_hat)


def test_moment_bound_shape():
    spec = EnsembleSpec.uniform(4, 100, 4)
    values = [latala_moment_bound(p, spec) for p in (1, 2, 4, 8, 16)]
    assert values == sorted(values)
    assert latala_moment_bound(2, spec, C=3) == pytest.approx(3 * values[1])
    with pytest.raises(ValueError):
        latala_moment_bound(0.5, spec)


def test_mixed_tail_bound_shape():
    spec = EnsembleSpec.uniform(4, 50, 4)
    assert mixed_tail_bound(0.0, spec) == 2.0
    grid = [mixed_tail_bound(s, spec) for s in (0.001, 0.01, 0.1, 1.0)]
    assert grid == sorted(grid, reverse=True)
    s_star = mixed_tail_crossover(spec)
    cp = concentration_params(spec)
    assert cp.M_hat * s_star**2 == pytest.approx(cp.M_N * s_star)
    with pytest.raises(ValueError):
        mixed_tail_bound(-1.0, spec)


def test_clt_ks_rate():
    spec = EnsembleSpec.uniform(4, 2000, 4)
    n, N, l = 4, 2000, 4
    expected = math.sqrt(4 * math.log(n) ** 2 * math.log(N / n) ** 2 * n * (n + l) / (2 * l * N))
    assert clt_ks_rate(spec) == pytest.approx(expected)
    assert clt_ks_rate(spec, C=4) == pytest.approx(2 * expected)
    rates = [clt_ks_rate(EnsembleSpec.uniform(4, N, 4)) for N in (1000, 10**4, 10**5, 10**6)]
    assert rates == sorted(rates, reverse=True)
    with pytest.raises(UndefinedBoundError):
        clt_ks_rate(EnsembleSpec.uniform(4, 100, 0))
    with pytest.raises(ValueError):
        clt_ks_rate(EnsembleSpec.uniform(1, 100, 2))
    with pytest.raises(ValueError):
        clt_ks_rate(EnsembleSpec.uniform(4, 4, 2))


def test_skorski_params():
    p = skorski_params(2.0, 2.0)
    assert p.v == pytest.approx(sps.beta(2, 2).var())
    assert p.c == 0.0
    assert skorski_params(1.0, 3.0).c > 0
    with pytest.raises(ValueError):
        skorski_params(0.0, 1.0)


@settings(max_examples=150, deadline=None)
@given(
    alpha=st.floats(0.5, 20),
    beta=st.floats(0.5, 20),
    eps=st.floats(0.01, 0.9),
    side=st.sampled_from(["upper", "lower"]),
)
def test_skorski_bound_dominates_exact_tail(alpha, beta, eps, side):
    law = sps.beta(alpha, beta)
    mean = law.mean()
    assume(0 < mean + eps < 1 if side == "upper" else 0 < mean - eps < 1)
    exact = law.sf(mean + eps) if side == "upper" else law.cdf(mean - eps)
    assert exact <= skorski_tail_bound(alpha, beta, eps, side) + 1e-12


def test_skorski_bound_edges():
    assert skorski_tail_bound(2, 2, 0.0) == 1.0
    # symmetric law: both sides coincide
    assert skorski_tail_bound(2, 2, 0.2, "upper") == skorski_tail_bound(2, 2, 0.2, "lower")
    # mirror symmetry X -> 1 - X swaps the shapes and the sides
    assert skorski_tail_bound(1, 3, 0.2, "upper") == pytest.approx(
        skorski_tail_bound(3, 1, 0.2, "lower")
    )
    with pytest.raises(ValueError):
        skorski_tail_bound(2, 2, 0.1, "left")
    with pytest.raises(ValueError):
        skorski_tail_bound(2, 2, -0.1)


@pytest.mark.parametrize("n,l", [(1, 1), (4, 4), (8, 2), (3, 0)])
def test_beta_projection_variance(n, l):
    exact = beta_projection_variance(n, l)
    if l:
        assert exact == pytest.approx(sps.beta(n / 2, l / 2).var())
    else:
        assert exact == 0.0
    assert exact <= beta_projection_variance(n, l, exact=False)


def test_frame_deviation_allowance():
    assert frame_deviation_allowance(4, 2, 100, 0.1) == pytest.approx(
        2 / 200 * math.log(4 / (2 * 0.01))
    )
    with pytest.raises(ValueError):
        frame_deviation_allowance(4, 2, 100, 1.0)
    with pytest.raises(ValueError):
        frame_deviation_allowance(4, 5, 100, 0.5)


def test_delta_method_log():
    d = delta_method_log(2.0, 0.4, 0.1)
    assert d.mean_log == pytest.approx(math.log(2.0))
    assert d.mean_log_second_order == pytest.approx(math.log(2.0) - 0.4 / 8)
    assert d.var_log == pytest.approx(0.1)
    assert d.mu4_log == pytest.approx(0.1 / 16)
    with pytest.raises(ValueError):
        delta_method_log(0.0, 0.1, 0.1)
