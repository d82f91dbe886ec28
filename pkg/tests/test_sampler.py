import math

import numpy as np
import pytest
from scipy import stats

from boundednoise import DomainError, NoiseFamily, RngState, ScaledNoise, answer_query, sample
from boundednoise.sampler import uniforms

FAMILIES = [NoiseFamily.poly(2), NoiseFamily.poly(1), NoiseFamily.single_exp(),
            NoiseFamily.double_exp()]


def test_replay_is_bit_identical():
    s = ScaledNoise(NoiseFamily.poly(2), 3.0)
    a = sample(s, RngState(11, 2), 1000)
    b = sample(s, RngState(11, 2), 1000)
    assert np.array_equal(a, b)


def test_streams_differ_and_are_uncorrelated():
    a = uniforms(RngState(5, 0), 200_000)
    b = uniforms(RngState(5, 1), 200_000)
    assert not np.array_equal(a, b)
    # |corr| of independent uniforms is ~ N(0, 1/n); 5 sigma
    assert abs(np.corrcoef(a, b)[0, 1]) < 5.0 / math.sqrt(a.size)


def test_substream_deterministic():
    r = RngState(9, 3)
    assert r.substream(4) == r.substream(4)
    assert r.substream(4) != r.substream(5)


@pytest.mark.parametrize("bad", [-1, 2 ** 64, 1.5])
def test_seed_validation(bad):
    with pytest.raises(DomainError):
        RngState(bad)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
def test_draws_inside_support(fam):
    s = ScaledNoise(fam, 7.0)
    x = sample(s, RngState(1), 200_000)
    assert np.all(np.abs(x) < 7.0)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
@pytest.mark.parametrize("R", [0.5, 10.0, 1e4])
def test_ks_against_quadrature_cdf(fam, R):
    n = 100_000
    s = ScaledNoise(fam, R)
    x = sample(s, RngState(2024, int(R)), n)
    res = stats.kstest(x, s.cdf)
    assert res.statistic < 1.63 / math.sqrt(n)


def test_answer_query_is_value_plus_noise():
    s = ScaledNoise(NoiseFamily.poly(2), 2.0)
    r = RngState(3)
    eta = sample(s, r, 1)[0]
    assert answer_query(10.0, s, r) == 10.0 + eta


def test_sample_moments_match_quadrature():
    s = ScaledNoise(NoiseFamily.poly(2), 1.0)
    x = sample(s, RngState(77), 400_000)
    from scipy import integrate
    var, _ = integrate.quad(lambda y: y * y * s.pdf(y), -1, 1, epsabs=0, epsrel=1e-12)
    se = math.sqrt(np.var(x * x) / x.size)
    assert abs(np.mean(x * x) - var) < 5 * se
    assert abs(np.mean(x)) < 5 * math.sqrt(var / x.size)
