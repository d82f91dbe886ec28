"""Noise laws: normaliser, tails, derivatives and the quantile map.

Frozen reference values below were produced by mpmath tanh-sinh quadrature at
25 significant digits, independent of the package code.
"""
import math

import numpy as np
import pytest

from boundednoise import DomainError, NoiseFamily, ScaledNoise, eval_f, normalize, unit_table
from boundednoise.noise import eval_f_prime, eval_f_second

# (family, log Z, {x: P(eta > x)})
MPMATH = [
    (NoiseFamily.poly(2), -1.0779446289288514952,
     {0.25: 0.24119917325533596242, 0.5: 0.054853339997073588463,
      0.75: 0.00034432568393811215315}),
    (NoiseFamily.poly(1), -0.81194464419627214927,
     {0.25: 0.29725535406988530459, 0.5: 0.12296728327732907809,
      0.75: 0.016005250115594727188}),
    (NoiseFamily.poly(3.5), -1.3203916542134308101,
     {0.25: 0.18108614402346886813, 0.5: 0.012708355645494141982,
      0.75: 2.3228926201470864447e-10}),
    (NoiseFamily.single_exp(), -2.9010394713967047198,
     {0.25: 0.21693452408345695831, 0.5: 0.035089053616887270985,
      0.75: 0.00001065989453764124114}),
    (NoiseFamily.double_exp(), -16.487977613131742145,
     {0.25: 0.004578882125755785057, 0.5: 2.3712542437469675445e-15}),
]
FAMILIES = [m[0] for m in MPMATH]


@pytest.mark.parametrize("fam,logz,_", MPMATH, ids=lambda v: getattr(v, "label", ""))
def test_log_normaliser_matches_mpmath(fam, logz, _):
    assert normalize(fam) == pytest.approx(logz, rel=1e-13, abs=1e-14)


@pytest.mark.parametrize("fam,_,tails", MPMATH, ids=lambda v: getattr(v, "label", ""))
def test_tail_mass_matches_mpmath(fam, _, tails):
    t = unit_table(fam)
    for x, ref in tails.items():
        assert float(t.tail_mass(x)) == pytest.approx(ref, rel=1e-10)


def test_f_closed_forms():
    assert eval_f(NoiseFamily.poly(2), 0.5) == pytest.approx(1 / 0.75 ** 2, rel=1e-15)
    assert eval_f(NoiseFamily.single_exp(), 0.0) == pytest.approx(math.e, rel=1e-15)
    assert eval_f(NoiseFamily.double_exp(), 0.0) == pytest.approx(math.exp(math.e), rel=1e-15)
    # beyond the overflow cap the shape is +inf
    assert eval_f(NoiseFamily.single_exp(), 0.9999) == math.inf


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
def test_derivatives_by_central_differences(fam):
    eta = np.linspace(-0.6, 0.6, 13)
    h = 1e-5
    fp = (eval_f(fam, eta + h) - eval_f(fam, eta - h)) / (2 * h)
    fpp = (eval_f(fam, eta + h) - 2 * eval_f(fam, eta) + eval_f(fam, eta - h)) / h ** 2
    np.testing.assert_allclose(eval_f_prime(fam, eta), fp, rtol=1e-7, atol=1e-7)
    np.testing.assert_allclose(eval_f_second(fam, eta), fpp, rtol=1e-4)


@pytest.mark.parametrize("bad", [1.0, -1.0, 1.5, math.nan])
def test_f_domain(bad):
    with pytest.raises(DomainError):
        eval_f(NoiseFamily.poly(2), bad)


def test_family_validation():
    with pytest.raises(DomainError):
        NoiseFamily.poly(0.5)
    assert NoiseFamily.single_exp() == NoiseFamily("single", 7.0)


def test_support_edge_is_overflow_point():
    for fam in FAMILIES:
        e = fam.support_edge
        assert math.isfinite(eval_f(fam, e * (1 - 1e-12)))
        assert eval_f(fam, min(e * (1 + 1e-9), 1 - 1e-16)) == math.inf or e > 1 - 1e-12


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
def test_pdf_integrates_to_one(fam):
    from scipy import integrate
    s = ScaledNoise(fam, 3.0)
    val, _ = integrate.quad(s.pdf, -3, 3, points=[0.0], epsabs=0, epsrel=1e-12, limit=400)
    assert val == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
def test_quantile_inverts_cdf(fam):
    s = ScaledNoise(fam, 2.5)
    u = np.concatenate([np.linspace(1e-6, 1 - 1e-6, 2001), [1e-12, 1 - 1e-12]])
    assert np.max(np.abs(s.cdf(s.quantile(u)) - u)) < 1e-12


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f.label)
def test_cdf_inverts_quantile_where_resolvable(fam):
    s = ScaledNoise(fam, 1.0)
    y = np.linspace(-0.9 * s.edge, 0.9 * s.edge, 801)
    c = s.cdf(y)
    ok = (c > 1e-17) & (c < 1 - 1e-12)
    back = s.quantile(c[ok])
    # tolerance follows the local density: dy = du / pdf
    tol = 1e-12 / np.maximum(s.pdf(y[ok]), 1e-300) + 1e-12
    assert np.all(np.abs(back - y[ok]) <= tol)


def test_quantile_endpoints_and_symmetry():
    s = ScaledNoise(NoiseFamily.poly(2), 4.0)
    assert s.quantile(0.0) == -4.0 and s.quantile(1.0) == 4.0
    assert s.quantile(0.5) == 0.0
    u = np.linspace(0.01, 0.49, 50)
    np.testing.assert_allclose(s.quantile(u), -s.quantile(1 - u), rtol=1e-13, atol=1e-15)


def test_abs_quantile_is_sound_and_tight():
    s = ScaledNoise(NoiseFamily.poly(2), 1.0)
    for m in (0.3, 1e-3, 1e-9, 1e-30, 1e-200):
        L = s.abs_quantile(m)
        assert s.sf_abs(L) <= m
        assert s.sf_abs(L * (1 - 1e-6)) > m


def test_scaled_density_is_rescaled_unit_density():
    fam = NoiseFamily.poly(1)
    a, b = ScaledNoise(fam, 1.0), ScaledNoise(fam, 8.0)
    y = np.linspace(-0.9, 0.9, 11)
    np.testing.assert_allclose(b.pdf(8.0 * y) * 8.0, a.pdf(y), rtol=1e-14)
    np.testing.assert_allclose(b.log_pdf(8.0 * y), np.log(b.pdf(8.0 * y)), rtol=1e-12)
