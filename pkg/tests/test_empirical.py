import csv
import math

import numpy as np
import pytest
from scipy import integrate, stats

from boundednoise import (DomainError, NoiseFamily, PrivacyParams, RngState, ScaledNoise,
                          estimate_delta_hat, exact_delta_oracle_1d, falsifier_check,
                          noise_upper_bound, privacy_loss_samples)
from boundednoise.empirical import clopper_pearson_lower, falsifier_threshold

POLY2 = NoiseFamily.poly(2)
LOGZ_POLY2 = -1.0779446289288514952       # mpmath, see test_noise_core


def _hockey_stick_quad(R, Delta, eps):
    """Closed-form poly(2) density fed to adaptive quadrature."""
    def p(y):
        e = y / R
        return math.exp(-(1 - e * e) ** -2 - LOGZ_POLY2) / R if abs(e) < 1 else 0.0

    g = lambda y: max(0.0, p(y) - math.exp(eps) * p(y - Delta))
    val, _ = integrate.quad(g, -R, R, points=[-R + Delta, 0.0, Delta / 2], epsabs=1e-16,
                            epsrel=1e-11, limit=2000)
    return val


@pytest.mark.parametrize("R,eps", [(4.0, 0.5), (4.0, 2.0), (20.0, 0.1), (20.0, 1.0)])
def test_exact_oracle_matches_adaptive_quadrature(R, eps):
    s = ScaledNoise(POLY2, R)
    assert exact_delta_oracle_1d(s, 1.0, eps) == pytest.approx(_hockey_stick_quad(R, 1.0, eps),
                                                               rel=1e-7, abs=1e-15)


def test_exact_oracle_edge_cases():
    s = ScaledNoise(POLY2, 5.0)
    assert exact_delta_oracle_1d(s, 0.0, 0.3) == 0.0
    vals = [exact_delta_oracle_1d(s, 1.0, e) for e in (0.0, 0.2, 0.5, 1.0, 3.0)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    # at eps = 0 the hockey stick is total variation, at most 1
    assert 0 < vals[0] <= 1


def test_delta_hat_matches_oracle_at_one_query():
    R, eps = 6.0, 0.5
    s = ScaledNoise(POLY2, R)
    samples = privacy_loss_samples(s, 1, 1.0, 400_000, RngState(123))
    dh, se = estimate_delta_hat(samples, eps)
    exact = exact_delta_oracle_1d(s, 1.0, eps)
    assert abs(dh - exact) < 4 * se


def test_loss_samples_deterministic_and_chunk_independent(monkeypatch):
    s = ScaledNoise(POLY2, 50.0)
    a = privacy_loss_samples(s, 7, 1.0, 5000, RngState(8)).losses
    import boundednoise.empirical as E
    monkeypatch.setattr(E, "_CHUNK_ELEMS", 7 * 333)
    b = privacy_loss_samples(s, 7, 1.0, 5000, RngState(8)).losses
    np.testing.assert_array_equal(a, b)


def test_loss_is_sum_of_shape_differences():
    from boundednoise.sampler import uniforms
    R, k = 9.0, 4
    s = ScaledNoise(POLY2, R)
    L = privacy_loss_samples(s, k, 1.0, 10, RngState(5)).losses
    eta = s.quantile(uniforms(RngState(5), 10 * k)).reshape(10, k) / R
    ref = ((1 - (eta + 1 / R) ** 2) ** -2 - (1 - eta ** 2) ** -2).sum(axis=1)
    np.testing.assert_allclose(L, ref, rtol=1e-9)


def test_shift_at_or_beyond_support_gives_infinite_loss():
    s = ScaledNoise(POLY2, 1.0)
    res = privacy_loss_samples(s, 3, 1.0, 100, RngState(1))
    assert res.n_infinite == 100
    assert estimate_delta_hat(res, 1.0) == (1.0, 0.0)


def test_csv_export(tmp_path):
    s = ScaledNoise(POLY2, 50.0)
    res = privacy_loss_samples(s, 2, 1.0, 5, RngState(2))
    path = tmp_path / "loss.csv"
    res.to_csv(path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["index", "loss"] and len(rows) == 6
    assert float(rows[3][1]) == res.losses[2]


@pytest.mark.parametrize("count,n", [(0, 1000), (1, 1000), (37, 5000), (999, 1000)])
def test_clopper_pearson_matches_scipy_exact_interval(count, n):
    ref = stats.binomtest(count, n).proportion_ci(confidence_level=0.98, method="exact").low
    # scipy solves for the bound by root finding, good to about 1e-9
    assert clopper_pearson_lower(count, n, 0.99) == pytest.approx(ref, rel=1e-8, abs=1e-300)


def test_clopper_pearson_single_success_closed_form():
    # one success in n: the lower bound solves 1 - (1 - p)^n = 1 - confidence
    n = 1000
    assert clopper_pearson_lower(1, n, 0.99) == pytest.approx(-math.expm1(math.log(0.99) / n),
                                                              rel=1e-12)


def test_falsifier_refutes_undersized_noise_and_accepts_certified():
    fam, P = POLY2, PrivacyParams(1.0, 1e-6, 100, 1.0)
    Rstar = noise_upper_bound(fam, P)
    bad = falsifier_check(ScaledNoise(fam, Rstar / 100), 100, 1.0, 1.0, 1e-6, 20_000, RngState(0))
    assert bad.refuted and bad.rho_lower > bad.threshold
    good = falsifier_check(ScaledNoise(fam, Rstar), 100, 1.0, 1.0, 1e-6, 20_000, RngState(0))
    assert not good.refuted
    assert good.threshold == pytest.approx(falsifier_threshold(1.0, 1e-6))


def test_falsifier_needs_enough_samples():
    with pytest.raises(DomainError):
        falsifier_check(ScaledNoise(POLY2, 5.0), 1, 1.0, 1.0, 1e-6, 999, RngState(0))
