"""Correlation estimators against Fourier oracles; decay fits; CLT pieces."""

import math

import numpy as np
import pytest

from conelab.maxent import quotient_mem, sample_orbit
from conelab.observables import Observable, constant, coboundary, cos_base, multimode
from conelab.stats import (
    CorrelationSeries,
    clt_test,
    correlation,
    correlation_series,
    correlation_via_duality,
    fit_decay,
    green_kubo_sigma,
    stability_sweep,
)
from conelab.systems import make_doubling_solenoid, make_perturbed_family


@pytest.fixture(scope="module")
def doubling():
    return make_doubling_solenoid(lambda_s=0.05)


@pytest.fixture(scope="module")
def uniform(doubling):
    return quotient_mem(doubling.base)


@pytest.fixture(scope="module")
def orbit(doubling, uniform):
    return sample_orbit(doubling, uniform, 200_000, depth=14, n_steps=12,
                        seed=21)


def multimode_oracle(n: int, n_modes: int = 10) -> float:
    """Exact base-Lebesgue value of C_n for the geometric mode ladder."""
    if n >= n_modes:
        return 0.0
    return 0.5 * 0.5 ** n * sum(0.25 ** k for k in range(1, n_modes - n + 1))


class TestCorrelation:
    def test_constant_psi_centers_to_zero(self, doubling, orbit):
        series = correlation_series(doubling, orbit, cos_base(), constant(1.0),
                                    range(0, 5))
        assert np.all(np.abs(series.values) < 1e-12)

    def test_cos_orthogonality(self, doubling, orbit):
        phi = cos_base()
        series = correlation_series(doubling, orbit, phi, phi, range(1, 7))
        assert np.all(np.abs(series.values) < 3.0 * series.stderrs)

    def test_multimode_matches_fourier_oracle(self, doubling, orbit):
        phi = multimode(10)
        series = correlation_series(doubling, orbit, phi, phi, range(0, 7))
        for lag, val, se in zip(series.lags, series.values, series.stderrs):
            assert abs(val - multimode_oracle(int(lag))) < 3.0 * se

    def test_duality_route_agrees(self, doubling, orbit):
        phi = multimode(6)
        for lag in (1, 3, 5):
            fwd, se_f = correlation(doubling, orbit, phi, phi, lag)
            dual, se_d = correlation_via_duality(doubling, orbit, phi, phi, lag)
            assert abs(fwd - dual) < 3.0 * math.hypot(se_f, se_d)


class TestFitDecay:
    def test_exact_geometric_recovery(self):
        lags = np.arange(1, 11)
        series = CorrelationSeries(lags=lags, values=0.3 * 0.5 ** lags,
                                   stderrs=np.full(10, 1e-12), n_samples=10 ** 6)
        rep = fit_decay(series)
        assert rep.conclusive
        assert rep.tau == pytest.approx(0.5, abs=1e-6)
        assert rep.k_const == pytest.approx(0.3, abs=1e-6)
        assert rep.r_squared > 1.0 - 1e-12

    def test_multimode_rate_near_half(self, doubling, orbit):
        phi = multimode(10)
        series = correlation_series(doubling, orbit, phi, phi, range(1, 8))
        rep = fit_decay(series)
        assert rep.conclusive
        assert 0.45 <= rep.tau <= 0.55

    def test_all_noise_is_inconclusive(self):
        lags = np.arange(1, 8)
        series = CorrelationSeries(lags=lags, values=np.full(7, 1e-6),
                                   stderrs=np.full(7, 1e-3), n_samples=1000)
        rep = fit_decay(series)
        assert not rep.conclusive
        assert math.isnan(rep.tau)
        assert rep.excluded_lags == list(range(1, 8))


class TestGreenKubo:
    def test_constant_observable_is_degenerate(self, doubling, orbit):
        rep = green_kubo_sigma(doubling, orbit, constant(3.0), truncation=5)
        assert rep.sigma2 == 0.0
        assert rep.degenerate

    def test_cos_sigma_half(self, doubling, orbit):
        rep = green_kubo_sigma(doubling, orbit, cos_base(), truncation=8)
        assert rep.sigma2 == pytest.approx(0.5, rel=0.05)
        assert not rep.degenerate

    def test_coboundary_degenerates(self, doubling, orbit):
        rep = green_kubo_sigma(doubling, orbit, coboundary(doubling),
                               truncation=10)
        assert abs(rep.sigma2_raw) < 3.0 * rep.stderr
        assert rep.degenerate

    def test_invariant_under_constant_shift(self, doubling, orbit):
        r1 = green_kubo_sigma(doubling, orbit, cos_base(), truncation=6)
        r2 = green_kubo_sigma(doubling, orbit, cos_base().shifted(4.2),
                              truncation=6)
        assert r1.sigma2 == pytest.approx(r2.sigma2, rel=1e-9)


class TestClt:
    def test_cos_normal_limit(self, doubling, uniform, orbit):
        gk = green_kubo_sigma(doubling, orbit, cos_base(), truncation=8)
        rep = clt_test(doubling, uniform, cos_base(), gk, n_time=400,
                       n_samples=4000, seed=97, mean_samples=100_000)
        assert not rep.degenerate
        assert rep.ks_pvalue > 0.01
        assert rep.sigma2_emp == pytest.approx(gk.sigma2, rel=0.1)

    def test_constant_flagged_degenerate(self, doubling, uniform, orbit):
        gk = green_kubo_sigma(doubling, orbit, constant(1.0), truncation=4)
        rep = clt_test(doubling, uniform, constant(1.0), gk, n_time=100,
                       n_samples=100, seed=32)
        assert rep.degenerate
        assert math.isnan(rep.ks_pvalue)

    def test_variance_stable_in_n(self, doubling, uniform, orbit):
        gk = green_kubo_sigma(doubling, orbit, cos_base(), truncation=8)
        r1 = clt_test(doubling, uniform, cos_base(), gk, n_time=200,
                      n_samples=4000, seed=33, mean_samples=100_000)
        r2 = clt_test(doubling, uniform, cos_base(), gk, n_time=800,
                      n_samples=4000, seed=34, mean_samples=100_000)
        assert 0.9 <= r1.sigma2_emp / r2.sigma2_emp <= 1.1


class TestStabilitySweep:
    def test_reference_row_zero(self):
        rows = stability_sweep(make_perturbed_family, cos_base(),
                               [0.0, 0.02], n_samples=20_000, depth=8, seed=41)
        ref = [r for r in rows if r["t"] == 0.0][0]
        assert ref["diff_from_ref"] == 0.0

    def test_differences_shrink_with_t(self):
        phi = cos_base()
        rows = stability_sweep(make_perturbed_family, phi,
                               [0.0, 0.005, 0.02, 0.05],
                               n_samples=60_000, depth=8, seed=42)
        diffs = {r["t"]: r for r in rows if r["t"] > 0}
        d_small = diffs[0.005]
        d_big = diffs[0.05]
        assert (d_small["diff_from_ref"]
                <= d_big["diff_from_ref"]
                + 3.0 * (d_small["diff_stderr"] + d_big["diff_stderr"]))

    def test_base_only_observable_matches_quotient_integral(self):
        # product structure: a base-coordinate observable integrates to its
        # quotient-measure integral
        from conelab.maxent import quotient_mem

        system = make_perturbed_family(0.03)
        q = quotient_mem(system.base, grid_n=1 << 12)
        centers = 0.5 * (q.edges[:-1] + q.edges[1:])
        oracle = float(np.sum(q.masses * np.cos(2.0 * np.pi * centers)))
        rows = stability_sweep(make_perturbed_family, cos_base(),
                               [0.0, 0.03], n_samples=80_000, depth=8, seed=43)
        row = [r for r in rows if r["t"] == 0.03][0]
        assert abs(row["integral"] - oracle) < 3.0 * row["stderr"] + 1e-3
