"""Quotient measure, product sampler, and entropy estimators."""

import math

import numpy as np
import pytest
from scipy import stats

from conelab.maxent import (
    brin_katok_report,
    entropy_brin_katok,
    entropy_separated,
    forward_orbit,
    quotient_mem,
    sample_mu,
    separated_set_report,
)
from conelab.observables import cos_base, random_hoelder
from conelab.systems import make_doubling_solenoid, make_mp_solenoid

LOG2 = math.log(2.0)


@pytest.fixture(scope="module")
def doubling():
    return make_doubling_solenoid(lambda_s=0.05)


@pytest.fixture(scope="module")
def mp():
    return make_mp_solenoid(mp_alpha=0.5, lambda_s=0.05)


@pytest.fixture(scope="module")
def mp_quotient(mp):
    return quotient_mem(mp.base, grid_n=1 << 12)


class TestQuotientMeasure:
    def test_doubling_exact_uniform(self, doubling):
        q = quotient_mem(doubling.base)
        assert q.kind == "exact-uniform"
        assert q.eigenvalue == 2.0
        assert q.residual == 0.0

    def test_mp_ulam_mass_and_residual(self, mp_quotient):
        assert mp_quotient.total_mass == pytest.approx(1.0, abs=1e-10)
        assert mp_quotient.residual < 1e-8

    def test_eigenvalue_close_to_degree(self, mp_quotient):
        assert mp_quotient.eigenvalue == pytest.approx(2.0, rel=0.01)

    def test_mp_density_not_uniform(self, mp_quotient):
        # the neutral fixed point depletes the maximal-entropy mass nearby
        dens = mp_quotient.masses * mp_quotient.masses.size
        assert dens.max() > 1.2
        assert dens.min() < 0.9


class TestSampler:
    def test_total_mass_one(self, doubling):
        emp = sample_mu(doubling, quotient_mem(doubling.base), 500, 8, seed=1)
        assert emp.n_samples == 500
        assert np.all((emp.bases >= 0) & (emp.bases < 1))

    def test_base_marginal_ks_uniform(self, doubling):
        n = 40_000
        emp = sample_mu(doubling, quotient_mem(doubling.base), n, 6, seed=2)
        stat = stats.kstest(emp.bases, "uniform").statistic
        assert stat < 1.63 / math.sqrt(n)  # 1% critical value

    def test_f_invariance_in_distribution(self, doubling):
        n = 60_000
        emp = sample_mu(doubling, quotient_mem(doubling.base), n, 10, seed=3)
        rng = np.random.default_rng(4)
        fb, fz = doubling.apply(emp.bases, emp.fibers)
        for _ in range(3):
            phi = random_hoelder(rng)
            diff = phi(fb, fz) - phi(emp.bases, emp.fibers)
            assert abs(diff.mean()) < 3.0 * diff.std() / math.sqrt(n)

    def test_mp_sampler_invariance(self, mp, mp_quotient):
        n = 60_000
        emp = sample_mu(mp, mp_quotient, n, 10, seed=5)
        phi = cos_base()
        fb, fz = mp.apply(emp.bases, emp.fibers)
        diff = phi(fb, fz) - phi(emp.bases, emp.fibers)
        # Ulam discretization adds a small bias on top of MC noise
        assert abs(diff.mean()) < 3.0 * diff.std() / math.sqrt(n) + 2e-3

    def test_reproducible_under_seed(self, doubling):
        q = quotient_mem(doubling.base)
        a = sample_mu(doubling, q, 100, 5, seed=7)
        b = sample_mu(doubling, q, 100, 5, seed=7)
        assert np.array_equal(a.bases, b.bases)
        assert np.array_equal(a.itins, b.itins)

    def test_csv_export(self, doubling, tmp_path):
        emp = sample_mu(doubling, quotient_mem(doubling.base), 10, 4, seed=8)
        path = tmp_path / "samples.csv"
        emp.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "base,itinerary,fiber_x,fiber_y"
        assert len(lines) == 11


class TestSeparatedSets:
    def test_trivial_when_eps_exceeds_diameter(self, doubling):
        h, card, _ = entropy_separated(doubling, 1, doubling.diam + 1.0,
                                       orbit_budget=500)
        assert card == 1
        assert h == 0.0

    def test_cardinality_tracks_two_to_n(self, doubling):
        _, card, _ = entropy_separated(doubling, 8, 0.3, orbit_budget=4096,
                                       seed=1)
        assert 2 ** 8 * 0.8 <= card <= 2 ** 8 * 4

    def test_monotone_in_eps(self, doubling):
        cards = []
        for eps in (0.2, 0.3, 0.45):
            _, card, _ = entropy_separated(doubling, 7, eps,
                                           orbit_budget=2048, seed=2)
            cards.append(card)
        assert cards[0] >= cards[1] >= cards[2]

    def test_slope_near_log2(self, doubling):
        rep = separated_set_report(doubling, ns=(5, 7, 9), eps_grid=(0.3,),
                                   orbit_budget=4096, seed=3)
        assert rep["h_est"] == pytest.approx(LOG2, rel=0.1)


class TestBrinKatok:
    def test_zero_steps_returns_zero(self, doubling):
        emp = sample_mu(doubling, quotient_mem(doubling.base), 100, 4, seed=9)
        h, _ = entropy_brin_katok(doubling, emp, 0, 0.3)
        assert h == 0.0

    def test_doubling_ball_masses(self, doubling):
        emp = sample_mu(doubling, quotient_mem(doubling.base), 30_000, 10,
                        seed=10)
        rep = brin_katok_report(doubling, emp, ns=(6, 8), eps=0.8, n_refs=48,
                                seed=11)
        # per-n values carry a packing-constant bias O(1/n); the slope of
        # -log(mass) against n removes it
        for n, h in rep["h_by_n"].items():
            assert 0.8 * LOG2 < h < 1.35 * LOG2
        assert rep["slope"] == pytest.approx(LOG2, rel=0.12)

    def test_cross_estimator_agreement(self, doubling):
        emp = sample_mu(doubling, quotient_mem(doubling.base), 30_000, 10,
                        seed=12)
        bk = brin_katok_report(doubling, emp, ns=(6, 8), eps=0.8, seed=13)
        sep = separated_set_report(doubling, ns=(5, 7, 9), eps_grid=(0.3,),
                                   orbit_budget=4096, seed=14)
        assert abs(bk["slope"] - sep["h_est"]) / sep["h_est"] < 0.15


def test_forward_orbit_shapes(doubling):
    emp = sample_mu(doubling, quotient_mem(doubling.base), 50, 5, seed=15)
    ob, oz = forward_orbit(doubling, emp.bases, emp.fibers, 7)
    assert ob.shape == (50, 8)
    assert oz.shape == (50, 8, 2)
    b1, z1 = doubling.apply(emp.bases, emp.fibers)
    assert np.allclose(ob[:, 1], b1)
    assert np.allclose(oz[:, 1], z1)
