"""Sampled-cone operations: hand-checked values and metric properties."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conelab.cones import (
    ConeSpec,
    DegenerateSampleError,
    LeafDensity,
    alpha_coeff,
    beta_coeff,
    birkhoff_bound,
    grid_scan_alpha,
    hoelder_seminorm,
    in_cone,
    positive_cone,
    theta,
    theta_positive_closed_form,
)


def two_node_spec(kappa=1.0, alpha=1.0, d=1.0):
    dist = np.array([[0.0, d], [d, 0.0]])
    return ConeSpec("hoelder", dist, kappa=kappa, alpha=alpha)


def random_spec(rng, n_nodes, kappa=1.0, alpha=1.0):
    pts = np.sort(rng.uniform(0.0, 1.0, size=n_nodes))
    pts += np.arange(n_nodes) * 1e-3  # keep nodes distinct
    dist = np.abs(pts[:, None] - pts[None, :])
    return ConeSpec("hoelder", dist, kappa=kappa, alpha=alpha)


def random_member(rng, spec, rel=0.45):
    """Random density strictly inside the Hoelder cone, by scaled perturbation."""
    n = spec.n_nodes
    u = rng.normal(size=n)
    base = np.ones(n)
    s = hoelder_seminorm(base + 0.0 * u, spec) if False else None  # noqa: F841
    semi = hoelder_seminorm(u, spec)
    if semi > 0:
        t = rel * spec.kappa / (semi + rel * spec.kappa * np.max(np.abs(u)))
        u = t * u
    vals = base + u
    assert in_cone(vals, spec)
    return vals


class TestSeminorm:
    def test_constant_is_zero(self):
        spec = two_node_spec()
        assert hoelder_seminorm([3.0, 3.0], spec) == 0.0

    def test_two_node_direct_value(self):
        spec = two_node_spec()
        assert hoelder_seminorm([1.0, 1.4], spec) == pytest.approx(0.4, abs=1e-15)

    def test_homogeneous_in_scaling(self):
        rng = np.random.default_rng(5)
        spec = random_spec(rng, 4)
        v = rng.uniform(0.5, 2.0, size=4)
        s1 = hoelder_seminorm(v, spec)
        s2 = hoelder_seminorm(2.5 * v, spec)
        assert s2 == pytest.approx(2.5 * s1, rel=1e-12)

    def test_single_node_rejected(self):
        spec = ConeSpec("hoelder", np.zeros((1, 1)), kappa=1.0)
        with pytest.raises(DegenerateSampleError):
            hoelder_seminorm([1.0], spec)


class TestMembership:
    def test_constants_always_inside(self):
        for kappa in (0.01, 1.0, 100.0):
            spec = two_node_spec(kappa=kappa)
            assert in_cone([1.0, 1.0], spec)

    def test_boundary_excluded(self):
        # seminorm 1 equals kappa * inf exactly: strict membership fails
        spec = two_node_spec(kappa=1.0)
        assert not in_cone([1.0, 2.0], spec)

    def test_zero_value_fails_positivity(self):
        spec = two_node_spec()
        assert not in_cone([0.0, 1.0], spec)


class TestCoefficients:
    def test_alpha_of_equal_args_is_one(self):
        spec = two_node_spec(kappa=2.0)
        v = LeafDensity(np.array([1.0, 1.5]))
        assert alpha_coeff(v, v, spec) == pytest.approx(1.0, abs=1e-10)
        assert beta_coeff(v, v, spec) == pytest.approx(1.0, abs=1e-10)

    def test_positivity_cone_closed_forms(self):
        spec = positive_cone(2)
        v = np.ones(2)
        w = np.array([0.5, 2.0])
        assert alpha_coeff(v, w, spec) == pytest.approx(0.5)
        assert beta_coeff(v, w, spec) == pytest.approx(2.0)

    def test_hoelder_two_node_hand_solve(self):
        # constraint |0.4| <= 1 - t binds before positivity: alpha = 0.6
        spec = two_node_spec(kappa=1.0)
        v = np.ones(2)
        w = np.array([1.0, 1.4])
        assert alpha_coeff(v, w, spec) == pytest.approx(0.6, abs=1e-9)
        # constraint 0.4 <= s - 1.4 gives beta = 1.8
        assert beta_coeff(v, w, spec) == pytest.approx(1.8, abs=1e-9)
        assert theta(v, w, spec) == pytest.approx(math.log(3.0), abs=1e-8)

    def test_grid_scan_matches_bisection(self):
        rng = np.random.default_rng(11)
        for n_nodes in (2, 3, 5):
            spec = random_spec(rng, n_nodes, kappa=0.8)
            for _ in range(5):
                v = random_member(rng, spec)
                w = random_member(rng, spec)
                a_bis = alpha_coeff(v, w, spec)
                a_grid = grid_scan_alpha(v, w, spec, n_grid=20_000)
                assert a_bis == pytest.approx(a_grid, abs=1e-6)


class TestTheta:
    def test_zero_on_rays(self):
        spec = two_node_spec(kappa=3.0)
        assert theta([1.0, 1.0], [5.0, 5.0], spec) == 0.0
        v = np.array([1.0, 1.3])
        assert theta(v, 7.2 * v, spec) == 0.0

    def test_symmetry_and_triangle(self):
        rng = np.random.default_rng(23)
        spec = random_spec(rng, 4, kappa=1.2)
        for _ in range(25):
            u = random_member(rng, spec)
            v = random_member(rng, spec)
            w = random_member(rng, spec)
            tuv = theta(u, v, spec)
            tvu = theta(v, u, spec)
            assert tuv == pytest.approx(tvu, abs=1e-9)
            assert theta(u, w, spec) <= tuv + theta(v, w, spec) + 1e-9

    def test_invariant_under_joint_scaling(self):
        rng = np.random.default_rng(31)
        spec = random_spec(rng, 3, kappa=1.0)
        v = random_member(rng, spec)
        w = random_member(rng, spec)
        t0 = theta(v, w, spec)
        t1 = theta(3.7 * v, 0.2 * w, spec)
        assert t1 == pytest.approx(t0, abs=1e-9)

    def test_positive_cone_closed_form(self):
        rng = np.random.default_rng(37)
        spec = positive_cone(5)
        for _ in range(20):
            v = rng.uniform(0.2, 3.0, size=5)
            w = rng.uniform(0.2, 3.0, size=5)
            assert theta(v, w, spec) == pytest.approx(
                theta_positive_closed_form(v, w), abs=1e-8
            )


class TestBirkhoffBound:
    def test_values(self):
        assert birkhoff_bound(0.0) == 0.0
        assert birkhoff_bound(math.log(9.0)) == pytest.approx(8.0 / 9.0, rel=1e-12)

    def test_monotone_to_one(self):
        ds = np.linspace(0.0, 30.0, 50)
        vals = [birkhoff_bound(d) for d in ds]
        assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))
        assert vals[-1] < 1.0


@settings(max_examples=60, deadline=None, derandomize=True)
@given(
    st.lists(st.floats(min_value=0.1, max_value=10.0), min_size=2, max_size=6),
    st.floats(min_value=0.05, max_value=20.0),
)
def test_positivity_theta_closed_form_hypothesis(values, scale):
    v = np.asarray(values)
    w = np.roll(v, 1) * scale
    spec = positive_cone(v.size)
    t = theta(v, w, spec)
    assert t == pytest.approx(theta_positive_closed_form(v, w), abs=1e-8)
    assert t == pytest.approx(theta(w, v, spec), abs=1e-10)
