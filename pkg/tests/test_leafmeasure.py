"""Leaf quadratures: weights, refinement, integration, change of variables."""

import math

import numpy as np
import pytest

from conelab.leafmeasure import (
    NodeBudgetError,
    build_quadrature,
    change_of_variables_check,
    integrate_leaf,
    integrate_values,
)
from conelab.observables import constant, fiber_linear, random_hoelder
from conelab.systems import make_doubling_solenoid, make_mp_solenoid

RNG = np.random.default_rng(99)


@pytest.fixture(scope="module")
def doubling():
    return make_doubling_solenoid(lambda_s=0.05)


def cell_indicator(system, y: float, branch: int):
    """Geometric indicator of the branch cell of the leaf over y.

    At depth 1 the two cells cluster around the fiber offsets of the two
    preimages of y, which sit ~2r apart while each cluster has radius
    lambda_s * r / (1 - lambda_s); the midpoint test is unambiguous.
    """
    y_b = system.base.branch_inverse(branch, np.array([y]))
    center = system.fiber.offset(y_b)[0]

    def fn(bases, fibers):
        return (np.linalg.norm(fibers - center, axis=-1) < 0.5).astype(float)

    return fn


class TestWeights:
    def test_eight_nodes_at_depth_three(self, doubling):
        quad = build_quadrature(doubling, 0.3, 3)
        assert quad.n_nodes == 8
        assert np.all(quad.weights == 1.0 / 8.0)

    def test_depth_zero_single_node(self, doubling):
        quad = build_quadrature(doubling, 0.3, 0)
        assert quad.n_nodes == 1
        assert quad.weight == 1.0

    def test_weight_sum_exact(self, doubling):
        for depth in (4, 8, 10):
            quad = build_quadrature(doubling, 0.77, depth)
            assert math.fsum(quad.weights.tolist()) == 1.0

    def test_refinement_aggregation_exact(self, doubling):
        fine = build_quadrature(doubling, 0.25, 7)
        coarse = build_quadrature(doubling, 0.25, 6)
        agg = fine.weights.reshape(-1, 2).sum(axis=1)
        assert np.all(agg == coarse.weights)

    def test_budget_error_names_requirement(self, doubling):
        with pytest.raises(NodeBudgetError, match="256"):
            build_quadrature(doubling, 0.1, 8, node_budget=100)


class TestIntegration:
    def test_constant_exact(self, doubling):
        quad = build_quadrature(doubling, 0.3, 9)
        assert integrate_leaf(constant(2.75), quad) == pytest.approx(2.75, abs=1e-15)

    def test_one_hot_cell_mass(self, doubling):
        quad = build_quadrature(doubling, 0.3, 6)
        one_hot = np.zeros(quad.n_nodes)
        one_hot[13] = 1.0
        assert integrate_values(one_hot, quad) == 0.5 ** 6

    def test_branch_cell_indicator_mass(self, doubling):
        quad = build_quadrature(doubling, 0.4, 8)
        ind = cell_indicator(doubling, 0.4, branch=1)
        assert integrate_leaf(ind, quad) == pytest.approx(0.5, abs=1e-15)

    def test_refinement_cauchy_in_depth(self, doubling):
        phi = fiber_linear(w=(0.8, -0.6))
        y = 0.123
        for n in (4, 6, 8):
            i_n = integrate_leaf(phi, build_quadrature(doubling, y, n))
            i_m = integrate_leaf(phi, build_quadrature(doubling, y, n + 2))
            bound = phi.fiber_lip * build_quadrature(doubling, y, n).cell_diameter_bound()
            assert abs(i_n - i_m) < bound


class TestChangeOfVariables:
    def test_constant_residual_zero(self, doubling):
        res = change_of_variables_check(doubling, constant(1.0), 0.3, 0, 6)
        assert res == 0.0

    def test_cell_indicator_residual_zero(self, doubling):
        ind = cell_indicator(doubling, 0.3, branch=1)
        res = change_of_variables_check(doubling, ind, 0.3, 1, 7)
        assert res == 0.0

    def test_random_hoelder_residuals(self, doubling):
        rng = np.random.default_rng(7)
        for _ in range(20):
            phi = random_hoelder(rng)
            y = rng.uniform()
            j = int(rng.integers(0, 2))
            assert change_of_variables_check(doubling, phi, y, j, 8) < 1e-12

    def test_mp_solenoid_residuals(self):
        mp = make_mp_solenoid(0.5, lambda_s=0.05)
        rng = np.random.default_rng(17)
        for _ in range(5):
            phi = random_hoelder(rng)
            assert change_of_variables_check(mp, phi, rng.uniform(), 0, 7) < 1e-12
