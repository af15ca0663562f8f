"""Mass-distribution measures on stable leaves, as finite quadratures.

The leaf over a base point y is partitioned at depth n into p^n cells, one per
backward itinerary, each carrying mass 1/p^n.  A quadrature keeps one
reconstructed representative per cell; cell diameters shrink like
lambda_s^n, so integrating a Hoelder observable against the node values
converges at rate lambda_s^(alpha n).

Node order is lexicographic in the itinerary with the most recent backward
symbol as the most significant digit, so the cells pushed forward from the
branch-j pre-image leaf form the contiguous index block j.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .systems import SkewProduct, reconstruct_fibers

__all__ = [
    "LeafQuadrature",
    "NodeBudgetError",
    "build_quadrature",
    "integrate_leaf",
    "change_of_variables_check",
]

DEFAULT_NODE_BUDGET = 1 << 20
DIST_MATRIX_MAX_NODES = 4096


class NodeBudgetError(RuntimeError):
    """Requested depth needs more nodes than the configured budget."""


def itinerary_digits(n_nodes: int, depth: int, p: int) -> np.ndarray:
    """(n_nodes, depth) array of branch digits, most recent symbol first."""
    idx = np.arange(n_nodes)
    cols = [(idx // p ** (depth - 1 - k)) % p for k in range(depth)]
    return (np.stack(cols, axis=1) if depth > 0
            else np.zeros((n_nodes, 0), dtype=np.int64)).astype(np.int64)


@dataclass(frozen=True)
class LeafQuadrature:
    """Depth-n quadrature of the mass-distribution measure on one leaf."""

    system: SkewProduct = field(repr=False)
    base_point: float
    depth: int
    fibers: np.ndarray = field(repr=False)
    itins: np.ndarray = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return self.fibers.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / self.system.degree ** self.depth

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n_nodes, self.weight)

    @property
    def bases(self) -> np.ndarray:
        return np.full(self.n_nodes, self.base_point)

    def child_block(self, j: int) -> slice:
        """Index block of cells lying in the forward image of pre-leaf j."""
        block = self.n_nodes // self.system.degree
        return slice(j * block, (j + 1) * block)

    def child(self, j: int) -> "LeafQuadrature":
        """Depth-(n-1) quadrature of the branch-j pre-image leaf."""
        if self.depth < 1:
            raise ValueError("depth-0 quadrature has no pre-image refinement")
        y_j = float(self.system.base.branch_inverse(j, np.array([self.base_point]))[0])
        sub = self.itins[self.child_block(j), 1:]
        fibers = reconstruct_fibers(self.system, np.full(sub.shape[0], y_j), sub)
        return LeafQuadrature(self.system, y_j, self.depth - 1, fibers, sub)

    def dist_matrix(self) -> np.ndarray:
        """Pairwise node distances (same leaf, so purely fiber distances)."""
        if self.n_nodes > DIST_MATRIX_MAX_NODES:
            raise NodeBudgetError(
                f"distance matrix needs {self.n_nodes}^2 entries; "
                f"limit is {DIST_MATRIX_MAX_NODES} nodes")
        diff = self.fibers[:, None, :] - self.fibers[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def cell_diameter_bound(self) -> float:
        c = self.system.holonomy_const
        return c * (1.0 + self.system.diam) * self.system.lambda_s ** self.depth


def build_quadrature(system: SkewProduct, y: float, depth: int,
                     node_budget: int = DEFAULT_NODE_BUDGET) -> LeafQuadrature:
    """Enumerate all p^depth backward itineraries of y with weights 1/p^depth."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    p = system.degree
    n_nodes = p ** depth
    if n_nodes > node_budget:
        raise NodeBudgetError(
            f"depth {depth} needs {n_nodes} nodes, budget is {node_budget}")
    itins = itinerary_digits(n_nodes, depth, p)
    fibers = reconstruct_fibers(system, np.full(n_nodes, float(y) % 1.0), itins)
    return LeafQuadrature(system, float(y) % 1.0, depth, fibers, itins)


def integrate_leaf(observable, quad: LeafQuadrature) -> float:
    """Quadrature integral: weight times the compensated sum of node values."""
    vals = np.asarray(observable(quad.bases, quad.fibers), dtype=float)
    return quad.weight * math.fsum(vals.tolist())


def integrate_values(values: np.ndarray, quad: LeafQuadrature) -> float:
    """Integral of a density/observable already sampled on the nodes."""
    return quad.weight * math.fsum(np.asarray(values, dtype=float).tolist())


def change_of_variables_check(system: SkewProduct, observable, y: float,
                              branch: int, depth: int) -> float:
    """Residual of int_{f(gamma_j)} phi dmu_gamma = (1/p) int_{gamma_j} phi o f dmu_j.

    Both sides are evaluated on matched quadratures (the left side at depth
    ``depth`` on the leaf over y, the right side at depth-1 on the branch
    pre-image leaf), where the identity holds by construction of the weights.
    """
    quad = build_quadrature(system, y, depth)
    vals = np.asarray(observable(quad.bases, quad.fibers), dtype=float)
    block = quad.child_block(branch)
    lhs = quad.weight * math.fsum(vals[block].tolist())

    child = quad.child(branch)
    fwd_bases, fwd_fibers = system.apply(child.bases, child.fibers)
    fwd_vals = np.asarray(observable(fwd_bases, fwd_fibers), dtype=float)
    rhs = (1.0 / system.degree) * child.weight * math.fsum(fwd_vals.tolist())
    return abs(lhs - rhs)
