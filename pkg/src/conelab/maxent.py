"""Maximal-entropy measure: base quotient measure, product sampler, entropy.

The base measure nu is the dominant eigenmeasure of the dual transfer
operator of g with zero potential, normalized by the degree; equivalently the
fixed point of the equal-weight inverse-branch averaging.  For constant-slope
full-branch bases that fixed point is Lebesgue; otherwise it is approximated
on an Ulam grid by power iteration of the averaging operator in cumulative
form.

The attractor measure is the product of nu with the leafwise mass
distribution, so sampling is: base point from nu, backward itinerary with
independent uniform symbols, fiber by reconstruction.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .systems import BaseMap, SkewProduct, circle_dist, reconstruct_fibers

__all__ = [
    "QuotientMeasure",
    "EmpiricalMeasure",
    "quotient_mem",
    "sample_mu",
    "forward_orbit",
    "entropy_separated",
    "separated_set_report",
    "entropy_brin_katok",
    "brin_katok_report",
]


@dataclass(frozen=True)
class QuotientMeasure:
    """Base maximal-entropy measure: exact density or Ulam cell masses."""

    kind: str                      # "exact-uniform" | "ulam"
    eigenvalue: float
    residual: float
    edges: np.ndarray = field(default=None, repr=False)
    masses: np.ndarray = field(default=None, repr=False)

    @property
    def total_mass(self) -> float:
        if self.kind == "exact-uniform":
            return 1.0
        return float(math.fsum(self.masses.tolist()))

    def cdf_knots(self):
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        cum /= cum[-1]
        return self.edges, cum

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.uniform(0.0, 1.0, size=n)
        if self.kind == "exact-uniform":
            return u
        edges, cum = self.cdf_knots()
        return np.interp(u, cum, edges)


class QuotientConvergenceError(RuntimeError):
    pass


def _branch_forward_on_edges(base: BaseMap, branch: int, edges: np.ndarray):
    """Forward image of grid edges under the branch chart, with exact endpoints.

    Interior edges of the branch domain map through g into (0, 1); edges
    outside clamp to 0 or 1, so cumulative masses are exact at the ends.
    Branch domains are the partition cells [h_j(0), h_{j+1}(0)] of [0, 1]
    (full increasing branches ordered by lift level).
    """
    p = base.degree
    lo = float(base.branch_inverse(branch, np.array([0.0]))[0])
    hi = (float(base.branch_inverse(branch + 1, np.array([0.0]))[0])
          if branch + 1 < p else 1.0)
    if hi <= lo:  # branch through the circle seam; our built-ins avoid this
        raise ValueError("branch domain must be an increasing interval")
    out = np.empty_like(edges)
    below = edges <= lo
    above = edges >= hi
    mid = ~(below | above)
    out[below] = 0.0
    out[above] = 1.0
    g_mid = np.asarray(base.apply(edges[mid]), dtype=float)
    # interior forward values live in (0,1); guard the mod-1 seam
    g_mid[g_mid == 0.0] = 1.0
    out[mid] = g_mid
    return out


def quotient_mem(base: BaseMap, grid_n: int = 1 << 14, tol: float = 1e-8,
                 max_iter: int = 5000) -> QuotientMeasure:
    """Maximal-entropy measure of the base map.

    Piecewise-affine full-branch bases get the exact uniform density.  For
    the rest, the cell masses of the inverse-branch averaging operator are
    power-iterated in cumulative form until the L1 residual drops below
    ``tol``; the eigenvalue of the un-normalized dual (mass multiplier) is
    reported alongside.
    """
    p = base.degree
    if base.piecewise_affine:
        return QuotientMeasure(kind="exact-uniform", eigenvalue=float(p),
                               residual=0.0)
    edges = np.linspace(0.0, 1.0, grid_n + 1)
    fwd = [_branch_forward_on_edges(base, j, edges) for j in range(p)]
    masses = np.full(grid_n, 1.0 / grid_n)
    eigenvalue = float(p)
    for _ in range(max_iter):
        cum = np.concatenate([[0.0], np.cumsum(masses)])
        total = cum[-1]
        new_cum = np.zeros_like(edges)
        for j in range(p):
            new_cum += np.interp(fwd[j], edges, cum)
        eigenvalue = new_cum[-1] / total
        new_masses = np.diff(new_cum) / new_cum[-1]
        residual = float(np.abs(new_masses - masses).sum())
        masses = new_masses
        if residual < tol:
            return QuotientMeasure(kind="ulam", eigenvalue=eigenvalue,
                                   residual=residual, edges=edges, masses=masses)
    raise QuotientConvergenceError(
        f"quotient measure did not reach residual {tol:g} in {max_iter} "
        f"iterations (last residual {residual:.3g})")


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Independent draws from the product measure, itinerary-coded."""

    bases: np.ndarray = field(repr=False)
    fibers: np.ndarray = field(repr=False)
    itins: np.ndarray = field(repr=False)
    depth: int = 0
    seed: int = 0

    @property
    def n_samples(self) -> int:
        return self.bases.size

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["base", "itinerary", "fiber_x", "fiber_y"])
            for i in range(self.n_samples):
                itin = "".join(str(s) for s in self.itins[i])
                writer.writerow([f"{self.bases[i]:.17g}", itin,
                                 f"{self.fibers[i, 0]:.17g}",
                                 f"{self.fibers[i, 1]:.17g}"])


def sample_mu(system: SkewProduct, quotient: QuotientMeasure, n: int,
              depth: int, seed: int) -> EmpiricalMeasure:
    """Draw n i.i.d. points: base from nu, uniform backward symbols, fiber
    reconstructed to lambda_s^depth accuracy."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    bases = quotient.sample(rng, n)
    itins = rng.integers(0, system.degree, size=(n, depth))
    fibers = reconstruct_fibers(system, bases, itins)
    return EmpiricalMeasure(bases=bases, fibers=fibers, itins=itins,
                            depth=depth, seed=seed)


def forward_orbit(system: SkewProduct, bases: np.ndarray, fibers: np.ndarray,
                  n_steps: int):
    """Forward orbits by direct iteration, (N, n_steps+1) and (N, n_steps+1, 2).

    Expansion amplifies float error by the base derivative per step, so keep
    n_steps well below the mantissa width (the doubling map sheds exactly one
    bit per step); longer horizons should use ``sample_orbit``.
    """
    n = bases.size
    orb_b = np.empty((n, n_steps + 1))
    orb_z = np.empty((n, n_steps + 1, 2))
    orb_b[:, 0] = bases
    orb_z[:, 0] = fibers
    for j in range(n_steps):
        b, z = system.apply(orb_b[:, j], orb_z[:, j])
        orb_b[:, j + 1] = b
        orb_z[:, j + 1] = z
    return orb_b, orb_z


@dataclass(frozen=True)
class OrbitSample:
    """Stationary orbit segments X_0, ..., X_n drawn from the product measure.

    Built backward-coded: the deep future base comes from nu, every earlier
    base follows by a (contracting) inverse branch, and fibers accumulate by
    the stable fiber recursion.  No expanding map is ever iterated, so the
    segments carry the exact joint law at full float accuracy for any
    horizon; the symbol process of the maximal-entropy measure is the
    uniform Bernoulli one, which is what the independent uniform branch
    choices realize.
    """

    orb_b: np.ndarray = field(repr=False)   # (N, n_steps+1)
    orb_z: np.ndarray = field(repr=False)   # (N, n_steps+1, 2)
    past_itins: np.ndarray = field(repr=False)  # past of X_0, (N, depth)
    depth: int = 0
    seed: int = 0

    @property
    def n_samples(self) -> int:
        return self.orb_b.shape[0]

    @property
    def n_steps(self) -> int:
        return self.orb_b.shape[1] - 1

    def point(self, j: int):
        """Base and fiber arrays of the time-j points."""
        return self.orb_b[:, j], self.orb_z[:, j]


def _backward_levels(system: SkewProduct, top: np.ndarray,
                     itins: np.ndarray) -> np.ndarray:
    """Level bases L_0 = top, L_k = h_{itins[:, k-1]}(L_{k-1}); (N, K+1)."""
    n, k_total = itins.shape
    levels = np.empty((n, k_total + 1))
    levels[:, 0] = top
    for k in range(k_total):
        cur = levels[:, k]
        nxt = levels[:, k + 1]
        for j in range(system.degree):
            sel = itins[:, k] == j
            if np.any(sel):
                nxt[sel] = system.base.branch_inverse(j, cur[sel])
    return levels


def sample_orbit(system: SkewProduct, quotient: QuotientMeasure, n_samples: int,
                 depth: int, n_steps: int, seed: int) -> OrbitSample:
    """Draw n_samples stationary orbit segments of length n_steps + 1."""
    rng = np.random.default_rng(seed)
    top = quotient.sample(rng, n_samples)
    k_total = depth + n_steps
    itins = rng.integers(0, system.degree, size=(n_samples, k_total),
                         dtype=np.int8)
    levels = _backward_levels(system, top, itins)
    # fiber recursion from the anchor at the deepest level up to the top;
    # z at level k is the fiber of the point over L_k with past itins[:, k:]
    z = np.zeros((n_samples, 2))
    orb_z = np.empty((n_samples, n_steps + 1, 2))
    if k_total == 0:
        orb_z[:, 0] = z
    for k in range(k_total, 0, -1):
        z = system.fiber.offset(levels[:, k]) + system.lambda_s * z
        if k - 1 <= n_steps:
            orb_z[:, n_steps - (k - 1)] = z
    orb_b = levels[:, n_steps::-1].copy()
    return OrbitSample(orb_b=orb_b, orb_z=orb_z,
                       past_itins=itins[:, n_steps:], depth=depth, seed=seed)


def birkhoff_sums(system: SkewProduct, quotient: QuotientMeasure, phi,
                  n_samples: int, n_time: int, depth: int, seed: int,
                  center: float = 0.0) -> np.ndarray:
    """Sums over j < n_time of (phi - center)(X_j), backward-coded, O(N) memory
    per level with the level table kept for the fiber walk-up."""
    rng = np.random.default_rng(seed)
    top = quotient.sample(rng, n_samples)
    k_total = depth + n_time - 1
    itins = rng.integers(0, system.degree, size=(n_samples, k_total),
                         dtype=np.int8)
    levels = _backward_levels(system, top, itins)
    z = np.zeros((n_samples, 2))
    sums = np.zeros(n_samples)
    if k_total == 0:
        return np.asarray(phi(levels[:, 0], z), dtype=float) - center
    for k in range(k_total, 0, -1):
        z = system.fiber.offset(levels[:, k]) + system.lambda_s * z
        if k - 1 <= n_time - 1:
            sums += np.asarray(phi(levels[:, k - 1], z), dtype=float) - center
    return sums


# ---------------------------------------------------------------------------
# entropy estimators


def _candidate_points(system: SkewProduct, m: int, depth: int,
                      rng: np.random.Generator):
    """Evenly spread base points with random pasts: a dense attractor sample."""
    bases = (np.arange(m) + rng.uniform(0.0, 1.0)) / m
    itins = rng.integers(0, system.degree, size=(m, depth))
    fibers = reconstruct_fibers(system, bases, itins)
    return bases, fibers


def _greedy_separated_count(orb_b, orb_z, eps: float,
                            order: np.ndarray) -> int:
    """Kill-radius greedy: accept the next survivor, drop its eps-ball."""
    b = orb_b[order]
    z = orb_z[order]
    count = 0
    while b.shape[0] > 0:
        count += 1
        d = circle_dist(b, b[0]) + np.linalg.norm(z - z[0], axis=-1)
        keep = d.max(axis=1) > eps
        keep[0] = False
        b = b[keep]
        z = z[keep]
    return count


def entropy_separated(system: SkewProduct, n: int, eps: float,
                      orbit_budget: int = 30_000, seed: int = 0,
                      n_seeds: int = 3, candidate_factor: int = 3):
    """(1/n) log of the maximal sampled (n, eps)-separated cardinality.

    Greedy insertion in randomized order, best cardinality over ``n_seeds``
    orders.  Returns (h_estimate, cardinality, budget_exhausted).
    """
    if n < 1 or eps <= 0.0:
        raise ValueError("need n >= 1 and eps > 0")
    rng = np.random.default_rng(seed)
    m = min(candidate_factor * system.degree ** n, orbit_budget)
    exhausted = candidate_factor * system.degree ** n > orbit_budget
    bases, fibers = _candidate_points(system, m, depth=10, rng=rng)
    orb_b, orb_z = forward_orbit(system, bases, fibers, n - 1)
    orb_z = orb_z.astype(np.float32)
    orb_b = orb_b.astype(np.float32)
    best = 0
    for _ in range(n_seeds):
        order = rng.permutation(m)
        best = max(best, _greedy_separated_count(orb_b, orb_z, eps, order))
    return math.log(best) / n, best, exhausted


def separated_set_report(system: SkewProduct, ns, eps_grid,
                         orbit_budget: int = 30_000, seed: int = 0,
                         n_seeds: int = 3):
    """Cardinalities across the (n, eps) grid plus growth-rate fits.

    The per-(n, eps) value (1/n) log S carries an O(1/n) offset from the
    eps-dependent packing constant; the least-squares slope of log S against
    n removes it, so the slope at the smallest eps is the headline estimate.
    """
    ns = sorted(ns)
    eps_grid = sorted(eps_grid)
    rows = []
    slopes = {}
    for eps in eps_grid:
        logs = []
        for n in ns:
            h, card, exhausted = entropy_separated(
                system, n, eps, orbit_budget, seed=seed, n_seeds=n_seeds)
            rows.append({"n": n, "eps": eps, "cardinality": card,
                         "h": h, "budget_exhausted": exhausted})
            logs.append(math.log(card))
        slopes[eps] = float(np.polyfit(ns, logs, 1)[0])
    return {"rows": rows, "slopes": slopes,
            "h_est": slopes[eps_grid[0]]}


def entropy_brin_katok(system: SkewProduct, emp: EmpiricalMeasure, n: int,
                       eps: float, n_refs: int = 64, seed: int = 0):
    """Averaged -(1/n) log of empirical dynamical-ball masses.

    Reference points are drawn from the sample itself; references whose ball
    captures no other sample point are excluded and counted.
    """
    if n == 0:
        return 0.0, 0
    report = brin_katok_report(system, emp, [n], eps, n_refs=n_refs, seed=seed)
    return report["h_by_n"][n], report["excluded"]


def brin_katok_report(system: SkewProduct, emp: EmpiricalMeasure, ns, eps: float,
                      n_refs: int = 64, seed: int = 0):
    """Ball masses for all n in one sweep over the orbit arrays."""
    ns = sorted(ns)
    n_max = ns[-1]
    rng = np.random.default_rng(seed)
    refs = rng.choice(emp.n_samples, size=min(n_refs, emp.n_samples),
                      replace=False)
    orb_b, orb_z = forward_orbit(system, emp.bases, emp.fibers, n_max - 1)
    orb_b = orb_b.astype(np.float32)
    orb_z = orb_z.astype(np.float32)
    counts = np.zeros((len(refs), n_max))  # counts[r, j]: in-ball after j+1 steps
    for ri, r in enumerate(refs):
        mask = np.ones(emp.n_samples, dtype=bool)
        for j in range(n_max):
            d = circle_dist(orb_b[mask, j], orb_b[r, j]) + np.linalg.norm(
                orb_z[mask, j] - orb_z[r, j], axis=-1)
            sub = d < eps
            idx = np.flatnonzero(mask)[sub]
            mask = np.zeros_like(mask)
            mask[idx] = True
            counts[ri, j] = idx.size
    h_by_n = {}
    excluded_total = 0
    log_mass_means = []
    for n in ns:
        c = counts[:, n - 1]
        good = c > 0
        excluded = int((~good).sum())
        excluded_total = max(excluded_total, excluded)
        mass = c[good] / emp.n_samples
        h_by_n[n] = float(np.mean(-np.log(mass) / n))
        log_mass_means.append(float(np.mean(np.log(mass))))
    slope = (-float(np.polyfit(ns, log_mass_means, 1)[0])
             if len(ns) >= 2 else h_by_n[ns[0]])
    return {"h_by_n": h_by_n, "excluded": excluded_total,
            "slope": slope, "eps": eps}
