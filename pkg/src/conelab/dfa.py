"""Second setting: Markov rectangles with variable branch counts.

The system is symbolic-plus-geometric: p rectangles, each carrying a unit
center-unstable interval, with forward branches that map sub-intervals
affinely onto the target rectangle's full interval (widths are the inverse
expansion rates, at most zeta on good rectangles and at most L on bad ones),
plus a uniformly contracting fiber coordinate whose offsets separate
rectangles.  Stable leaves are (rectangle, u) pairs; a leaf in rectangle i
has one pre-image leaf per incoming branch edge, so the pre-image count
depends only on the rectangle, and the mass-distribution measure gives a
depth-n cell the product weight 1/(p_{i_0} p_{i_1} ... p_{i_{n-1}}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cones import ConeSpec
from .transfer import ConeParams

__all__ = [
    "MarkovSystem",
    "DfaLeaf",
    "DfaObservable",
    "VariableLeafQuadrature",
    "make_markov_system",
    "example_two_rect",
    "example_uniform",
    "build_variable_quadrature",
    "transfer_leaf_integral_dfa",
    "direct_transfer_integral_dfa",
    "push_density_dfa",
    "quotient_mass_distribution",
    "diameter_bound_dfa",
    "sample_dfa_orbit",
    "dfa_correlation_series",
    "dfa_decay_experiment",
    "markov_chain_oracle",
]


class MarkovStructureError(ValueError):
    """The declared rectangles violate a second-setting condition."""


@dataclass(frozen=True)
class MarkovSystem:
    """Rectangle combinatorics, expansion bookkeeping, fiber contraction."""

    out_targets: tuple          # out_targets[k][s]: rectangle hit by branch s of k
    widths: tuple               # widths[k][s]: u-interval width of that branch
    zeta: float
    big_l: float
    lambda_s: float
    good: tuple = ()
    in_edges: tuple = ()        # in_edges[i]: tuple of (src rect, src slot)
    mixing_time: int = 0

    @property
    def n_rect(self) -> int:
        return len(self.out_targets)

    @property
    def branch_counts(self) -> np.ndarray:
        """p_gamma per rectangle: number of pre-image leaves."""
        return np.array([len(e) for e in self.in_edges], dtype=int)

    @property
    def p_max(self) -> int:
        return int(self.branch_counts.max())

    @property
    def edge_offsets(self) -> tuple:
        """Fiber offset per forward edge (rect, slot).

        Offsets are evenly spread and pairwise distinct, so backward
        itineraries that first differ at step m produce fibers separated by
        the offset gap times lambda_s^(m-1) minus a geometric tail; the
        factory checks the gap dominates the tail.
        """
        n_edges = sum(len(t) for t in self.out_targets)
        flat = ((np.arange(n_edges) - 0.5 * (n_edges - 1))
                / max(n_edges - 1, 1))
        out = []
        pos = 0
        for targets in self.out_targets:
            out.append(tuple(flat[pos:pos + len(targets)]))
            pos += len(targets)
        return tuple(out)

    def edge_offset_array(self) -> np.ndarray:
        """(n_rect, max_slots) table of edge offsets, padded with zeros."""
        width = max(len(t) for t in self.out_targets)
        table = np.zeros((self.n_rect, width))
        for k, offs in enumerate(self.edge_offsets):
            table[k, :len(offs)] = offs
        return table

    @property
    def fiber_radius(self) -> float:
        return 0.5 / (1.0 - self.lambda_s)

    @property
    def diam(self) -> float:
        # rectangle gap + unstable interval + fiber interval, sum metric
        return 1.0 + 1.0 + 2.0 * self.fiber_radius

    def transition_matrix(self) -> np.ndarray:
        """A[k, i]: number of forward branches of rectangle k landing in i."""
        a = np.zeros((self.n_rect, self.n_rect), dtype=int)
        for k, targets in enumerate(self.out_targets):
            for i in targets:
                a[k, i] += 1
        return a

    def interval_starts(self, k: int) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.widths[k])])[:-1]

    def apply(self, rects, us, zs):
        """One forward step on point arrays (rects, us, zs)."""
        rects = np.asarray(rects)
        us = np.asarray(us, dtype=float)
        zs = np.asarray(zs, dtype=float)
        new_r = np.empty_like(rects)
        new_u = np.empty_like(us)
        new_z = self.lambda_s * zs
        for k in range(self.n_rect):
            sel = rects == k
            if not np.any(sel):
                continue
            edges = np.concatenate([[0.0], np.cumsum(self.widths[k])])
            slot = np.clip(np.searchsorted(edges, us[sel], side="right") - 1,
                           0, len(self.widths[k]) - 1)
            starts = self.interval_starts(k)
            new_u[sel] = (us[sel] - starts[slot]) / np.asarray(self.widths[k])[slot]
            new_r[sel] = np.asarray(self.out_targets[k])[slot]
            new_z[sel] += np.asarray(self.edge_offsets[k])[slot]
        return new_r, np.clip(new_u, 0.0, 1.0), new_z


def make_markov_system(out_targets, widths, zeta: float, big_l: float,
                       lambda_s: float, mixing_horizon: int = 64) -> MarkovSystem:
    """Validate the second-setting conditions and derive the edge structure."""
    p = len(out_targets)
    if p < 2:
        raise MarkovStructureError("need at least two rectangles")
    if len(widths) != p:
        raise MarkovStructureError("widths and out_targets disagree on p")
    good = []
    for k in range(p):
        if len(out_targets[k]) != len(widths[k]):
            raise MarkovStructureError(f"rectangle {k}: slots mismatch")
        if abs(math.fsum(widths[k]) - 1.0) > 1e-12:
            raise MarkovStructureError(f"rectangle {k}: widths must sum to 1")
        wmax = max(widths[k])
        if wmax <= zeta:
            good.append(True)
        elif wmax <= big_l:
            good.append(False)
        else:
            raise MarkovStructureError(
                f"rectangle {k}: width {wmax} exceeds the bad-rectangle bound")
    if not any(good):
        raise MarkovStructureError("need at least one good rectangle")
    in_edges = [[] for _ in range(p)]
    for k in range(p):
        for s, i in enumerate(out_targets[k]):
            in_edges[i].append((k, s))
    if any(len(e) == 0 for e in in_edges):
        raise MarkovStructureError("every rectangle needs an incoming branch")
    a = np.zeros((p, p), dtype=np.int64)
    for k, targets in enumerate(out_targets):
        for i in targets:
            a[k, i] += 1
    power = a.copy()
    mixing_time = 0
    for n in range(1, mixing_horizon + 1):
        if np.all(power > 0):
            mixing_time = n
            break
        power = power @ a
    else:
        raise MarkovStructureError(
            f"transition matrix has no positive power up to {mixing_horizon}")
    n_edges = sum(len(t) for t in out_targets)
    gap = 1.0 / max(n_edges - 1, 1)
    if lambda_s / (1.0 - lambda_s) >= gap:
        raise MarkovStructureError(
            f"lambda_s = {lambda_s} too large for {n_edges} edges: offset "
            f"tails would merge distinct pasts (need lambda_s/(1-lambda_s) "
            f"< {gap:.3g})")
    return MarkovSystem(
        out_targets=tuple(tuple(t) for t in out_targets),
        widths=tuple(tuple(w) for w in widths),
        zeta=zeta, big_l=big_l, lambda_s=lambda_s,
        good=tuple(good),
        in_edges=tuple(tuple(e) for e in in_edges),
        mixing_time=mixing_time,
    )


def example_two_rect() -> MarkovSystem:
    """Two mixing rectangles with unequal pre-image counts (p = 3 and 2)."""
    return make_markov_system(
        out_targets=((0, 0, 1), (0, 1)),
        widths=((0.35, 0.35, 0.3), (0.5, 0.5)),
        zeta=0.6, big_l=1.0, lambda_s=0.05)


def example_decay() -> MarkovSystem:
    """Two mixing rectangles with a strong subdominant chain eigenvalue.

    Self-loop-heavy slots give the rectangle chain transition matrix
    [[3/4, 1/4], [1/3, 2/3]] with second eigenvalue 5/12, so symbol
    observables decay geometrically at a rate that stays above Monte-Carlo
    noise for many lags; pre-image counts are 4 and 3, keeping the weights
    variable.
    """
    return make_markov_system(
        out_targets=((0, 0, 0, 1), (0, 1, 1)),
        widths=((0.25, 0.25, 0.25, 0.25), (0.4, 0.3, 0.3)),
        zeta=0.6, big_l=1.0, lambda_s=0.05)


def example_uniform(p_branches: int = 2) -> MarkovSystem:
    """Two rectangles, all pre-image counts equal: first-setting reduction."""
    out = tuple(tuple(range(2)) for _ in range(2))
    if p_branches != 2:
        raise ValueError("uniform example is wired for 2 branches")
    return make_markov_system(
        out_targets=out,
        widths=((0.5, 0.5), (0.4, 0.6)),
        zeta=0.7, big_l=1.0, lambda_s=0.05)


@dataclass(frozen=True)
class DfaLeaf:
    rect: int
    u: float


@dataclass(frozen=True)
class DfaObservable:
    fn: object = field(repr=False)
    name: str = "dfa_observable"
    u_lip: float = 0.0
    z_lip: float = 0.0

    def __call__(self, rects, us, zs):
        return np.asarray(self.fn(rects, us, zs), dtype=float)


def dfa_cos_u(k: int = 1, level: float = 0.0) -> DfaObservable:
    def fn(rects, us, zs):
        return level + np.cos(2.0 * np.pi * k * np.asarray(us, dtype=float))
    return DfaObservable(fn, name=f"cos_u(k={k})", u_lip=2.0 * np.pi * k)


def dfa_symbol(values) -> DfaObservable:
    vals = np.asarray(values, dtype=float)

    def fn(rects, us, zs):
        return vals[np.asarray(rects)]
    return DfaObservable(fn, name="symbol")


@dataclass(frozen=True)
class VariableLeafQuadrature:
    """Depth-n quadrature of the variable-weight leaf measure.

    Nodes are ordered lexicographically in the backward itinerary with the
    most recent symbol most significant, so branch b occupies a contiguous
    block whose size is the admissible-subtree count.
    """

    system: MarkovSystem = field(repr=False)
    leaf: DfaLeaf
    depth: int
    itins: np.ndarray = field(repr=False)        # (N, depth) int8
    rect_chain: np.ndarray = field(repr=False)   # (N, depth+1)
    zs: np.ndarray = field(repr=False)           # (N,)
    weights: np.ndarray = field(repr=False)      # (N,)

    @property
    def n_nodes(self) -> int:
        return self.zs.size

    @property
    def rects(self) -> np.ndarray:
        return np.full(self.n_nodes, self.leaf.rect)

    @property
    def us(self) -> np.ndarray:
        return np.full(self.n_nodes, self.leaf.u)

    @property
    def branch_count(self) -> int:
        return int(self.system.branch_counts[self.leaf.rect])

    def child_block(self, branch: int) -> slice:
        sizes = [subtree_count(self.system,
                               self.system.in_edges[self.leaf.rect][b][0],
                               self.depth - 1)
                 for b in range(self.branch_count)]
        start = int(np.sum(sizes[:branch], dtype=int))
        return slice(start, start + sizes[branch])

    def child(self, branch: int) -> "VariableLeafQuadrature":
        if self.depth < 1:
            raise ValueError("depth-0 quadrature has no pre-image refinement")
        src, slot = self.system.in_edges[self.leaf.rect][branch]
        starts = self.system.interval_starts(src)
        u_pre = float(starts[slot] + self.system.widths[src][slot] * self.leaf.u)
        return build_variable_quadrature(self.system, DfaLeaf(src, u_pre),
                                         self.depth - 1)

    def dist_matrix(self) -> np.ndarray:
        return np.abs(self.zs[:, None] - self.zs[None, :])

    def cone_spec(self, kappa: float, alpha: float) -> ConeSpec:
        return ConeSpec("hoelder", self.dist_matrix(), kappa=kappa, alpha=alpha)

    def integrate(self, values: np.ndarray) -> float:
        prods = np.asarray(values, dtype=float) * self.weights
        return math.fsum(prods.tolist())

    def integrate_observable(self, phi: DfaObservable) -> float:
        return self.integrate(phi(self.rects, self.us, self.zs))


_SUBTREE_CACHE = {}


def subtree_count(system: MarkovSystem, rect: int, depth: int) -> int:
    key = (system, rect, depth)
    if key not in _SUBTREE_CACHE:
        if depth == 0:
            _SUBTREE_CACHE[key] = 1
        else:
            total = 0
            for src, _ in system.in_edges[rect]:
                total += subtree_count(system, src, depth - 1)
            _SUBTREE_CACHE[key] = total
    return _SUBTREE_CACHE[key]


class NodeBudgetError(RuntimeError):
    pass


def build_variable_quadrature(system: MarkovSystem, leaf: DfaLeaf, depth: int,
                              node_budget: int = 1 << 20) -> VariableLeafQuadrature:
    """Enumerate admissible backward itineraries with product weights."""
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    n_nodes = subtree_count(system, leaf.rect, depth)
    if n_nodes > node_budget:
        raise NodeBudgetError(
            f"depth {depth} needs {n_nodes} nodes, budget is {node_budget}")
    p_vec = system.branch_counts
    rects = np.array([leaf.rect], dtype=np.int8)
    itins = np.zeros((1, 0), dtype=np.int8)
    chain = rects[:, None]
    weights = np.ones(1)
    src_table = {}
    slot_table = {}
    for i in range(system.n_rect):
        src_table[i] = np.array([e[0] for e in system.in_edges[i]], dtype=np.int8)
        slot_table[i] = np.array([e[1] for e in system.in_edges[i]], dtype=np.int8)
    slots = np.zeros((1, 0), dtype=np.int8)
    for _ in range(depth):
        counts = p_vec[chain[:, -1]]
        reps = np.repeat(np.arange(chain.shape[0]), counts)
        total = reps.size
        offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
        branch_idx = (np.arange(total) - np.repeat(offsets, counts)).astype(np.int8)
        new_chain = np.empty((total, chain.shape[1] + 1), dtype=np.int8)
        new_chain[:, :-1] = chain[reps]
        last = chain[reps, -1]
        nxt = np.empty(total, dtype=np.int8)
        slot_col = np.empty(total, dtype=np.int8)
        for i in range(system.n_rect):
            sel = last == i
            if np.any(sel):
                nxt[sel] = src_table[i][branch_idx[sel]]
                slot_col[sel] = slot_table[i][branch_idx[sel]]
        new_chain[:, -1] = nxt
        itins = np.concatenate([itins[reps], branch_idx[:, None]], axis=1)
        slots = np.concatenate([slots[reps], slot_col[:, None]], axis=1)
        weights = weights[reps] / counts[reps]
        chain = new_chain
    # fiber by the stable recursion along the chain: the m-th backward step
    # used the forward edge (chain[m], slots[m-1]), whose offset enters at
    # weight lambda_s^(m-1)
    offset_table = system.edge_offset_array()
    zs = np.zeros(chain.shape[0])
    for m in range(depth, 0, -1):
        zs = offset_table[chain[:, m], slots[:, m - 1]] + system.lambda_s * zs
    return VariableLeafQuadrature(system=system, leaf=leaf, depth=depth,
                                  itins=itins, rect_chain=chain, zs=zs,
                                  weights=weights)


def push_density_dfa(system: MarkovSystem, quad: VariableLeafQuadrature,
                     rho: np.ndarray, branch: int, pot_value: float = 0.0):
    """rho_j = (1 / p_gamma) rho o f exp(pot) on the branch pre-image leaf."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (quad.n_nodes,):
        raise ValueError("density values do not match the quadrature nodes")
    child = quad.child(branch)
    vals = (rho[quad.child_block(branch)] * math.exp(pot_value)
            / quad.branch_count)
    return child, vals


def transfer_leaf_integral_dfa(system: MarkovSystem, phi: DfaObservable,
                               quad: VariableLeafQuadrature, rho: np.ndarray,
                               pot_value: float = 0.0) -> float:
    """Branch-sum side of the transfer identity with variable p_gamma."""
    total = 0.0
    for b in range(quad.branch_count):
        child, rho_j = push_density_dfa(system, quad, rho, b, pot_value)
        vals = phi(child.rects, child.us, child.zs)
        total += child.integrate(vals * rho_j)
    return total


def direct_transfer_integral_dfa(system: MarkovSystem, phi: DfaObservable,
                                 quad: VariableLeafQuadrature, rho: np.ndarray,
                                 pot_value: float = 0.0) -> float:
    """Direct side: L(phi) assembled on the parent nodes via child blocks."""
    lvals = np.empty(quad.n_nodes)
    for b in range(quad.branch_count):
        child = quad.child(b)
        lvals[quad.child_block(b)] = (phi(child.rects, child.us, child.zs)
                                      * math.exp(pot_value))
    return quad.integrate(lvals * np.asarray(rho, dtype=float))


# ---------------------------------------------------------------------------
# quotient mass distribution on forward cylinders


def quotient_mass_distribution(ms: MarkovSystem, depth: int,
                               node_budget: int = 1 << 20):
    """Equal-split cylinder masses: each rectangle carries 1/p, and every
    refinement divides a cylinder's mass equally among its forward children.

    Returns per-level dicts with the end-rectangle array, mass array, and the
    largest child/parent mass ratio (taken over the mixing window it is
    guaranteed to stay below 1).
    """
    p = ms.n_rect
    out_counts = np.array([len(t) for t in ms.out_targets], dtype=int)
    levels = []
    rects = np.arange(p, dtype=np.int8)
    masses = np.full(p, 1.0 / p)
    levels.append({"end_rect": rects, "masses": masses})
    max_ratio = 0.0
    for _ in range(depth):
        counts = out_counts[rects]
        if masses.size * counts.max() > node_budget:
            raise NodeBudgetError("cylinder enumeration exceeds the budget")
        reps = np.repeat(np.arange(rects.size), counts)
        offsets = np.concatenate([[0], np.cumsum(counts)])[:-1]
        slot = np.arange(reps.size) - np.repeat(offsets, counts)
        new_rects = np.empty(reps.size, dtype=np.int8)
        for k in range(p):
            sel = rects[reps] == k
            if np.any(sel):
                new_rects[sel] = np.asarray(ms.out_targets[k], dtype=np.int8)[
                    slot[sel]]
        new_masses = masses[reps] / counts[reps]
        max_ratio = max(max_ratio, float(np.max(1.0 / counts[counts > 0])))
        rects, masses = new_rects, new_masses
        levels.append({"end_rect": rects, "masses": masses})
    return {"levels": levels, "max_child_parent_ratio": max_ratio}


# ---------------------------------------------------------------------------
# diameter bound and theta-plus sampling


def random_dfa_density(rng: np.random.Generator, quad: VariableLeafQuadrature,
                       kappa: float, alpha: float, n_modes: int = 3,
                       rel: float = 0.9) -> np.ndarray:
    from .cones import hoelder_seminorm

    freqs = rng.normal(scale=2.0, size=n_modes)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=n_modes)
    amps = rng.uniform(0.3, 1.0, size=n_modes)
    u = np.zeros(quad.n_nodes)
    for k in range(n_modes):
        u += amps[k] * np.cos(freqs[k] * quad.zs + phases[k])
    spec = quad.cone_spec(kappa, alpha)
    semi = hoelder_seminorm(u, spec) if quad.n_nodes > 1 else 0.0
    m_inf = float(np.max(np.abs(u)))
    if semi > 0.0:
        t = rel * kappa / (semi + rel * kappa * m_inf)
        u = t * rng.uniform(0.25, 1.0) * u
    return 1.0 + u


def dfa_cone_observables(rng: np.random.Generator, params: ConeParams,
                         ms: MarkovSystem, n_members: int = 4):
    members = [DfaObservable(lambda r, u, z: np.ones(np.shape(r)), name="one")]
    for i in range(n_members - 1):
        level = rng.uniform(1.0, 2.0)
        a_u = 0.1 * level * rng.uniform(0.2, 1.0)
        k = int(rng.integers(1, 3))
        wz = 0.25 * params.kappa * rng.uniform(0.2, 1.0) * rng.choice([-1.0, 1.0])
        r_amp = 0.1 * level * rng.uniform(0.0, 1.0)
        r_vals = r_amp * rng.uniform(-1.0, 1.0, size=ms.n_rect)

        def fn(rects, us, zs, lvl=level, a=a_u, k=k, wz=wz, rv=r_vals):
            return (lvl + a * np.cos(2.0 * np.pi * k * np.asarray(us))
                    + wz * np.asarray(zs) + rv[np.asarray(rects)])

        members.append(DfaObservable(fn, name=f"dfa_cone_{i}",
                                     u_lip=a_u * 2.0 * np.pi * k,
                                     z_lip=abs(wz)))
    return members


def diameter_bound_dfa(params: ConeParams, ms: MarkovSystem,
                       rng: np.random.Generator, depth: int = 6,
                       n_leaves: int = 4, n_densities: int = 3,
                       n_observables: int = 4):
    """Closed-form bound 2 (p_max + 1) C~ against the sampled Theta_+ sup."""
    p_max = ms.p_max
    c_tilde = (p_max
               * (1.0 + params.b * math.log((1.0 + params.lam)
                                            / (1.0 - params.lam))) ** 2
               * (1.0 + max(params.kappa, params.c)
                  * ms.diam ** params.alpha) ** 2)
    bound = 2.0 * (p_max + 1) * c_tilde
    obs = dfa_cone_observables(rng, params, ms, n_members=n_observables)
    ints = []
    for _ in range(n_leaves):
        leaf = DfaLeaf(int(rng.integers(0, ms.n_rect)), float(rng.uniform()))
        quad = build_variable_quadrature(ms, leaf, depth)
        for _ in range(n_densities):
            rho = random_dfa_density(rng, quad, params.kappa, params.alpha)
            row = [transfer_leaf_integral_dfa(ms, phi, quad, rho)
                   for phi in obs]
            ints.append(row)
    ints = np.asarray(ints)
    theta_plus = 0.0
    for m in range(len(obs)):
        for mm in range(m + 1, len(obs)):
            j = ints[:, m] / ints[:, mm]
            theta_plus = max(theta_plus, math.log(j.max() / j.min()))
    return {"theta_plus_max": theta_plus, "bound": bound,
            "c_tilde": c_tilde, "passed": theta_plus <= bound}


# ---------------------------------------------------------------------------
# product-measure sampling and decay experiments


def sample_dfa_orbit(ms: MarkovSystem, n_samples: int, depth: int,
                     n_steps: int, seed: int, word_len: int = 48):
    """Orbit segments under the product sampler.

    The leaf comes from the equal-split cylinder measure (forward word with
    uniform slot choices, u pinned by the nested-interval refinement), the
    past from uniform variable-branch itineraries, and the forward orbit by
    direct iteration (the u-expansion is mild, so float loss is negligible
    over desk-scale horizons).
    """
    rng = np.random.default_rng(seed)
    p = ms.n_rect
    rects0 = rng.integers(0, p, size=n_samples).astype(np.int8)
    # forward word: uniform slot at each step, u by backward Horner
    out_counts = np.array([len(t) for t in ms.out_targets], dtype=int)
    word_rects = np.empty((n_samples, word_len + 1), dtype=np.int8)
    word_slots = np.empty((n_samples, word_len), dtype=np.int8)
    word_rects[:, 0] = rects0
    for m in range(word_len):
        cur = word_rects[:, m]
        slot = (rng.uniform(size=n_samples) * out_counts[cur]).astype(np.int8)
        word_slots[:, m] = slot
        nxt = np.empty(n_samples, dtype=np.int8)
        for k in range(p):
            sel = cur == k
            if np.any(sel):
                nxt[sel] = np.asarray(ms.out_targets[k], dtype=np.int8)[slot[sel]]
        word_rects[:, m + 1] = nxt
    us = rng.uniform(size=n_samples)
    for m in range(word_len - 1, -1, -1):
        cur = word_rects[:, m]
        slot = word_slots[:, m]
        a = np.empty(n_samples)
        w = np.empty(n_samples)
        for k in range(p):
            sel = cur == k
            if np.any(sel):
                starts = ms.interval_starts(k)
                a[sel] = starts[slot[sel]]
                w[sel] = np.asarray(ms.widths[k])[slot[sel]]
        us = a + w * us
    # past itinerary: uniform over the variable branch counts, fiber by the
    # stable recursion
    p_vec = ms.branch_counts
    src_table = {i: np.array([e[0] for e in ms.in_edges[i]], dtype=np.int8)
                 for i in range(p)}
    slot_table = {i: np.array([e[1] for e in ms.in_edges[i]], dtype=np.int8)
                  for i in range(p)}
    chain = rects0.copy()
    past_rects = np.empty((n_samples, depth), dtype=np.int8)
    past_slots = np.empty((n_samples, depth), dtype=np.int8)
    for m in range(depth):
        b = (rng.uniform(size=n_samples) * p_vec[chain]).astype(np.int8)
        nxt = np.empty(n_samples, dtype=np.int8)
        slot = np.empty(n_samples, dtype=np.int8)
        for i in range(p):
            sel = chain == i
            if np.any(sel):
                nxt[sel] = src_table[i][b[sel]]
                slot[sel] = slot_table[i][b[sel]]
        past_rects[:, m] = nxt
        past_slots[:, m] = slot
        chain = nxt
    offset_table = ms.edge_offset_array()
    zs = np.zeros(n_samples)
    for m in range(depth - 1, -1, -1):
        zs = offset_table[past_rects[:, m], past_slots[:, m]] + ms.lambda_s * zs
    orb_r = np.empty((n_samples, n_steps + 1), dtype=np.int8)
    orb_u = np.empty((n_samples, n_steps + 1))
    orb_z = np.empty((n_samples, n_steps + 1))
    orb_r[:, 0], orb_u[:, 0], orb_z[:, 0] = rects0, us, zs
    for j in range(n_steps):
        r, u, z = ms.apply(orb_r[:, j], orb_u[:, j], orb_z[:, j])
        orb_r[:, j + 1] = r
        orb_u[:, j + 1] = u
        orb_z[:, j + 1] = z
    return orb_r, orb_u, orb_z


def dfa_correlation_series(ms: MarkovSystem, orbit, phi: DfaObservable,
                           psi: DfaObservable, lags):
    from .stats import CorrelationSeries, _cov_jackknife

    orb_r, orb_u, orb_z = orbit
    lags = np.asarray(sorted(lags), dtype=int)
    b_vals = psi(orb_r[:, 0], orb_u[:, 0], orb_z[:, 0])
    values = np.empty(lags.size)
    errs = np.empty(lags.size)
    for i, lag in enumerate(lags):
        a_vals = phi(orb_r[:, lag], orb_u[:, lag], orb_z[:, lag])
        values[i], errs[i] = _cov_jackknife(a_vals, b_vals)
    return CorrelationSeries(lags=lags, values=values, stderrs=errs,
                             n_samples=orb_r.shape[0])


def dfa_decay_experiment(ms: MarkovSystem, phi: DfaObservable,
                         psi: DfaObservable, lags, n_samples: int,
                         depth: int, seed: int):
    from .stats import fit_decay

    orbit = sample_dfa_orbit(ms, n_samples, depth, max(lags), seed)
    series = dfa_correlation_series(ms, orbit, phi, psi, lags)
    return series, fit_decay(series)


def markov_chain_oracle(ms: MarkovSystem, f_values, g_values, n: int) -> float:
    """Exact E[f(X_n) g(X_0)] - E[f(X_n)] E[g(X_0)] for the cylinder chain.

    The chain starts uniform on rectangles and moves with equal weight along
    forward slots, which is exactly the law of the rectangle path under the
    sampler; correlations of rectangle observables follow by matrix powers.
    """
    p = ms.n_rect
    out_counts = np.array([len(t) for t in ms.out_targets], dtype=float)
    trans = ms.transition_matrix() / out_counts[:, None]
    pi0 = np.full(p, 1.0 / p)
    f = np.asarray(f_values, dtype=float)
    g = np.asarray(g_values, dtype=float)
    pn_f = np.linalg.matrix_power(trans, n) @ f
    joint = float(pi0 @ (g * pn_f))
    return joint - float(pi0 @ g) * float(pi0 @ pn_f)
