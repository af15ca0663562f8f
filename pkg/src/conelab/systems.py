"""Skew-product solenoid systems over expanding circle maps.

A system couples a degree-p circle map g (the base) with a uniformly
contracting fiber map, f(theta, z) = (g(theta), offset(theta) + lambda_s * z),
acting on S^1 x D where D is an invariant disk in R^2.  The projection to the
first coordinate semiconjugates f to g, stable leaves are the fibers, and the
attractor is coded by backward branch itineraries: a point is pinned down by
its base coordinate, a finite past, and a fiber coordinate accurate to
lambda_s^depth times the fiber diameter.

Built-in bases: the doubling map, the two-branch intermittent (neutral fixed
point at 0) map, and a one-parameter C^1 deformation of the doubling map used
for statistical-stability sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "BaseMap",
    "FiberContraction",
    "SkewProduct",
    "ItineraryPoint",
    "ConfigError",
    "circle_dist",
    "make_doubling_solenoid",
    "make_mp_solenoid",
    "make_perturbed_family",
    "reconstruct_point",
    "reconstruct_fibers",
]


class ConfigError(ValueError):
    """A system was requested with parameters outside its admissible range."""


def circle_dist(x, y):
    """Distance on S^1 = R/Z."""
    d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def _bisect_monotone(fn, lo: float, hi: float, targets: np.ndarray, iters: int = 52):
    """Vectorized bisection for increasing fn on [lo, hi]; solves fn(x) = target."""
    t = np.asarray(targets, dtype=float)
    a = np.full_like(t, lo)
    b = np.full_like(t, hi)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        below = fn(mid) < t
        a = np.where(below, mid, a)
        b = np.where(below, b, mid)
    return 0.5 * (a + b)


@dataclass(frozen=True)
class BaseMap:
    """Degree-p expanding circle map with explicit inverse-branch structure.

    ``lipschitz_profile`` gives the per-point inverse-branch contraction bound
    L(x); the declared constants satisfy L(x) <= lip_omega on the region Omega
    and L(x) < lip_off_omega < 1 off it, and Omega is covered by
    ``cover_count_q`` injectivity domains with q < degree.
    """

    name: str
    degree: int
    apply: Callable = field(repr=False)
    branch_inverse: Callable = field(repr=False)  # (j, y) -> theta with g(theta) = y
    branch_of: Callable = field(repr=False)       # theta -> branch index containing it
    lipschitz_profile: Callable = field(repr=False)
    omega: tuple = ()                              # circle arcs (lo, hi) around trouble
    cover_count_q: int = 0
    lip_omega: float = 1.0
    lip_off_omega: float = 1.0
    piecewise_affine: bool = False

    def in_omega(self, theta) -> np.ndarray:
        th = np.atleast_1d(np.asarray(theta, dtype=float)) % 1.0
        mask = np.zeros(th.shape, dtype=bool)
        for lo, hi in self.omega:
            if lo <= hi:
                mask |= (th >= lo) & (th <= hi)
            else:  # arc wrapping through 0
                mask |= (th >= lo) | (th <= hi)
        return mask

    def preimages(self, y) -> np.ndarray:
        """All degree preimages of y, stacked along the first axis."""
        return np.stack([self.branch_inverse(j, y) for j in range(self.degree)])


@dataclass(frozen=True)
class FiberContraction:
    """Affine fiber map z -> offset(theta) + lambda_s z on a disk of ``radius``."""

    offset: Callable = field(repr=False)  # theta array (N,) -> offsets (N, 2)
    lambda_s: float = 0.1
    radius: float = 1.0

    def apply(self, theta, z):
        return self.offset(np.atleast_1d(theta)) + self.lambda_s * np.asarray(z, dtype=float)


@dataclass(frozen=True)
class SkewProduct:
    """f(theta, z) = (g(theta), Phi(theta, z)) with metadata for the cone machinery."""

    base: BaseMap
    fiber: FiberContraction
    holonomy_const: float = 1.0

    @property
    def degree(self) -> int:
        return self.base.degree

    @property
    def lambda_s(self) -> float:
        return self.fiber.lambda_s

    @property
    def diam(self) -> float:
        # circle diameter plus fiber-disk diameter in the sum metric
        return 0.5 + 2.0 * self.fiber.radius

    @property
    def fiber_diam(self) -> float:
        return 2.0 * self.fiber.radius

    def apply(self, thetas, zs):
        thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
        return self.base.apply(thetas), self.fiber.apply(thetas, zs)

    def point_dist(self, th1, z1, th2, z2):
        dz = np.linalg.norm(np.asarray(z1, dtype=float) - np.asarray(z2, dtype=float), axis=-1)
        return circle_dist(th1, th2) + dz


@dataclass(frozen=True)
class ItineraryPoint:
    """Attractor point: base coordinate, backward itinerary, approximate fiber.

    The fiber coordinate is the depth-step forward image of the fiber origin
    along the itinerary, hence accurate to lambda_s^depth * fiber diameter.
    """

    base: float
    fiber: np.ndarray
    itinerary: tuple
    depth: int


def _validate_itinerary(system: SkewProduct, itinerary: Sequence[int], depth: int):
    if depth < 0:
        raise ValueError("depth must be nonnegative")
    if len(itinerary) < depth:
        raise ValueError(f"itinerary too short: {len(itinerary)} < depth {depth}")
    p = system.degree
    for j in itinerary[:depth]:
        if not 0 <= int(j) < p:
            raise ValueError(f"branch index {j} outside 0..{p - 1}")


def reconstruct_point(system: SkewProduct, y: float, itinerary: Sequence[int],
                      depth: int) -> ItineraryPoint:
    """Follow inverse branches ``depth`` steps back from y, then push the
    fiber origin forward along the same chain."""
    _validate_itinerary(system, itinerary, depth)
    chain = [float(y) % 1.0]
    for k in range(depth):
        prev = system.base.branch_inverse(int(itinerary[k]), np.array([chain[-1]]))
        chain.append(float(prev[0]))
    z = np.zeros(2)
    for k in range(depth, 0, -1):
        z = system.fiber.apply(np.array([chain[k]]), z)[0]
    return ItineraryPoint(chain[0], z, tuple(int(j) for j in itinerary[:depth]), depth)


def reconstruct_fibers(system: SkewProduct, ys: np.ndarray, itins: np.ndarray) -> np.ndarray:
    """Vectorized fiber reconstruction for many points.

    ``ys`` has shape (N,), ``itins`` shape (N, depth) with itins[:, 0] the most
    recent backward branch choice.  Returns fibers of shape (N, 2).
    """
    ys = np.asarray(ys, dtype=float)
    itins = np.asarray(itins, dtype=np.int64)
    n, depth = itins.shape if itins.ndim == 2 else (itins.shape[0], 0)
    levels = [ys]
    cur = ys
    for k in range(depth):
        nxt = np.empty_like(cur)
        for j in range(system.degree):
            sel = itins[:, k] == j
            if np.any(sel):
                nxt[sel] = system.base.branch_inverse(j, cur[sel])
        levels.append(nxt)
        cur = nxt
    z = np.zeros((ys.size, 2))
    for k in range(depth, 0, -1):
        z = system.fiber.offset(levels[k]) + system.lambda_s * z
    return z


def forward_point(system: SkewProduct, p: ItineraryPoint) -> ItineraryPoint:
    """Apply f once; the branch containing the base joins the past."""
    b = int(system.base.branch_of(np.array([p.base]))[0])
    new_base = float(system.base.apply(np.array([p.base]))[0])
    new_fiber = system.fiber.apply(np.array([p.base]), p.fiber[None, :])[0]
    return ItineraryPoint(new_base, new_fiber, (b,) + p.itinerary, p.depth + 1)


def backward_point(system: SkewProduct, p: ItineraryPoint) -> ItineraryPoint:
    """Apply f^{-1} once by consuming the most recent backward symbol."""
    if p.depth < 1:
        raise ValueError("backward step needs itinerary depth >= 1")
    return reconstruct_point(
        system,
        float(system.base.branch_inverse(p.itinerary[0], np.array([p.base]))[0]),
        p.itinerary[1:],
        p.depth - 1,
    )


def _standard_fiber(lambda_s: float, offset_radius: float) -> FiberContraction:
    r = offset_radius

    def offset(thetas):
        ang = 2.0 * np.pi * np.asarray(thetas, dtype=float)
        return r * np.stack([np.cos(ang), np.sin(ang)], axis=-1)

    return FiberContraction(offset=offset, lambda_s=lambda_s, radius=r / (1.0 - lambda_s))


def make_doubling_solenoid(lambda_s: float = 0.05,
                           offset_radius: float = 0.5) -> SkewProduct:
    """Classic solenoid: doubling base, antipodal fiber offsets.

    lambda_s must lie in (0, 1/2]: the two branch images of the fiber disk sit
    at antipodal offsets 2r apart, and lambda_s * radius < r keeps them
    disjoint, so f stays injective.
    """
    if not 0.0 < lambda_s <= 0.5:
        raise ConfigError("doubling solenoid needs lambda_s in (0, 1/2]")

    def apply(th):
        return (2.0 * np.asarray(th, dtype=float)) % 1.0

    def branch_inverse(j, y):
        return (np.asarray(y, dtype=float) % 1.0 + j) / 2.0

    def branch_of(th):
        return (np.asarray(th, dtype=float) % 1.0 >= 0.5).astype(np.int64)

    base = BaseMap(
        name="doubling",
        degree=2,
        apply=apply,
        branch_inverse=branch_inverse,
        branch_of=branch_of,
        lipschitz_profile=lambda th: np.full(np.shape(np.atleast_1d(th)), 0.5),
        omega=(),
        cover_count_q=0,
        lip_omega=1.0,
        lip_off_omega=0.51,
        piecewise_affine=True,
    )
    return SkewProduct(base=base, fiber=_standard_fiber(lambda_s, offset_radius))


def mp_forward(theta, mp_alpha: float):
    """Two-branch intermittent circle map with neutral fixed point at 0."""
    th = np.asarray(theta, dtype=float) % 1.0
    left = th * (1.0 + (2.0 ** mp_alpha) * th ** mp_alpha)
    right = (th - 1.0) * (1.0 + (2.0 ** mp_alpha) * (1.0 - th) ** mp_alpha) + 1.0
    return np.where(th <= 0.5, left, right) % 1.0


def mp_derivative(theta, mp_alpha: float):
    th = np.asarray(theta, dtype=float) % 1.0
    u = np.where(th <= 0.5, th, 1.0 - th)
    return 1.0 + (2.0 ** mp_alpha) * (1.0 + mp_alpha) * u ** mp_alpha


def make_mp_solenoid(mp_alpha: float, lambda_s: float = 0.05,
                     offset_radius: float = 0.5,
                     omega_radius: float = 0.1) -> SkewProduct:
    """Solenoid over the intermittent base; Omega is the neutral neighborhood.

    The fixed point 0 has g'(0) = 1, so inverse-branch contraction degrades to
    1 on the arc of radius ``omega_radius`` around 0.  That arc is an
    injectivity domain of g, hence q = 1 < 2 branches cover it.
    """
    if not 0.0 < mp_alpha < 1.0:
        raise ConfigError("mp_alpha must lie in (0, 1)")
    if not 0.0 < lambda_s <= 0.5:
        raise ConfigError("mp solenoid needs lambda_s in (0, 1/2]")
    if not 0.0 < omega_radius < 0.25:
        raise ConfigError("omega_radius must lie in (0, 0.25)")

    def apply(th):
        return mp_forward(th, mp_alpha)

    def g_lift_left(x):
        return x * (1.0 + (2.0 ** mp_alpha) * x ** mp_alpha)

    def g_lift_right(x):
        return (x - 1.0) * (1.0 + (2.0 ** mp_alpha) * (1.0 - x) ** mp_alpha) + 1.0

    def branch_inverse(j, y):
        y = np.asarray(y, dtype=float) % 1.0
        if j == 0:
            return _bisect_monotone(g_lift_left, 0.0, 0.5, y)
        return _bisect_monotone(g_lift_right, 0.5, 1.0, y)

    def branch_of(th):
        return (np.asarray(th, dtype=float) % 1.0 > 0.5).astype(np.int64)

    def profile(th):
        return 1.0 / mp_derivative(th, mp_alpha)

    # profile is monotone away from 0, so its off-Omega sup sits on the
    # boundary of the arc; declare lambda_u with a 1% margin
    lam_u = min(float(1.0 / mp_derivative(omega_radius, mp_alpha)) * 1.01, 0.999)
    base = BaseMap(
        name="manneville_pomeau",
        degree=2,
        apply=apply,
        branch_inverse=branch_inverse,
        branch_of=branch_of,
        lipschitz_profile=profile,
        omega=((1.0 - omega_radius, omega_radius),),  # arc through 0
        cover_count_q=1,
        lip_omega=1.0,
        lip_off_omega=lam_u,
        piecewise_affine=False,
    )
    return SkewProduct(base=base, fiber=_standard_fiber(lambda_s, offset_radius))


# Deformation bump for the perturbed family, supported in [0.1, 0.3].
_BUMP_LO, _BUMP_HI = 0.1, 0.3
_BUMP_DMAX = np.pi / (_BUMP_HI - _BUMP_LO)  # max |s'|


def _bump(th):
    th = np.asarray(th, dtype=float) % 1.0
    u = (th - _BUMP_LO) / (_BUMP_HI - _BUMP_LO)
    inside = (u > 0.0) & (u < 1.0)
    return np.where(inside, np.sin(np.pi * np.clip(u, 0.0, 1.0)) ** 2, 0.0)


def make_perturbed_family(t: float, lambda_s: float = 0.05,
                          offset_radius: float = 0.5) -> SkewProduct:
    """Doubling map deformed by t * bump inside (0.1, 0.3); t = 0 is untouched.

    The lift 2 theta + t * bump(theta) must stay strictly increasing so the map
    keeps degree 2 (and with it q = 0 < 2); |t| is bounded accordingly.
    """
    t = float(t)
    if abs(t) * _BUMP_DMAX >= 1.0:
        raise ConfigError(
            f"|t| < {1.0 / _BUMP_DMAX:.4f} required to keep the lift expanding "
            "(degree-2 cover, H2 intact)")
    if not 0.0 < lambda_s <= 0.5:
        raise ConfigError("perturbed solenoid needs lambda_s in (0, 1/2]")

    def lift(x):
        return 2.0 * x + t * _bump(x)

    def apply(th):
        return lift(np.asarray(th, dtype=float) % 1.0) % 1.0

    def branch_inverse(j, y):
        y = np.asarray(y, dtype=float) % 1.0
        return _bisect_monotone(lift, 0.0, 1.0, y + j)

    def branch_of(th):
        return (lift(np.asarray(th, dtype=float) % 1.0) >= 1.0).astype(np.int64)

    def d_lift(x):
        x = np.asarray(x, dtype=float) % 1.0
        u = (x - _BUMP_LO) / (_BUMP_HI - _BUMP_LO)
        inside = (u > 0.0) & (u < 1.0)
        ds = np.where(inside,
                      np.pi / (_BUMP_HI - _BUMP_LO)
                      * np.sin(2.0 * np.pi * np.clip(u, 0.0, 1.0)), 0.0)
        return 2.0 + t * ds

    def profile(th):
        return 1.0 / d_lift(th)

    lam_u = min(1.0 / (2.0 - abs(t) * _BUMP_DMAX) * 1.01, 0.999)
    base = BaseMap(
        name=f"perturbed_doubling(t={t:g})",
        degree=2,
        apply=apply,
        branch_inverse=branch_inverse,
        branch_of=branch_of,
        lipschitz_profile=profile,
        omega=(),
        cover_count_q=0,
        lip_omega=1.0,
        lip_off_omega=lam_u,
        piecewise_affine=False,
    )
    return SkewProduct(base=base, fiber=_standard_fiber(lambda_s, offset_radius))
