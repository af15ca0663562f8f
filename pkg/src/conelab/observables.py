"""Vectorized observables on solenoid attractor points.

An observable maps node arrays (bases (N,), fibers (N, 2)) to values (N,).
The wrapper records Lipschitz bounds in the base and fiber directions; the
fiber bound controls the leafwise Hoelder constant (nodes on one leaf differ
only in the fiber), the base bound controls holonomy comparisons between
leaves, where the fiber coordinate is carried across unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Observable",
    "constant",
    "cos_base",
    "multimode",
    "fiber_linear",
    "coboundary",
    "random_hoelder",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Observable:
    fn: Callable = field(repr=False)
    name: str = "observable"
    base_lip: float = 0.0   # w.r.t. circle distance
    fiber_lip: float = 0.0  # w.r.t. euclidean fiber distance

    def __call__(self, bases, fibers):
        return np.asarray(self.fn(bases, fibers), dtype=float)

    def shifted(self, c: float) -> "Observable":
        return Observable(
            fn=lambda b, z: self.fn(b, z) + c,
            name=f"{self.name}+{c:g}",
            base_lip=self.base_lip,
            fiber_lip=self.fiber_lip,
        )

    def hoelder_bound(self) -> float:
        """Lipschitz bound w.r.t. the sum metric d_base + d_fiber."""
        return max(self.base_lip, self.fiber_lip)


def constant(c: float) -> Observable:
    return Observable(lambda b, z: np.full(np.shape(b), float(c)), name=f"const({c:g})")


def cos_base(k: int = 1, phase: float = 0.0) -> Observable:
    """cos(2 pi k theta + phase) on the base coordinate."""
    def fn(bases, fibers):
        return np.cos(TWO_PI * k * np.asarray(bases, dtype=float) + phase)
    return Observable(fn, name=f"cos_base(k={k})", base_lip=TWO_PI * k)


def multimode(n_modes: int = 10) -> Observable:
    """Sum over k of 2^-k cos(2 pi 2^k theta): geometric mode ladder."""
    ks = np.arange(1, n_modes + 1)
    amps = 0.5 ** ks

    def fn(bases, fibers):
        th = np.asarray(bases, dtype=float)
        return (amps[:, None] * np.cos(TWO_PI * (2.0 ** ks)[:, None] * th[None, :])).sum(axis=0)

    lip = float(np.sum(amps * TWO_PI * 2.0 ** ks))
    return Observable(fn, name=f"multimode({n_modes})", base_lip=lip)


def fiber_linear(w=(1.0, 0.0), c: float = 0.0) -> Observable:
    wv = np.asarray(w, dtype=float)

    def fn(bases, fibers):
        return np.asarray(fibers, dtype=float) @ wv + c

    return Observable(fn, name="fiber_linear", fiber_lip=float(np.linalg.norm(wv)))


def coboundary(system, k: int = 1) -> Observable:
    """u o f - u with u = cos(2 pi k theta): an exact L^2 coboundary of f."""
    def fn(bases, fibers):
        th = np.asarray(bases, dtype=float)
        return np.cos(TWO_PI * k * system.base.apply(th)) - np.cos(TWO_PI * k * th)

    # crude bound: both terms Lipschitz, the composed one through sup |g'|
    return Observable(fn, name=f"coboundary(k={k})",
                      base_lip=TWO_PI * k * 3.0)


def random_hoelder(rng: np.random.Generator, base_modes: int = 3,
                   fiber_weight: float = 0.3, amplitude: float = 1.0) -> Observable:
    """Random trigonometric polynomial in the base plus a linear fiber part."""
    ks = rng.integers(1, 6, size=base_modes)
    amps = amplitude * rng.uniform(-1.0, 1.0, size=base_modes) / base_modes
    phases = rng.uniform(0.0, TWO_PI, size=base_modes)
    wv = fiber_weight * rng.normal(size=2)

    def fn(bases, fibers):
        th = np.asarray(bases, dtype=float)
        out = np.asarray(fibers, dtype=float) @ wv
        for k, a, ph in zip(ks, amps, phases):
            out = out + a * np.cos(TWO_PI * k * th + ph)
        return out

    return Observable(fn, name="random_hoelder",
                      base_lip=float(np.sum(np.abs(amps) * TWO_PI * ks)),
                      fiber_lip=float(np.linalg.norm(wv)))
