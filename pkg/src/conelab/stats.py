"""Correlation decay, Green-Kubo variance, CLT checks, stability sweeps.

All estimators are Monte-Carlo against the empirical product measure, with
orbit segments drawn by the backward-coded construction (see
``maxent.sample_orbit``): inverse branches are contracting, so arbitrarily
long stationary orbits come out at full float accuracy, where direct forward
iteration of an expanding base would shed one bit of mantissa per step.

The covariance estimator mean(AB) - mean(A) mean(B) with delete-one jackknife
standard errors is the workhorse; it is exactly invariant under adding
constants to either observable.  Decay fits run on log |C_n| over the lags
that clear the noise floor (a multiple of the jackknife error), since log of
noise-dominated values corrupts the slope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .maxent import OrbitSample, QuotientMeasure, birkhoff_sums, sample_mu
from .systems import SkewProduct

__all__ = [
    "CorrelationSeries",
    "DecayReport",
    "GreenKuboReport",
    "CltReport",
    "correlation_series",
    "correlation",
    "correlation_via_duality",
    "fit_decay",
    "green_kubo_sigma",
    "clt_test",
    "stability_sweep",
]

NOISE_FLOOR_MULT = 3.0


def _cov_jackknife(a: np.ndarray, b: np.ndarray):
    """cov estimate mean(ab) - mean(a) mean(b) with delete-one jackknife se."""
    n = a.size
    s_ab = float(np.sum(a * b))
    s_a = float(np.sum(a))
    s_b = float(np.sum(b))
    est = s_ab / n - (s_a / n) * (s_b / n)
    loo = ((s_ab - a * b) / (n - 1)
           - (s_a - a) * (s_b - b) / (n - 1) ** 2)
    se = math.sqrt((n - 1) / n * float(np.sum((loo - loo.mean()) ** 2)))
    return est, se


@dataclass(frozen=True)
class CorrelationSeries:
    lags: np.ndarray
    values: np.ndarray
    stderrs: np.ndarray
    n_samples: int


def correlation_series(system: SkewProduct, orbit: OrbitSample, phi, psi,
                       lags) -> CorrelationSeries:
    """C_n = E[(phi o f^n) psi] - E[phi] E[psi] for each requested lag."""
    lags = np.asarray(sorted(lags), dtype=int)
    if lags.max() > orbit.n_steps:
        raise ValueError(f"orbit holds {orbit.n_steps} steps, lag "
                         f"{int(lags.max())} requested")
    b0, z0 = orbit.point(0)
    b_vals = np.asarray(psi(b0, z0), dtype=float)
    values = np.empty(lags.size)
    errs = np.empty(lags.size)
    for i, lag in enumerate(lags):
        bj, zj = orbit.point(int(lag))
        a_vals = np.asarray(phi(bj, zj), dtype=float)
        values[i], errs[i] = _cov_jackknife(a_vals, b_vals)
    return CorrelationSeries(lags=lags, values=values, stderrs=errs,
                             n_samples=orbit.n_samples)


def correlation(system: SkewProduct, orbit: OrbitSample, phi, psi, n: int):
    """Single-lag correlation with jackknife standard error."""
    series = correlation_series(system, orbit, phi, psi, [n])
    return float(series.values[0]), float(series.stderrs[0])


def correlation_via_duality(system: SkewProduct, orbit: OrbitSample,
                            phi, psi, n: int):
    """Same correlation through the dual route E[phi . psi o f^-n].

    X_0 is pulled back n symbols along its stored past (zero potential), so
    the orbit's depth must exceed n by enough to keep fiber accuracy.
    """
    from .systems import reconstruct_fibers

    if orbit.depth < n + 1:
        raise ValueError("itinerary depth too shallow for the dual route")
    b0, z0 = orbit.point(0)
    bases = b0.copy()
    for k in range(n):
        nxt = np.empty_like(bases)
        for j in range(system.degree):
            sel = orbit.past_itins[:, k] == j
            if np.any(sel):
                nxt[sel] = system.base.branch_inverse(j, bases[sel])
        bases = nxt
    fibers = reconstruct_fibers(system, bases, orbit.past_itins[:, n:])
    a_vals = np.asarray(phi(b0, z0), dtype=float)
    b_vals = np.asarray(psi(bases, fibers), dtype=float)
    return _cov_jackknife(a_vals, b_vals)


@dataclass(frozen=True)
class DecayReport:
    """Log-linear fit of |C_n| over the lags above the noise floor."""

    lags: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    stderrs: np.ndarray = field(repr=False)
    usable: np.ndarray = field(repr=False)
    tau: float = float("nan")
    k_const: float = float("nan")
    r_squared: float = float("nan")
    conclusive: bool = False

    @property
    def excluded_lags(self):
        return [int(n) for n in self.lags[~self.usable]]


def fit_decay(series: CorrelationSeries, min_usable: int = 4,
              noise_mult: float = NOISE_FLOOR_MULT) -> DecayReport:
    """Least squares of log |C_n| against n; inconclusive with < min_usable lags."""
    lags = series.lags
    vals = series.values
    usable = (np.abs(vals) > noise_mult * series.stderrs) & (lags >= 1)
    if int(usable.sum()) < min_usable:
        return DecayReport(lags=lags, values=vals, stderrs=series.stderrs,
                           usable=usable)
    x = lags[usable].astype(float)
    y = np.log(np.abs(vals[usable]))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return DecayReport(lags=lags, values=vals, stderrs=series.stderrs,
                       usable=usable, tau=float(np.exp(slope)),
                       k_const=float(np.exp(intercept)), r_squared=r2,
                       conclusive=True)


@dataclass(frozen=True)
class GreenKuboReport:
    sigma2: float          # clamped at zero
    sigma2_raw: float
    stderr: float
    truncation: int
    tail_bound: float
    degenerate: bool
    terms: np.ndarray = field(repr=False, default=None)


def green_kubo_sigma(system: SkewProduct, orbit: OrbitSample, phi,
                     truncation: int) -> GreenKuboReport:
    """sigma^2 = C_0 + 2 sum_{j<=J} C_j with a fitted geometric tail bound.

    The covariance estimator centers phi internally; the reported tail bound
    K tau^{J+1} / (1 - tau) comes from the decay fit of the summed lags and
    is zero when no lag clears the noise floor.
    """
    if truncation < 1:
        raise ValueError("truncation must be >= 1")
    series = correlation_series(system, orbit, phi, phi,
                                list(range(truncation + 1)))
    c0 = series.values[0]
    tail = series.values[1:]
    sigma2_raw = float(c0 + 2.0 * np.sum(tail))
    stderr = float(math.sqrt(series.stderrs[0] ** 2
                             + 4.0 * np.sum(series.stderrs[1:] ** 2)))
    fit = fit_decay(series, min_usable=3)
    if fit.conclusive and fit.tau < 1.0:
        tail_bound = fit.k_const * fit.tau ** (truncation + 1) / (1.0 - fit.tau)
    else:
        tail_bound = 0.0
    degenerate = sigma2_raw < max(NOISE_FLOOR_MULT * stderr, 1e-12)
    return GreenKuboReport(sigma2=max(sigma2_raw, 0.0), sigma2_raw=sigma2_raw,
                           stderr=stderr, truncation=truncation,
                           tail_bound=tail_bound, degenerate=degenerate,
                           terms=series.values)


@dataclass(frozen=True)
class CltReport:
    sigma2_gk: float
    sigma2_emp: float
    ks_statistic: float
    ks_pvalue: float
    n_time: int
    n_samples: int
    degenerate: bool


def clt_test(system: SkewProduct, quotient: QuotientMeasure, phi,
             gk: GreenKuboReport, n_time: int, n_samples: int, seed: int,
             depth: int = 12, mean_samples: int = 400_000) -> CltReport:
    """Distribution of S_n / sqrt(n) for centered phi against N(0, sigma_gk^2).

    Fresh independent samples drive the Birkhoff sums; the centering constant
    comes from its own large sample so its error stays negligible against the
    spread of the normalized sums.
    """
    if gk.degenerate:
        return CltReport(sigma2_gk=gk.sigma2, sigma2_emp=0.0,
                         ks_statistic=float("nan"), ks_pvalue=float("nan"),
                         n_time=n_time, n_samples=n_samples, degenerate=True)
    mean_emp = sample_mu(system, quotient, mean_samples, depth, seed + 101)
    phi_mean = float(np.mean(phi(mean_emp.bases, mean_emp.fibers)))
    sums = birkhoff_sums(system, quotient, phi, n_samples, n_time, depth,
                         seed, center=phi_mean)
    norm_sums = sums / math.sqrt(n_time)
    sigma2_emp = float(np.var(norm_sums))
    ks = sps.kstest(norm_sums, "norm", args=(0.0, math.sqrt(gk.sigma2)))
    return CltReport(sigma2_gk=gk.sigma2, sigma2_emp=sigma2_emp,
                     ks_statistic=float(ks.statistic),
                     ks_pvalue=float(ks.pvalue), n_time=n_time,
                     n_samples=n_samples, degenerate=False)


def stability_sweep(family_builder, phi, t_grid, n_samples: int, depth: int,
                    seed: int, grid_n: int = 1 << 12):
    """Rows of int phi dmu_t across the parameter grid, referenced to t = 0.

    Every t (including 0) goes through the same quotient-measure route so the
    only asymmetry between rows is the parameter itself.  Per-t failures are
    flagged on the row instead of aborting the sweep.
    """
    from .maxent import quotient_mem

    t_grid = list(t_grid)
    if 0.0 not in t_grid:
        raise ValueError("t grid must include the reference t = 0")
    rows = []
    by_t = {}
    for i, t in enumerate(t_grid):
        try:
            system = family_builder(t)
            quotient = quotient_mem(system.base, grid_n=grid_n)
            emp = sample_mu(system, quotient, n_samples, depth, seed + 7 * i)
            vals = np.asarray(phi(emp.bases, emp.fibers), dtype=float)
            est = float(vals.mean())
            se = float(vals.std(ddof=1) / math.sqrt(n_samples))
            row = {"t": t, "integral": est, "stderr": se, "failed": False}
        except Exception as exc:  # isolate per-t failures
            row = {"t": t, "integral": float("nan"), "stderr": float("nan"),
                   "failed": True, "error": repr(exc)}
        rows.append(row)
        by_t[t] = row
    ref = by_t[0.0]
    for row in rows:
        if not row["failed"] and not ref["failed"]:
            row["diff_from_ref"] = abs(row["integral"] - ref["integral"])
            row["diff_stderr"] = math.hypot(row["stderr"], ref["stderr"])
    return rows
