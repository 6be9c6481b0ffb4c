"""Replica-ensemble estimators: survival curves, plateaus, exponent fits.

The metastable density is approximated by the mean infected fraction
among surviving replicas over a late time window; the limiting
definition quantifies over all sub-exponential horizons and is not
finitely checkable, so a flatness statistic is reported, never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dynamics import DensityCurve, extinction_times
from .model import ModelParams, ParameterError


# =============================================================================
# Plateau estimation
# =============================================================================

@dataclass
class PlateauEstimate:
    rho_hat: float
    window: tuple[float, float]
    se: float
    flatness: float  # max |slope| of the windowed survivor mean
    n_replicas_surviving: int
    no_plateau: bool


def plateau(
    curve: DensityCurve,
    burn_in: float = 0.25,
    window: tuple[float, float] = (0.5, 0.9),
) -> PlateauEstimate:
    """Windowed survivor-mean density with a flatness diagnostic.

    The window is given as fractions of the observation horizon and must
    start past the burn-in fraction.  Survivors are replicas still alive
    at the window end; their per-replica window means give the cluster
    standard error.  An all-extinct window yields rho_hat 0 with the
    no_plateau flag set.
    """
    t_lo, t_hi = window
    if not 0.0 <= burn_in < 1.0:
        raise ParameterError(f"burn_in fraction must lie in [0,1), got {burn_in}")
    if not (0.0 <= t_lo < t_hi <= 1.0):
        raise ParameterError(f"window fractions must satisfy 0 <= lo < hi <= 1, got {window}")
    if t_lo < burn_in:
        raise ParameterError("window must start at or after the burn-in fraction")
    horizon = curve.times[-1]
    mask = (curve.times >= t_lo * horizon) & (curve.times <= t_hi * horizon)
    if not mask.any():
        raise ParameterError("window contains no observation times")
    times_w = curve.times[mask]
    dens_w = curve.counts[:, mask] / curve.n

    alive = curve.counts[:, np.nonzero(mask)[0][-1]] > 0
    n_alive = int(alive.sum())
    if n_alive == 0:
        return PlateauEstimate(0.0, (times_w[0], times_w[-1]), 0.0, math.inf, 0, True)

    per_replica = dens_w[alive].mean(axis=1)
    rho_hat = float(per_replica.mean())
    se = float(per_replica.std(ddof=1) / math.sqrt(n_alive)) if n_alive > 1 else math.inf

    mean_curve = dens_w[alive].mean(axis=0)
    slopes = np.diff(mean_curve) / np.diff(times_w)
    flatness = float(np.abs(slopes).max()) if slopes.size else 0.0
    span = float(times_w[-1] - times_w[0])
    no_plateau = bool(flatness * span > 0.25 * max(rho_hat, 1e-12))
    return PlateauEstimate(rho_hat, (float(times_w[0]), float(times_w[-1])), se, flatness, n_alive, no_plateau)


def synthetic_curve(times: np.ndarray, density: np.ndarray, n: int = 1000) -> DensityCurve:
    """Wrap a deterministic density path as a one-replica DensityCurve."""
    counts = np.round(np.asarray(density, dtype=float) * n).astype(np.int64)[None, :]
    return DensityCurve(
        times=np.asarray(times, dtype=float),
        mean=counts[0] / n,
        se=np.zeros(len(times)),
        n_surviving=(counts[0] > 0).astype(np.int64),
        counts=counts,
        n=n,
    )


# =============================================================================
# Exponent fits
# =============================================================================

@dataclass
class ExponentFit:
    slope: float
    intercept: float
    residuals: np.ndarray
    r_squared: float


def fit_exponent(lambdas: Sequence[float], rhos: Sequence[float]) -> ExponentFit:
    """Least-squares line through (log lambda, log rho); slope estimates xi."""
    lam = np.asarray(lambdas, dtype=float)
    rho = np.asarray(rhos, dtype=float)
    if lam.size != rho.size or lam.size < 3:
        raise ParameterError("need at least 3 (lambda, rho) pairs")
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise ParameterError("all lambda must lie in (0,1)")
    if np.any(rho <= 0):
        raise ParameterError("all rho must be positive")
    if np.unique(lam).size < 2:
        raise ParameterError("degenerate fit: identical lambda values")
    x = np.log(lam)
    y = np.log(rho)
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    resid = y - fitted
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(float(slope), float(intercept), resid, r2)


# =============================================================================
# Survival curves
# =============================================================================

@dataclass
class SurvivalCurve:
    times: np.ndarray
    probability: np.ndarray
    wilson_low: np.ndarray
    wilson_high: np.ndarray
    replicas: int
    t_ext: np.ndarray  # raw sample (nan entries censored at t_max)

    @property
    def mean_t_ext(self) -> float:
        return float(np.nanmean(self.t_ext))


def _wilson(successes: np.ndarray, n: int, z: float = 1.96) -> tuple[np.ndarray, np.ndarray]:
    p = successes / n
    denom = 1.0 + z ** 2 / n
    centre = (p + z ** 2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z ** 2 / (4 * n ** 2)) / denom
    return centre - half, centre + half


def survival_from_times(t_ext: np.ndarray, times: np.ndarray) -> SurvivalCurve:
    """Empirical P(T_ext > t) with Wilson intervals from raw extinction times."""
    t_ext = np.asarray(t_ext, dtype=float)
    times = np.asarray(times, dtype=float)
    n = t_ext.size
    if n == 0:
        raise ParameterError("empty extinction-time sample")
    # censored runs (nan) survived past every observed time below t_max
    ext = np.where(np.isnan(t_ext), math.inf, t_ext)
    alive = (ext[None, :] > times[:, None]).sum(axis=1)
    lo, hi = _wilson(alive.astype(float), n)
    return SurvivalCurve(times, alive / n, lo, hi, n, t_ext)


def survival_curve(
    params: ModelParams,
    times: np.ndarray,
    replicas: int,
    master_seed: int = 0,
    initial_infected: Optional[Sequence[int]] = None,
    t_max: Optional[float] = None,
) -> SurvivalCurve:
    """Run an ensemble and estimate P(T_ext > t) on the grid."""
    times = np.asarray(times, dtype=float)
    horizon = float(times[-1]) * 4 + 10.0 if t_max is None else t_max
    t_ext = extinction_times(
        params, replicas, master_seed, initial_infected, t_max=horizon
    )
    return survival_from_times(t_ext, times)
