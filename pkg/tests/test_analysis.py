import math

import numpy as np
import pytest

from epinet.analysis import (
    fit_exponent,
    plateau,
    survival_curve,
    survival_from_times,
    synthetic_curve,
)
from epinet.dynamics import estimate_I_N, extinction_times
from epinet.model import FactorKernel, ModelParams, ParameterError, PreferentialAttachmentKernel
from epinet.oracle import build_generator, survival_probability


def _params(n, beta=1.0, gamma=0.5, eta=0.0, kappa0=1.0, lam=0.5, kind=FactorKernel):
    return ModelParams(n, kind(beta, gamma), eta, kappa0, lam)


# ---------------------------------------------------------------------------
# plateau
# ---------------------------------------------------------------------------

def test_plateau_constant_curve():
    times = np.linspace(0.0, 40.0, 41)
    curve = synthetic_curve(times, np.full(41, 0.3))
    est = plateau(curve)
    assert est.rho_hat == pytest.approx(0.3, rel=1e-12)
    assert est.flatness == 0.0
    assert not est.no_plateau


def test_plateau_decaying_curve_flagged():
    times = np.linspace(0.0, 10.0, 101)
    curve = synthetic_curve(times, np.exp(-times), n=10**6)
    est = plateau(curve)
    assert est.no_plateau
    assert est.flatness > 0.0


def test_plateau_all_extinct():
    times = np.linspace(0.0, 10.0, 11)
    dens = np.where(times < 3.0, 0.5, 0.0)
    curve = synthetic_curve(times, dens)
    est = plateau(curve)
    assert est.rho_hat == 0.0
    assert est.no_plateau
    assert est.n_replicas_surviving == 0


def test_plateau_window_validation():
    times = np.linspace(0.0, 10.0, 11)
    curve = synthetic_curve(times, np.full(11, 0.2))
    with pytest.raises(ParameterError):
        plateau(curve, burn_in=0.7, window=(0.5, 0.9))
    with pytest.raises(ParameterError):
        plateau(curve, window=(0.9, 0.5))


def test_plateau_window_stability():
    """Windows [1/3, 2/3] and [2/3, 1] of a 60-unit run agree within 3 SE."""
    p = _params(300, gamma=0.7, lam=0.5, kind=PreferentialAttachmentKernel)
    times = np.linspace(0.0, 60.0, 61)
    curve = estimate_I_N(p, times, 60, master_seed=17)
    early = plateau(curve, burn_in=0.25, window=(1.0 / 3.0, 2.0 / 3.0))
    late = plateau(curve, burn_in=0.25, window=(2.0 / 3.0, 1.0))
    tol = 3 * math.hypot(early.se, late.se)
    assert abs(early.rho_hat - late.rho_hat) < tol


def test_plateau_monotone_in_lambda():
    p = _params(100, gamma=0.7, kind=PreferentialAttachmentKernel)
    times = np.linspace(0.0, 30.0, 31)
    ests = []
    for i, lam in enumerate((0.3, 0.6)):
        curve = estimate_I_N(p.with_lambda(lam), times, 80, master_seed=100 + i)
        ests.append(plateau(curve))
    tol = 3 * math.hypot(ests[0].se, ests[1].se)
    assert ests[1].rho_hat >= ests[0].rho_hat - tol


# ---------------------------------------------------------------------------
# exponent fit
# ---------------------------------------------------------------------------

def test_fit_exponent_exact_power():
    lams = [0.1, 0.2, 0.4]
    fit = fit_exponent(lams, [l ** 4 for l in lams])
    assert fit.slope == pytest.approx(4.0, rel=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_exponent_prefactor_absorbed():
    lams = [0.05, 0.1, 0.2, 0.4]
    for c in (0.3, 7.0):
        fit = fit_exponent(lams, [c * l ** 1.5 for l in lams])
        assert fit.slope == pytest.approx(1.5, rel=1e-10)
        assert fit.intercept == pytest.approx(math.log(c), rel=1e-9)


def test_fit_exponent_noisy():
    rng = np.random.default_rng(3)
    lams = np.geomspace(0.05, 0.5, 8)
    rhos = lams ** 4 * (1.0 + 0.01 * rng.standard_normal(8))
    fit = fit_exponent(lams, rhos)
    assert 3.9 < fit.slope < 4.1


def test_fit_exponent_validation():
    with pytest.raises(ParameterError):
        fit_exponent([0.1, 0.2], [0.1, 0.2])
    with pytest.raises(ParameterError):
        fit_exponent([0.1, 0.1, 0.1], [0.1, 0.2, 0.3])
    with pytest.raises(ParameterError):
        fit_exponent([0.1, 0.2, 1.5], [0.1, 0.2, 0.3])
    with pytest.raises(ParameterError):
        fit_exponent([0.1, 0.2, 0.4], [0.1, -0.2, 0.3])


# ---------------------------------------------------------------------------
# survival curves
# ---------------------------------------------------------------------------

def test_survival_at_zero():
    curve = survival_from_times(np.array([1.0, 2.0, 3.0]), np.array([0.0, 1.5]))
    assert curve.probability[0] == 1.0


def test_survival_single_vertex_exponential():
    p = _params(1, lam=0.9)
    times = np.array([0.0, 0.5, 1.0, 2.0])
    curve = survival_curve(p, times, 4000, master_seed=19)
    for k, t in enumerate(times):
        expect = math.exp(-t)
        assert curve.wilson_low[k] - 0.01 <= expect <= curve.wilson_high[k] + 0.01


def test_survival_vs_oracle():
    p = _params(2, lam=0.8)
    sp = build_generator(p)
    times = np.array([0.5, 1.0, 2.0])
    curve = survival_curve(p, times, 20_000, master_seed=20)
    for k, t in enumerate(times):
        exact = survival_probability(sp, float(t))
        se = math.sqrt(max(exact * (1 - exact), 1e-6) / 20_000)
        assert abs(curve.probability[k] - exact) < 3 * se


def test_survival_censoring_counts_as_alive():
    t_ext = np.array([0.5, math.nan, 2.0, math.nan])
    curve = survival_from_times(t_ext, np.array([1.0]))
    assert curve.probability[0] == pytest.approx(0.75)
    assert curve.mean_t_ext == pytest.approx(1.25)


def test_mean_extinction_time_reported():
    p = _params(2, lam=0.5)
    te = extinction_times(p, 2000, master_seed=21)
    curve = survival_from_times(te, np.array([0.0, 1.0]))
    assert curve.mean_t_ext == pytest.approx(np.nanmean(te))


# ---------------------------------------------------------------------------
# estimator consistency
# ---------------------------------------------------------------------------

def test_se_shrinks_with_replicas():
    """Doubling the replica count shrinks the SE by about 1/sqrt(2)."""
    p = _params(20, lam=0.4)
    times = np.array([0.0, 1.0, 2.0])
    ratios = []
    for trial in range(10):
        small = estimate_I_N(p, times, 200, master_seed=1000 + trial)
        big = estimate_I_N(p, times, 400, master_seed=5000 + trial)
        ratios.append(big.se[1] / small.se[1])
    mean_ratio = float(np.mean(ratios))
    assert abs(mean_ratio - 1.0 / math.sqrt(2.0)) < 0.2 * (1.0 / math.sqrt(2.0))
