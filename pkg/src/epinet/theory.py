"""Closed-form analytic layer: survival strategies, phases and score bounds.

Everything here is pure arithmetic on the model parameters:

* the delayed time scale T(a, lambda), solving T*log^2 T = c1*theta/(20*kappa0^2) * lambda^2 * a^(-gamma*(1-2*eta));
* the four survival-strategy threshold conditions and their maximal-order
  star cutoffs a(lambda), with a0 the dominant one;
* fast/slow phase classification and the metastability exponent xi
  (exact rational arithmetic when gamma, eta are Fractions);
* the kernel-specific scoring functions S with their cutoffs a1, the
  constant cap d_max for the drift constant D, discrete verification of
  the score inequalities, and the resulting density upper bound;
* a Chernoff tail bound used when sizing replica ensembles.

Universal constants the theory only proves to exist (the strategy
thresholds M, the density prefactor c', the cutoff prefactor r) default
to 1 and are overridable through StrategyConstants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import quad

from .model import (
    CustomKernel,
    FactorKernel,
    KernelKind,
    ModelParams,
    ParameterError,
    PreferentialAttachmentKernel,
    kernel_bounds,
    probability_row,
)


class RegimeError(ValueError):
    """Parameters sit on an excluded boundary or outside the catalogue."""


Exact = Union[Fraction, float]


# =============================================================================
# Strategies, phases, constants
# =============================================================================

class Strategy(Enum):
    QUICK_DIRECT = "quick_direct"
    QUICK_INDIRECT = "quick_indirect"
    DELAYED_DIRECT = "delayed_direct"
    DELAYED_INDIRECT = "delayed_indirect"


class Phase(Enum):
    FAST_EXTINCTION = "fast"
    SLOW_EXTINCTION = "slow"
    BOUNDARY = "boundary"


@dataclass(frozen=True)
class StrategyConstants:
    """Threshold constants M per strategy, cutoff prefactor r, density prefactor c'.

    The theory only proves these exist; defaults of 1 make the closed
    forms canonical and the tests deterministic.
    """

    m_quick_direct: float = 1.0
    m_quick_indirect: float = 1.0
    m_delayed_direct: float = 1.0
    m_delayed_indirect: float = 1.0
    r: float = 1.0
    c_prime: float = 1.0

    def m_for(self, strategy: Strategy) -> float:
        return {
            Strategy.QUICK_DIRECT: self.m_quick_direct,
            Strategy.QUICK_INDIRECT: self.m_quick_indirect,
            Strategy.DELAYED_DIRECT: self.m_delayed_direct,
            Strategy.DELAYED_INDIRECT: self.m_delayed_indirect,
        }[strategy]

    def with_m(self, strategy: Strategy, value: float) -> "StrategyConstants":
        fieldname = {
            Strategy.QUICK_DIRECT: "m_quick_direct",
            Strategy.QUICK_INDIRECT: "m_quick_indirect",
            Strategy.DELAYED_DIRECT: "m_delayed_direct",
            Strategy.DELAYED_INDIRECT: "m_delayed_indirect",
        }[strategy]
        return replace(self, **{fieldname: value})


DEFAULT_CONSTANTS = StrategyConstants()


@dataclass(frozen=True)
class PhaseResult:
    phase: Phase
    xi: Optional[Exact] = None
    dominant_strategy: Optional[Strategy] = None

    def __post_init__(self):
        if self.phase is Phase.SLOW_EXTINCTION:
            if self.xi is None or not self.xi > 0:
                raise ParameterError("slow extinction requires xi > 0")
        elif self.xi is not None:
            raise ParameterError("xi is only defined for slow extinction")


# =============================================================================
# theta, T(a, lambda), T_lambda(x)
# =============================================================================

def theta(params: ModelParams) -> float:
    """theta = exp(-2*(1 + kappa0 * 2**(gamma*eta)))."""
    return math.exp(-2.0 * (1.0 + params.kappa0 * 2.0 ** (params.gamma * params.eta)))


def _t_rhs(a: float, lam: float, params: ModelParams) -> float:
    c1, _ = kernel_bounds(params.kernel)
    return (c1 * theta(params) / (20.0 * params.kappa0 ** 2)) * lam ** 2 * a ** (
        -params.gamma * (1.0 - 2.0 * params.eta)
    )


def solve_T(a: float, lam: float, params: ModelParams) -> float:
    """Unique T >= 1 with T*log^2 T equal to the delayed-strategy right side.

    Solved by bisection to 1e-12 relative; a vanishing right side maps
    to T = 1 where T*log^2 T itself vanishes.
    """
    if not 0.0 < a < 1.0:
        raise ParameterError(f"a must lie in (0,1), got {a}")
    if not lam > 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    return _solve_tlog2(_t_rhs(a, lam, params))


def _solve_tlog2(rhs: float) -> float:
    if rhs <= 0.0:
        return 1.0
    f = lambda t: t * math.log(t) ** 2 - rhs
    hi = 2.0
    while f(hi) < 0.0:
        hi *= 2.0
    lo = 1.0
    # refine to float exhaustion: near T = 1 the map is flat, so a relative
    # width cut-off alone leaves a large round-trip residual
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def time_scale(x, lam: float, params: ModelParams):
    """T_lambda(x) = max(lambda^2 * x**(-gamma*(1-2*eta)), 1)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(x > 1):
        raise ParameterError("x must lie in (0,1]")
    out = np.maximum(lam ** 2 * x ** (-params.gamma * (1.0 - 2.0 * params.eta)), 1.0)
    return float(out) if out.ndim == 0 else out


# =============================================================================
# Strategy conditions and maximal cutoffs
# =============================================================================

def _exceeds(value: float, m: float) -> bool:
    # strict inequality at float resolution: a value landing on the
    # threshold up to rounding (e.g. 1 + 2 ulp from pow) does not count
    return value > m * (1.0 + 1e-12)


def strategy_holds(
    strategy: Strategy,
    a: float,
    lam: float,
    params: ModelParams,
    consts: StrategyConstants = DEFAULT_CONSTANTS,
) -> bool:
    """Evaluate the threshold condition of one survival strategy at cutoff a.

    Kernel values enter uncapped; delayed variants additionally require
    T(a, lambda) itself to clear the threshold.  The inequalities are
    strict: values within rounding of the threshold do not qualify.
    """
    if not 0.0 < a < 0.5:
        raise ParameterError(f"star cutoff a must lie in (0, 1/2), got {a}")
    m = consts.m_for(strategy)
    ker = params.kernel
    if strategy is Strategy.QUICK_DIRECT:
        return _exceeds(lam * a * float(ker(a, a)), m)
    if strategy is Strategy.QUICK_INDIRECT:
        return _exceeds(lam ** 2 * a * float(ker(a, 1.0)) ** 2, m)
    t = solve_T(a, lam, params)
    if strategy is Strategy.DELAYED_DIRECT:
        return _exceeds(t, m) and _exceeds(lam * a * t * float(ker(a, a)), m)
    if strategy is Strategy.DELAYED_INDIRECT:
        return _exceeds(t, m) and _exceeds(lam ** 2 * a * t * float(ker(a, 1.0)) ** 2, m)
    raise ParameterError(f"unknown strategy {strategy}")


def _log_corrected(lam: float, p: int, q: float, r: float) -> float:
    # r * [lam^p / (log lam)^2]^(1/q)
    return r * (lam ** p / math.log(lam) ** 2) ** (1.0 / q)


def maximal_a(
    strategy: Strategy,
    lam: float,
    params: ModelParams,
    consts: StrategyConstants = DEFAULT_CONSTANTS,
) -> Optional[float]:
    """Closed-form maximal-order star cutoff a(lambda), or None if inadmissible.

    Admissibility follows the strict catalogue conditions; boundary
    parameter values (e.g. gamma exactly 1/2) are treated as
    inadmissible rather than picking a side.  The returned value is the
    raw closed form: for lambda near 1 it can exceed the a < 1/2 domain
    of strategy_holds, which callers must enforce themselves.
    """
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"lambda must lie in (0,1), got {lam}")
    g, e, r = params.gamma, params.eta, consts.r
    ker = params.kernel
    delayed_exponent = 3.0 * g - 2.0 * g * e - 1.0  # positive iff gamma > 1/(3-2*eta)

    if isinstance(ker, FactorKernel):
        if strategy is Strategy.QUICK_DIRECT:
            return r * lam ** (1.0 / (2.0 * g - 1.0)) if g > 0.5 else None
        if strategy is Strategy.QUICK_INDIRECT:
            return r * lam ** (2.0 / (2.0 * g - 1.0)) if g > 0.5 else None
        if strategy is Strategy.DELAYED_DIRECT:
            if e < 0.5 and delayed_exponent > 0:
                return _log_corrected(lam, 3, delayed_exponent, r)
            return None
        if strategy is Strategy.DELAYED_INDIRECT:
            if e < 0.5 and delayed_exponent > 0:
                return _log_corrected(lam, 4, delayed_exponent, r)
            return None
    elif isinstance(ker, PreferentialAttachmentKernel):
        if strategy is Strategy.QUICK_DIRECT:
            # lam * a * p(a,a) = beta * lam is constant in a: never clears a
            # threshold as lambda -> 0.
            return None
        if strategy is Strategy.QUICK_INDIRECT:
            return r * lam ** (2.0 / (2.0 * g - 1.0)) if g > 0.5 else None
        if strategy is Strategy.DELAYED_DIRECT:
            if e < 0.5:
                return _log_corrected(lam, 3, g * (1.0 - 2.0 * e), r)
            return None
        if strategy is Strategy.DELAYED_INDIRECT:
            if e < 0.5 and delayed_exponent > 0:
                return _log_corrected(lam, 4, delayed_exponent, r)
            return None
    else:
        raise RegimeError("maximal_a closed forms exist only for factor and PA kernels")
    raise ParameterError(f"unknown strategy {strategy}")


def bisect_maximal_a(
    strategy: Strategy,
    lam: float,
    params: ModelParams,
    consts: StrategyConstants,
    lo: float = 1e-12,
    hi: float = 0.5 - 1e-12,
    tol: float = 1e-12,
) -> Optional[float]:
    """Numeric route to the largest a in (0, 1/2) satisfying strategy_holds.

    Independent cross-check for the closed forms: the condition is
    monotone near its boundary, so a bisection on the indicator locates
    the maximal admissible cutoff.
    """
    if strategy_holds(strategy, hi, lam, params, consts):
        return hi
    if not strategy_holds(strategy, lo, lam, params, consts):
        return None
    while hi - lo > tol * hi:
        mid = math.sqrt(lo * hi)  # geometric: cutoffs span many decades
        if strategy_holds(strategy, mid, lam, params, consts):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def a0(
    lam: float,
    params: ModelParams,
    consts: StrategyConstants = DEFAULT_CONSTANTS,
) -> Optional[tuple[float, Strategy]]:
    """Largest maximal cutoff over the admissible strategies, with its argmax.

    None in the fast-extinction region where every strategy is
    inadmissible.  The comparison is numeric at the given lambda, which
    matches the asymptotic dominant strategy once lambda is small.
    """
    best: Optional[tuple[float, Strategy]] = None
    for strategy in Strategy:
        a = maximal_a(strategy, lam, params, consts)
        if a is not None and (best is None or a > best[0]):
            best = (a, strategy)
    return best


def lower_density_bound(
    lam: float,
    params: ModelParams,
    consts: StrategyConstants = DEFAULT_CONSTANTS,
) -> Optional[float]:
    """c' * min(lambda * a0 * p(a0, 1), 1), or None in the fast region."""
    pick = a0(lam, params, consts)
    if pick is None:
        return None
    a, _ = pick
    return consts.c_prime * min(lam * a * float(params.kernel(a, 1.0)), 1.0)


# =============================================================================
# Phase classification (exact when inputs are Fractions)
# =============================================================================

def _exactify(value: Exact) -> Exact:
    if isinstance(value, (Fraction, int)):
        return Fraction(value)
    return float(value)


def _kernel_family(kind) -> str:
    if isinstance(kind, str):
        k = kind.strip().lower()
        if k in ("factor", "pa"):
            return k
        raise ParameterError(f"kernel kind must be 'factor' or 'pa', got {kind!r}")
    if isinstance(kind, FactorKernel):
        return "factor"
    if isinstance(kind, PreferentialAttachmentKernel):
        return "pa"
    raise RegimeError("phase classification covers only factor and PA kernels")


def classify_phase(kernel_kind, gamma: Exact, eta: Exact) -> PhaseResult:
    """Fast/slow classification with the metastability exponent.

    gamma and eta may be Fractions, in which case every comparison and
    the returned xi are exact.  Parameter points sitting exactly on a
    fast/slow boundary return Phase.BOUNDARY.
    """
    family = _kernel_family(kernel_kind)
    g = _exactify(gamma)
    e = _exactify(eta)
    if not 0 < g < 1:
        raise ParameterError(f"gamma must lie in (0,1), got {gamma}")
    if e < 0:
        raise ParameterError(f"eta must be >= 0, got {eta}")
    half = Fraction(1, 2) if isinstance(g, Fraction) and isinstance(e, Fraction) else 0.5

    if family == "factor":
        threshold = 1 / (3 - 2 * e) if e < half else half
        if g < threshold:
            return PhaseResult(Phase.FAST_EXTINCTION)
        if g == threshold:
            return PhaseResult(Phase.BOUNDARY)
        split = 2 / (3 + 2 * e)
        if g < split:
            xi = (2 - 2 * g * e) / (3 * g - 2 * g * e - 1)
            return PhaseResult(Phase.SLOW_EXTINCTION, xi, Strategy.DELAYED_DIRECT)
        if g == split:
            # both branch formulas agree here; the strategies tie
            xi = g / (2 * g - 1)
            return PhaseResult(Phase.SLOW_EXTINCTION, xi, None)
        return PhaseResult(Phase.SLOW_EXTINCTION, g / (2 * g - 1), Strategy.QUICK_DIRECT)

    # preferential attachment
    if e >= half:
        if g < half:
            return PhaseResult(Phase.FAST_EXTINCTION)
        if g == half:
            return PhaseResult(Phase.BOUNDARY)
        return PhaseResult(
            Phase.SLOW_EXTINCTION, 1 / (2 * g - 1), Strategy.QUICK_INDIRECT
        )
    split_lo = 3 / (5 + 2 * e)
    split_hi = 1 / (1 + 2 * e)
    if g < split_lo:
        xi = (3 - 2 * g - 2 * g * e) / (g - 2 * g * e)
        return PhaseResult(Phase.SLOW_EXTINCTION, xi, Strategy.DELAYED_DIRECT)
    if g == split_lo:
        xi = (3 - g - 2 * g * e) / (3 * g - 2 * g * e - 1)
        return PhaseResult(Phase.SLOW_EXTINCTION, xi, None)
    if g < split_hi:
        xi = (3 - g - 2 * g * e) / (3 * g - 2 * g * e - 1)
        return PhaseResult(Phase.SLOW_EXTINCTION, xi, Strategy.DELAYED_INDIRECT)
    if g == split_hi:
        xi = 1 / (2 * g - 1)
        return PhaseResult(Phase.SLOW_EXTINCTION, xi, None)
    return PhaseResult(Phase.SLOW_EXTINCTION, 1 / (2 * g - 1), Strategy.QUICK_INDIRECT)


# =============================================================================
# Scoring functions and the drift constant cap
# =============================================================================

def d_max(params: ModelParams) -> float:
    """Largest admissible drift constant D.

    min(kappa0/4, kappa0^2*(1-gamma)/(64*beta), 1/16) for the built-in
    kernels; custom kernels use kappa0^2/(64*c2) for the middle term,
    which coincides with the built-in form when c2 = beta/(1-gamma).
    """
    k0 = params.kappa0
    ker = params.kernel
    if isinstance(ker, (FactorKernel, PreferentialAttachmentKernel)):
        mid = k0 ** 2 * (1.0 - ker.gamma) / (64.0 * ker.beta)
    else:
        mid = k0 ** 2 / (64.0 * kernel_bounds(ker)[1])
    return min(k0 / 4.0, mid, 1.0 / 16.0)


@dataclass(frozen=True)
class ScoringFunction:
    """A candidate score shape S on [a1, 1] (or (0,1] when a1 = 0)."""

    regime: str
    func: Callable[[np.ndarray], np.ndarray]
    a1: float
    gamma: float
    eta: float
    lam: float
    rho: Optional[float] = None
    gamma_prime: Optional[float] = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = self.func(x)
        return float(out) if out.ndim == 0 else out


def _check_degenerate_exponents(exponents: dict[str, float]) -> None:
    for name, value in exponents.items():
        if abs(value + 1.0) < 1e-9:
            raise RegimeError(
                f"integral exponent {name} = {value} hits -1; the log-corrected "
                "bound is out of the catalogue"
            )


def scoring_function(
    params: ModelParams,
    d: Optional[float] = None,
    r: float = 1.0,
    gamma_prime: Optional[float] = None,
) -> ScoringFunction:
    """The catalogue scoring function S and cutoff a1 for params' regime.

    d (the drift constant D, defaulting to d_max) only enters through
    rho = 2/D in the PA gamma > 1/2 shape.  Exact boundary parameters
    and exponent degeneracies raise RegimeError.
    """
    g, e, lam = params.gamma, params.eta, params.lam
    if not 0 < lam < 1:
        raise ParameterError(f"scoring functions assume lambda in (0,1), got {lam}")
    if d is None:
        d = d_max(params)
    alpha = g * (1.0 - 2.0 * e)
    tl = lambda x: np.maximum(lam ** 2 * np.asarray(x, dtype=float) ** -alpha, 1.0)
    family = _kernel_family(params.kernel)

    if family == "factor":
        if g == 0.5 or (e < 0.5 and g == 1.0 / (3.0 - 2.0 * e)):
            raise RegimeError(f"factor kernel excludes gamma in {{1/2, 1/(3-2*eta)}}, got {g}")
        if e < 0.5:
            # for eta >= 1/2 the time scale is 1 and only -2*gamma (never -1
            # since gamma != 1/2) appears in the integrals
            _check_degenerate_exponents(
                {
                    "-gamma*(3-2*eta)": -g * (3 - 2 * e),
                    "-gamma*(2-2*eta)": -g * (2 - 2 * e),
                }
            )
        func = lambda x: tl(x) * np.asarray(x, dtype=float) ** -g
        if (e < 0.5 and g < 1.0 / (3.0 - 2.0 * e)) or (e >= 0.5 and g < 0.5):
            return ScoringFunction("factor_fast", func, 0.0, g, e, lam)
        # the cutoff exponents of adjacent branches coincide at the branch
        # boundary gamma = 2/(3+2*eta), so <= picks a continuous value
        if e < 0.5 and g <= 2.0 / (3.0 + 2.0 * e):
            a1 = r * lam ** (3.0 / (3.0 * g - 2.0 * g * e - 1.0))
            return ScoringFunction("factor_delayed", func, a1, g, e, lam)
        a1 = r * lam ** (1.0 / (2.0 * g - 1.0))
        return ScoringFunction("factor_quick", func, a1, g, e, lam)

    # preferential attachment
    if g == 0.5:
        raise RegimeError("PA kernel excludes gamma = 1/2")
    if g > 0.5:
        rho = 2.0 / d
        func = lambda x: tl(x) * (
            np.asarray(x, dtype=float) ** (g - 1.0)
            + rho * lam * np.asarray(x, dtype=float) ** -g
        )
        if e < 0.5:
            _check_degenerate_exponents(
                {
                    "-1-alpha": -1 - alpha,
                    "-alpha-2*gamma": -alpha - 2 * g,
                    "2*gamma-2-alpha": 2 * g - 2 - alpha,
                }
            )
        # adjacent cutoff exponents agree at both branch boundaries
        # (3/alpha = 4/(2g+alpha-1) at g = 3/(5+2e), etc.), so <= is continuous
        split_lo = 3.0 / (5.0 + 2.0 * e)
        split_hi = 1.0 / (1.0 + 2.0 * e)
        if g <= split_lo:
            a1 = r * lam ** (3.0 / alpha)
            regime = "pa_high_delayed_direct"
        elif g <= split_hi:
            a1 = r * lam ** (4.0 / (2.0 * g + alpha - 1.0))
            regime = "pa_high_delayed_indirect"
        else:
            a1 = r * lam ** (2.0 / (2.0 * g - 1.0))
            regime = "pa_high_quick_indirect"
        return ScoringFunction(regime, func, a1, g, e, lam, rho=rho)
    if e < 0.5:
        func = lambda x: tl(x) * (
            np.asarray(x, dtype=float) ** -g + lam * np.asarray(x, dtype=float) ** (g - 1.0)
        )
        _check_degenerate_exponents(
            {
                "-2*gamma-alpha": -2 * g - alpha,
                "-1-alpha": -1 - alpha,
                "2*gamma-2-alpha": 2 * g - 2 - alpha,
            }
        )
        a1 = r * lam ** (3.0 / alpha)
        return ScoringFunction("pa_low_delayed", func, a1, g, e, lam)
    # eta >= 1/2 has T_lambda = 1 for lambda < 1, so eta = 1/2 joins this branch
    gp = 0.5 if gamma_prime is None else float(gamma_prime)
    if not g < gp < 1.0 - g:
        raise ParameterError(f"gamma_prime must lie in ({g}, {1.0 - g}), got {gp}")
    func = lambda x: np.asarray(x, dtype=float) ** -gp
    return ScoringFunction("pa_fast", func, 0.0, g, e, lam, gamma_prime=gp)


def default_delta(params: ModelParams) -> float:
    """An exponent with T_lambda <= const * S**delta in the fast regimes."""
    if params.eta < 0.5:
        return (1.0 - 2.0 * params.eta) / (2.0 - 2.0 * params.eta)
    return 0.1


# =============================================================================
# Discrete score-inequality verification
# =============================================================================

@dataclass(frozen=True)
class CondSReport:
    passed: bool
    worst_margin: float  # max over x of LHS/RHS; pass iff <= 1
    worst_x: int
    mode: str
    lam: float
    d: float
    n: int


def verify_condS(
    score: ScoringFunction,
    params: ModelParams,
    d: Optional[float] = None,
    mode: str = "global",
) -> CondSReport:
    """Exact discrete check of the score inequality at this N.

    global mode (a1 = 0):  for every x in 1..N,
        lambda * T_lambda(x/N) * sum_y p_xy * S(y/N) <= D * S(x/N).
    cutoff mode (a1 > 0):  for x in floor(a1*N)+1 .. N, with S evaluated
    at (y v ceil(a1*N))/N inside the sum.

    Failing at a concrete N carries no asymptotic conclusion; the report
    only states the worst ratio at this N.
    """
    n = params.n
    if n < 2:
        raise ParameterError("condS verification needs N >= 2")
    if d is None:
        d = d_max(params)
    lam = params.lam
    ys = np.arange(1, n + 1, dtype=float)
    if mode == "global":
        x_start = 1
        s_at = score(ys / n)
    elif mode == "cutoff":
        if score.a1 <= 0:
            raise ParameterError("cutoff mode needs a scoring function with a1 > 0")
        ceil_a1n = int(math.ceil(score.a1 * n))
        if ceil_a1n < 1:
            raise ParameterError("cutoff mode needs a1*N >= 1")
        x_start = int(math.floor(score.a1 * n)) + 1
        if x_start > n:
            raise ParameterError("cutoff a1 leaves no x to verify")
        s_at = score(np.maximum(ys, float(ceil_a1n)) / n)
    else:
        raise ParameterError(f"mode must be 'global' or 'cutoff', got {mode!r}")

    worst = -math.inf
    worst_x = x_start
    tls = time_scale(ys / n, lam, params)
    for x in range(x_start, n + 1):
        row = probability_row(params, x)
        lhs = lam * float(tls[x - 1]) * float(row @ s_at)
        rhs = d * float(score(x / n))
        ratio = lhs / rhs
        if ratio > worst:
            worst, worst_x = ratio, x
    return CondSReport(bool(worst <= 1.0), float(worst), worst_x, mode, lam, d, n)


def find_passing_lambda(
    params: ModelParams,
    d: Optional[float] = None,
    lam_start: float = 0.1,
    max_halvings: int = 24,
    r: float = 1.0,
) -> Optional[float]:
    """Halving search for a lambda <= lam_start passing global-mode condS.

    Returns the first passing lambda, or None if none is found before
    the halving budget runs out (the expected outcome at slow-extinction
    parameter points).
    """
    lam = lam_start
    for _ in range(max_halvings):
        trial = params.with_lambda(lam)
        score = scoring_function(trial, d=d, r=r)
        if verify_condS(score, trial, d=d, mode="global").passed:
            return lam
        lam *= 0.5
    return None


# =============================================================================
# Density upper bound and Chernoff utility
# =============================================================================

def density_upper_bound(score: ScoringFunction, rel_tol: float = 1e-10) -> float:
    """a1 + (1/S(a1)) * integral_a1^1 S(y) dy via adaptive quadrature."""
    a1 = score.a1
    if not a1 > 0:
        raise ParameterError("density upper bound needs a scoring cutoff a1 > 0")
    if a1 >= 1:
        raise ParameterError(f"cutoff a1 = {a1} leaves an empty integration range")
    integral, err = quad(lambda y: float(score(y)), a1, 1.0, epsrel=rel_tol, limit=500)
    if not math.isfinite(integral) or (integral > 0 and err / integral > 1e-8):
        raise RegimeError(f"score integral did not converge (value {integral}, err {err})")
    return a1 + integral / float(score(a1))


def chernoff_bound(n: int, q: float, s: float) -> float:
    """Binomial lower-tail bound P(X < s*n*q) <= exp(-D*n) for s < 1.

    D = s*q*log(s) + (1 - s*q)*log((1-s*q)/(1-q)).  Used when choosing
    replica counts so that ensemble-level events are reliable.
    """
    if not (0.0 < q < 1.0):
        raise ParameterError(f"q must lie in (0,1), got {q}")
    if not (0.0 < s < 1.0):
        raise ParameterError(f"s must lie in (0,1), got {s}")
    if int(n) != n or n < 1:
        raise ParameterError(f"n must be a positive integer, got {n}")
    d = s * q * math.log(s) + (1.0 - s * q) * math.log((1.0 - s * q) / (1.0 - q))
    return math.exp(-d * n)
