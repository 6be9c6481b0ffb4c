"""Wait-and-see upper-bound process and the supermartingale score monitor.

The wait-and-see process tracks revealed pairs instead of the actual
graph: infected vertices recover at rate 1, infect through revealed
pairs at rate lambda and through unrevealed pairs at rate
lambda * p_xy (which also reveals the pair), mutually infected
unrevealed pairs reveal at rate lambda * p_xy, and a vertex update
un-reveals its whole row.

The score of a configuration is M = sum_x m(x) with

    m(x) = s(x) + (2*lam*N(x)/kappa_x ^ 1/2) * 2*t(x)   if x infected,
    m(x) = (2*lam*N(x)/kappa_x ^ 1) * (s(x) + t(x))     if x healthy,

where s(x) = S(x/N), t(x) = c * s(x) / (T_lambda(x/N) * kappa_x) and
N(x) counts revealed neighbours.  When the discrete score inequality
holds at this N, applying the exact generator to M is bounded by
-(1/2)
 * (sum over healthy x of kappa_x m(x) + sum over infected x of kappa_x t(x)),
so the drift is non-positive state by state; exact_drift evaluates the
generator by full event enumeration so that bound can be audited
literally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from . import _kernels as _k
from .dynamics import SimConfig, SimulationError, Trajectory, _initial_vector
from .model import ModelParams, ParameterError, kernel_bounds, probability_matrix, update_rates
from .theory import (
    RegimeError,
    ScoringFunction,
    d_max,
    default_delta,
    scoring_function,
    time_scale,
)


# =============================================================================
# Score configuration
# =============================================================================

def score_constant(params: ModelParams) -> float:
    """c = min(kappa0, kappa0^2/(16*c2), 1/4)."""
    _, c2 = kernel_bounds(params.kernel)
    k0 = params.kappa0
    return min(k0, k0 ** 2 / (16.0 * c2), 0.25)


@dataclass(frozen=True)
class ScoreConfig:
    """Scoring function with its drift constant D, exponent delta and cap c.

    Validates the constant chain the drift argument needs: D within the
    condD cap and c > 4*D (the default D is c/4 shaved by an epsilon, as
    the derived c2 padding otherwise lands exactly on c = 4*D).
    """

    score: ScoringFunction
    delta: float
    d: float
    c: float

    @classmethod
    def for_params(
        cls,
        params: ModelParams,
        score: Optional[ScoringFunction] = None,
        d: Optional[float] = None,
        delta: Optional[float] = None,
    ) -> "ScoreConfig":
        c = score_constant(params)
        if d is None:
            d = min(d_max(params), 0.25 * c) * (1.0 - 1e-9)
        if score is None:
            score = scoring_function(params, d=d)
        if delta is None:
            delta = default_delta(params)
        return cls(score=score, delta=delta, d=d, c=c)

    @classmethod
    def trivial(cls, params: ModelParams) -> "ScoreConfig":
        """Constant score S = 1; valid as an observable for any parameters."""
        c = score_constant(params)
        score = ScoringFunction(
            "constant", lambda x: np.ones_like(np.asarray(x, dtype=float)), 0.0,
            params.gamma, params.eta, params.lam,
        )
        return cls(score=score, delta=0.5, d=min(d_max(params), 0.25 * c) * (1.0 - 1e-9), c=c)

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ParameterError(f"delta must lie in (0,1), got {self.delta}")
        if not self.d > 0:
            raise ParameterError(f"D must be positive, got {self.d}")
        if not self.c > 4.0 * self.d:
            raise ParameterError(
                f"score constant c={self.c} must exceed 4*D={4.0 * self.d}"
            )

    def tables(self, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
        """Per-vertex (s, t) with s(x)=S(x/N), t(x)=c*s(x)/(T_lambda*kappa_x)."""
        xs = np.arange(1, params.n + 1, dtype=float) / params.n
        s = np.asarray(self.score(xs), dtype=float)
        t = self.c * s / (time_scale(xs, params.lam, params) * update_rates(params))
        return s, t


# =============================================================================
# State and per-vertex scores
# =============================================================================

@dataclass
class WaitSeeState:
    """Infection flags plus the symmetric revealed-pair matrix."""

    y_infected: np.ndarray  # bool (N,)
    revealed: np.ndarray  # bool (N, N), symmetric, zero diagonal

    def __post_init__(self):
        self.y_infected = np.asarray(self.y_infected, dtype=bool)
        self.revealed = np.asarray(self.revealed, dtype=bool)
        n = self.y_infected.shape[0]
        if self.revealed.shape != (n, n):
            raise ParameterError("revealed matrix shape mismatch")
        if not np.array_equal(self.revealed, self.revealed.T):
            raise ParameterError("revealed matrix must be symmetric")
        if np.any(np.diag(self.revealed)):
            raise ParameterError("revealed matrix must have a zero diagonal")

    @property
    def n(self) -> int:
        return self.y_infected.shape[0]

    @property
    def n_revealed(self) -> np.ndarray:
        """Per-vertex revealed-neighbour counts N(x)."""
        return self.revealed.sum(axis=1).astype(np.int64)

    @classmethod
    def from_sets(
        cls, n: int, infected: Iterable[int], revealed_pairs: Iterable[tuple[int, int]] = ()
    ) -> "WaitSeeState":
        inf = np.zeros(n, dtype=bool)
        for v in infected:
            inf[v - 1] = True
        rev = np.zeros((n, n), dtype=bool)
        for i, j in revealed_pairs:
            if i == j:
                raise ParameterError("revealed pairs cannot be self-pairs")
            rev[i - 1, j - 1] = True
            rev[j - 1, i - 1] = True
        return cls(inf, rev)


def score_m(x: int, state: WaitSeeState, cfg: ScoreConfig, params: ModelParams) -> float:
    """Score of 1-based vertex x in the given wait-and-see state."""
    if not 1 <= x <= params.n:
        raise ParameterError(f"vertex {x} out of range 1..{params.n}")
    s, t = cfg.tables(params)
    n_rev = int(state.revealed[x - 1].sum())
    kap = update_rates(params)[x - 1]
    return _score_value(bool(state.y_infected[x - 1]), n_rev, s[x - 1], t[x - 1], kap, params.lam)


def _score_value(infected: bool, n_rev: int, s: float, t: float, kappa: float, lam: float) -> float:
    load = 2.0 * lam * n_rev / kappa
    if infected:
        return s + min(load, 0.5) * 2.0 * t
    return min(load, 1.0) * (s + t)


def total_score(state: WaitSeeState, cfg: ScoreConfig, params: ModelParams) -> float:
    s, t = cfg.tables(params)
    kap = update_rates(params)
    nrev = state.n_revealed
    return float(
        sum(
            _score_value(bool(state.y_infected[i]), int(nrev[i]), s[i], t[i], kap[i], params.lam)
            for i in range(params.n)
        )
    )


def exact_drift(
    state: WaitSeeState, cfg: ScoreConfig, params: ModelParams
) -> float:
    """Generator of the wait-and-see process applied to M at this state.

    Enumerates every possible next event (recovery, update, infection
    through revealed and unrevealed pairs, mutual reveal) with its rate
    and score delta and returns sum(rate * delta).
    """
    drift, _bound = drift_with_bound(state, cfg, params)
    return drift


def drift_with_bound(
    state: WaitSeeState, cfg: ScoreConfig, params: ModelParams
) -> tuple[float, float]:
    """(exact drift, analytic non-positive ceiling) at this state."""
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    s, t = cfg.tables(params)
    inf = state.y_infected.astype(np.uint8)
    rev = state.revealed.astype(np.uint8)
    nrev = state.n_revealed
    return _k._ws_drift(pmat, kappa, params.lam, inf, rev, nrev, s, t)


def exact_drift_reference(
    state: WaitSeeState, cfg: ScoreConfig, params: ModelParams
) -> float:
    """Plain-python event enumeration; slow mirror used to audit the core."""
    n = params.n
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    s, t = cfg.tables(params)
    lam = params.lam
    inf = state.y_infected
    rev = state.revealed
    nrev = state.n_revealed

    def m(v: int, infected: bool, k: int) -> float:
        return _score_value(infected, k, s[v], t[v], kappa[v], lam)

    drift = 0.0
    for x in range(n):
        cur = m(x, bool(inf[x]), int(nrev[x]))
        if inf[x]:
            drift += m(x, False, int(nrev[x])) - cur  # recovery, rate 1
        if nrev[x] > 0:  # update of x, rate kappa_x
            delta = m(x, bool(inf[x]), 0) - cur
            for w in range(n):
                if rev[x, w]:
                    delta += m(w, bool(inf[w]), int(nrev[w]) - 1) - m(w, bool(inf[w]), int(nrev[w]))
            drift += kappa[x] * delta
        else:
            drift += kappa[x] * (m(x, bool(inf[x]), 0) - cur)  # zero delta
        if inf[x]:
            gain_x = m(x, True, int(nrev[x]) + 1) - cur
            for y in range(n):
                if y == x:
                    continue
                if not inf[y]:
                    base_y = m(y, False, int(nrev[y]))
                    if rev[x, y]:
                        drift += lam * (m(y, True, int(nrev[y])) - base_y)
                    else:
                        drift += lam * pmat[x, y] * (
                            m(y, True, int(nrev[y]) + 1) - base_y + gain_x
                        )
                elif y > x and not rev[x, y]:
                    drift += lam * pmat[x, y] * (
                        gain_x + m(y, True, int(nrev[y]) + 1) - m(y, True, int(nrev[y]))
                    )
    return drift


# =============================================================================
# Simulation
# =============================================================================

@dataclass
class WsTrajectory:
    times: np.ndarray
    infected: np.ndarray
    revealed_pairs: np.ndarray
    scores: np.ndarray
    t_ext: float
    censored: bool
    events: int
    seed: int
    n: int


@dataclass
class DriftSample:
    """Rows of the drift audit: one sampled state each."""

    event_index: int
    t: float
    m: float
    drift: float
    bound: float

    def margin(self, delta: float) -> float:
        if self.m <= 0:
            return math.inf
        return -self.drift / self.m ** (1.0 - delta)


def ws_simulate(
    params: ModelParams,
    initial_infected: Optional[Iterable[int]] = None,
    config: SimConfig = SimConfig(),
    cfg: Optional[ScoreConfig] = None,
    sample_every: int = 0,
    max_samples: int = 0,
) -> tuple[WsTrajectory, list[DriftSample]]:
    """Exact wait-and-see realization, optionally sampling the score drift.

    sample_every=0 samples at geometric event indices (1, 2, 4, ...),
    k > 0 at every k-th event; max_samples=0 disables sampling.
    """
    if cfg is None:
        try:
            cfg = ScoreConfig.for_params(params)
        except (ParameterError, RegimeError):
            # out-of-catalogue parameters: the score is only an observable here
            cfg = ScoreConfig.trivial(params)
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, initial_infected)
    s, t = cfg.tables(params)
    status, t_end, events, obs_inf, obs_rev, obs_m, samples, n_samples = _k.run_waitsee(
        pmat,
        kappa,
        params.lam,
        init,
        np.uint64(config.seed),
        config.t_max,
        config.max_events,
        config.obs_times,
        s,
        t,
        sample_every,
        max_samples,
    )
    if status == _k.STATUS_AUDIT_FAIL:
        raise SimulationError("wait-and-see bookkeeping diverged")
    censored = status != _k.STATUS_EXTINCT
    traj = WsTrajectory(
        times=config.obs_times.copy(),
        infected=obs_inf,
        revealed_pairs=obs_rev,
        scores=obs_m,
        t_ext=t_end if not censored else math.nan,
        censored=censored,
        events=int(events),
        seed=int(config.seed),
        n=params.n,
    )
    rows = [
        DriftSample(int(samples[i, 0]), samples[i, 1], samples[i, 2], samples[i, 3], samples[i, 4])
        for i in range(n_samples)
    ]
    return traj, rows


@dataclass
class WsCoupledResult:
    x: Trajectory
    y: Trajectory
    domination_violation: bool
    reveal_violation: bool
    domination_count: int
    reveal_count: int


def ws_simulate_coupled(
    params: ModelParams,
    initial_infected: Optional[Iterable[int]] = None,
    config: SimConfig = SimConfig(),
    initial_upper: Optional[Iterable[int]] = None,
) -> WsCoupledResult:
    """Contact process X and wait-and-see Y from one graphical representation.

    Contract: X stays below Y pointwise and every revealed pair is a
    present edge, at every event; the flags report any failure.  Y
    starts from initial_upper (default: same as X) with nothing
    revealed.
    """
    init_x = _initial_vector(params, initial_infected)
    init_y = init_x.copy() if initial_upper is None else _initial_vector(params, initial_upper)
    if np.any(init_x > init_y):
        raise ParameterError("initial condition must satisfy X0 <= Y0")
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    status, viol_dom, viol_rev, t_end, events, obsx, obsy, tex, tey = _k.run_ws_coupled(
        pmat,
        kappa,
        params.lam,
        init_x,
        init_y,
        np.uint64(config.seed),
        config.t_max,
        config.max_events,
        config.obs_times,
    )
    if status == _k.STATUS_AUDIT_FAIL:
        raise SimulationError("coupled wait-and-see run failed its internal audit")

    def _traj(obs, te):
        return Trajectory(
            times=config.obs_times.copy(),
            infected=obs,
            star_infected=np.zeros_like(obs),
            t_ext=te if te >= 0 else math.nan,
            censored=te < 0,
            events=int(events),
            seed=int(config.seed),
            n=params.n,
        )

    return WsCoupledResult(
        _traj(obsx, tex),
        _traj(obsy, tey),
        viol_dom > 0,
        viol_rev > 0,
        int(viol_dom),
        int(viol_rev),
    )


# =============================================================================
# Drift audit over an ensemble
# =============================================================================

@dataclass
class DriftAudit:
    samples: list[DriftSample]
    n_positive: int
    worst_drift: float
    delta: float

    @property
    def passed(self) -> bool:
        return self.n_positive == 0


def drift_audit(
    params: ModelParams,
    cfg: Optional[ScoreConfig] = None,
    replicas: int = 100,
    master_seed: int = 0,
    t_max: float = math.inf,
    max_events: int = 1_000_000,
    min_samples: int = 0,
    initial_infected: Optional[Iterable[int]] = None,
    samples_per_replica: int = 64,
) -> DriftAudit:
    """Sample exact_drift along wait-and-see trajectories (geometric spacing).

    Keeps launching replicas (beyond `replicas`) until min_samples states
    have been collected, then reports the count of positive drifts
    (contract under a condS1-verified configuration: zero).
    """
    if cfg is None:
        cfg = ScoreConfig.for_params(params)
    seeds = _k.derive_seeds(master_seed, max(replicas, 1))
    out: list[DriftSample] = []
    i = 0
    while i < replicas or (min_samples and len(out) < min_samples):
        if i >= len(seeds):
            seeds = _k.derive_seeds(master_seed, 2 * len(seeds))
        config = SimConfig(t_max=t_max, max_events=max_events, seed=int(seeds[i]))
        _traj, rows = ws_simulate(
            params,
            initial_infected,
            config,
            cfg=cfg,
            sample_every=0,
            max_samples=samples_per_replica,
        )
        out.extend(rows)
        i += 1
    n_pos = sum(1 for r in out if r.drift > 0.0)
    worst = max((r.drift for r in out), default=-math.inf)
    return DriftAudit(out, n_pos, worst, cfg.delta)
