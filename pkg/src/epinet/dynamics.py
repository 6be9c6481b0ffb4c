"""Event-driven co-simulation of the contact process and the network.

The plain simulator is rate-sum Gillespie over three event classes
(recovery, vertex update, infection through a present edge), which has
the same law as the graphical representation built from Poisson event
streams.  Shared-randomness couplings for the monotonicity and duality
checks live here too, backed by the jitted cores in _kernels.

Replicas are strictly sequential; ensembles derive one splitmix64 seed
per replica from the master seed, so any replica can be reproduced in
isolation and aggregation order cannot change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels as _k
from .model import ModelParams, ParameterError, probability_matrix, update_rates


class SimulationError(RuntimeError):
    """Internal consistency failure (incremental rate audit mismatch)."""


def geometric_times(t0: float, t1: float, count: int) -> np.ndarray:
    """Geometrically spaced observation grid from t0 > 0 to t1."""
    if not 0 < t0 < t1 or count < 2:
        raise ParameterError("need 0 < t0 < t1 and count >= 2")
    return np.geomspace(t0, t1, count)


@dataclass(frozen=True)
class SimConfig:
    """Run configuration: horizon, budget, seed, observation grid, star cut."""

    t_max: float = math.inf
    max_events: int = 50_000_000
    seed: int = 0
    obs_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    star_cut: float = 0.0

    def __post_init__(self):
        if self.t_max <= 0:
            raise ParameterError(f"t_max must be positive, got {self.t_max}")
        if not 0.0 <= self.star_cut <= 1.0:
            raise ParameterError(f"star_cut must lie in [0,1], got {self.star_cut}")
        times = np.asarray(self.obs_times, dtype=float)
        if times.size and np.any(np.diff(times) <= 0):
            raise ParameterError("observation times must be strictly increasing")
        object.__setattr__(self, "obs_times", times)


@dataclass
class Trajectory:
    """One realization: sampled counts, extinction time and provenance."""

    times: np.ndarray
    infected: np.ndarray
    star_infected: np.ndarray
    t_ext: float  # nan when censored
    censored: bool
    events: int
    seed: int
    n: int

    @property
    def density(self) -> np.ndarray:
        return self.infected / self.n


def _initial_vector(params: ModelParams, initial_infected: Optional[Iterable[int]]) -> np.ndarray:
    vec = np.zeros(params.n, dtype=np.uint8)
    if initial_infected is None:
        vec[:] = 1
        return vec
    for v in initial_infected:
        if not 1 <= v <= params.n:
            raise ParameterError(f"initial vertex {v} out of range 1..{params.n}")
        vec[v - 1] = 1
    return vec


def _star_n(params: ModelParams, config: SimConfig) -> int:
    return int(math.floor(config.star_cut * params.n))


def simulate(
    params: ModelParams,
    initial_infected: Optional[Iterable[int]] = None,
    config: SimConfig = SimConfig(),
) -> Trajectory:
    """Exact Gillespie realization of the joint Markov process.

    initial_infected is a 1-based vertex set (None = all infected); the
    graph starts from a stationary sample.  Recovery rate 1 per infected
    vertex, infection rate lambda per present infected-healthy edge,
    update rate kappa_v per vertex with full neighbourhood resampling.
    """
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, initial_infected)
    status, t_end, events, obs_inf, obs_star, _final, _seen = _k.run_contact(
        pmat,
        kappa,
        params.lam,
        init,
        np.uint64(config.seed),
        config.t_max,
        config.max_events,
        config.obs_times,
        _star_n(params, config),
    )
    if status == _k.STATUS_AUDIT_FAIL:
        raise SimulationError("incremental infection-rate bookkeeping diverged")
    censored = status != _k.STATUS_EXTINCT
    return Trajectory(
        times=config.obs_times.copy(),
        infected=obs_inf,
        star_infected=obs_star,
        t_ext=t_end if not censored else math.nan,
        censored=censored,
        events=int(events),
        seed=int(config.seed),
        n=params.n,
    )


def extinction_times(
    params: ModelParams,
    replicas: int,
    master_seed: int = 0,
    initial_infected: Optional[Iterable[int]] = None,
    t_max: float = math.inf,
    max_events: int = 50_000_000,
    replica_offset: int = 0,
) -> np.ndarray:
    """Extinction times over an ensemble (nan entries are censored runs).

    Replica i always runs with the (offset + i)-th splitmix step of the
    master seed, so a sliced ensemble (for worker partitioning) produces
    exactly the replicas it names.
    """
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, initial_infected)
    seeds = _k.derive_seeds(master_seed, replica_offset + replicas)[replica_offset:]
    empty = np.empty(0)
    out = np.empty(replicas)
    for i in range(replicas):
        status, t_end, _ev, _oi, _os, _f, _seen = _k.run_contact(
            pmat, kappa, params.lam, init, seeds[i], t_max, max_events, empty, 0
        )
        if status == _k.STATUS_AUDIT_FAIL:
            raise SimulationError(f"rate audit failed in replica {i}")
        out[i] = t_end if status == _k.STATUS_EXTINCT else math.nan
    return out


# =============================================================================
# Monotone coupling
# =============================================================================

@dataclass
class CoupledResult:
    low: Trajectory
    high: Trajectory
    violation: bool
    violation_count: int


def simulate_coupled_monotone(
    params: ModelParams,
    lam_pair: tuple[float, float],
    initial_pair: tuple[Optional[Iterable[int]], Optional[Iterable[int]]],
    config: SimConfig = SimConfig(),
) -> CoupledResult:
    """Two contact processes on one evolving graph with shared event streams.

    Requires lam1 <= lam2 and A1 a subset of A2; the lam2 infection
    stream is thinned by lam1/lam2 for the smaller process.  The
    violation flag reports any event at which the pointwise order
    X1 <= X2 failed (contract: never).
    """
    lam1, lam2 = lam_pair
    if lam1 < 0 or lam2 <= 0 or lam1 > lam2:
        raise ParameterError(f"need 0 <= lam1 <= lam2, got {lam_pair}")
    init1 = _initial_vector(params, initial_pair[0])
    init2 = _initial_vector(params, initial_pair[1])
    if np.any(init1 > init2):
        raise ParameterError("initial sets must be nested: A1 within A2")
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    status, violations, t_end, events, obs1, obs2, te1, te2 = _k.run_coupled_monotone(
        pmat,
        kappa,
        lam1,
        lam2,
        init1,
        init2,
        np.uint64(config.seed),
        config.t_max,
        config.max_events,
        config.obs_times,
    )
    if status == _k.STATUS_AUDIT_FAIL:
        raise SimulationError("coupled run failed its internal audit")

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

    return CoupledResult(_traj(obs1, te1), _traj(obs2, te2), violations > 0, int(violations))


# =============================================================================
# Duality
# =============================================================================

@dataclass
class DualityGap:
    p_ab: float
    p_ba: float
    se_ab: float
    se_ba: float

    @property
    def gap(self) -> float:
        return abs(self.p_ab - self.p_ba)

    @property
    def se_gap(self) -> float:
        return math.hypot(self.se_ab, self.se_ba)


def _hit_fraction(
    params: ModelParams,
    start: Sequence[int],
    target: Sequence[int],
    t: float,
    replicas: int,
    master_seed: int,
) -> tuple[float, float]:
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, start)
    seeds = _k.derive_seeds(master_seed, replicas)
    targets = np.array([v - 1 for v in target], dtype=np.int64)
    empty = np.empty(0)
    hits = 0
    for i in range(replicas):
        status, _t, _ev, _oi, _os, final, _seen = _k.run_contact(
            pmat, kappa, params.lam, init, seeds[i], t, 2**62, empty, 0
        )
        if status == _k.STATUS_AUDIT_FAIL:
            raise SimulationError(f"rate audit failed in replica {i}")
        if final[targets].any():
            hits += 1
    p = hits / replicas
    return p, math.sqrt(max(p * (1 - p), 1.0 / replicas) / replicas)


def estimate_duality_gap(
    params: ModelParams,
    set_a: Sequence[int],
    set_b: Sequence[int],
    t: float,
    replicas: int,
    master_seed: int = 0,
) -> DualityGap:
    """Monte-Carlo check of P(X^B_t hits A) against P(X^A_t hits B).

    The two probabilities are equal in law by self-duality, so the gap
    should sit within a few combined standard errors of zero.
    """
    if t <= 0:
        raise ParameterError(f"t must be positive, got {t}")
    p_ab, se_ab = _hit_fraction(params, set_b, set_a, t, replicas, master_seed)
    p_ba, se_ba = _hit_fraction(params, set_a, set_b, t, replicas, master_seed + 1)
    return DualityGap(p_ab, p_ba, se_ab, se_ba)


# =============================================================================
# Density curves
# =============================================================================

@dataclass
class DensityCurve:
    """Ensemble density estimates; counts holds the replica-by-time matrix."""

    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n_surviving: np.ndarray
    counts: np.ndarray
    n: int
    star_counts: Optional[np.ndarray] = None

    @property
    def replicas(self) -> int:
        return self.counts.shape[0]


def estimate_I_N(
    params: ModelParams,
    times: np.ndarray,
    replicas: int,
    master_seed: int = 0,
    initial_infected: Optional[Iterable[int]] = None,
    star_cut: float = 0.0,
    t_max: Optional[float] = None,
    max_events: int = 50_000_000,
) -> DensityCurve:
    """Mean infected fraction over the grid (all-infected start by default)."""
    times = np.asarray(times, dtype=float)
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, initial_infected)
    seeds = _k.derive_seeds(master_seed, replicas)
    horizon = float(times[-1]) if t_max is None else t_max
    star_n = int(math.floor(star_cut * params.n))
    counts = np.zeros((replicas, times.size), dtype=np.int64)
    stars = np.zeros((replicas, times.size), dtype=np.int64)
    for i in range(replicas):
        status, _t, _ev, obs_inf, obs_star, _f, _seen = _k.run_contact(
            pmat, kappa, params.lam, init, seeds[i], horizon, max_events, times, star_n
        )
        if status == _k.STATUS_AUDIT_FAIL:
            raise SimulationError(f"rate audit failed in replica {i}")
        counts[i] = obs_inf
        stars[i] = obs_star
    dens = counts / params.n
    return DensityCurve(
        times=times,
        mean=dens.mean(axis=0),
        se=dens.std(axis=0, ddof=1) / math.sqrt(replicas) if replicas > 1 else np.zeros(times.size),
        n_surviving=(counts > 0).sum(axis=0),
        counts=counts,
        n=params.n,
        star_counts=stars if star_n > 0 else None,
    )


# =============================================================================
# Graph-marginal audit
# =============================================================================

def graph_marginal_audit(
    params: ModelParams,
    snap_times: np.ndarray,
    master_seed: int = 0,
    replicas: int = 10,
) -> bool:
    """Check that the infection never feeds back into the graph law.

    Runs the joint process and a graph-only replay from the same
    per-vertex update streams and compares adjacency snapshots exactly.
    Returns True when every snapshot matches.
    """
    pmat = probability_matrix(params)
    kappa = update_rates(params)
    init = _initial_vector(params, None)
    snap_times = np.asarray(snap_times, dtype=float)
    t_max = float(snap_times[-1]) + 1e-9
    for i in range(replicas):
        seeds = _k.derive_seeds(master_seed + i, params.n + 2)
        vseeds, pair_seed, inf_seed = seeds[: params.n], seeds[params.n], seeds[params.n + 1]
        alone = _k.run_stream_graph(pmat, kappa, vseeds, pair_seed, t_max, snap_times)
        joint, _fin = _k.run_contact_stream_graph(
            pmat, kappa, params.lam, init, vseeds, pair_seed, inf_seed, t_max, snap_times
        )
        if not np.array_equal(alone, joint):
            return False
    return True
