import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epinet import _kernels
from epinet.dynamics import SimConfig
from epinet.model import (
    FactorKernel,
    ModelParams,
    ParameterError,
    PreferentialAttachmentKernel,
    connection_probability,
    update_rates,
)
from epinet.theory import find_passing_lambda, verify_condS
from epinet.waitsee import (
    DriftSample,
    ScoreConfig,
    WaitSeeState,
    drift_audit,
    drift_with_bound,
    exact_drift,
    exact_drift_reference,
    score_m,
    total_score,
    ws_simulate,
    ws_simulate_coupled,
)


def _params(n, beta=1.0, gamma=0.5, eta=0.0, kappa0=1.0, lam=0.5, kind=FactorKernel):
    return ModelParams(n, kind(beta, gamma), eta, kappa0, lam)


def _se(x):
    return x.std(ddof=1) / math.sqrt(len(x))


# ---------------------------------------------------------------------------
# independent oracle: the full wait-and-see generator by state enumeration
# ---------------------------------------------------------------------------

def ws_full_generator(params):
    n = params.n
    pairs = list(itertools.combinations(range(n), 2))
    n_pairs = len(pairs)
    pmat = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                pmat[i, j] = connection_probability(params, i + 1, j + 1)
    kappa = update_rates(params)
    lam = params.lam
    n_states = (1 << n) * (1 << n_pairs)
    q = np.zeros((n_states, n_states))

    def idx(ib, rb):
        return ib * (1 << n_pairs) + rb

    for ib in range(1 << n):
        for rb in range(1 << n_pairs):
            s = idx(ib, rb)
            for v in range(n):
                if ib >> v & 1:
                    q[s, idx(ib & ~(1 << v), rb)] += 1.0
            for k, (a, b) in enumerate(pairs):
                ai, bi = ib >> a & 1, ib >> b & 1
                if rb >> k & 1:
                    if ai != bi:
                        q[s, idx(ib | (1 << a) | (1 << b), rb)] += lam
                else:
                    if ai != bi:
                        q[s, idx(ib | (1 << a) | (1 << b), rb | (1 << k))] += lam * pmat[a, b]
                    elif ai and bi:
                        q[s, idx(ib, rb | (1 << k))] += lam * pmat[a, b]
            for v in range(n):
                cleared = rb
                for k, (a, b) in enumerate(pairs):
                    if v in (a, b):
                        cleared &= ~(1 << k)
                if cleared != rb:
                    q[s, idx(ib, cleared)] += kappa[v]
    for s in range(n_states):
        q[s, s] = 0.0
        q[s, s] = -q[s].sum()
    return q, pairs


def state_from_bits(n, pairs, ib, rb):
    infected = [v + 1 for v in range(n) if ib >> v & 1]
    revealed = [(a + 1, b + 1) for k, (a, b) in enumerate(pairs) if rb >> k & 1]
    return WaitSeeState.from_sets(n, infected, revealed)


# ---------------------------------------------------------------------------
# score configuration and per-vertex scores
# ---------------------------------------------------------------------------

def test_score_config_defaults_satisfy_chain():
    for p in (_params(50, gamma=0.25), _params(40, gamma=0.7, kind=PreferentialAttachmentKernel, lam=0.1)):
        cfg = ScoreConfig.for_params(p.with_lambda(0.1))
        assert cfg.c > 4 * cfg.d
        from epinet.theory import d_max

        assert cfg.d <= d_max(p)


def test_score_config_rejects_large_d():
    p = _params(50, gamma=0.25, lam=0.1)
    cfg = ScoreConfig.for_params(p)
    with pytest.raises(ParameterError):
        ScoreConfig(score=cfg.score, delta=0.5, d=cfg.c, c=cfg.c)


def test_score_tables_cap():
    p = _params(60, gamma=0.25, lam=0.05)
    cfg = ScoreConfig.for_params(p)
    s, t = cfg.tables(p)
    # t(x) <= s(x) since c <= kappa0 and T_lambda >= 1
    assert np.all(t <= s + 1e-15)
    assert np.all(s > 0) and np.all(t > 0)


def test_score_m_examples():
    p = _params(30, gamma=0.25, lam=0.05)
    cfg = ScoreConfig.for_params(p)
    s, t = cfg.tables(p)
    x = 7
    empty = WaitSeeState.from_sets(30, [x])
    assert score_m(x, empty, cfg, p) == pytest.approx(s[x - 1], rel=1e-12)
    healthy = WaitSeeState.from_sets(30, [])
    assert score_m(x, healthy, cfg, p) == 0.0
    # saturate the revealed count: healthy cap equals infected cap s + t
    pairs = [(x, y) for y in range(1, 30) if y != x]
    sat_h = WaitSeeState.from_sets(30, [], pairs)
    sat_i = WaitSeeState.from_sets(30, [x], pairs)
    kap = update_rates(p)[x - 1]
    assert 29 - 1 >= kap / (2 * p.lam)  # the cap actually binds
    cap_h = score_m(x, sat_h, cfg, p)
    cap_i = score_m(x, sat_i, cfg, p)
    assert cap_h == pytest.approx(s[x - 1] + t[x - 1], rel=1e-12)
    assert cap_i == pytest.approx(cap_h, rel=1e-12)


@given(k=st.integers(0, 40), j=st.integers(0, 40))
@settings(max_examples=40, deadline=None)
def test_score_monotone_in_revealed_count(k, j):
    p = _params(42, gamma=0.3, lam=0.2)
    cfg = ScoreConfig.for_params(p)
    s, t = cfg.tables(p)
    from epinet.waitsee import _score_value

    kap = update_rates(p)[0]
    lo, hi = min(k, j), max(k, j)
    for infected in (True, False):
        a = _score_value(infected, lo, s[0], t[0], kap, p.lam)
        b = _score_value(infected, hi, s[0], t[0], kap, p.lam)
        assert b >= a - 1e-15
        assert 0.0 <= a <= s[0] + t[0] + 1e-15


# ---------------------------------------------------------------------------
# exact drift
# ---------------------------------------------------------------------------

def test_drift_all_healthy_zero():
    p = _params(20, gamma=0.25, lam=0.05)
    cfg = ScoreConfig.for_params(p)
    state = WaitSeeState.from_sets(20, [])
    assert exact_drift(state, cfg, p) == 0.0


def test_drift_single_infected_contains_recovery_term():
    p = _params(50, gamma=0.25, lam=0.002)
    cfg = ScoreConfig.for_params(p)
    s, _ = cfg.tables(p)
    x = 5
    state = WaitSeeState.from_sets(50, [x])
    d = exact_drift(state, cfg, p)
    # drift = -s(x) + positive unrevealed-infection terms, all O(lam)
    assert d < 0.0
    assert d > -s[x - 1] - 1e-12
    gain = d + s[x - 1]
    assert 0.0 <= gain < 0.1 * s[x - 1]


@pytest.mark.parametrize(
    "params",
    [
        _params(3, gamma=0.4, eta=0.5, kappa0=1.2, lam=0.3),
        _params(3, gamma=0.7, eta=0.0, kappa0=0.6, lam=0.45),
        _params(4, beta=0.9, gamma=0.3, eta=0.2, kappa0=0.8, lam=0.25, kind=PreferentialAttachmentKernel),
    ],
)
def test_drift_matches_full_generator(params):
    """exact_drift equals (Q M)(state) for every state of the enumerated chain."""
    q, pairs = ws_full_generator(params)
    cfg = ScoreConfig.for_params(params.with_lambda(0.1))
    n = params.n
    n_pairs = len(pairs)
    m_vec = np.zeros(q.shape[0])
    states = []
    for ib in range(1 << n):
        for rb in range(1 << n_pairs):
            stt = state_from_bits(n, pairs, ib, rb)
            states.append(stt)
            m_vec[ib * (1 << n_pairs) + rb] = total_score(stt, cfg, params)
    gen_drift = q @ m_vec
    step = 3 if n == 4 else 1
    for s_idx in range(0, len(states), step):
        d_jit = exact_drift(states[s_idx], cfg, params)
        d_ref = exact_drift_reference(states[s_idx], cfg, params)
        assert d_jit == pytest.approx(gen_drift[s_idx], abs=1e-11, rel=1e-9)
        assert d_ref == pytest.approx(gen_drift[s_idx], abs=1e-11, rel=1e-9)


def test_drift_nonpositive_under_condS_random_states():
    """With condS1 verified at this N, the generator drift and its analytic
    ceiling are non-positive at arbitrary states, not just reachable ones."""
    base = _params(60, gamma=0.25, eta=0.0, lam=0.1)
    lam = find_passing_lambda(base, lam_start=0.1)
    assert lam is not None
    p = base.with_lambda(lam)
    cfg = ScoreConfig.for_params(p)
    assert verify_condS(cfg.score, p, d=cfg.d, mode="global").passed
    rng = np.random.default_rng(21)
    for _ in range(60):
        k = int(rng.integers(1, 60))
        infected = list(rng.choice(np.arange(1, 61), size=k, replace=False))
        pairs = []
        for _ in range(int(rng.integers(0, 80))):
            i, j = rng.choice(np.arange(1, 61), size=2, replace=False)
            pairs.append((int(i), int(j)))
        state = WaitSeeState.from_sets(60, infected, pairs)
        d, bound = drift_with_bound(state, cfg, p)
        assert bound <= 1e-12
        assert d <= bound + 1e-9 * max(1.0, abs(bound))


# ---------------------------------------------------------------------------
# wait-and-see simulation
# ---------------------------------------------------------------------------

def test_ws_single_vertex():
    p = _params(1, lam=1.0)
    seeds = _kernels.derive_seeds(31, 5000)
    te = np.array([ws_simulate(p, None, SimConfig(seed=int(s)))[0].t_ext for s in seeds])
    assert abs(te.mean() - 1.0) < 3 * _se(te)


def test_ws_lambda_zero_pure_death():
    p = _params(12, lam=0.0)
    obs = np.linspace(0.0, 5.0, 6)
    traj, _ = ws_simulate(p, None, SimConfig(seed=7, obs_times=obs))
    assert np.all(traj.revealed_pairs == 0)
    assert not traj.censored


with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    _WS_ORACLE_CASES = [
        (ModelParams(2, FactorKernel(2.0, 0.5), 0.0, 5.0, 1.0), 3),
        (ModelParams(2, FactorKernel(0.8, 0.5), 0.0, 0.7, 0.6), 3),
    ]


@pytest.mark.parametrize("params,start_bits", _WS_ORACLE_CASES)
def test_ws_mean_extinction_vs_generator(params, start_bits):
    q, pairs = ws_full_generator(params)
    n_pairs = len(pairs)
    transient = [s for s in range(q.shape[0]) if (s >> n_pairs) != 0]
    h = np.linalg.solve(q[np.ix_(transient, transient)], -np.ones(len(transient)))
    exact = h[transient.index(start_bits * (1 << n_pairs))]
    seeds = _kernels.derive_seeds(32, 20_000)
    te = np.array([ws_simulate(params, None, SimConfig(seed=int(s)))[0].t_ext for s in seeds])
    assert abs(te.mean() - exact) < 3 * _se(te)


def test_ws_deterministic():
    p = _params(15, gamma=0.6, lam=0.5)
    obs = np.linspace(0.0, 10.0, 11)
    a, _ = ws_simulate(p, None, SimConfig(seed=55, obs_times=obs, t_max=10.0))
    b, _ = ws_simulate(p, None, SimConfig(seed=55, obs_times=obs, t_max=10.0))
    assert np.array_equal(a.infected, b.infected)
    assert np.array_equal(a.revealed_pairs, b.revealed_pairs)
    assert np.array_equal(a.scores, b.scores)


# ---------------------------------------------------------------------------
# coupled runs
# ---------------------------------------------------------------------------

def test_ws_coupled_empty_start():
    p = _params(10, lam=0.5)
    res = ws_simulate_coupled(p, [], SimConfig(seed=1, t_max=5.0, obs_times=np.array([1.0, 4.0])))
    assert np.all(res.x.infected == 0)
    assert np.all(res.y.infected == 0)
    assert not res.domination_violation and not res.reveal_violation


def test_ws_coupled_lambda_zero_mirrors():
    p = _params(15, lam=0.0)
    obs = np.linspace(0.0, 6.0, 13)
    res = ws_simulate_coupled(p, None, SimConfig(seed=2, obs_times=obs))
    assert np.array_equal(res.x.infected, res.y.infected)
    assert res.x.t_ext == res.y.t_ext


def test_ws_coupled_zero_violations_and_domination():
    p = _params(30, gamma=0.6, lam=0.5)
    seeds = _kernels.derive_seeds(41, 100)
    obs = np.linspace(0.0, 10.0, 11)
    for s in seeds:
        res = ws_simulate_coupled(p, None, SimConfig(seed=int(s), t_max=10.0, obs_times=obs))
        assert res.domination_count == 0
        assert res.reveal_count == 0
        assert np.all(res.x.infected <= res.y.infected)


def test_ws_coupled_validation():
    p = _params(10, lam=0.5)
    with pytest.raises(ParameterError):
        ws_simulate_coupled(p, None, SimConfig(seed=1, t_max=1.0), initial_upper=[1])


# ---------------------------------------------------------------------------
# drift audit
# ---------------------------------------------------------------------------

def test_drift_audit_nonpositive():
    base = _params(100, gamma=0.25, eta=0.0, lam=0.1)
    lam = find_passing_lambda(base, lam_start=0.1)
    p = base.with_lambda(lam)
    cfg = ScoreConfig.for_params(p)
    audit = drift_audit(p, cfg, replicas=50, master_seed=5, min_samples=600)
    assert len(audit.samples) >= 600
    assert audit.passed
    assert audit.worst_drift <= 0.0
    for row in audit.samples:
        assert row.drift <= row.bound + 1e-9
        if row.m > 0:
            assert row.margin(cfg.delta) >= 0.0


def test_drift_sample_margin_empty_state():
    row = DriftSample(0, 0.0, 0.0, 0.0, 0.0)
    assert row.margin(0.5) == math.inf
