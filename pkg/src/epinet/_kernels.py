"""Jitted simulation cores.

All kernels consume a dense pair-probability matrix and a rate vector,
draw their randomness from explicit splitmix64 state (bit-identical
replay for a fixed seed, independent of numba's global RNG), and return
plain arrays.  Status codes: 0 extinct, 1 horizon reached, 2 event
budget exhausted, -1 internal rate-audit failure.

Event selection is rate-lump Gillespie with O(N) scans per event; the
incremental infection-pressure bookkeeping is integer-valued and is
re-derived from scratch every AUDIT_STRIDE events as a guard against
logic errors.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_EXTINCT = 0
STATUS_TMAX = 1
STATUS_BUDGET = 2
STATUS_AUDIT_FAIL = -1

AUDIT_STRIDE = 10_000

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def derive_seeds(master: int, count: int) -> np.ndarray:
    """Replica/stream seeds: successive splitmix64 outputs from master."""
    out = np.empty(count, dtype=np.uint64)
    s = master & _MASK64
    for i in range(count):
        s = (s + _GOLDEN) & _MASK64
        z = s
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        out[i] = z ^ (z >> 31)
    return out


@njit(cache=True, inline="always")
def _next_u64(state):
    state[0] = state[0] + np.uint64(0x9E3779B97F4A7C15)
    z = state[0]
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _uniform(state):
    return float(_next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, inline="always")
def _exponential(state, rate):
    return -np.log(1.0 - _uniform(state)) / rate


@njit(cache=True)
def _sample_stationary_adj(pmat, state):
    n = pmat.shape[0]
    adj = np.zeros((n, n), dtype=np.uint8)
    for i in range(n):
        for j in range(i + 1, n):
            if _uniform(state) < pmat[i, j]:
                adj[i, j] = 1
                adj[j, i] = 1
    return adj


@njit(cache=True)
def _resample_row(adj, pmat, v, state):
    n = pmat.shape[0]
    for w in range(n):
        if w != v:
            if _uniform(state) < pmat[v, w]:
                adj[v, w] = 1
                adj[w, v] = 1
            else:
                adj[v, w] = 0
                adj[w, v] = 0


# =============================================================================
# Plain contact-process engine
# =============================================================================

@njit(cache=True)
def _healthy_neighbors(adj, inf):
    n = adj.shape[0]
    hn = np.zeros(n, dtype=np.int64)
    for v in range(n):
        c = 0
        for w in range(n):
            if adj[v, w] == 1 and inf[w] == 0:
                c += 1
        hn[v] = c
    return hn


@njit(cache=True)
def _pressure(hn, inf):
    total = 0
    for v in range(inf.shape[0]):
        if inf[v] == 1:
            total += hn[v]
    return total


@njit(cache=True)
def run_contact(pmat, kappa, lam, init_inf, seed, t_max, max_events, obs_times, star_n):
    """One exact Gillespie realization of the joint (graph, infection) process.

    Returns (status, t_end, n_events, obs_inf, obs_star, final_inf, n_obs_seen).
    t_end is the extinction time when status == 0, else the reached time.
    """
    n = pmat.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    adj = _sample_stationary_adj(pmat, state)
    inf = init_inf.copy()
    n_inf = int(inf.sum())
    hn = _healthy_neighbors(adj, inf)
    press = _pressure(hn, inf)

    upd_total = kappa.sum()
    kap_cum = np.cumsum(kappa)

    n_obs = obs_times.shape[0]
    obs_inf = np.zeros(n_obs, dtype=np.int64)
    obs_star = np.zeros(n_obs, dtype=np.int64)
    obs_k = 0

    t = 0.0
    n_events = 0
    status = STATUS_TMAX
    while True:
        if n_inf == 0:
            status = STATUS_EXTINCT
            break
        total = n_inf + upd_total + lam * press
        t_new = t + _exponential(state, total)
        while obs_k < n_obs and obs_times[obs_k] < t_new:
            obs_inf[obs_k] = n_inf
            c = 0
            for v in range(star_n):
                c += inf[v]
            obs_star[obs_k] = c
            obs_k += 1
        if t_new > t_max:
            t = t_max
            status = STATUS_TMAX
            break
        t = t_new
        n_events += 1
        if n_events > max_events:
            status = STATUS_BUDGET
            break

        u = _uniform(state) * total
        if u < n_inf:
            # recovery of the m-th infected vertex
            m = int(u)
            if m >= n_inf:
                m = n_inf - 1
            x = -1
            c = 0
            for v in range(n):
                if inf[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            inf[x] = 0
            n_inf -= 1
            press -= hn[x]
            for w in range(n):
                if adj[x, w] == 1:
                    hn[w] += 1
                    if inf[w] == 1:
                        press += 1
        elif u < n_inf + lam * press:
            # infection: infected vertex weighted by healthy-neighbour count
            target = (u - n_inf) / lam
            acc = 0.0
            x = -1
            for v in range(n):
                if inf[v] == 1:
                    acc += hn[v]
                    if target < acc:
                        x = v
                        break
            if x < 0:
                for v in range(n - 1, -1, -1):
                    if inf[v] == 1 and hn[v] > 0:
                        x = v
                        break
            m = int(_uniform(state) * hn[x])
            if m >= hn[x]:
                m = hn[x] - 1
            y = -1
            c = 0
            for w in range(n):
                if adj[x, w] == 1 and inf[w] == 0:
                    if c == m:
                        y = w
                        break
                    c += 1
            for w in range(n):
                if adj[y, w] == 1:
                    hn[w] -= 1
                    if inf[w] == 1:
                        press -= 1
            inf[y] = 1
            n_inf += 1
            press += hn[y]
        else:
            # vertex update: full neighbourhood resample
            target = u - n_inf - lam * press
            v = int(np.searchsorted(kap_cum, target))
            if v >= n:
                v = n - 1
            for w in range(n):
                if adj[v, w] == 1:
                    adj[v, w] = 0
                    adj[w, v] = 0
                    if inf[w] == 0:
                        hn[v] -= 1
                        if inf[v] == 1:
                            press -= 1
                    if inf[v] == 0:
                        hn[w] -= 1
                        if inf[w] == 1:
                            press -= 1
            for w in range(n):
                if w != v and _uniform(state) < pmat[v, w]:
                    adj[v, w] = 1
                    adj[w, v] = 1
                    if inf[w] == 0:
                        hn[v] += 1
                        if inf[v] == 1:
                            press += 1
                    if inf[v] == 0:
                        hn[w] += 1
                        if inf[w] == 1:
                            press += 1

        if n_events % AUDIT_STRIDE == 0:
            hn2 = _healthy_neighbors(adj, inf)
            press2 = _pressure(hn2, inf)
            if press2 != press:
                status = STATUS_AUDIT_FAIL
                break
            for v in range(n):
                if hn2[v] != hn[v]:
                    status = STATUS_AUDIT_FAIL
                    break
            if status == STATUS_AUDIT_FAIL:
                break

    while obs_k < n_obs:
        obs_inf[obs_k] = n_inf
        c = 0
        for v in range(star_n):
            c += inf[v]
        obs_star[obs_k] = c
        obs_k += 1
    return status, t, n_events, obs_inf, obs_star, inf, obs_k


# =============================================================================
# Monotone coupling (two infection rates, one graph, shared events)
# =============================================================================

@njit(cache=True)
def run_coupled_monotone(
    pmat, kappa, lam1, lam2, init1, init2, seed, t_max, max_events, obs_times
):
    """Coupled pair X1 (rate lam1) <= X2 (rate lam2) on one evolving graph.

    Candidate infections fire per pair with at least one X2-infected
    endpoint at rate lam2 and are thinned by lam1/lam2 for X1, so each
    marginal is an exact contact process.  Returns the per-event count
    of violations of the pointwise order (contract: zero).
    """
    n = pmat.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    adj = _sample_stationary_adj(pmat, state)
    inf1 = init1.copy()
    inf2 = init2.copy()
    n1 = int(inf1.sum())
    n2 = int(inf2.sum())
    n_union = 0
    for v in range(n):
        if inf1[v] == 1 or inf2[v] == 1:
            n_union += 1
    violations = 0
    for v in range(n):
        if inf1[v] > inf2[v]:
            violations += 1

    upd_total = kappa.sum()
    kap_cum = np.cumsum(kappa)
    n_obs = obs_times.shape[0]
    obs1 = np.zeros(n_obs, dtype=np.int64)
    obs2 = np.zeros(n_obs, dtype=np.int64)
    obs_k = 0
    t = 0.0
    t_ext1 = -1.0
    t_ext2 = -1.0
    if n1 == 0:
        t_ext1 = 0.0
    if n2 == 0:
        t_ext2 = 0.0
    n_events = 0
    status = STATUS_TMAX
    while True:
        if n_union == 0:
            status = STATUS_EXTINCT
            break
        cand_rate = lam2 * n2 * (n - 1)
        total = n_union + upd_total + cand_rate
        t_new = t + _exponential(state, total)
        while obs_k < n_obs and obs_times[obs_k] < t_new:
            obs1[obs_k] = n1
            obs2[obs_k] = n2
            obs_k += 1
        if t_new > t_max:
            t = t_max
            break
        t = t_new
        n_events += 1
        if n_events > max_events:
            status = STATUS_BUDGET
            break

        u = _uniform(state) * total
        if u < n_union:
            m = int(u)
            if m >= n_union:
                m = n_union - 1
            x = -1
            c = 0
            for v in range(n):
                if inf1[v] == 1 or inf2[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            if inf1[x] == 1:
                n1 -= 1
            if inf2[x] == 1:
                n2 -= 1
            inf1[x] = 0
            inf2[x] = 0
            n_union -= 1
            if n1 == 0 and t_ext1 < 0.0:
                t_ext1 = t
            if n2 == 0:
                t_ext2 = t
        elif u < n_union + cand_rate:
            # candidate infection on a pair with an X2-infected endpoint
            m = int((u - n_union) / (lam2 * (n - 1)))
            if m >= n2:
                m = n2 - 1
            x = -1
            c = 0
            for v in range(n):
                if inf2[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            r = int(_uniform(state) * (n - 1))
            if r >= n - 1:
                r = n - 2
            y = r if r < x else r + 1
            accept = True
            if inf2[y] == 1 and _uniform(state) < 0.5:
                accept = False  # both-infected pairs are reached twice
            if accept and adj[x, y] == 1:
                a1x, a1y = inf1[x], inf1[y]
                a2x, a2y = inf2[x], inf2[y]
                use1 = _uniform(state) < lam1 / lam2
                if a2x != a2y:
                    z2 = y if a2x == 1 else x
                    if inf1[z2] == 0 and inf2[z2] == 0:
                        n_union += 1
                    inf2[z2] = 1
                    n2 += 1
                if use1 and a1x != a1y:
                    z1 = y if a1x == 1 else x
                    if inf1[z1] == 0 and inf2[z1] == 0:
                        n_union += 1
                    inf1[z1] = 1
                    n1 += 1
                if inf1[x] > inf2[x]:
                    violations += 1
                if inf1[y] > inf2[y]:
                    violations += 1
        else:
            target = u - n_union - cand_rate
            v = int(np.searchsorted(kap_cum, target))
            if v >= n:
                v = n - 1
            _resample_row(adj, pmat, v, state)

        if n_events % 4096 == 0:
            for v in range(n):
                if inf1[v] > inf2[v]:
                    violations += 1

    while obs_k < n_obs:
        obs1[obs_k] = n1
        obs2[obs_k] = n2
        obs_k += 1
    return status, violations, t, n_events, obs1, obs2, t_ext1, t_ext2


# =============================================================================
# Wait-and-see process
# =============================================================================

@njit(cache=True, inline="always")
def _ws_score(infected, n_rev, s_x, t_x, kappa_x, lam):
    """Per-vertex score m(x) given infection flag and revealed-neighbour count."""
    load = 2.0 * lam * n_rev / kappa_x
    if infected == 1:
        if load > 0.5:
            load = 0.5
        return s_x + load * 2.0 * t_x
    if load > 1.0:
        load = 1.0
    return load * (s_x + t_x)


@njit(cache=True)
def _ws_total_score(inf, nrev, s_arr, t_arr, kappa, lam):
    total = 0.0
    for v in range(inf.shape[0]):
        total += _ws_score(inf[v], nrev[v], s_arr[v], t_arr[v], kappa[v], lam)
    return total


@njit(cache=True)
def _ws_drift(pmat, kappa, lam, inf, rev, nrev, s_arr, t_arr):
    """Exact generator applied to M: sum of rate * score-delta over all events.

    Also returns the analytic ceiling
    -(1/2) * sum_healthy kappa*m - (1/2) * sum_infected kappa*t,
    which dominates the drift whenever the discrete score inequality
    holds at this N.
    """
    n = pmat.shape[0]
    drift = 0.0
    bound = 0.0
    for x in range(n):
        m_x = _ws_score(inf[x], nrev[x], s_arr[x], t_arr[x], kappa[x], lam)
        if inf[x] == 1:
            bound -= 0.5 * kappa[x] * t_arr[x]
            # recovery of x at rate 1
            drift += _ws_score(0, nrev[x], s_arr[x], t_arr[x], kappa[x], lam) - m_x
        else:
            bound -= 0.5 * kappa[x] * m_x
        # update of x at rate kappa[x]: x loses all revealed pairs,
        # each revealed neighbour loses one
        if nrev[x] > 0:
            delta = _ws_score(inf[x], 0, s_arr[x], t_arr[x], kappa[x], lam) - m_x
            for w in range(n):
                if rev[x, w] == 1:
                    delta += _ws_score(
                        inf[w], nrev[w] - 1, s_arr[w], t_arr[w], kappa[w], lam
                    ) - _ws_score(inf[w], nrev[w], s_arr[w], t_arr[w], kappa[w], lam)
            drift += kappa[x] * delta
        if inf[x] == 1:
            dm_x_reveal = _ws_score(1, nrev[x] + 1, s_arr[x], t_arr[x], kappa[x], lam) - m_x
            for y in range(n):
                if y == x or (inf[y] == 1 and y < x):
                    continue
                if inf[y] == 0:
                    m_y = _ws_score(0, nrev[y], s_arr[y], t_arr[y], kappa[y], lam)
                    if rev[x, y] == 1:
                        # infection through a revealed pair at rate lam
                        drift += lam * (
                            _ws_score(1, nrev[y], s_arr[y], t_arr[y], kappa[y], lam) - m_y
                        )
                    else:
                        # infection + reveal through an unrevealed pair
                        delta = (
                            _ws_score(1, nrev[y] + 1, s_arr[y], t_arr[y], kappa[y], lam)
                            - m_y
                            + dm_x_reveal
                        )
                        drift += lam * pmat[x, y] * delta
                else:
                    # y infected with y > x: mutual reveal of an unrevealed pair
                    if rev[x, y] == 0:
                        delta = dm_x_reveal + (
                            _ws_score(1, nrev[y] + 1, s_arr[y], t_arr[y], kappa[y], lam)
                            - _ws_score(1, nrev[y], s_arr[y], t_arr[y], kappa[y], lam)
                        )
                        drift += lam * pmat[x, y] * delta
    return drift, bound


@njit(cache=True)
def run_waitsee(
    pmat,
    kappa,
    lam,
    init_inf,
    seed,
    t_max,
    max_events,
    obs_times,
    s_arr,
    t_arr,
    sample_every,
    max_samples,
):
    """Exact wait-and-see realization with optional drift sampling.

    sample_every == 0 samples the generator drift at event indices
    0, 1, 2, 4, 8, ... (geometric); k > 0 samples every k-th event.
    Returns (status, t_end, n_events, obs_inf, obs_rev, obs_score,
    samples[idx 0..n_samples-1, cols (event, t, M, drift, bound)],
    n_samples).
    """
    n = pmat.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    inf = init_inf.copy()
    n_inf = int(inf.sum())
    rev = np.zeros((n, n), dtype=np.uint8)
    nrev = np.zeros(n, dtype=np.int64)
    nrevh = np.zeros(n, dtype=np.int64)
    rowsum = np.zeros(n)
    for x in range(n):
        acc = 0.0
        for y in range(n):
            acc += pmat[x, y]
        rowsum[x] = acc
    si = np.zeros(n)  # mass of infected partners
    for x in range(n):
        acc = 0.0
        for y in range(n):
            if inf[y] == 1 and y != x:
                acc += pmat[x, y]
        si[x] = acc
    rh = np.zeros(n)  # revealed healthy partner mass
    ri = np.zeros(n)  # revealed infected partner mass

    n_obs = obs_times.shape[0]
    obs_inf = np.zeros(n_obs, dtype=np.int64)
    obs_rev = np.zeros(n_obs, dtype=np.int64)
    obs_score = np.zeros(n_obs)
    obs_k = 0
    n_rev_pairs = 0

    samples = np.zeros((max_samples, 5))
    n_samples = 0
    next_geo = 1

    t = 0.0
    n_events = 0
    status = STATUS_TMAX

    take0 = max_samples > 0
    if take0:
        d0, b0 = _ws_drift(pmat, kappa, lam, inf, rev, nrev, s_arr, t_arr)
        samples[0, 0] = 0.0
        samples[0, 1] = 0.0
        samples[0, 2] = _ws_total_score(inf, nrev, s_arr, t_arr, kappa, lam)
        samples[0, 3] = d0
        samples[0, 4] = b0
        n_samples = 1

    while True:
        if n_inf == 0:
            status = STATUS_EXTINCT
            break
        # class rates from per-vertex bookkeeping
        t_revinf = 0
        w_tot = 0.0
        v_tot = 0.0
        for x in range(n):
            if inf[x] == 1:
                t_revinf += nrevh[x]
                mass = rowsum[x] - si[x] - rh[x]
                if mass > 0.0:
                    w_tot += mass
                mass = si[x] - ri[x]
                if mass > 0.0:
                    v_tot += mass
        u_tot = 0.0
        for x in range(n):
            if nrev[x] > 0:
                u_tot += kappa[x]
        r_rec = float(n_inf)
        r_revinf = lam * t_revinf
        r_uninf = lam * w_tot
        r_reveal = 0.5 * lam * v_tot
        total = r_rec + r_revinf + r_uninf + r_reveal + u_tot

        t_new = t + _exponential(state, total)
        while obs_k < n_obs and obs_times[obs_k] < t_new:
            obs_inf[obs_k] = n_inf
            obs_rev[obs_k] = n_rev_pairs
            obs_score[obs_k] = _ws_total_score(inf, nrev, s_arr, t_arr, kappa, lam)
            obs_k += 1
        if t_new > t_max:
            t = t_max
            status = STATUS_TMAX
            break
        t = t_new
        n_events += 1
        if n_events > max_events:
            status = STATUS_BUDGET
            break

        u = _uniform(state) * total
        if u < r_rec:
            # ---- recovery ----
            m = int(u)
            if m >= n_inf:
                m = n_inf - 1
            x = -1
            c = 0
            for v in range(n):
                if inf[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            inf[x] = 0
            n_inf -= 1
            for w in range(n):
                if w != x:
                    si[w] -= pmat[x, w]
                    if rev[x, w] == 1:
                        ri[w] -= pmat[x, w]
                        rh[w] += pmat[x, w]
                        nrevh[w] += 1
        elif u < r_rec + r_revinf:
            # ---- infection through a revealed pair ----
            target = (u - r_rec) / lam
            acc = 0.0
            x = -1
            for v in range(n):
                if inf[v] == 1:
                    acc += nrevh[v]
                    if target < acc:
                        x = v
                        break
            if x < 0:
                for v in range(n - 1, -1, -1):
                    if inf[v] == 1 and nrevh[v] > 0:
                        x = v
                        break
            m = int(_uniform(state) * nrevh[x])
            if m >= nrevh[x]:
                m = nrevh[x] - 1
            y = -1
            c = 0
            for w in range(n):
                if rev[x, w] == 1 and inf[w] == 0:
                    if c == m:
                        y = w
                        break
                    c += 1
            # infect y
            inf[y] = 1
            n_inf += 1
            for w in range(n):
                if w != y:
                    si[w] += pmat[y, w]
                    if rev[y, w] == 1:
                        rh[w] -= pmat[y, w]
                        ri[w] += pmat[y, w]
                        nrevh[w] -= 1
        elif u < r_rec + r_revinf + r_uninf:
            # ---- infection + reveal through an unrevealed pair ----
            target = (u - r_rec - r_revinf) / lam
            acc = 0.0
            x = -1
            for v in range(n):
                if inf[v] == 1:
                    mass = rowsum[v] - si[v] - rh[v]
                    if mass > 0.0:
                        acc += mass
                    if target < acc:
                        x = v
                        break
            if x < 0:
                for v in range(n - 1, -1, -1):
                    if inf[v] == 1 and rowsum[v] - si[v] - rh[v] > 0.0:
                        x = v
                        break
            # choose the healthy unrevealed partner with weight p[x, y]
            wx = rowsum[x] - si[x] - rh[x]
            r = _uniform(state) * wx
            acc = 0.0
            y = -1
            for w in range(n):
                if w != x and inf[w] == 0 and rev[x, w] == 0:
                    acc += pmat[x, w]
                    if r < acc:
                        y = w
                        break
            if y < 0:
                for w in range(n - 1, -1, -1):
                    if w != x and inf[w] == 0 and rev[x, w] == 0 and pmat[x, w] > 0.0:
                        y = w
                        break
            if y >= 0:
                # infect y
                inf[y] = 1
                n_inf += 1
                for w in range(n):
                    if w != y:
                        si[w] += pmat[y, w]
                        if rev[y, w] == 1:
                            rh[w] -= pmat[y, w]
                            ri[w] += pmat[y, w]
                            nrevh[w] -= 1
                # reveal {x, y}: both now infected
                rev[x, y] = 1
                rev[y, x] = 1
                nrev[x] += 1
                nrev[y] += 1
                n_rev_pairs += 1
                ri[x] += pmat[x, y]
                ri[y] += pmat[x, y]
        elif u < r_rec + r_revinf + r_uninf + r_reveal:
            # ---- mutual reveal between infected vertices ----
            target = (u - r_rec - r_revinf - r_uninf) / (0.5 * lam)
            acc = 0.0
            x = -1
            for v in range(n):
                if inf[v] == 1:
                    mass = si[v] - ri[v]
                    if mass > 0.0:
                        acc += mass
                    if target < acc:
                        x = v
                        break
            if x < 0:
                for v in range(n - 1, -1, -1):
                    if inf[v] == 1 and si[v] - ri[v] > 0.0:
                        x = v
                        break
            wx = si[x] - ri[x]
            r = _uniform(state) * wx
            acc = 0.0
            y = -1
            for w in range(n):
                if w != x and inf[w] == 1 and rev[x, w] == 0:
                    acc += pmat[x, w]
                    if r < acc:
                        y = w
                        break
            if y < 0:
                for w in range(n - 1, -1, -1):
                    if w != x and inf[w] == 1 and rev[x, w] == 0 and pmat[x, w] > 0.0:
                        y = w
                        break
            if y >= 0:
                rev[x, y] = 1
                rev[y, x] = 1
                nrev[x] += 1
                nrev[y] += 1
                n_rev_pairs += 1
                ri[x] += pmat[x, y]
                ri[y] += pmat[x, y]
        else:
            # ---- vertex update: unreveal the whole row ----
            target = u - (r_rec + r_revinf + r_uninf + r_reveal)
            acc = 0.0
            x = -1
            for v in range(n):
                if nrev[v] > 0:
                    acc += kappa[v]
                    if target < acc:
                        x = v
                        break
            if x < 0:
                for v in range(n - 1, -1, -1):
                    if nrev[v] > 0:
                        x = v
                        break
            for w in range(n):
                if rev[x, w] == 1:
                    rev[x, w] = 0
                    rev[w, x] = 0
                    nrev[w] -= 1
                    n_rev_pairs -= 1
                    if inf[w] == 1:
                        ri[x] -= pmat[x, w]
                    else:
                        rh[x] -= pmat[x, w]
                    if inf[x] == 1:
                        ri[w] -= pmat[x, w]
                    else:
                        rh[w] -= pmat[x, w]
                        nrevh[w] -= 1
            # reset x's own revealed bookkeeping exactly
            nrev[x] = 0
            nrevh[x] = 0
            rh[x] = 0.0
            ri[x] = 0.0

        take = False
        if sample_every > 0:
            take = n_events % sample_every == 0
        else:
            take = n_events == next_geo
            if take:
                next_geo *= 2
        if take and n_samples < max_samples:
            d, b = _ws_drift(pmat, kappa, lam, inf, rev, nrev, s_arr, t_arr)
            samples[n_samples, 0] = float(n_events)
            samples[n_samples, 1] = t
            samples[n_samples, 2] = _ws_total_score(inf, nrev, s_arr, t_arr, kappa, lam)
            samples[n_samples, 3] = d
            samples[n_samples, 4] = b
            n_samples += 1

        if n_events % 8192 == 0:
            # resync float accumulators and audit the integer counters
            ok = True
            for x in range(n):
                si_x = 0.0
                rh_x = 0.0
                ri_x = 0.0
                c_rev = 0
                c_revh = 0
                for y in range(n):
                    if y == x:
                        continue
                    if inf[y] == 1:
                        si_x += pmat[x, y]
                    if rev[x, y] == 1:
                        c_rev += 1
                        if inf[y] == 1:
                            ri_x += pmat[x, y]
                        else:
                            rh_x += pmat[x, y]
                            c_revh += 1
                if c_rev != nrev[x] or c_revh != nrevh[x]:
                    ok = False
                scale = max(1.0, abs(si_x) + abs(rh_x) + abs(ri_x))
                if (
                    abs(si_x - si[x]) > 1e-9 * scale
                    or abs(rh_x - rh[x]) > 1e-9 * scale
                    or abs(ri_x - ri[x]) > 1e-9 * scale
                ):
                    ok = False
                si[x] = si_x
                rh[x] = rh_x
                ri[x] = ri_x
            if not ok:
                status = STATUS_AUDIT_FAIL
                break

    while obs_k < n_obs:
        obs_inf[obs_k] = n_inf
        obs_rev[obs_k] = n_rev_pairs
        obs_score[obs_k] = _ws_total_score(inf, nrev, s_arr, t_arr, kappa, lam)
        obs_k += 1
    return status, t, n_events, obs_inf, obs_rev, obs_score, samples, n_samples


# =============================================================================
# Coupled contact process / wait-and-see audit engine
# =============================================================================

@njit(cache=True)
def run_ws_coupled(pmat, kappa, lam, init_x, init_y, seed, t_max, max_events, obs_times):
    """Contact process X and a dominating wait-and-see process Y, one
    graphical representation.

    Candidate infection points carry rate lam per pair with a
    Y-infected endpoint; across unrevealed pairs Y consumes the current
    edge state as its thinning coin, which keeps every revealed pair an
    actual edge and X below Y pathwise.  Returns counts of violations
    of either containment (contract: zero).
    """
    n = pmat.shape[0]
    state = np.empty(1, dtype=np.uint64)
    state[0] = seed
    adj = _sample_stationary_adj(pmat, state)
    infx = init_x.copy()
    infy = init_y.copy()
    nx = int(infx.sum())
    ny = int(infy.sum())
    rev = np.zeros((n, n), dtype=np.uint8)
    n_union = 0
    for v in range(n):
        if infx[v] == 1 or infy[v] == 1:
            n_union += 1

    viol_dom = 0
    viol_rev = 0
    for v in range(n):
        if infx[v] > infy[v]:
            viol_dom += 1

    upd_total = kappa.sum()
    kap_cum = np.cumsum(kappa)
    n_obs = obs_times.shape[0]
    obsx = np.zeros(n_obs, dtype=np.int64)
    obsy = np.zeros(n_obs, dtype=np.int64)
    obs_k = 0
    t = 0.0
    t_ext_x = -1.0
    t_ext_y = -1.0
    if nx == 0:
        t_ext_x = 0.0
    if ny == 0:
        t_ext_y = 0.0
    n_events = 0
    status = STATUS_TMAX
    while True:
        if n_union == 0:
            status = STATUS_EXTINCT
            break
        cand_rate = lam * ny * (n - 1)
        total = n_union + upd_total + cand_rate
        t_new = t + _exponential(state, total)
        while obs_k < n_obs and obs_times[obs_k] < t_new:
            obsx[obs_k] = nx
            obsy[obs_k] = ny
            obs_k += 1
        if t_new > t_max:
            t = t_max
            break
        t = t_new
        n_events += 1
        if n_events > max_events:
            status = STATUS_BUDGET
            break

        u = _uniform(state) * total
        if u < n_union:
            # shared recovery stream: both processes heal
            m = int(u)
            if m >= n_union:
                m = n_union - 1
            x = -1
            c = 0
            for v in range(n):
                if infx[v] == 1 or infy[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            if infx[x] == 1:
                nx -= 1
            if infy[x] == 1:
                ny -= 1
            infx[x] = 0
            infy[x] = 0
            n_union -= 1
            if nx == 0 and t_ext_x < 0.0:
                t_ext_x = t
            if ny == 0 and t_ext_y < 0.0:
                t_ext_y = t
        elif u < n_union + cand_rate:
            # candidate infection point on a pair with a Y-infected endpoint
            m = int((u - n_union) / (lam * (n - 1)))
            if m >= ny:
                m = ny - 1
            x = -1
            c = 0
            for v in range(n):
                if infy[v] == 1:
                    if c == m:
                        x = v
                        break
                    c += 1
            r = int(_uniform(state) * (n - 1))
            if r >= n - 1:
                r = n - 2
            y = r if r < x else r + 1
            accept = True
            if infy[y] == 1 and _uniform(state) < 0.5:
                accept = False  # both-Y-infected pairs are reached twice
            if accept:
                e = adj[x, y]
                axx, axy = infx[x], infx[y]
                ayx, ayy = infy[x], infy[y]
                # X uses the trace on present edges
                if e == 1 and axx != axy:
                    zx = y if axx == 1 else x
                    if infx[zx] == 0 and infy[zx] == 0:
                        n_union += 1
                    infx[zx] = 1
                    nx += 1
                # Y: full rate through revealed pairs, edge-thinned otherwise
                if rev[x, y] == 1:
                    if ayx != ayy:
                        zy = y if ayx == 1 else x
                        if infx[zy] == 0 and infy[zy] == 0:
                            n_union += 1
                        infy[zy] = 1
                        ny += 1
                elif e == 1:
                    if ayx != ayy:
                        zy = y if ayx == 1 else x
                        if infx[zy] == 0 and infy[zy] == 0:
                            n_union += 1
                        infy[zy] = 1
                        ny += 1
                        rev[x, y] = 1
                        rev[y, x] = 1
                    elif ayx == 1 and ayy == 1:
                        rev[x, y] = 1
                        rev[y, x] = 1
                if infx[x] > infy[x]:
                    viol_dom += 1
                if infx[y] > infy[y]:
                    viol_dom += 1
                if rev[x, y] == 1 and adj[x, y] == 0:
                    viol_rev += 1
        else:
            # shared update stream: graph row resample + Y unreveal
            target = u - n_union - cand_rate
            v = int(np.searchsorted(kap_cum, target))
            if v >= n:
                v = n - 1
            _resample_row(adj, pmat, v, state)
            for w in range(n):
                rev[v, w] = 0
                rev[w, v] = 0

        if n_events % 4096 == 0:
            for v in range(n):
                if infx[v] > infy[v]:
                    viol_dom += 1
                for w in range(v + 1, n):
                    if rev[v, w] == 1 and adj[v, w] == 0:
                        viol_rev += 1

    # closing sweep
    for v in range(n):
        if infx[v] > infy[v]:
            viol_dom += 1
        for w in range(v + 1, n):
            if rev[v, w] == 1 and adj[v, w] == 0:
                viol_rev += 1

    while obs_k < n_obs:
        obsx[obs_k] = nx
        obsy[obs_k] = ny
        obs_k += 1
    return status, viol_dom, viol_rev, t, n_events, obsx, obsy, t_ext_x, t_ext_y


# =============================================================================
# Stream-driven graph evolution (for the marginal-independence audit)
# =============================================================================

@njit(cache=True)
def _stream_init_graph(pmat, pair_state):
    return _sample_stationary_adj(pmat, pair_state)


@njit(cache=True)
def run_stream_graph(pmat, kappa, vstates_in, pair_seed, t_max, snap_times):
    """Graph evolution alone, driven by per-vertex update streams.

    The trajectory is a deterministic function of (vstates, pair_seed),
    so a joint run sharing the same streams must reproduce identical
    snapshots if the infection really never feeds back into the graph.
    """
    n = pmat.shape[0]
    vstates = vstates_in.copy().reshape(n, 1)
    pair_state = np.empty(1, dtype=np.uint64)
    pair_state[0] = pair_seed
    adj = _stream_init_graph(pmat, pair_state)
    next_upd = np.empty(n)
    for v in range(n):
        next_upd[v] = _exponential(vstates[v], kappa[v])

    n_snap = snap_times.shape[0]
    snaps = np.zeros((n_snap, n, n), dtype=np.uint8)
    snap_k = 0
    t = 0.0
    while True:
        v_min = 0
        for v in range(1, n):
            if next_upd[v] < next_upd[v_min]:
                v_min = v
        t_next = next_upd[v_min]
        while snap_k < n_snap and snap_times[snap_k] < t_next:
            snaps[snap_k] = adj
            snap_k += 1
        if t_next > t_max:
            break
        t = t_next
        _resample_row(adj, pmat, v_min, vstates[v_min])
        next_upd[v_min] = t + _exponential(vstates[v_min], kappa[v_min])
    while snap_k < n_snap:
        snaps[snap_k] = adj
        snap_k += 1
    return snaps


@njit(cache=True)
def run_contact_stream_graph(
    pmat, kappa, lam, init_inf, vstates_in, pair_seed, inf_seed, t_max, snap_times
):
    """Joint simulation whose graph half is driven by the same per-vertex
    streams as run_stream_graph; infection/recovery randomness is separate.
    """
    n = pmat.shape[0]
    vstates = vstates_in.copy().reshape(n, 1)
    pair_state = np.empty(1, dtype=np.uint64)
    pair_state[0] = pair_seed
    inf_state = np.empty(1, dtype=np.uint64)
    inf_state[0] = inf_seed
    adj = _stream_init_graph(pmat, pair_state)
    inf = init_inf.copy()
    n_inf = int(inf.sum())
    hn = _healthy_neighbors(adj, inf)
    press = _pressure(hn, inf)
    next_upd = np.empty(n)
    for v in range(n):
        next_upd[v] = _exponential(vstates[v], kappa[v])

    n_snap = snap_times.shape[0]
    snaps = np.zeros((n_snap, n, n), dtype=np.uint8)
    snap_k = 0
    t = 0.0
    while True:
        v_min = 0
        for v in range(1, n):
            if next_upd[v] < next_upd[v_min]:
                v_min = v
        t_upd = next_upd[v_min]
        jump_rate = n_inf + lam * press
        if jump_rate > 0.0:
            t_jump = t + _exponential(inf_state, jump_rate)
        else:
            t_jump = t_max + 1.0 + t_upd  # beyond everything
        t_next = t_jump if t_jump < t_upd else t_upd
        while snap_k < n_snap and snap_times[snap_k] < t_next:
            snaps[snap_k] = adj
            snap_k += 1
        if t_next > t_max:
            break
        t = t_next
        if t_jump < t_upd:
            # recovery or infection
            u = _uniform(inf_state) * jump_rate
            if u < n_inf:
                m = int(u)
                if m >= n_inf:
                    m = n_inf - 1
                x = -1
                c = 0
                for v in range(n):
                    if inf[v] == 1:
                        if c == m:
                            x = v
                            break
                        c += 1
                inf[x] = 0
                n_inf -= 1
                press -= hn[x]
                for w in range(n):
                    if adj[x, w] == 1:
                        hn[w] += 1
                        if inf[w] == 1:
                            press += 1
            else:
                target = (u - n_inf) / lam
                acc = 0.0
                x = -1
                for v in range(n):
                    if inf[v] == 1:
                        acc += hn[v]
                        if target < acc:
                            x = v
                            break
                if x < 0:
                    for v in range(n - 1, -1, -1):
                        if inf[v] == 1 and hn[v] > 0:
                            x = v
                            break
                m = int(_uniform(inf_state) * hn[x])
                if m >= hn[x]:
                    m = hn[x] - 1
                y = -1
                c = 0
                for w in range(n):
                    if adj[x, w] == 1 and inf[w] == 0:
                        if c == m:
                            y = w
                            break
                        c += 1
                for w in range(n):
                    if adj[y, w] == 1:
                        hn[w] -= 1
                        if inf[w] == 1:
                            press -= 1
                inf[y] = 1
                n_inf += 1
                press += hn[y]
        else:
            # vertex update from its own stream
            _resample_row(adj, pmat, v_min, vstates[v_min])
            next_upd[v_min] = t + _exponential(vstates[v_min], kappa[v_min])
            hn = _healthy_neighbors(adj, inf)
            press = _pressure(hn, inf)
    while snap_k < n_snap:
        snaps[snap_k] = adj
        snap_k += 1
    return snaps, inf
