"""Exact solver for the joint (network, infection) Markov process at N <= 5.

A state is a pair of bit words: N infection bits and N*(N-1)/2 edge
bits.  Vertex updates expand into all 2^(N-1) neighbourhood outcomes
with product-Bernoulli weights, which is what forces the hard size cap.
All infection-free states are collapsed into one absorbing super-state:
the graph keeps evolving after extinction but nothing observable
depends on it.

Used as ground truth for the event-driven simulator: mean extinction
times via a sparse linear solve, densities and duality probabilities via
uniformization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve
from scipy.stats import poisson

from .model import ModelParams, ParameterError, connection_probability, update_rates

_MAX_N = 5


def _pair_list(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))  # 0-based, i < j


@dataclass
class JointStateSpace:
    """Enumeration of (infection bits, edge bits) states with a sparse generator.

    State index = inf_bits * 2^P + edge_bits with P = N*(N-1)/2 pairs in
    the order of itertools.combinations.  The transient block (inf != 0)
    and the collapsed absorbing super-state carry the generator used for
    both the extinction-time solve and uniformization.
    """

    params: ModelParams
    n: int = field(init=False)
    pairs: list[tuple[int, int]] = field(init=False)
    n_states: int = field(init=False)
    generator: sp.csr_matrix = field(init=False)  # transient block + absorbing column
    infected_counts: np.ndarray = field(init=False)

    def __post_init__(self):
        self.n = self.params.n
        self.pairs = _pair_list(self.n)
        self.n_states = (1 << self.n) * (1 << len(self.pairs))

    # ---- state packing helpers (0-based vertices internally) ----

    def state_index(self, infected: Iterable[int], edges: Iterable[tuple[int, int]]) -> int:
        """Index of the state with the given 1-based infected set and edge list."""
        inf_bits = 0
        for v in infected:
            if not 1 <= v <= self.n:
                raise ParameterError(f"vertex {v} out of range 1..{self.n}")
            inf_bits |= 1 << (v - 1)
        edge_bits = 0
        pair_pos = {p: k for k, p in enumerate(self.pairs)}
        for i, j in edges:
            a, b = min(i, j) - 1, max(i, j) - 1
            edge_bits |= 1 << pair_pos[(a, b)]
        return inf_bits * (1 << len(self.pairs)) + edge_bits

    def split_index(self, idx: int) -> tuple[int, int]:
        p = len(self.pairs)
        return idx >> p, idx & ((1 << p) - 1)


def build_generator(params: ModelParams) -> JointStateSpace:
    """Enumerate the joint chain and assemble its sparse generator."""
    n = params.n
    if n > _MAX_N:
        raise ParameterError(f"exact solver is capped at N={_MAX_N}, got N={n}")
    space = JointStateSpace(params)
    pairs = space.pairs
    n_pairs = len(pairs)
    n_edge_states = 1 << n_pairs
    n_states = space.n_states

    p = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                p[i, j] = connection_probability(params, i + 1, j + 1)
    kappa = update_rates(params)
    lam = params.lam

    # pair positions touching each vertex
    touching = [[k for k, (a, b) in enumerate(pairs) if v in (a, b)] for v in range(n)]
    other_end = [
        {k: (b if a == v else a) for k, (a, b) in enumerate(pairs) if v in (a, b)}
        for v in range(n)
    ]

    # per-vertex neighbourhood outcomes: masks over that vertex's pair slots
    # with product-Bernoulli weights
    outcome_masks: list[np.ndarray] = []
    outcome_weights: list[np.ndarray] = []
    for v in range(n):
        slots = touching[v]
        m = len(slots)
        masks = np.zeros(1 << m, dtype=np.int64)
        weights = np.ones(1 << m)
        for b in range(1 << m):
            mask = 0
            w = 1.0
            for t, k in enumerate(slots):
                if b >> t & 1:
                    mask |= 1 << k
                    w *= p[v, other_end[v][k]]
                else:
                    w *= 1.0 - p[v, other_end[v][k]]
            masks[b] = mask
            weights[b] = w
        outcome_masks.append(masks)
        outcome_weights.append(weights)

    rows: list[int] = []
    cols: list[int] = []
    rates: list[float] = []

    def add(src: int, dst: int, rate: float) -> None:
        if rate > 0.0 and src != dst:
            rows.append(src)
            cols.append(dst)
            rates.append(rate)

    for inf_bits in range(1 << n):
        for edge_bits in range(n_edge_states):
            src = inf_bits * n_edge_states + edge_bits
            if inf_bits == 0:
                continue  # absorbing; collapsed below
            for v in range(n):
                v_bit = 1 << v
                if inf_bits & v_bit:
                    add(src, (inf_bits ^ v_bit) * n_edge_states + edge_bits, 1.0)
            for k, (a, b) in enumerate(pairs):
                if edge_bits >> k & 1:
                    a_inf = inf_bits >> a & 1
                    b_inf = inf_bits >> b & 1
                    if a_inf != b_inf:
                        new_inf = inf_bits | (1 << a) | (1 << b)
                        add(src, new_inf * n_edge_states + edge_bits, lam)
            for v in range(n):
                clear = 0
                for k in touching[v]:
                    clear |= 1 << k
                base = edge_bits & ~clear
                masks = outcome_masks[v]
                weights = outcome_weights[v]
                for mask, w in zip(masks, weights):
                    add(src, inf_bits * n_edge_states + (base | int(mask)), kappa[v] * w)

    mat = sp.coo_matrix(
        (np.array(rates), (np.array(rows), np.array(cols))), shape=(n_states, n_states)
    ).tocsr()
    mat.sum_duplicates()
    diag = -np.asarray(mat.sum(axis=1)).ravel()
    mat = mat + sp.diags(diag)
    space.generator = mat.tocsr()
    counts = np.zeros(n_states, dtype=np.int64)
    for inf_bits in range(1 << n):
        counts[inf_bits * n_edge_states : (inf_bits + 1) * n_edge_states] = bin(inf_bits).count("1")
    space.infected_counts = counts
    return space


# =============================================================================
# Initial distributions
# =============================================================================

def stationary_edge_distribution(space: JointStateSpace) -> np.ndarray:
    """Product-Bernoulli weights over edge words (the stationary graph law)."""
    params = space.params
    n_pairs = len(space.pairs)
    probs = np.empty(n_pairs)
    for k, (a, b) in enumerate(space.pairs):
        probs[k] = connection_probability(params, a + 1, b + 1)
    weights = np.ones(1 << n_pairs)
    for bits in range(1 << n_pairs):
        w = 1.0
        for k in range(n_pairs):
            w *= probs[k] if bits >> k & 1 else 1.0 - probs[k]
        weights[bits] = w
    return weights


def initial_distribution(
    space: JointStateSpace, infected: Optional[Sequence[int]] = None
) -> np.ndarray:
    """All-infected (or given 1-based set) with the stationary graph law."""
    n = space.n
    if infected is None:
        infected = range(1, n + 1)
    inf_bits = 0
    for v in infected:
        inf_bits |= 1 << (v - 1)
    pi0 = np.zeros(space.n_states)
    n_edge_states = 1 << len(space.pairs)
    pi0[inf_bits * n_edge_states : (inf_bits + 1) * n_edge_states] = (
        stationary_edge_distribution(space)
    )
    return pi0


# =============================================================================
# Extinction times
# =============================================================================

def _transient_solve(space: JointStateSpace) -> np.ndarray:
    """Expected extinction time from every transient (inf != 0) state."""
    n_edge_states = 1 << len(space.pairs)
    transient = np.nonzero(np.arange(space.n_states) >= n_edge_states)[0]
    q_tt = space.generator[transient][:, transient].tocsc()
    h = spsolve(q_tt, -np.ones(len(transient)))
    residual = np.abs(q_tt @ h + 1.0).max()
    if residual > 1e-10:
        raise ArithmeticError(f"extinction-time solve residual {residual:.3e} > 1e-10")
    full = np.zeros(space.n_states)
    full[transient] = h
    return full


def expected_extinction_time(
    space: JointStateSpace,
    infected: Optional[Sequence[int]] = None,
    edges: Optional[Sequence[tuple[int, int]]] = None,
) -> float:
    """E[T_ext] from the given 1-based infected set (default: all).

    edges=None averages over the stationary graph law, matching a
    simulation started from a stationary sample; an explicit edge list
    conditions on that exact graph.
    """
    if not hasattr(space, "_h"):
        space._h = _transient_solve(space)
    h = space._h
    if edges is not None:
        idx = space.state_index(
            infected if infected is not None else range(1, space.n + 1), edges
        )
        return float(h[idx])
    pi0 = initial_distribution(space, infected)
    return float(pi0 @ h)


# =============================================================================
# Uniformization
# =============================================================================

def _evolve(space: JointStateSpace, pi0: np.ndarray, t: float, tol: float = 1e-10) -> np.ndarray:
    """Distribution at time t by uniformization with Poisson tail <= tol."""
    if t == 0.0:
        return pi0.copy()
    q = space.generator
    rate = float(-q.diagonal().min())
    if rate <= 0.0:
        return pi0.copy()
    p_mat = (sp.eye(space.n_states) + q / rate).tocsr()
    mu = rate * t
    k_max = int(poisson.isf(tol, mu)) + 1
    out = np.zeros_like(pi0)
    v = pi0.copy()
    log_weights = poisson.logpmf(np.arange(k_max + 1), mu)
    for k in range(k_max + 1):
        w = math.exp(log_weights[k])
        if w > 0:
            out += w * v
        v = v @ p_mat
    return out


def exact_density(
    space: JointStateSpace,
    t: float,
    infected: Optional[Sequence[int]] = None,
) -> float:
    """I_N(t): expected infected fraction at time t from a stationary start."""
    if t < 0:
        raise ParameterError(f"t must be >= 0, got {t}")
    pi_t = _evolve(space, initial_distribution(space, infected), t)
    return float(pi_t @ space.infected_counts) / space.n


def hit_probability(
    space: JointStateSpace,
    t: float,
    initial_infected: Sequence[int],
    target: Sequence[int],
) -> float:
    """P(some vertex of target is infected at time t | start from initial set)."""
    pi_t = _evolve(space, initial_distribution(space, initial_infected), t)
    n_edge_states = 1 << len(space.pairs)
    target_bits = 0
    for v in target:
        target_bits |= 1 << (v - 1)
    inf_of_state = np.arange(space.n_states) >> int(math.log2(n_edge_states))
    hit = (inf_of_state & target_bits) != 0
    return float(pi_t[hit].sum())


def duality_gap_exact(
    space: JointStateSpace, set_a: Sequence[int], set_b: Sequence[int], t: float
) -> tuple[float, float]:
    """Both directions of the self-duality identity, computed independently."""
    p_ab = hit_probability(space, t, initial_infected=set_b, target=set_a)
    p_ba = hit_probability(space, t, initial_infected=set_a, target=set_b)
    return p_ab, p_ba


def survival_probability(space: JointStateSpace, t: float,
                         infected: Optional[Sequence[int]] = None) -> float:
    """P(T_ext > t) from a stationary start (default all infected)."""
    pi_t = _evolve(space, initial_distribution(space, infected), t)
    alive = space.infected_counts > 0
    return float(pi_t[alive].sum())


def write_generator(space: JointStateSpace, stream) -> None:
    """Dump the off-diagonal generator as `from to rate` triplet lines."""
    mat = space.generator.tocoo()
    for i, j, rate in zip(mat.row, mat.col, mat.data):
        if i != j:
            stream.write(f"{int(i)} {int(j)} {float(rate)!r}\n")
