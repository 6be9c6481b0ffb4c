"""Evolving-graph state: stationary sampling and whole-row resampling.

A NetworkState holds sorted neighbour arrays (1-based vertex labels).
Resampling a vertex redraws its entire pair row from the stationary
Bernoulli law; the naive path draws N-1 uniforms, the fast path walks
dyadic index blocks by geometric skipping under a per-block envelope
with acceptance correction, which is exact and costs O(expected degree
+ log N) because rows are non-increasing in the partner index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO

import numpy as np

from .model import ModelParams, ParameterError, probability_row


@dataclass
class NetworkState:
    """Symmetric graph on {1..N}: per-vertex sorted neighbour arrays."""

    n: int
    adj: list[np.ndarray]
    edge_count: int

    def neighbors(self, v: int) -> np.ndarray:
        self._check(v)
        return self.adj[v - 1]

    def _check(self, v: int) -> None:
        if not 1 <= v <= self.n:
            raise ParameterError(f"vertex {v} out of range 1..{self.n}")

    def check_invariants(self) -> None:
        total = 0
        for v in range(1, self.n + 1):
            row = self.adj[v - 1]
            if np.any(np.diff(row) <= 0):
                raise AssertionError(f"neighbour list of {v} not strictly sorted")
            if np.any(row == v):
                raise AssertionError(f"self-loop at {v}")
            for w in row:
                if not has_edge(self, int(w), v):
                    raise AssertionError(f"asymmetry: {v}->{w} present, {w}->{v} missing")
            total += len(row)
        if total != 2 * self.edge_count:
            raise AssertionError("edge_count does not match degree sum")


def degree(state: NetworkState, v: int) -> int:
    return len(state.neighbors(v))


def has_edge(state: NetworkState, i: int, j: int) -> bool:
    state._check(i)
    state._check(j)
    if i == j:
        return False
    row = state.adj[i - 1]
    k = np.searchsorted(row, j)
    return bool(k < len(row) and row[k] == j)


# =============================================================================
# Sampling
# =============================================================================

def _sample_row_naive(params: ModelParams, v: int, rng: np.random.Generator) -> np.ndarray:
    row = probability_row(params, v)
    hits = np.nonzero(rng.random(params.n) < row)[0] + 1
    return hits.astype(np.int64)


def _sample_row_fast(params: ModelParams, v: int, rng: np.random.Generator) -> np.ndarray:
    """Exact Bernoulli row sample by block-envelope geometric skipping.

    Within a dyadic block of partner indices the row probability is
    bounded by its value at the block head (rows are non-increasing in
    j).  Candidate hits are generated by geometric skipping at the
    envelope rate and thinned with probability p_j / envelope, which
    reproduces independent Bernoulli(p_j) marks exactly.
    """
    n = params.n
    row = probability_row(params, v)  # O(N) row evaluation; draws are sublinear
    out: list[int] = []
    lo = 1
    while lo <= n:
        hi = min(n, 2 * lo)
        # rows are non-increasing in j (self entry is 0), so the block max
        # is a valid envelope for every entry in [lo, hi]
        q = float(row[lo - 1 : hi].max())
        if q >= 1.0:
            for j in range(lo, hi + 1):
                if rng.random() < row[j - 1]:
                    out.append(j)
        elif q > 0.0:
            j = lo
            log1mq = np.log1p(-q)
            while True:
                j += int(np.log1p(-rng.random()) / log1mq)
                if j > hi:
                    break
                if rng.random() * q < row[j - 1]:
                    out.append(j)
                j += 1
        lo = hi + 1
    return np.asarray(out, dtype=np.int64)


def sample_stationary(params: ModelParams, rng: np.random.Generator) -> NetworkState:
    """Draw the stationary graph: each pair present independently with p_ij."""
    n = params.n
    adj_sets: list[list[int]] = [[] for _ in range(n)]
    edge_count = 0
    for i in range(1, n):
        row = probability_row(params, i)[i:]  # entries for j = i+1 .. n
        hits = np.nonzero(rng.random(n - i) < row)[0] + i + 1
        for j in hits:
            adj_sets[i - 1].append(int(j))
            adj_sets[j - 1].append(i)
            edge_count += 1
    adj = [np.asarray(sorted(neigh), dtype=np.int64) for neigh in adj_sets]
    return NetworkState(n, adj, edge_count)


def resample_vertex(
    state: NetworkState,
    v: int,
    params: ModelParams,
    rng: np.random.Generator,
    method: str = "fast",
) -> NetworkState:
    """Redraw every pair {v, j} from the stationary law, in place.

    Edges not touching v are untouched and symmetry is restored.  The
    "fast" method uses envelope geometric skipping, "naive" draws one
    uniform per pair; both produce the stationary row law.
    """
    state._check(v)
    if state.n != params.n:
        raise ParameterError("state and params disagree on N")
    if method == "fast":
        new_row = _sample_row_fast(params, v, rng)
    elif method == "naive":
        new_row = _sample_row_naive(params, v, rng)
    else:
        raise ParameterError(f"method must be 'fast' or 'naive', got {method!r}")

    old_row = state.adj[v - 1]
    old_set = set(int(w) for w in old_row)
    new_set = set(int(w) for w in new_row)
    for w in old_set - new_set:
        row = state.adj[w - 1]
        k = int(np.searchsorted(row, v))
        state.adj[w - 1] = np.delete(row, k)
    for w in new_set - old_set:
        row = state.adj[w - 1]
        k = int(np.searchsorted(row, v))
        state.adj[w - 1] = np.insert(row, k, v)
    state.adj[v - 1] = new_row
    state.edge_count += len(new_set) - len(old_set)
    return state


# =============================================================================
# Snapshot export
# =============================================================================

def write_edge_list(state: NetworkState, stream: IO[str]) -> None:
    """One `i j` line per edge, 1-based, i < j."""
    for i in range(1, state.n + 1):
        for j in state.adj[i - 1]:
            if i < j:
                stream.write(f"{i} {int(j)}\n")


def adjacency_matrix(state: NetworkState) -> np.ndarray:
    """Dense boolean adjacency (0-based array of the 1-based graph)."""
    out = np.zeros((state.n, state.n), dtype=bool)
    for i in range(1, state.n + 1):
        out[i - 1, state.adj[i - 1] - 1] = True
    return out
