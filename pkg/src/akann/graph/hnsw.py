"""HNSW construction and plain search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit, prange

from ..linalg import make_rng
from . import _kernels as kern


@dataclass(frozen=True)
class HnswParams:
    """``M`` links per node on upper layers (2M on layer 0), beam ``efc`` while building."""

    M: int = 16
    efc: int = 200
    efs: int = 100
    level_lambda: float = 0.0  # 0 selects the usual 1/ln(M)

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.efc < self.M:
            raise ValueError("efc must be at least M")
        if self.efs < 1:
            raise ValueError("efs must be positive")
        if self.level_lambda < 0:
            raise ValueError("level_lambda must be nonnegative")

    @property
    def level_scale(self) -> float:
        return self.level_lambda if self.level_lambda > 0 else 1.0 / math.log(self.M)


@dataclass(frozen=True, eq=False)
class HnswGraph:
    params: HnswParams
    seed: int
    data: np.ndarray = field(repr=False)  # (n, d) float32
    levels: np.ndarray = field(repr=False)  # (n,) int32
    adj0: np.ndarray = field(repr=False)  # (n, 2M) int32
    cnt0: np.ndarray = field(repr=False)  # (n,) int32
    up_start: np.ndarray = field(repr=False)  # (n,) int64 first upper-layer row of each node
    adju: np.ndarray = field(repr=False)  # (rows, M) int32
    cntu: np.ndarray = field(repr=False)  # (rows,) int32
    entry: int = 0
    top: int = 0

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def arrays(self):
        return self.adj0, self.cnt0, self.adju, self.cntu, self.up_start

    def neighbors(self, node: int, layer: int = 0) -> np.ndarray:
        if layer > self.levels[node]:
            raise ValueError(f"node {node} does not reach layer {layer}")
        return kern.neighbor_row(node, layer, *self.arrays()).copy()


class SearchResult(NamedTuple):
    ids: np.ndarray  # (nq, k)
    dists: np.ndarray  # (nq, k) squared l2
    counters: np.ndarray  # (nq, N_COUNTERS) int64

    @property
    def dist_evals(self) -> np.ndarray:
        return self.counters[:, kern.C_DIST]

    @property
    def tests(self) -> np.ndarray:
        return self.counters[:, kern.C_TESTS]


def sample_levels(n: int, params: HnswParams, seed: int) -> np.ndarray:
    u = make_rng(seed, "hnsw-levels").random(n)
    return np.floor(-np.log1p(-u) * params.level_scale).astype(np.int32)


def build_hnsw(data: np.ndarray, params: HnswParams = HnswParams(), seed: int = 0) -> HnswGraph:
    """Insert rows in id order; layers are drawn from ``seed`` up front."""
    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("dataset must be a nonempty 2-D array")
    n = X.shape[0]
    levels = sample_levels(n, params, seed)
    up_start = np.zeros(n, dtype=np.int64)
    up_start[1:] = np.cumsum(levels[:-1])
    rows = int(levels.sum())
    adj0 = np.full((n, 2 * params.M), -1, dtype=np.int32)
    cnt0 = np.zeros(n, dtype=np.int32)
    adju = np.full((max(rows, 1), params.M), -1, dtype=np.int32)
    cntu = np.zeros(max(rows, 1), dtype=np.int32)
    entry, top = kern.build_graph(X, levels, params.M, params.efc, adj0, cnt0, adju, cntu, up_start)
    return HnswGraph(params, seed, X, levels, adj0, cnt0, up_start, adju, cntu, int(entry), int(top))


@njit(cache=True, parallel=True)
def _plain_batch(X, Q, entry, top, ef, k, adj0, cnt0, adju, cntu, up_start):
    nq = Q.shape[0]
    ids = np.full((nq, k), -1, np.int32)
    dists = np.full((nq, k), np.inf, np.float32)
    counters = np.zeros((nq, kern.N_COUNTERS), np.int64)
    for j in prange(nq):
        visited = np.zeros(X.shape[0], np.bool_)
        d, i = kern.plain_search(X, Q[j], entry, top, ef, adj0, cnt0, adju, cntu, up_start,
                                 visited, counters[j])
        r = min(k, d.shape[0])
        ids[j, :r] = i[:r]
        dists[j, :r] = d[:r]
    return ids, dists, counters


def _check_queries(g: HnswGraph, queries: np.ndarray) -> np.ndarray:
    Q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float32)
    if Q.shape[1] != g.d:
        raise ValueError(f"query dim {Q.shape[1]} does not match graph dim {g.d}")
    return Q


def search_hnsw(g: HnswGraph, queries: np.ndarray, k: int = 10, efs: int = 100) -> SearchResult:
    """Plain HNSW search for each query row; ``efs`` below k is raised to k."""
    if k < 1:
        raise ValueError("k must be positive")
    Q = _check_queries(g, queries)
    ids, dists, counters = _plain_batch(g.data, Q, g.entry, g.top, max(efs, k), k, *g.arrays())
    return SearchResult(ids, dists, counters)


def degree_ok(g: HnswGraph) -> bool:
    """True when no list exceeds its cap and no node links to itself."""
    if np.any(g.cnt0 > 2 * g.params.M) or np.any(g.cntu > g.params.M):
        return False
    for v in range(g.n):
        if np.any(g.adj0[v, : g.cnt0[v]] == v):
            return False
    return True
