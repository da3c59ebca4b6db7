"""Per-edge routing metadata and the guarded layer-0 search.

For a visited node v, neighbor w, edge e = w - v and query q, the exact
condition ||w - q||^2 < delta^2 rearranges to

    <e, q> / ||e||  >=  (||w||^2 / 2 - tau - <v, q>) / ||e||,   tau = (delta^2 - ||q||^2) / 2.

The left side is estimated from the codeword chosen for the rotated edge,
``<Hq, Z_S(He)> / A_S(He/||e||)``. Multiplying through by A_S leaves a sum
of L table lookups on the left and ``c1 - c2 * (tau + <v, q>)`` on the
right, with c1 = A_S ||w||^2 / (2 ||e||) and c2 = A_S / ||e||.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from numba import njit, prange

from ..configs import ConfigurationError, ProjectionConfig, assign_batch
from ..linalg import Rotation, level_view
from . import _kernels as kern
from .hnsw import HnswGraph, SearchResult, _check_queries

CODEBOOK = 256
_EDGE_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class QuantizedScalars:
    """16-bit linear codes for c1/c2 with a per-node (offset, step) pair for each.

    Code 0 is reserved for slots whose scalars are exactly zero (no edge, or
    a zero-length edge), so those stay unpruned after decoding.
    """

    c1_codes: np.ndarray  # (n, 2M) uint16
    c2_codes: np.ndarray
    c1_offset: np.ndarray  # (n,) float32
    c1_step: np.ndarray
    c2_offset: np.ndarray
    c2_step: np.ndarray

    def decode(self):
        """Full-precision (c1, c2); code 0 decodes to exactly zero."""
        return (_decode(self.c1_codes, self.c1_offset, self.c1_step),
                _decode(self.c2_codes, self.c2_offset, self.c2_step))


def _decode(codes: np.ndarray, offset: np.ndarray, step: np.ndarray) -> np.ndarray:
    vals = offset[:, None].astype(np.float64) + step[:, None] * (codes.astype(np.float64) - 1.0)
    return np.where(codes == 0, 0.0, vals)


@dataclass(frozen=True, eq=False)
class Ks2Graph:
    """An HNSW graph with routing metadata on every layer-0 edge.

    ``codes[v, i, t]`` is the level-i code of v's t-th edge, so each level's
    codes for one node are contiguous. Slots without an edge, and edges of
    zero length, carry c2 = 0 and are never pruned.
    """

    graph: HnswGraph
    S: ProjectionConfig
    H: Rotation
    codes: np.ndarray = field(repr=False)  # (n, L, 2M) uint8
    c1: np.ndarray = field(repr=False)  # (n, 2M) float64
    c2: np.ndarray = field(repr=False)
    norms2: np.ndarray = field(repr=False)  # (n,) float64
    quantized: Optional[QuantizedScalars] = field(default=None, repr=False)

    @property
    def L(self) -> int:
        return self.S.L

    def scalars(self, quantized: bool = False):
        if not quantized:
            return self.c1, self.c2
        if self.quantized is None:
            raise ValueError("graph carries no quantized scalars")
        return self.quantized.decode()


def _check_config(S: ProjectionConfig, H: Rotation, d: int) -> None:
    if S.m != CODEBOOK:
        raise ConfigurationError(f"edge codes are one byte, so m must be {CODEBOOK}, got {S.m}")
    if not S.antipodal:
        raise ConfigurationError("routing metadata needs an antipodal configuration")
    if S.d != d or H.dim != d:
        raise ValueError("configuration, rotation and graph dims disagree")


def edge_meta(S: ProjectionConfig, H: Rotation, v: np.ndarray, w: np.ndarray):
    """Codes (k, L), A_S, c1 and c2 for edges v -> w given as row arrays.

    Zero-length edges get A_S = c1 = c2 = 0.
    """
    v = np.asarray(v, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    e = w - v
    enorm = np.linalg.norm(e, axis=1)
    codes, proj = assign_batch(H.apply(e), S)
    live = enorm > 0
    a_s = np.zeros(e.shape[0])
    a_s[live] = proj[live] / enorm[live]
    if np.any(a_s[live] <= 0):
        raise ConfigurationError("an edge has a non-positive reference cosine")
    c1 = np.zeros(e.shape[0])
    c2 = np.zeros(e.shape[0])
    c2[live] = a_s[live] / enorm[live]
    c1[live] = c2[live] * 0.5 * np.sum(w[live] * w[live], axis=1)
    return codes, a_s, c1, c2


def quantize_scalars(c1: np.ndarray, c2: np.ndarray, cnt0: np.ndarray, bits: int = 16) -> QuantizedScalars:
    """Per-node min/max linear quantization over the node's live edges."""
    levels = (1 << bits) - 2
    n, slots = c1.shape
    live = (np.arange(slots)[None, :] < cnt0[:, None]) & (c2 > 0)

    def one(x):
        lo = np.where(live, x, np.inf).min(axis=1)
        hi = np.where(live, x, -np.inf).max(axis=1)
        lo = np.where(np.isfinite(lo), lo, 0.0).astype(np.float32)
        hi = np.where(np.isfinite(hi), hi, 0.0).astype(np.float32)
        step = ((hi.astype(np.float64) - lo) / levels).astype(np.float32)
        safe = np.where(step > 0, step, 1.0).astype(np.float64)
        codes = np.rint((x - lo[:, None]) / safe[:, None])
        codes = np.where(live, np.clip(codes, 0, levels) + 1, 0).astype(np.uint16)
        return codes, lo, step

    q1, o1, s1 = one(c1)
    q2, o2, s2 = one(c2)
    q = QuantizedScalars(q1, q2, o1, s1, o2, s2)
    d1, d2 = q.decode()
    if np.any(d2[live] <= 0):
        raise ConfigurationError("quantized c2 lost positivity; use full-precision scalars")
    return q


def attach_ks2(graph: HnswGraph, S: ProjectionConfig, H: Rotation, quantize: bool = True) -> Ks2Graph:
    """Compute codes and scalars for every layer-0 edge in adjacency order."""
    _check_config(S, H, graph.d)
    n, slots = graph.adj0.shape
    X = graph.data
    codes = np.zeros((n, S.L, slots), dtype=np.uint8)
    c1 = np.zeros((n, slots))
    c2 = np.zeros((n, slots))
    src = np.repeat(np.arange(n), slots)
    col = np.tile(np.arange(slots), n)
    dst = graph.adj0.reshape(-1)
    live = col < graph.cnt0[src]
    src, col, dst = src[live], col[live], dst[live]
    for s in range(0, src.size, _EDGE_CHUNK):
        a, t, b = src[s:s + _EDGE_CHUNK], col[s:s + _EDGE_CHUNK], dst[s:s + _EDGE_CHUNK]
        cd, _, k1, k2 = edge_meta(S, H, X[a], X[b])
        codes[a, :, t] = cd.astype(np.uint8)
        c1[a, t] = k1
        c2[a, t] = k2
    norms2 = np.sum(X.astype(np.float64) ** 2, axis=1)
    q = quantize_scalars(c1, c2, graph.cnt0) if quantize else None
    return Ks2Graph(graph, S, H, codes, c1, c2, norms2, q)


def query_lut(S: ProjectionConfig, hq: np.ndarray) -> np.ndarray:
    """(L, m) table of <(Hq)_i, u^i_j>."""
    hq = np.asarray(hq, dtype=np.float64)
    sub = level_view(hq, S.layout)
    return np.einsum("lk,ljk->lj", sub, S.codewords)


class Ks2QueryState(NamedTuple):
    hq: np.ndarray
    lut: np.ndarray
    qnorm2: float


def query_state(kg: Ks2Graph, q: np.ndarray) -> Ks2QueryState:
    q = np.asarray(q, dtype=np.float64)
    hq = kg.H.apply(q)
    return Ks2QueryState(hq, query_lut(kg.S, hq), float(np.dot(q, q)))


def ks2_test(state: Ks2QueryState, codes: np.ndarray, c1: float, c2: float,
             v_dot_q: float, delta2: float) -> bool:
    """Routing test for one edge; an infinite radius or an edge with c2 = 0 always passes."""
    if math.isinf(delta2) or c2 <= 0:
        return True
    tau = 0.5 * (delta2 - state.qnorm2)
    lhs = float(sum(state.lut[i, int(c)] for i, c in enumerate(codes)))
    return lhs >= c1 - c2 * (tau + v_dot_q)


def routing_margin(state: Ks2QueryState, codes: np.ndarray, c1: float, c2: float,
                   v_dot_q: float, delta2: float) -> float:
    """Left side minus right side; the test passes when this is nonnegative."""
    if c2 <= 0:
        return math.inf
    tau = 0.5 * (delta2 - state.qnorm2)
    lhs = float(sum(state.lut[i, int(c)] for i, c in enumerate(codes)))
    return lhs - (c1 - c2 * (tau + v_dot_q))


@njit(cache=True, parallel=True)
def _ks2_batch(X, Q, luts, entry, top, ef, k, adj0, cnt0, adju, cntu, up_start,
               codes, c1, c2, norms2, mode, instrument):
    nq = Q.shape[0]
    ids = np.full((nq, k), -1, np.int32)
    dists = np.full((nq, k), np.inf, np.float32)
    counters = np.zeros((nq, kern.N_COUNTERS), np.int64)
    for j in prange(nq):
        visited = np.zeros(X.shape[0], np.bool_)
        d, i = kern.ks2_search(X, Q[j], entry, top, ef, adj0, cnt0, adju, cntu, up_start, visited,
                               counters[j], luts[j], codes, c1, c2, norms2, mode, instrument)
        r = min(k, d.shape[0])
        ids[j, :r] = i[:r]
        dists[j, :r] = d[:r]
    return ids, dists, counters


def search_ks2(kg: Ks2Graph, queries: np.ndarray, k: int = 10, efs: int = 100,
               always_pass: bool = False, instrument: bool = False,
               quantized: bool = False) -> SearchResult:
    """Guarded HNSW search for each query row.

    Counters per query: exact distances, tests evaluated and passed, and
    with ``instrument`` the pass counts split by whether the neighbor truly
    lies inside the current radius (those checks are not counted as
    distance evaluations).
    """
    if k < 1:
        raise ValueError("k must be positive")
    g = kg.graph
    Q = _check_queries(g, queries)
    hq = kg.H.apply(Q.astype(np.float64))
    luts = np.stack([query_lut(kg.S, h) for h in hq]) if len(hq) else np.zeros((0, kg.L, CODEBOOK))
    c1, c2 = kg.scalars(quantized)
    mode = kern.MODE_ALWAYS_PASS if always_pass else kern.MODE_TEST
    ids, dists, counters = _ks2_batch(g.data, Q, luts, g.entry, g.top, max(efs, k), k, *g.arrays(),
                                      kg.codes, c1, c2, kg.norms2, mode, instrument)
    return SearchResult(ids, dists, counters)


class RoutingSummary(NamedTuple):
    close: int
    close_passed: int
    far: int
    far_passed: int

    @property
    def pass_rate(self) -> float:
        return self.close_passed / self.close if self.close else float("nan")

    @property
    def stderr(self) -> float:
        p = self.pass_rate
        return math.sqrt(p * (1 - p) / self.close) if self.close else float("nan")


def routing_summary(res: SearchResult) -> RoutingSummary:
    c = res.counters.sum(axis=0)
    return RoutingSummary(int(c[kern.C_CLOSE]), int(c[kern.C_CLOSE_PASSED]),
                          int(c[kern.C_FAR]), int(c[kern.C_FAR_PASSED]))
