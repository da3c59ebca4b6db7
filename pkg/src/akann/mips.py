"""Projection index for maximum inner product search.

Every projection vector owns a posting list of data ids sorted by their
inner product with it. A query picks the few projection vectors closest to
it and re-ranks the heads of their lists exactly.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, NamedTuple, Optional, Sequence, Union

import numpy as np

from .configs import ProjectionConfig, config_bytes, read_config
from .linalg import IDENTITY, ROTATION_MODES, Rotation, sample_rotation

INDEX_MAGIC = b"AKS1"
INDEX_VERSION = 1
_HEADER = struct.Struct("<4sHIIIBQI")
_MODE_CODE = {m: i for i, m in enumerate(ROTATION_MODES)}
_POSTING = np.dtype([("id", "<u4"), ("score", "<f4")])
_BUILD_ELEMS = 1 << 25

PathOrFile = Union[str, os.PathLike, BinaryIO]


@dataclass(frozen=True)
class MipsQueryParams:
    k: int = 10
    s0: int = 5
    probe: int = 100

    def check(self, m: int, length: int) -> None:
        if self.k < 1:
            raise ValueError("k must be positive")
        if not 1 <= self.s0 <= m:
            raise ValueError(f"s0={self.s0} must lie in [1, {m}]")
        if not 1 <= self.probe <= length:
            raise ValueError(f"probe={self.probe} must lie in [1, {length}]")


@dataclass(frozen=True, eq=False)
class Ks1Index:
    """Posting lists ``ids``/``scores`` of shape (m, T) plus the raw data for re-ranking."""

    S: ProjectionConfig
    H: Rotation
    ids: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)
    data: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    rotated: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def m(self) -> int:
        return self.S.m

    @property
    def list_length(self) -> int:
        return self.ids.shape[1]


class MipsResult(NamedTuple):
    ids: np.ndarray
    scores: np.ndarray
    evaluated: int  # exact inner products computed


def _top_desc(col: np.ndarray, t: int) -> np.ndarray:
    """Indices of the t largest entries, descending, ties by ascending index."""
    n = col.shape[0]
    if t >= n:
        return np.argsort(-col, kind="stable")
    kth = np.partition(col, n - t)[n - t]
    above = np.flatnonzero(col > kth)
    ties = np.flatnonzero(col == kth)[: t - above.size]
    cand = np.concatenate([above, ties])
    return cand[np.argsort(-col[cand], kind="stable")]


def build_ks1(data: np.ndarray, S: ProjectionConfig, H: Rotation,
              truncate: Optional[int] = None) -> Ks1Index:
    """Sort every data id by its inner product with each rotated projection vector.

    ``truncate`` keeps only the head of each list; the default keeps all n.
    Scores are stored as float32 and the order is taken on those stored values.
    """
    if S.L != 1:
        raise ValueError("the projection index needs a single-level configuration")
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a nonempty 2-D array")
    if data.shape[1] != S.d or H.dim != S.d:
        raise ValueError("dataset, configuration and rotation dims disagree")
    n = data.shape[0]
    t = n if truncate is None else int(truncate)
    if not 1 <= t <= n:
        raise ValueError(f"truncation {t} must lie in [1, {n}]")
    rotated = H.apply(S.flat_codewords())
    ids = np.empty((S.m, t), dtype=np.uint32)
    scores = np.empty((S.m, t), dtype=np.float32)
    cols = max(1, _BUILD_ELEMS // n)
    x64 = data.astype(np.float64)
    for s in range(0, S.m, cols):
        proj = (x64 @ rotated[s:s + cols].T).astype(np.float32)
        for j in range(proj.shape[1]):
            top = _top_desc(proj[:, j], t)
            ids[s + j] = top
            scores[s + j] = proj[top, j]
    norms = np.linalg.norm(x64, axis=1).astype(np.float32)
    return Ks1Index(S, H, ids, scores, data, norms, rotated)


def closest_projections(idx: Ks1Index, q: np.ndarray, s0: int) -> np.ndarray:
    """Top-s0 projection vectors by inner product with the normalized query."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise ValueError("query must be nonzero")
    return _top_desc(idx.rotated @ (q / norm), s0)


def _rank_exact(ids: np.ndarray, ips: np.ndarray, k: int):
    order = np.lexsort((ids, -ips))[:k]
    return ids[order], ips[order]


def query_ks1(idx: Ks1Index, q: np.ndarray, p: MipsQueryParams) -> MipsResult:
    p.check(idx.m, idx.list_length)
    chosen = closest_projections(idx, q, p.s0)
    cand = np.unique(idx.ids[chosen, : p.probe]).astype(np.int64)
    ips = idx.data[cand].astype(np.float64) @ np.asarray(q, dtype=np.float64)
    top_ids, top_ips = _rank_exact(cand, ips, p.k)
    return MipsResult(top_ids, top_ips, int(cand.size))


def brute_force_mips(data: np.ndarray, q: np.ndarray, k: int) -> MipsResult:
    data = np.asarray(data)
    ips = data.astype(np.float64) @ np.asarray(q, dtype=np.float64)
    top_ids, top_ips = _rank_exact(np.arange(data.shape[0]), ips, k)
    return MipsResult(top_ids, top_ips, data.shape[0])


def recall_by_probe(idx: Ks1Index, queries: np.ndarray, truth_ids: np.ndarray,
                    probes: Sequence[int], s0: int = 5, k: int = 10) -> Dict[int, float]:
    """Mean recall@k at each probe depth.

    A true top-k item that lands in the candidate set also lands in the
    candidates' top-k, because fewer than k items outrank it anywhere. So
    recall is the share of true ids among the probed ids, and no re-ranking
    is needed. ``truth_ids`` must be the exact top-k over ``idx.data``.
    """
    for pr in probes:
        MipsQueryParams(k, s0, pr).check(idx.m, idx.list_length)
    queries = np.asarray(queries, dtype=np.float64)
    truth_ids = np.asarray(truth_ids)
    if truth_ids.shape[0] != queries.shape[0] or truth_ids.shape[1] < k:
        raise ValueError("ground truth must hold k ids per query")
    deep = max(probes)
    normed = queries / np.linalg.norm(queries, axis=1, keepdims=True)
    scores = normed @ idx.rotated.T
    totals = {pr: 0.0 for pr in probes}
    for qi in range(queries.shape[0]):
        chosen = _top_desc(scores[qi], s0)
        heads = idx.ids[chosen, :deep]
        truth = truth_ids[qi, :k].astype(np.uint32)
        # first depth at which each true id shows up in any chosen list
        hit = heads[:, :, None] == truth[None, None, :]
        found = hit.any(axis=0)
        first = np.where(found.any(axis=0), found.argmax(axis=0), deep)
        for pr in probes:
            totals[pr] += np.count_nonzero(first < pr) / k
    return {pr: totals[pr] / len(queries) for pr in probes}


def write_ks1(idx: Ks1Index, fh: PathOrFile) -> None:
    """AKS1: header, m posting lists of (u32 id, f32 score), then the configuration block."""
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "wb") as f:
            return write_ks1(idx, f)
    fh.write(_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, idx.n, idx.m, idx.S.d,
                          _MODE_CODE[idx.H.mode], idx.H.seed & 0xFFFFFFFFFFFFFFFF, idx.list_length))
    post = np.empty(idx.ids.shape, dtype=_POSTING)
    post["id"] = idx.ids
    post["score"] = idx.scores
    fh.write(post.tobytes())
    fh.write(config_bytes(idx.S))


def read_ks1(fh: PathOrFile, data: np.ndarray) -> Ks1Index:
    """Load an index; ``data`` is the dataset it was built on (not stored in the file)."""
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "rb") as f:
            return read_ks1(f, data)
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated index header")
    magic, version, n, m, d, mode, seed, t = _HEADER.unpack(head)
    if magic != INDEX_MAGIC:
        raise ValueError(f"bad index magic {magic!r}")
    if version != INDEX_VERSION:
        raise ValueError(f"unsupported index version {version}")
    raw = fh.read(m * t * _POSTING.itemsize)
    if len(raw) != m * t * _POSTING.itemsize:
        raise ValueError("truncated posting lists")
    post = np.frombuffer(raw, dtype=_POSTING).reshape(m, t)
    S = read_config(fh)
    data = np.ascontiguousarray(data, dtype=np.float32)
    if data.shape != (n, d) or S.m != m or S.d != d:
        raise ValueError("index header does not match the dataset or configuration")
    mode_name = ROTATION_MODES[mode]
    H = Rotation.identity(d) if mode_name == IDENTITY else sample_rotation(d, seed, mode_name)
    return Ks1Index(S, H, post["id"].copy(), post["score"].copy(), data,
                    np.linalg.norm(data.astype(np.float64), axis=1).astype(np.float32),
                    H.apply(S.flat_codewords()))
