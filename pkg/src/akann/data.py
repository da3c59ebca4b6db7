"""Vector files, datasets, exact ground truth and recall."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .linalg import make_rng

METRICS = ("l2", "angular", "ip")
FORMATS = {"fvecs": np.dtype("<f4"), "ivecs": np.dtype("<i4"), "bvecs": np.dtype("u1")}
NORM_TOL = 1e-6

PathLike = Union[str, os.PathLike]


class VecsFormatError(ValueError):
    """Malformed fvecs/ivecs/bvecs file."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Row-major float32 vectors tagged with the metric they are searched under."""

    vectors: np.ndarray
    metric: str = "l2"
    normalized: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        v = self.vectors
        if v.ndim != 2:
            raise ValueError("dataset vectors must be a 2-D array")
        if v.size and not np.all(np.isfinite(v)):
            raise ValueError("dataset contains non-finite entries")
        if self.metric == "angular" and v.size:
            norms = np.linalg.norm(v.astype(np.float64), axis=1)
            if np.any(np.abs(norms - 1.0) > NORM_TOL):
                raise ValueError("angular datasets must have unit rows")

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def from_array(cls, x: np.ndarray, metric: str = "l2") -> "Dataset":
        """Copy to float32; angular data is normalized on the way in."""
        x = np.ascontiguousarray(x, dtype=np.float32)
        if metric == "angular":
            return cls(normalize_rows(x), "angular", True)
        return cls(x, metric, False)

    def digest(self) -> str:
        return array_digest(self.vectors)


def array_digest(x: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(str(x.dtype).encode() + str(x.shape).encode())
    h.update(np.ascontiguousarray(x).tobytes())
    return h.hexdigest()[:16]


def normalize_rows(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float32)
    norms = np.linalg.norm(x.astype(np.float64), axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize a zero row")
    return (x / norms).astype(np.float32)


def _format_dtype(fmt: str) -> np.dtype:
    try:
        return FORMATS[fmt]
    except KeyError:
        raise ValueError(f"unknown vecs format {fmt!r}") from None


def format_from_path(path: PathLike) -> str:
    suffix = Path(path).suffix.lstrip(".")
    _format_dtype(suffix)
    return suffix


def read_vecs(path: PathLike, fmt: Optional[str] = None) -> np.ndarray:
    """Parse a vecs file into an (n, d) array of the format's element type.

    Every record is a little-endian int32 dimension followed by that many
    elements. An empty file yields an array of shape (0, 0).
    """
    fmt = fmt or format_from_path(path)
    dtype = _format_dtype(fmt)
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0:
        return np.zeros((0, 0), dtype=dtype)
    if raw.size < 4:
        raise VecsFormatError("truncated header")
    d = int(raw[:4].view("<i4")[0])
    if d <= 0:
        raise VecsFormatError(f"invalid record dimension {d}")
    record = 4 + d * dtype.itemsize
    if raw.size % record:
        raise VecsFormatError(f"file size {raw.size} is not a multiple of the record size {record}")
    n = raw.size // record
    rows = raw.reshape(n, record)
    dims = rows[:, :4].copy().view("<i4").reshape(n)
    if np.any(dims != d):
        bad = int(np.flatnonzero(dims != d)[0])
        raise VecsFormatError(f"record {bad} has dimension {dims[bad]}, expected {d}")
    return rows[:, 4:].copy().view(dtype).reshape(n, d)


def write_vecs(path: PathLike, x: np.ndarray, fmt: Optional[str] = None) -> None:
    fmt = fmt or format_from_path(path)
    dtype = _format_dtype(fmt)
    x = np.asarray(x)
    if x.ndim != 2:
        raise ValueError("write_vecs expects a 2-D array")
    n, d = x.shape
    if n and d == 0:
        raise ValueError("records must have positive dimension")
    if np.issubdtype(dtype, np.integer) and x.size:
        info = np.iinfo(dtype)
        if x.min() < info.min or x.max() > info.max:
            raise OverflowError(f"values do not fit in {dtype}")
    out = np.empty((n, 4 + d * dtype.itemsize), dtype=np.uint8)
    out[:, :4] = np.full((n, 1), d, dtype="<i4").view(np.uint8)
    out[:, 4:] = np.ascontiguousarray(x, dtype=dtype).view(np.uint8).reshape(n, -1)
    out.tofile(path)


def load_dataset(path: PathLike, metric: str = "l2") -> Dataset:
    x = read_vecs(path)
    if x.size == 0:
        raise ValueError(f"{path} holds no vectors")
    return Dataset.from_array(x.astype(np.float32), metric)


def data_root() -> Path:
    return Path(os.environ.get("AKANN_DATA_DIR", "."))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-query top-k ids; ``scores`` are distances (l2, angular) or inner products (ip)."""

    ids: np.ndarray
    scores: np.ndarray
    metric: str

    @property
    def k(self) -> int:
        return self.ids.shape[1]


def _sorted_topk(keys: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k smallest keys per row, ascending, ties by ascending index."""
    n = keys.shape[1]
    if k >= n:
        return np.argsort(keys, axis=1, kind="stable")
    out = np.empty((keys.shape[0], k), dtype=np.int64)
    part = np.partition(keys, k - 1, axis=1)[:, k - 1]
    for r in range(keys.shape[0]):
        row = keys[r]
        # everything strictly below the k-th value, then the lowest-id ties
        cand = np.flatnonzero(row <= part[r])
        order = np.argsort(row[cand], kind="stable")
        out[r] = cand[order[:k]]
    return out


def exact_scores(base: np.ndarray, queries: np.ndarray, metric: str) -> np.ndarray:
    """(q, n) matrix of squared l2 distances, or inner products for ``ip``."""
    b = np.asarray(base, dtype=np.float64)
    q = np.asarray(queries, dtype=np.float64)
    ip = q @ b.T
    if metric == "ip":
        return ip
    d2 = np.sum(q * q, axis=1)[:, None] - 2.0 * ip + np.sum(b * b, axis=1)[None, :]
    return np.maximum(d2, 0.0)


def compute_ground_truth(data: Dataset, queries: Dataset, k: int,
                         metric: Optional[str] = None, chunk: int = 256) -> GroundTruth:
    """Exact top-k per query; l2/angular report squared distances, ip reports inner products."""
    metric = metric or data.metric
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if data.n == 0 or queries.n == 0:
        raise ValueError("ground truth needs a nonempty dataset and query set")
    if data.d != queries.d:
        raise ValueError(f"query dim {queries.d} does not match data dim {data.d}")
    if metric == "angular" and not (data.normalized and queries.normalized):
        raise ValueError("angular ground truth needs normalized data and queries")
    k = min(k, data.n)
    ids = np.empty((queries.n, k), dtype=np.int64)
    scores = np.empty((queries.n, k))
    for s in range(0, queries.n, chunk):
        sc = exact_scores(data.vectors, queries.vectors[s:s + chunk], metric)
        keys = -sc if metric == "ip" else sc
        top = _sorted_topk(keys, k)
        ids[s:s + chunk] = top
        scores[s:s + chunk] = np.take_along_axis(sc, top, axis=1)
    return GroundTruth(ids, scores, metric)


def recall_at_k(result: Sequence[int], truth: Sequence[int], k: int) -> float:
    """|result[:k] & truth[:k]| / k."""
    if k < 1:
        raise ValueError("k must be positive")
    if len(result) < k or len(truth) < k:
        raise ValueError(f"lists shorter than k={k}")
    return len(set(np.asarray(result[:k]).tolist()) & set(np.asarray(truth[:k]).tolist())) / k


def mean_recall(results: np.ndarray, truth: GroundTruth, k: int) -> float:
    return float(np.mean([recall_at_k(r, t, k) for r, t in zip(results, truth.ids)]))


def uniform_sphere_data(n: int, d: int, seed: int, stream: str = "sphere") -> np.ndarray:
    g = make_rng(seed, "data", stream).standard_normal((n, d))
    return (g / np.linalg.norm(g, axis=1, keepdims=True)).astype(np.float32)


def gaussian_mixture(n: int, d: int, seed: int, clusters: int = 64, spread: float = 0.35,
                     stream: str = "mixture", centers: Optional[np.ndarray] = None) -> np.ndarray:
    """Isotropic Gaussian blobs around unit-norm centers; rows are not normalized."""
    rng = make_rng(seed, "data", stream)
    if centers is None:
        c = make_rng(seed, "data", "centers").standard_normal((clusters, d))
        centers = c / np.linalg.norm(c, axis=1, keepdims=True)
    labels = rng.integers(0, centers.shape[0], size=n)
    x = centers[labels] + spread / np.sqrt(d) * rng.standard_normal((n, d))
    return x.astype(np.float32)


def synthetic_split(kind: str, n: int, nq: int, d: int, seed: int, **kw):
    """(base, queries) drawn from one generator with disjoint streams."""
    if kind == "sphere":
        return uniform_sphere_data(n, d, seed, "base"), uniform_sphere_data(nq, d, seed, "query")
    if kind == "mixture":
        base = gaussian_mixture(n, d, seed, stream="base", **kw)
        return base, gaussian_mixture(nq, d, seed, stream="query", **kw)
    raise ValueError(f"unknown synthetic kind {kind!r}")
