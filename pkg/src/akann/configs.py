"""Projection-vector configurations and reference assignment.

A configuration stores ``L`` levels of ``m`` sub-vectors in R^{d'}. Picking
the best codeword independently on every level is the same as searching the
m^L concatenated "virtual" codewords, because the inner product splits into
a sum over levels.
"""

from __future__ import annotations

import io
import math
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, NamedTuple, Optional, Tuple, Union

import numpy as np

from .linalg import SubspaceLayout, haar_orthogonal, level_view, make_rng, sample_uniform_sphere

KINDS = ("sym", "pol", "ran", "gaussian")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}

CONFIG_MAGIC = b"AKCF"
CONFIG_VERSION = 1
_HEADER = struct.Struct("<4sHBIII")

# rows per matmul chunk, keeps (rows x m) scratch near 16M floats
_CHUNK_ELEMS = 1 << 24


class ConfigurationError(ValueError):
    """A configuration violates a contract (e.g. a non-positive reference cosine)."""


@dataclass(frozen=True, eq=False)
class ProjectionConfig:
    kind: str
    layout: SubspaceLayout
    m: int
    codewords: np.ndarray = field(repr=False)  # (L, m, d')
    antipodal: bool
    seed: Optional[int] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown configuration kind {self.kind!r}")
        expected = (self.layout.L, self.m, self.layout.d_sub)
        if self.codewords.shape != expected:
            raise ValueError(f"codewords have shape {self.codewords.shape}, expected {expected}")
        if self.kind == "gaussian" and self.layout.L != 1:
            raise ValueError("the Gaussian baseline is single-level")

    @property
    def d(self) -> int:
        return self.layout.d

    @property
    def L(self) -> int:
        return self.layout.L

    def flat_codewords(self) -> np.ndarray:
        """(m, d) matrix of codewords; only meaningful for L == 1."""
        if self.L != 1:
            raise ValueError("flat codewords exist only for single-level configurations")
        return self.codewords[0]

    def virtual_codeword(self, codes) -> np.ndarray:
        """Concatenate the chosen sub-vector of every level."""
        return np.concatenate([self.codewords[i, int(c)] for i, c in enumerate(codes)])


class ReferenceAssignment(NamedTuple):
    codes: np.ndarray  # (L,) codeword index per level
    a_s: float  # cosine of the reference angle


class JEstimate(NamedTuple):
    mean: float
    stderr: float
    n: int


def _interleave_antipodal(points: np.ndarray) -> np.ndarray:
    out = np.empty((2 * points.shape[0], points.shape[1]))
    out[0::2] = points
    out[1::2] = -points
    return out


def build_sym(m: int, layout: SubspaceLayout, seed: int = 0) -> ProjectionConfig:
    """m/2 uniform points per level plus their negations, scaled to 1/sqrt(L)."""
    if m < 2 or m % 2:
        raise ValueError(f"S_sym needs an even m >= 2, got {m}")
    scale = 1.0 / math.sqrt(layout.L)
    levels = []
    for level in range(layout.L):
        pts = sample_uniform_sphere(layout.d_sub, make_rng(seed, "points", level), m // 2)
        levels.append(_interleave_antipodal(pts) * scale)
    return ProjectionConfig("sym", layout, m, np.stack(levels), True, seed)


def build_ran(m: int, layout: SubspaceLayout, seed: int = 0) -> ProjectionConfig:
    """m independent uniform points per level, scaled to 1/sqrt(L).

    Draws from the same per-level stream as :func:`build_sym`, so for one
    seed the first m/2 points of S_ran are the base points of S_sym. Paired
    comparisons of the two then differ only through the second half.
    """
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    scale = 1.0 / math.sqrt(layout.L)
    levels = [sample_uniform_sphere(layout.d_sub, make_rng(seed, "points", level), m) * scale
              for level in range(layout.L)]
    return ProjectionConfig("ran", layout, m, np.stack(levels), False, seed)


def _cross_polytopes(m: int, d_sub: int, rng: np.random.Generator) -> np.ndarray:
    a, b = divmod(m, 2 * d_sub)
    blocks = []
    for _ in range(a):
        h = haar_orthogonal(d_sub, rng)
        blocks.append(_interleave_antipodal(h.T))
    if b:
        h = haar_orthogonal(d_sub, rng)
        blocks.append(_interleave_antipodal(h.T[: b // 2]))
    return np.concatenate(blocks)


def _max_cosines(points: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    rows = max(1, _CHUNK_ELEMS // codewords.shape[0])
    out = np.empty(points.shape[0])
    for s in range(0, points.shape[0], rows):
        out[s:s + rows] = np.max(points[s:s + rows] @ codewords.T, axis=1)
    return out


def build_pol(m: int, layout: SubspaceLayout, R: int = 8, N: int = 200_000,
              seed: int = 0) -> ProjectionConfig:
    """Best of R candidates made of randomly rotated cross-polytopes.

    With m = 2d'a + b, a candidate holds ``a`` full polytopes (2d' vertices
    each) and b/2 antipodal pairs taken from one more rotated polytope.
    Candidates are scored by the mean reference cosine on one shared sample
    of N uniform points; the winner is copied to every level under an
    independent rotation and scaled to 1/sqrt(L).
    """
    ds = layout.d_sub
    if m < 2:
        raise ValueError(f"S_pol needs m >= 2, got {m}")
    if (m % (2 * ds)) % 2:
        raise ValueError(f"m={m} leaves an odd remainder modulo 2d'={2 * ds}")
    if R < 1:
        raise ValueError("R must be at least 1")
    if N < 1:
        raise ValueError("N must be at least 1")
    sample = sample_uniform_sphere(ds, make_rng(seed, "pol-eval"), N)
    cand_rng = make_rng(seed, "pol-candidates")
    best, best_j = None, -np.inf
    for _ in range(R):
        cand = _cross_polytopes(m, ds, cand_rng)
        j = float(np.mean(_max_cosines(sample, cand)))
        if j > best_j:
            best, best_j = cand, j
    scale = 1.0 / math.sqrt(layout.L)
    levels = []
    for level in range(layout.L):
        h = haar_orthogonal(ds, make_rng(seed, "pol-level", level))
        levels.append(best @ h.T * scale)
    return ProjectionConfig("pol", layout, m, np.stack(levels), True, seed)


def build_gaussian(m: int, d: int, seed: int = 0) -> ProjectionConfig:
    """CEOs baseline: m/2 standard Gaussian vectors and their negations."""
    if m < 2 or m % 2:
        raise ValueError(f"the Gaussian baseline needs an even m >= 2, got {m}")
    g = make_rng(seed, "gaussian").standard_normal((m // 2, d))
    return ProjectionConfig("gaussian", SubspaceLayout(d, 1), m, _interleave_antipodal(g)[None], True, seed)


def build_config(kind: str, m: int, layout: SubspaceLayout, seed: int = 0, **kw) -> ProjectionConfig:
    if kind == "sym":
        return build_sym(m, layout, seed)
    if kind == "pol":
        return build_pol(m, layout, seed=seed, **kw)
    if kind == "ran":
        return build_ran(m, layout, seed)
    if kind == "gaussian":
        if layout.L != 1:
            raise ValueError("the Gaussian baseline is single-level")
        return build_gaussian(m, layout.d, seed)
    raise ValueError(f"unknown configuration kind {kind!r}")


def assign_batch(x: np.ndarray, cfg: ProjectionConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-level argmax codes (n, L) and summed reference cosines (n,) for rows of x.

    Rows are not required to be unit-norm here; callers that need a cosine
    normalize first. Ties go to the lowest index.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xv = level_view(x, cfg.layout)
    n = x.shape[0]
    codes = np.empty((n, cfg.L), dtype=np.int64)
    a_s = np.zeros(n)
    rows = max(1, _CHUNK_ELEMS // cfg.m)
    for s in range(0, n, rows):
        for i in range(cfg.L):
            p = xv[s:s + rows, i, :] @ cfg.codewords[i].T
            c = np.argmax(p, axis=1)
            codes[s:s + rows, i] = c
            a_s[s:s + rows] += p[np.arange(p.shape[0]), c]
    return codes, a_s


def assign_reference(x: np.ndarray, cfg: ProjectionConfig, tol: float = 1e-6) -> ReferenceAssignment:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (cfg.d,):
        raise ValueError(f"expected a vector of dim {cfg.d}, got shape {x.shape}")
    if abs(np.linalg.norm(x) - 1.0) > tol:
        raise ValueError("assign_reference needs a unit-norm vector")
    codes, a_s = assign_batch(x[None], cfg)
    return ReferenceAssignment(codes[0], float(a_s[0]))


def _sphere_chunks(d: int, n: int, seed: int, stream: str = "estimate_j", rows: int = 1 << 15):
    rng = make_rng(seed, stream, d)
    for s in range(0, n, rows):
        yield sample_uniform_sphere(d, rng, min(rows, n - s))


def reference_cosines(cfg: ProjectionConfig, n: int, seed: int) -> np.ndarray:
    """A_S over n uniform unit vectors; same (d, n, seed) gives the same vectors."""
    return np.concatenate([assign_batch(x, cfg)[1] for x in _sphere_chunks(cfg.d, n, seed)])


def estimate_j(cfg: ProjectionConfig, N: int, seed: int = 0) -> JEstimate:
    """Monte-Carlo mean of the reference cosine with its standard error."""
    if N < 1:
        raise ValueError("N must be at least 1")
    total = total_sq = 0.0
    for x in _sphere_chunks(cfg.d, N, seed):
        a = assign_batch(x, cfg)[1]
        total += float(a.sum())
        total_sq += float(np.dot(a, a))
    mean = total / N
    var = max(total_sq / N - mean * mean, 0.0) * N / max(N - 1, 1)
    return JEstimate(mean, math.sqrt(var / N), N)


def compare_j(first: ProjectionConfig, second: ProjectionConfig, N: int, seed: int = 0) -> JEstimate:
    """Paired estimate of J(first) - J(second) on a shared sample."""
    if first.d != second.d:
        raise ValueError("paired comparison needs configurations of the same dimension")
    total = total_sq = 0.0
    for x in _sphere_chunks(first.d, N, seed):
        diff = assign_batch(x, first)[1] - assign_batch(x, second)[1]
        total += float(diff.sum())
        total_sq += float(np.dot(diff, diff))
    mean = total / N
    var = max(total_sq / N - mean * mean, 0.0) * N / max(N - 1, 1)
    return JEstimate(mean, math.sqrt(var / N), N)


def write_config(cfg: ProjectionConfig, fh: Union[str, os.PathLike, BinaryIO]) -> None:
    """Write the AKCF format: header then L*m*d' little-endian float32 entries."""
    payload = _HEADER.pack(CONFIG_MAGIC, CONFIG_VERSION, _KIND_CODE[cfg.kind], cfg.d, cfg.L, cfg.m)
    payload += np.ascontiguousarray(cfg.codewords, dtype="<f4").tobytes()
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "wb") as f:
            f.write(payload)
    else:
        fh.write(payload)


def read_config(fh: Union[str, os.PathLike, BinaryIO]) -> ProjectionConfig:
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "rb") as f:
            return read_config(f)
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated configuration header")
    magic, version, kind, d, L, m = _HEADER.unpack(head)
    if magic != CONFIG_MAGIC:
        raise ValueError(f"bad configuration magic {magic!r}")
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported configuration version {version}")
    layout = SubspaceLayout(d, L)
    count = L * m * layout.d_sub
    raw = fh.read(4 * count)
    if len(raw) != 4 * count:
        raise ValueError("truncated configuration body")
    words = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(L, m, layout.d_sub)
    kind_name = KINDS[kind]
    return ProjectionConfig(kind_name, layout, m, words, kind_name != "ran")


def config_bytes(cfg: ProjectionConfig) -> bytes:
    buf = io.BytesIO()
    write_config(cfg, buf)
    return buf.getvalue()
