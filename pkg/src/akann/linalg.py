"""Rotations, sphere sampling, subspace layouts and seeded randomness."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

EXACT = "exact-orthogonal"
STRUCTURED = "structured-fast"
IDENTITY = "identity"
ROTATION_MODES = (EXACT, STRUCTURED, IDENTITY)

StreamKey = Union[int, str]


def _stream_word(key: StreamKey) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    return int(key) & 0xFFFFFFFF


def make_rng(seed: int, *stream: StreamKey) -> np.random.Generator:
    """Counter-based generator for one named stream derived from ``seed``.

    Every consumer asks for its own stream (``make_rng(seed, "pol", level)``),
    so modules draw independent numbers without sharing a generator.
    """
    ss = np.random.SeedSequence(
        entropy=int(seed) & 0xFFFFFFFFFFFFFFFF,
        spawn_key=tuple(_stream_word(k) for k in stream),
    )
    return np.random.Generator(np.random.Philox(ss))


def as_rng(rng: Union[None, int, np.random.Generator]) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return make_rng(0 if rng is None else rng)


def next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def fwht(x: np.ndarray) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform along the last axis.

    The last axis length must be a power of two. Returns a new array.
    """
    x = np.array(x, dtype=np.float64, copy=True)
    n = x.shape[-1]
    if n & (n - 1):
        raise ValueError(f"fwht needs a power-of-two length, got {n}")
    lead = x.shape[:-1]
    h = 1
    while h < n:
        y = x.reshape(lead + (n // (2 * h), 2, h))
        a = y[..., 0, :].copy()
        b = y[..., 1, :]
        y[..., 0, :] = a + b
        y[..., 1, :] = a - b
        h *= 2
    return x


def haar_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed matrix in SO(dim) (Gaussian QR with sign fix)."""
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@dataclass(frozen=True, eq=False)
class Rotation:
    """Orthogonal map of R^dim.

    Exact mode holds a dense Haar matrix. Structured mode stores three
    +-1 diagonals and applies ``(W D3)(W D2)(W D1)`` with ``W`` the
    normalized Hadamard transform on the next power of two; for dims that
    are not powers of two the input is zero-padded and the output
    truncated, which is no longer exactly orthogonal.
    """

    mode: str
    dim: int
    seed: int
    matrix: Optional[np.ndarray] = field(default=None, repr=False)
    signs: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def padded_dim(self) -> int:
        return next_pow2(self.dim) if self.mode == STRUCTURED else self.dim

    @classmethod
    def identity(cls, dim: int) -> "Rotation":
        return cls(IDENTITY, dim, 0)

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.dim:
            raise ValueError(f"rotation of dim {self.dim} applied to vector of dim {x.shape[-1]}")
        return x

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Rotate a vector or each row of a matrix."""
        x = self._check(x)
        if self.mode == IDENTITY:
            return x.copy()
        if self.mode == EXACT:
            return x @ self.matrix.T
        return self._structured(x, transpose=False)

    def apply_transpose(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        if self.mode == IDENTITY:
            return x.copy()
        if self.mode == EXACT:
            return x @ self.matrix
        return self._structured(x, transpose=True)

    def _structured(self, x: np.ndarray, transpose: bool) -> np.ndarray:
        n = self.padded_dim
        y = np.zeros(x.shape[:-1] + (n,))
        y[..., : self.dim] = x
        scale = 1.0 / np.sqrt(n)
        if not transpose:
            for s in self.signs:
                y = fwht(y * s) * scale
        else:
            for s in self.signs[::-1]:
                y = fwht(y) * scale * s
        return y[..., : self.dim]

    def as_matrix(self) -> np.ndarray:
        """Dense matrix whose columns are the images of the basis vectors."""
        if self.mode == EXACT:
            return self.matrix.copy()
        return self.apply(np.eye(self.dim)).T


def sample_rotation(dim: int, seed: int, mode: str = EXACT) -> Rotation:
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    if mode == EXACT:
        mat = haar_orthogonal(dim, make_rng(seed, "rotation", dim))
        mat.setflags(write=False)
        return Rotation(EXACT, dim, seed, matrix=mat)
    if mode == STRUCTURED:
        rng = make_rng(seed, "rotation-structured", dim)
        signs = rng.choice(np.array([-1.0, 1.0]), size=(3, next_pow2(dim)))
        signs.setflags(write=False)
        return Rotation(STRUCTURED, dim, seed, signs=signs)
    if mode == IDENTITY:
        return Rotation.identity(dim)
    raise ValueError(f"unknown rotation mode {mode!r}")


def apply_rotation(h: Rotation, x: np.ndarray) -> np.ndarray:
    return h.apply(x)


def haar_batch(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent Haar rotations stacked as (count, dim, dim)."""
    a = rng.standard_normal((count, dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diagonal(r, axis1=1, axis2=2))[:, None, :]
    neg = np.linalg.det(q) < 0
    q[neg, :, 0] *= -1
    return q


def sample_uniform_sphere(dim: int, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """Uniform point(s) on the unit sphere in R^dim by normalizing Gaussians."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    shape = (dim,) if size is None else (size, dim)
    g = rng.standard_normal(shape)
    norms = np.linalg.norm(g, axis=-1, keepdims=True)
    # zero-norm draws have probability zero but would poison the batch
    while np.any(norms == 0):
        bad = (norms == 0).reshape(-1)
        g.reshape(-1, dim)[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(g, axis=-1, keepdims=True)
    return g / norms


def random_orthogonal_complement(v: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    """Uniform unit vectors orthogonal to each row of ``v`` (or to one vector ``v``)."""
    v = np.atleast_2d(v)
    dim = v.shape[1]
    g = rng.standard_normal((size, dim))
    g -= np.sum(g * v, axis=1, keepdims=True) * v
    return g / np.linalg.norm(g, axis=1, keepdims=True)


@dataclass(frozen=True)
class SubspaceLayout:
    """Partition of R^d into L consecutive blocks of d' = d / L coordinates."""

    d: int
    L: int = 1

    def __post_init__(self):
        if self.d < 1 or self.L < 1:
            raise ValueError(f"invalid layout d={self.d}, L={self.L}")
        if self.d % self.L:
            raise ValueError(f"d={self.d} is not divisible by L={self.L}")
        if self.d_sub < 2:
            raise ValueError(f"sub-dimension d'={self.d_sub} must be at least 2")
        if self.d_sub == 2:
            warnings.warn("sub-dimension d'=2 is below the d'>=3 the reference-angle bound assumes",
                          stacklevel=3)

    @property
    def d_sub(self) -> int:
        return self.d // self.L


def split_levels(x: np.ndarray, layout: SubspaceLayout) -> Sequence[np.ndarray]:
    """Views of the L sub-vectors of ``x`` (last axis)."""
    x = np.asarray(x)
    if x.shape[-1] != layout.d:
        raise ValueError(f"vector of dim {x.shape[-1]} does not match layout d={layout.d}")
    ds = layout.d_sub
    return [x[..., i * ds:(i + 1) * ds] for i in range(layout.L)]


def level_view(x: np.ndarray, layout: SubspaceLayout) -> np.ndarray:
    """Reshape (..., d) to (..., L, d')."""
    x = np.asarray(x)
    if x.shape[-1] != layout.d:
        raise ValueError(f"vector of dim {x.shape[-1]} does not match layout d={layout.d}")
    return x.reshape(x.shape[:-1] + (layout.L, layout.d_sub))
