"""Reference-angle kernels for angle comparison and angle thresholding.

``k1`` ranks data vectors against a query through the codeword nearest the
(rotated) query; ``k2`` estimates a cosine from the codeword nearest the
rotated data vector, normalized by that vector's reference cosine.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .configs import ConfigurationError, ProjectionConfig, assign_batch
from .linalg import Rotation, SubspaceLayout
from .special import reg_inc_beta

UNIT_TOL = 1e-6


def _check_unit(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise ValueError(f"{name} must be unit-norm")
    return x


@dataclass(frozen=True, eq=False)
class KernelContext:
    S: ProjectionConfig
    H: Rotation
    rotated_codewords: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.H.dim != self.S.d:
            raise ValueError(f"rotation dim {self.H.dim} does not match configuration d={self.S.d}")

    @property
    def layout(self) -> SubspaceLayout:
        return self.S.layout

    @classmethod
    def build(cls, S: ProjectionConfig, H: Rotation) -> "KernelContext":
        """Context with H applied to every codeword when S is single-level."""
        rotated = H.apply(S.flat_codewords()) if S.L == 1 else None
        return cls(S, H, rotated)

    def query_codeword(self, q: np.ndarray) -> np.ndarray:
        """Z_{HS}(q): the rotated virtual codeword with the largest inner product with q."""
        if self.rotated_codewords is not None:
            return self.rotated_codewords[int(np.argmax(self.rotated_codewords @ q))]
        # <H u, q> = <u, H^T q>, so search the unrotated codewords with H^T q
        codes, _ = assign_batch(self.H.apply_transpose(q)[None], self.S)
        return self.H.apply(self.S.virtual_codeword(codes[0]))


def k1(ctx: KernelContext, q: np.ndarray, v: np.ndarray) -> float:
    q = _check_unit(q, "q")
    v = _check_unit(v, "v")
    return float(np.dot(v, ctx.query_codeword(q)))


def k1_mips(ctx: KernelContext, q: np.ndarray, v: np.ndarray) -> float:
    """Inner-product variant: ||v|| * k1(q, v/||v||); the zero vector scores 0."""
    q = _check_unit(q, "q")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        return 0.0
    return norm * float(np.dot(v / norm, ctx.query_codeword(q)))


def k2(ctx: KernelContext, q: np.ndarray, v: np.ndarray) -> float:
    """<Hq, Z_S(Hv)> / A_S(Hv), an estimator of <q, v>."""
    q = _check_unit(q, "q")
    v = _check_unit(v, "v")
    hv = ctx.H.apply(v)
    codes, a_s = assign_batch(hv[None], ctx.S)
    if a_s[0] <= 0:
        raise ConfigurationError(f"reference cosine {a_s[0]:.3g} is not positive")
    z = ctx.S.virtual_codeword(codes[0])
    return float(np.dot(ctx.H.apply(q), z) / a_s[0])


def k2_batch(S: ProjectionConfig, hq: np.ndarray, hv: np.ndarray) -> np.ndarray:
    """k2 for rows of already-rotated query and data vectors."""
    codes, a_s = assign_batch(hv, S)
    if np.any(a_s <= 0):
        raise ConfigurationError("reference cosine is not positive")
    hq_levels = hq.reshape(hq.shape[0], S.L, S.layout.d_sub)
    proj = np.zeros(hq.shape[0])
    for i in range(S.L):
        proj += np.einsum("nj,nj->n", hq_levels[:, i, :], S.codewords[i][codes[:, i]])
    return proj / a_s


@dataclass(frozen=True)
class AnglePair:
    phi: float  # angle between q and v
    psi: float  # reference angle

    def __post_init__(self):
        for name in ("phi", "psi"):
            val = getattr(self, name)
            if not (0.0 < val < math.pi):
                raise ValueError(f"{name}={val} must lie strictly inside (0, pi)")


def k1_cdf(x, angles: AnglePair, d: int):
    """P[k1(q, v) <= x | A_S(q) = cos(psi)] for <q, v> = cos(phi).

    Zero below cos(phi + psi) and one above cos(phi - psi).
    """
    if d < 3:
        raise ValueError(f"d must be at least 3, got {d}")
    phi, psi = angles.phi, angles.psi
    x = np.asarray(x, dtype=np.float64)
    t = 0.5 + (x - math.cos(phi) * math.cos(psi)) / (2.0 * math.sin(phi) * math.sin(psi))
    a = (d - 2) / 2.0
    out = reg_inc_beta(np.clip(t, 0.0, 1.0), a, a)
    return float(out) if np.ndim(out) == 0 else out


def p2_bound(phi: float, theta: float, psi, d: int):
    """Upper bound on P[k2 >= cos(theta)] when the true angle phi exceeds theta.

    ``psi`` may be an array of reference angles. Returns 0 where the Beta
    argument falls below zero.
    """
    if d < 3:
        raise ValueError(f"d must be at least 3, got {d}")
    if not (0.0 < phi < math.pi):
        raise ValueError(f"phi={phi} must lie inside (0, pi)")
    if not math.cos(phi) < math.cos(theta):
        raise ValueError("p2_bound needs cos(phi) < cos(theta)")
    psi = np.asarray(psi, dtype=np.float64)
    if np.any((psi <= 0) | (psi >= math.pi / 2)):
        raise ValueError("psi must lie inside (0, pi/2)")
    t = 0.5 - (math.cos(theta) - math.cos(phi)) / (2.0 * math.sin(phi) * np.tan(psi))
    if np.any(t > 1):
        warnings.warn("p2_bound argument above 1 clamped", stacklevel=2)
    a = (d - 2) / 2.0
    out = np.where(t <= 0, 0.0, reg_inc_beta(np.clip(t, 0.0, 1.0), a, a))
    return float(out) if out.ndim == 0 else out
