"""AKS2 graph files.

Layout (little-endian): header, per-node levels, layer-0 counts and
adjacency, upper-layer row starts, counts and adjacency, then an optional
routing block holding the rotation descriptor, the configuration, edge
codes, full-precision scalars and the 16-bit quantized scalars. Vectors
are not stored; the reader takes the dataset separately.
"""

from __future__ import annotations

import os
import struct
from typing import BinaryIO, Union

import numpy as np

from ..configs import config_bytes, read_config
from ..linalg import IDENTITY, ROTATION_MODES, Rotation, sample_rotation
from .hnsw import HnswGraph, HnswParams
from .ks2 import Ks2Graph, QuantizedScalars

GRAPH_MAGIC = b"AKS2"
GRAPH_VERSION = 1
_HEADER = struct.Struct("<4sHIIIdQIIiiQB")
_ROUTING = struct.Struct("<BQB")
_MODE_CODE = {m: i for i, m in enumerate(ROTATION_MODES)}

PathOrFile = Union[str, os.PathLike, BinaryIO]


def _put(fh: BinaryIO, arr: np.ndarray, dtype: str) -> None:
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _get(fh: BinaryIO, dtype: str, shape) -> np.ndarray:
    dt = np.dtype(dtype)
    count = int(np.prod(shape))
    raw = fh.read(count * dt.itemsize)
    if len(raw) != count * dt.itemsize:
        raise ValueError("truncated graph file")
    return np.frombuffer(raw, dtype=dt).reshape(shape).copy()


def write_graph(g: Union[HnswGraph, Ks2Graph], fh: PathOrFile) -> None:
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "wb") as f:
            return write_graph(g, f)
    kg = g if isinstance(g, Ks2Graph) else None
    hg = kg.graph if kg is not None else g
    p = hg.params
    rows = hg.adju.shape[0]
    fh.write(_HEADER.pack(GRAPH_MAGIC, GRAPH_VERSION, p.M, p.efc, p.efs, p.level_lambda,
                          hg.seed & 0xFFFFFFFFFFFFFFFF, hg.n, hg.d, hg.entry, hg.top, rows,
                          1 if kg is not None else 0))
    _put(fh, hg.levels, "<i4")
    _put(fh, hg.cnt0, "<i4")
    _put(fh, hg.adj0, "<i4")
    _put(fh, hg.up_start, "<i8")
    _put(fh, hg.cntu, "<i4")
    _put(fh, hg.adju, "<i4")
    if kg is None:
        return
    fh.write(_ROUTING.pack(_MODE_CODE[kg.H.mode], kg.H.seed & 0xFFFFFFFFFFFFFFFF,
                           1 if kg.quantized is not None else 0))
    fh.write(config_bytes(kg.S))
    _put(fh, kg.codes, "u1")
    _put(fh, kg.c1, "<f8")
    _put(fh, kg.c2, "<f8")
    if kg.quantized is not None:
        q = kg.quantized
        _put(fh, q.c1_codes, "<u2")
        _put(fh, q.c2_codes, "<u2")
        for arr in (q.c1_offset, q.c1_step, q.c2_offset, q.c2_step):
            _put(fh, arr, "<f4")


def read_graph(fh: PathOrFile, data: np.ndarray) -> Union[HnswGraph, Ks2Graph]:
    """Load a graph written by :func:`write_graph` over the same ``data``."""
    if isinstance(fh, (str, os.PathLike)):
        with open(fh, "rb") as f:
            return read_graph(f, data)
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated graph header")
    (magic, version, M, efc, efs, lam, seed, n, d, entry, top, rows, routed) = _HEADER.unpack(head)
    if magic != GRAPH_MAGIC:
        raise ValueError(f"bad graph magic {magic!r}")
    if version != GRAPH_VERSION:
        raise ValueError(f"unsupported graph version {version}")
    X = np.ascontiguousarray(data, dtype=np.float32)
    if X.shape != (n, d):
        raise ValueError(f"dataset shape {X.shape} does not match graph ({n}, {d})")
    params = HnswParams(M, efc, efs, lam)
    levels = _get(fh, "<i4", (n,))
    cnt0 = _get(fh, "<i4", (n,))
    adj0 = _get(fh, "<i4", (n, 2 * M))
    up_start = _get(fh, "<i8", (n,))
    cntu = _get(fh, "<i4", (rows,))
    adju = _get(fh, "<i4", (rows, M))
    hg = HnswGraph(params, seed, X, levels, adj0, cnt0, up_start, adju, cntu, entry, top)
    if not routed:
        return hg
    mode, rseed, has_q = _ROUTING.unpack(fh.read(_ROUTING.size))
    S = read_config(fh)
    mode_name = ROTATION_MODES[mode]
    H = Rotation.identity(d) if mode_name == IDENTITY else sample_rotation(d, rseed, mode_name)
    slots = 2 * M
    codes = _get(fh, "u1", (n, S.L, slots))
    c1 = _get(fh, "<f8", (n, slots))
    c2 = _get(fh, "<f8", (n, slots))
    q = None
    if has_q:
        q = QuantizedScalars(_get(fh, "<u2", (n, slots)), _get(fh, "<u2", (n, slots)),
                             *(_get(fh, "<f4", (n,)) for _ in range(4)))
    norms2 = np.sum(X.astype(np.float64) ** 2, axis=1)
    return Ks2Graph(hg, S, H, codes, c1, c2, norms2, q)
