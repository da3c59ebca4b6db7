"""Desk-scale benchmark drivers shared by the CLI, scripts and acceptance tests."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .configs import build_config, build_sym
from .data import GroundTruth, mean_recall
from .graph import HnswGraph, attach_ks2, search_hnsw, search_ks2
from .linalg import EXACT, SubspaceLayout, sample_rotation
from .mips import build_ks1, recall_by_probe

MIPS_COLUMNS = ("method", "m", "s0", "probe", "runs", "recall", "stderr")
GRAPH_COLUMNS = ("method", "L", "efs", "recall", "dist_evals", "tests", "qps")


@dataclass(frozen=True)
class MipsBench:
    kinds: Sequence[str] = ("gaussian", "sym", "pol")
    m: int = 2048
    s0: int = 5
    probes: Sequence[int] = (10, 100, 1000, 10000)
    runs: int = 10
    k: int = 10
    pol_R: int = 8
    pol_N: int = 20_000


METHOD_NAMES = {"gaussian": "CEOs", "sym": "KS1-sym", "pol": "KS1-pol", "ran": "KS1-ran"}


def mips_recalls(data: np.ndarray, queries: np.ndarray, truth: GroundTruth, spec: MipsBench,
                 seed: int = 0) -> Dict[str, np.ndarray]:
    """Recall per (run, probe) for every configuration kind.

    Run r uses seed + r for both the configuration and the rotation, so
    every kind sees the same rotations.
    """
    d = data.shape[1]
    layout = SubspaceLayout(d, 1)
    depth = min(max(spec.probes), data.shape[0])
    out = {kind: np.zeros((spec.runs, len(spec.probes))) for kind in spec.kinds}
    for r in range(spec.runs):
        H = sample_rotation(d, seed + r, EXACT)
        for kind in spec.kinds:
            kw = {"R": spec.pol_R, "N": spec.pol_N} if kind == "pol" else {}
            S = build_config(kind, spec.m, layout, seed + r, **kw)
            idx = build_ks1(data, S, H, truncate=depth)
            rec = recall_by_probe(idx, queries, truth.ids, spec.probes, spec.s0, spec.k)
            out[kind][r] = [rec[p] for p in spec.probes]
    return out


def mips_rows(recalls: Dict[str, np.ndarray], spec: MipsBench) -> List[dict]:
    rows = []
    for kind, mat in recalls.items():
        for j, probe in enumerate(spec.probes):
            col = mat[:, j]
            se = float(col.std(ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0
            rows.append({"method": METHOD_NAMES[kind], "m": spec.m, "s0": spec.s0, "probe": probe,
                         "runs": len(col), "recall": float(col.mean()), "stderr": se})
    return rows


def graph_curve(graph: HnswGraph, queries: np.ndarray, truth: GroundTruth, efs_list: Sequence[int],
                L_list: Sequence[int] = (), seed: int = 0, k: int = 10) -> List[dict]:
    """(efs, recall, exact distances, tests, QPS) rows for plain HNSW and each routed L."""
    rows = []
    for efs in efs_list:
        t = time.perf_counter()
        res = search_hnsw(graph, queries, k, efs)
        qps = len(queries) / (time.perf_counter() - t)
        rows.append({"method": "HNSW", "L": 0, "efs": efs, "recall": mean_recall(res.ids, truth, k),
                     "dist_evals": float(res.dist_evals.mean()), "tests": 0.0, "qps": qps})
    for L in L_list:
        S = build_sym(256, SubspaceLayout(graph.d, L), seed)
        kg = attach_ks2(graph, S, sample_rotation(graph.d, seed, EXACT), quantize=False)
        for efs in efs_list:
            t = time.perf_counter()
            res = search_ks2(kg, queries, k, efs)
            qps = len(queries) / (time.perf_counter() - t)
            rows.append({"method": "HNSW+KS2", "L": L, "efs": efs,
                         "recall": mean_recall(res.ids, truth, k),
                         "dist_evals": float(res.dist_evals.mean()),
                         "tests": float(res.tests.mean()), "qps": qps})
    return rows


def cost_at_recall(rows: Sequence[dict], target: float, key: str = "dist_evals") -> Optional[float]:
    """Linear interpolation of ``key`` at ``target`` recall along an efs-sorted curve.

    Returns None when the curve never reaches the target.
    """
    pts = sorted((r["efs"], r["recall"], r[key]) for r in rows)
    for (_, r0, c0), (_, r1, c1) in zip(pts, pts[1:]):
        if r0 >= target:
            return c0
        if r0 < target <= r1:
            return c0 + (c1 - c0) * (target - r0) / (r1 - r0)
    if pts and pts[0][1] >= target:
        return pts[0][2]
    return None


def efs_at_recall(rows: Sequence[dict], target: float) -> Optional[int]:
    """Smallest efs on the curve whose recall reaches ``target``."""
    for r in sorted(rows, key=lambda r: r["efs"]):
        if r["recall"] >= target:
            return r["efs"]
    return None
