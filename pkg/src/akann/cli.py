"""``akann`` command line: configurations, bounds, verification suites, benchmarks."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import stats
from .bench import GRAPH_COLUMNS, MIPS_COLUMNS, MipsBench, graph_curve, mips_recalls, mips_rows
from .configs import KINDS, build_config, config_bytes, estimate_j, read_config, write_config
from .data import (Dataset, GroundTruth, array_digest, compute_ground_truth, data_root, load_dataset,
                   mean_recall, read_vecs, synthetic_split, write_vecs)
from .linalg import EXACT, STRUCTURED, SubspaceLayout, sample_rotation
from .manifest import RunManifest, log, write_csv
from .special import QuadratureError, refangle_lower_bound

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUITES = ("cdf", "comparison", "sensitivity", "jstat", "dominance", "simplex")


class UsageError(Exception):
    pass


def int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def efs_range(text: str) -> List[int]:
    """``lo:hi`` expands to a roughly geometric sweep; a comma list is taken as is."""
    if ":" not in text:
        return int_list(text)
    lo, hi = (int(t) for t in text.split(":"))
    if not 1 <= lo <= hi:
        raise argparse.ArgumentTypeError(f"bad efs range {text!r}")
    vals = np.unique(np.round(np.geomspace(lo, hi, 10)).astype(int))
    return [int(v) for v in vals]


def resolve(path: str) -> Path:
    p = Path(path)
    return p if p.is_absolute() or p.exists() else data_root() / p


def emit(args, rows, columns, manifest: RunManifest) -> None:
    manifest.finish()
    if args.output:
        with open(args.output, "w", newline="") as f:
            write_csv(rows, columns, manifest, f)
        Path(str(args.output) + ".manifest.json").write_text(manifest.to_json())
    else:
        write_csv(rows, columns, manifest, sys.stdout)


def _dataset(args, manifest: RunManifest, metric: str, need_queries: bool = True):
    """(base, queries) from files or the synthetic generator; queries may be None."""
    if args.data:
        base = load_dataset(resolve(args.data), metric)
        queries = None
        if args.queries:
            queries = load_dataset(resolve(args.queries), metric)
        elif need_queries:
            raise UsageError("--queries is required with --data")
    else:
        b, q = synthetic_split(args.synthetic, args.n, args.nq, args.d, args.seed)
        base, queries = Dataset.from_array(b, metric), Dataset.from_array(q, metric)
    manifest.dataset_hashes["base"] = base.digest()
    if queries is not None:
        manifest.dataset_hashes["queries"] = queries.digest()
    return base, queries


def _truth(args, base: Dataset, queries: Dataset, k: int, metric: str) -> GroundTruth:
    if getattr(args, "gt", None):
        ids = read_vecs(resolve(args.gt), "ivecs")
        if ids.shape[0] != queries.n or ids.shape[1] < k:
            raise UsageError("ground-truth file does not match the query set")
        return GroundTruth(ids.astype(np.int64), np.zeros(ids.shape), metric)
    if args.data:
        log("warning: no ground truth given, computing it exactly")
    return compute_ground_truth(base, queries, k, metric)


# ---- commands ---------------------------------------------------------------------------


def cmd_config(args, manifest: RunManifest) -> int:
    if args.action == "build":
        layout = SubspaceLayout(args.d, args.L)
        kw = {"R": args.R, "N": args.N} if args.kind == "pol" else {}
        cfg = build_config(args.kind, args.m, layout, args.seed, **kw)
        if not args.out:
            raise UsageError("config build needs --out")
        write_config(cfg, args.out)
        log(f"wrote {args.kind} configuration d={args.d} L={args.L} m={args.m} to {args.out}")
        return EXIT_OK
    cfg = read_config(args.file)
    est = estimate_j(cfg, args.N_eval, args.seed)
    rows = [{"kind": cfg.kind, "d": cfg.d, "L": cfg.L, "m": cfg.m,
             "hash": array_digest(np.frombuffer(config_bytes(cfg), np.uint8)),
             "j_mean": est.mean, "j_stderr": est.stderr}]
    emit(args, rows, list(rows[0]), manifest)
    return EXIT_OK


def cmd_bound(args, manifest: RunManifest) -> int:
    rows, ok = [], True
    for m in args.m:
        prev = None
        for L in args.L:
            row = {"m": m, "d": args.d, "L": L, "value": float("nan"), "increasing": "", "error": ""}
            try:
                row["value"] = refangle_lower_bound(m, SubspaceLayout(args.d, L))
                if prev is not None:
                    row["increasing"] = row["value"] > prev
                    ok &= row["value"] > prev
                prev = row["value"]
            except (ValueError, QuadratureError) as exc:
                row["error"] = str(exc)
                ok = False
            rows.append(row)
    emit(args, rows, ("m", "d", "L", "value", "increasing", "error"), manifest)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_verify(args, manifest: RunManifest) -> int:
    s = args.suite
    if s == "cdf":
        ds = [args.d] if args.d else [4, 16, 64]
        rows = stats.cdf_suite(ds, n=args.n or 200_000, seed=args.seed)
    elif s == "comparison":
        d = args.d or 16
        grid = [j * math.pi / 12 for j in range(1, 12)]
        pts = stats.verify_comparison_monotonicity(d, math.pi / 4, math.pi / 3, grid,
                                                   args.n or 200_000, args.seed)
        rows = stats.comparison_rows(pts, d)
    elif s == "sensitivity":
        rows = stats.sensitivity_suite(d=args.d or 16, n=args.n or 2_000_000, seed=args.seed)
    elif s == "jstat":
        rows = [stats.jstat_check(args.m or 256, args.d or 128, args.L, args.n or 1_000_000, args.seed)]
    elif s == "dominance":
        rows = stats.dominance_checks(args.m or 256, args.d or 128, args.L, args.n or 20_000_000,
                                      seed=args.seed)
    else:
        rows = [stats.simplex_check(args.n or 10_000, args.d or 8, args.seed)]
    emit(args, [r.as_csv() for r in rows], stats.CSV_COLUMNS, manifest)
    bad = stats.failing(rows)
    if bad is not None:
        log(f"FAIL {bad.as_csv()}")
        return EXIT_FAIL
    return EXIT_OK


def cmd_mips(args, manifest: RunManifest) -> int:
    from .mips import MipsQueryParams, build_ks1, query_ks1, read_ks1, write_ks1

    if args.action == "build":
        base, _ = _dataset(args, manifest, "ip", need_queries=False)
        cfg = build_config(args.config, args.m, SubspaceLayout(base.d, 1), args.seed)
        idx = build_ks1(base.vectors, cfg, sample_rotation(base.d, args.seed, args.rotation),
                        truncate=args.truncate)
        if not args.out:
            raise UsageError("mips build needs --out")
        write_ks1(idx, args.out)
        log(f"wrote index n={idx.n} m={idx.m} to {args.out}")
        return EXIT_OK
    if args.action == "query":
        if not (args.index and args.data and args.queries):
            raise UsageError("mips query needs --index, --data and --queries")
        base = load_dataset(resolve(args.data), "ip")
        idx = read_ks1(args.index, base.vectors)
        queries = load_dataset(resolve(args.queries), "ip")
        p = MipsQueryParams(args.k, args.s0, args.probe)
        rows = []
        for qi, q in enumerate(queries.vectors):
            res = query_ks1(idx, q, p)
            for rank, (i, s) in enumerate(zip(res.ids, res.scores)):
                rows.append({"query": qi, "rank": rank, "id": int(i), "score": float(s),
                             "evaluated": res.evaluated})
        emit(args, rows, ("query", "rank", "id", "score", "evaluated"), manifest)
        return EXIT_OK
    base, queries = _dataset(args, manifest, "ip")
    truth = _truth(args, base, queries, args.k, "ip")
    spec = MipsBench(kinds=tuple(args.kinds), m=args.m, s0=args.s0, probes=tuple(args.probes),
                     runs=args.runs, k=args.k)
    rec = mips_recalls(base.vectors, queries.vectors, truth, spec, args.seed)
    emit(args, mips_rows(rec, spec), MIPS_COLUMNS, manifest)
    return EXIT_OK


def cmd_graph(args, manifest: RunManifest) -> int:
    from .configs import build_sym
    from .graph import (HnswParams, Ks2Graph, attach_ks2, build_hnsw, read_graph, search_hnsw,
                        search_ks2, write_graph)

    if args.action == "build":
        base, _ = _dataset(args, manifest, args.metric, need_queries=False)
        g = build_hnsw(base.vectors, HnswParams(args.M, args.efc), args.seed)
        out = g
        if args.L:
            S = build_sym(256, SubspaceLayout(base.d, args.L), args.seed)
            out = attach_ks2(g, S, sample_rotation(base.d, args.seed, args.rotation))
        if not args.out:
            raise UsageError("graph build needs --out")
        write_graph(out, args.out)
        log(f"wrote graph n={g.n} top={g.top} to {args.out}")
        return EXIT_OK
    base, queries = _dataset(args, manifest, args.metric)
    truth = _truth(args, base, queries, args.k, "l2")
    if args.action == "search":
        if not args.graph:
            raise UsageError("graph search needs --graph")
        g = read_graph(args.graph, base.vectors)
        rows = []
        for efs in args.efs_sweep:
            if isinstance(g, Ks2Graph):
                res = search_ks2(g, queries.vectors, args.k, efs)
            else:
                res = search_hnsw(g, queries.vectors, args.k, efs)
            rows.append({"efs": efs, "recall": mean_recall(res.ids, truth, args.k),
                         "dist_evals": float(res.dist_evals.mean()), "tests": float(res.tests.mean())})
        emit(args, rows, ("efs", "recall", "dist_evals", "tests"), manifest)
        return EXIT_OK
    g = build_hnsw(base.vectors, HnswParams(args.M, args.efc), args.seed)
    L_list = args.L_sweep if args.L_sweep else [args.L or 4]
    rows = graph_curve(g, queries.vectors, truth, args.efs_sweep, L_list, args.seed, args.k)
    emit(args, rows, GRAPH_COLUMNS, manifest)
    return EXIT_OK


def cmd_gt(args, manifest: RunManifest) -> int:
    base, queries = _dataset(args, manifest, args.metric)
    truth = compute_ground_truth(base, queries, args.k, args.metric)
    if args.out:
        write_vecs(args.out, truth.ids.astype(np.int32), "ivecs")
        log(f"wrote {truth.ids.shape} ground truth to {args.out}")
        return EXIT_OK
    rows = [{"query": qi, "rank": r, "id": int(truth.ids[qi, r]), "score": float(truth.scores[qi, r])}
            for qi in range(truth.ids.shape[0]) for r in range(truth.k)]
    emit(args, rows, ("query", "rank", "id", "score"), manifest)
    return EXIT_OK


# ---- parser -----------------------------------------------------------------------------


def _data_flags(p: argparse.ArgumentParser, n: int, d: int, nq: int = 1000) -> None:
    p.add_argument("--data", help="base vectors (.fvecs/.bvecs), relative to AKANN_DATA_DIR")
    p.add_argument("--queries", help="query vectors")
    p.add_argument("--gt", help="ground-truth ids (.ivecs)")
    p.add_argument("--synthetic", choices=("sphere", "mixture"), default="mixture")
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--nq", type=int, default=nq)
    p.add_argument("--d", type=int, default=d)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--output", help="CSV destination (default stdout)")

    ap = argparse.ArgumentParser(prog="akann", parents=[common],
                                 description="Reference-angle kernels, projection indexes and routed graph search.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("config", parents=[common], help="build or inspect a projection configuration")
    p.add_argument("action", choices=("build", "info"))
    p.add_argument("file", nargs="?", help="configuration file for info")
    p.add_argument("--kind", choices=KINDS, default="sym")
    p.add_argument("--m", type=int, default=256)
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--L", type=int, default=1)
    p.add_argument("--R", type=int, default=8)
    p.add_argument("--N", type=int, default=200_000)
    p.add_argument("--N-eval", dest="N_eval", type=int, default=100_000)
    p.add_argument("--out")

    p = sub.add_parser("bound", parents=[common], help="expected reference cosine of random codewords")
    p.add_argument("--m", type=int_list, default=[256])
    p.add_argument("--d", type=int, default=128)
    p.add_argument("--L", type=int_list, default=[1, 2, 4, 8])

    p = sub.add_parser("verify", parents=[common], help="run a statistical verification suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--L", type=int, default=1)

    p = sub.add_parser("mips", parents=[common], help="projection index for inner-product search")
    p.add_argument("action", choices=("build", "query", "bench"))
    _data_flags(p, 100_000, 200)
    p.add_argument("--config", choices=KINDS, default="pol")
    p.add_argument("--kinds", type=lambda s: s.split(","), default=["gaussian", "sym", "pol"])
    p.add_argument("--m", type=int, default=2048)
    p.add_argument("--rotation", choices=(EXACT, STRUCTURED), default=EXACT)
    p.add_argument("--truncate", type=int)
    p.add_argument("--index")
    p.add_argument("--out")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--s0", type=int, default=5)
    p.add_argument("--probe", type=int, default=100)
    p.add_argument("--probes", type=int_list, default=[10, 100, 1000, 10000])
    p.add_argument("--runs", type=int, default=10)

    p = sub.add_parser("graph", parents=[common], help="HNSW with routing tests")
    p.add_argument("action", choices=("build", "search", "bench"))
    _data_flags(p, 100_000, 64)
    p.add_argument("--metric", choices=("l2", "angular"), default="l2")
    p.add_argument("--M", type=int, default=16)
    p.add_argument("--efc", type=int, default=200)
    p.add_argument("--L", type=int, default=0, help="attach routing metadata with L levels (0: none)")
    p.add_argument("--L-sweep", dest="L_sweep", type=int_list)
    p.add_argument("--rotation", choices=(EXACT, STRUCTURED), default=EXACT)
    p.add_argument("--graph")
    p.add_argument("--out")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--efs-sweep", dest="efs_sweep", type=efs_range, default=efs_range("10:500"))

    p = sub.add_parser("gt", parents=[common], help="exact ground truth")
    p.add_argument("action", choices=("compute",))
    _data_flags(p, 10_000, 64, 100)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--metric", choices=("l2", "angular", "ip"), default="l2")
    p.add_argument("--out")
    return ap


COMMANDS = {"config": cmd_config, "bound": cmd_bound, "verify": cmd_verify, "mips": cmd_mips,
            "graph": cmd_graph, "gt": cmd_gt}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if args.threads > 0:
        import numba

        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    manifest = RunManifest(["akann"] + argv, args.seed)
    try:
        return COMMANDS[args.command](args, manifest)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        log(f"akann: error: {exc}")
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        log(f"akann: error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
