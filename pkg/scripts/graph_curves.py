"""Recall against exact distance computations for plain and routed HNSW, with an L sweep.

Prints the CSV rows and, for each routed curve, the share of plain search's
distance computations it needs at the target recall.
"""

import argparse
import sys

from akann.bench import GRAPH_COLUMNS, cost_at_recall, graph_curve
from akann.data import Dataset, compute_ground_truth, load_dataset, synthetic_split
from akann.graph import HnswParams, build_hnsw
from akann.manifest import RunManifest, log, write_csv


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data")
    ap.add_argument("--queries")
    ap.add_argument("--synthetic", choices=("sphere", "mixture"), default="sphere")
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--nq", type=int, default=1000)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--M", type=int, default=16)
    ap.add_argument("--efc", type=int, default=200)
    ap.add_argument("--L", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--efs", type=int, nargs="+", default=[50, 100, 150, 200, 300, 400, 600])
    ap.add_argument("--target", type=float, default=0.9)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output")
    args = ap.parse_args(argv)
    if args.data:
        base = load_dataset(args.data).vectors
        queries = load_dataset(args.queries).vectors
    else:
        base, queries = synthetic_split(args.synthetic, args.n, args.nq, args.d, args.seed)
    truth = compute_ground_truth(Dataset.from_array(base), Dataset.from_array(queries), 10)
    graph = build_hnsw(base, HnswParams(args.M, args.efc), args.seed)
    rows = graph_curve(graph, queries, truth, args.efs, args.L, args.seed)
    plain = cost_at_recall([r for r in rows if r["L"] == 0], args.target)
    for L in args.L:
        routed = cost_at_recall([r for r in rows if r["L"] == L], args.target)
        if plain and routed:
            log(f"L={L} (d'={base.shape[1] // L}): {routed / plain:.3f} of plain's distances at recall {args.target}")
    manifest = RunManifest(["graph_curves.py"] + list(argv or sys.argv[1:]), args.seed).finish()
    out = open(args.output, "w") if args.output else sys.stdout
    write_csv(rows, GRAPH_COLUMNS, manifest, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
