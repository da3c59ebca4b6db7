"""Average recall of the projection index against the Gaussian baseline, per probe depth.

Uses the clustered synthetic generator unless --data/--queries name fvecs files.
"""

import argparse
import sys

from akann.bench import MIPS_COLUMNS, MipsBench, mips_recalls, mips_rows
from akann.data import Dataset, compute_ground_truth, load_dataset, synthetic_split
from akann.manifest import RunManifest, log, write_csv


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data")
    ap.add_argument("--queries")
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--nq", type=int, default=2000)
    ap.add_argument("--d", type=int, default=200)
    ap.add_argument("--spread", type=float, default=0.35)
    ap.add_argument("--kinds", nargs="+", default=["gaussian", "sym", "pol"])
    ap.add_argument("--m", type=int, default=2048)
    ap.add_argument("--probes", type=int, nargs="+", default=[10, 100, 1000, 10000])
    ap.add_argument("--runs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--output")
    args = ap.parse_args(argv)
    if args.data:
        base = load_dataset(args.data, "ip").vectors
        queries = load_dataset(args.queries, "ip").vectors
    else:
        base, queries = synthetic_split("mixture", args.n, args.nq, args.d, seed=7, spread=args.spread)
    truth = compute_ground_truth(Dataset.from_array(base, "ip"), Dataset.from_array(queries, "ip"), 10, "ip")
    spec = MipsBench(kinds=tuple(args.kinds), m=args.m, probes=tuple(args.probes), runs=args.runs)
    log(f"n={len(base)} d={base.shape[1]} queries={len(queries)} runs={args.runs}")
    rows = mips_rows(mips_recalls(base, queries, truth, spec, args.seed), spec)
    manifest = RunManifest(["mips_table.py"] + list(argv or sys.argv[1:]), args.seed).finish()
    out = open(args.output, "w") if args.output else sys.stdout
    write_csv(rows, MIPS_COLUMNS, manifest, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
