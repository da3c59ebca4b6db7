"""Expected reference cosine of random codewords across m, d and L, as plot-ready CSV."""

import argparse
import sys

from akann.linalg import SubspaceLayout
from akann.manifest import RunManifest, write_csv
from akann.special import refangle_lower_bound


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[256, 512, 1024, 2048])
    ap.add_argument("--d", type=int, nargs="+", default=[64, 128, 256])
    ap.add_argument("--L", type=int, nargs="+", default=[1, 2, 4, 8, 16])
    ap.add_argument("--output")
    args = ap.parse_args(argv)
    rows = []
    for d in args.d:
        for m in args.m:
            for L in args.L:
                if d % L or d // L < 3:
                    continue
                rows.append({"d": d, "m": m, "L": L, "d_sub": d // L,
                             "value": refangle_lower_bound(m, SubspaceLayout(d, L))})
    manifest = RunManifest(["bound_curves.py"] + list(argv or sys.argv[1:]), 0).finish()
    out = open(args.output, "w") if args.output else sys.stdout
    write_csv(rows, ("d", "m", "L", "d_sub", "value"), manifest, out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
