"""Print the eigenspace table (l, eps, d, <=N, dim F, dim Hol) for a Gaussian model."""

import argparse

from holopnt import builtin, load_model
from holopnt.pnt import ScanConfig, format_csv, format_table, table_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("model", nargs="?", default="kerr2", help="builtin name or TOML path")
    ap.add_argument("--N-max", type=int, default=6)
    ap.add_argument("--k-max", type=int, default=3)
    ap.add_argument("--rank-tol", type=float, default=1e-6)
    ap.add_argument("--min-degeneracy", type=int, default=5)
    ap.add_argument("--csv", action="store_true")
    args = ap.parse_args()
    spec = load_model(args.model)[0] if args.model.endswith(".toml") else builtin(args.model)
    rows = table_report(spec, ScanConfig(N_max=args.N_max, k_max=args.k_max, rank_tol=args.rank_tol),
                        min_degeneracy=args.min_degeneracy)
    print(format_csv(rows) if args.csv else format_table(rows))


if __name__ == "__main__":
    main()
