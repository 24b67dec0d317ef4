"""Clustering quality against the seeded fraction p, mean and sd over repeats."""

from acn.analysis import p_sweep
from _common import default_network, parser


def main():
    ap = parser(__doc__)
    ap.add_argument("--grid", type=float, nargs="+", default=[0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--csv", help="also write every (p, repeat) row here")
    args = ap.parse_args()
    ledger, net = default_network(args)
    result = p_sweep(net, ledger.ground_truth, args.grid, args.repeats, args.seed, jobs=args.jobs)
    keys = ("ami", "ari", "homogeneity", "modularity", "cluster_count")
    print("p      " + "  ".join(f"{k:>18}" for k in keys))
    summaries = {k: result.summary(k) for k in keys}
    for p in args.grid:
        print(f"{p:<6.3f} " + "  ".join(f"{summaries[k][p][0]:8.3f} +-{summaries[k][p][1]:7.3f}" for k in keys))
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(result.to_csv())


if __name__ == "__main__":
    main()
