"""Intra- and inter-cluster degree scaling with cluster size, and a power-law fit of cluster sizes."""

from acn.analysis import PowerLawFitError, degree_scaling, fit_power_law, intra_inter_degrees
from acn.lpa import seeded_lpa
from _common import default_network, parser


def main():
    ap = parser(__doc__)
    ap.add_argument("--p", type=float, default=0.1, help="seeded fraction for the clustering")
    args = ap.parse_args()
    ledger, net = default_network(args)
    c = seeded_lpa(net, ledger.ground_truth, args.p, args.seed)
    records = intra_inter_degrees(net, c)
    for key, fit in degree_scaling(records).items():
        print(f"log {key:<12} = {fit['slope']:.3f} log size {fit['intercept']:+.3f}")
    sizes = [r.size for r in records]
    try:
        fit = fit_power_law(sizes, min_tail=20)
    except PowerLawFitError as exc:
        print(f"cluster sizes: no power-law fit ({exc})")
        return
    print(f"cluster sizes: alpha {fit.alpha:.3f}, xmin {fit.xmin}, tail {fit.n_tail}, "
          f"LR vs exponential {fit.lr_vs_exponential:.2f} (p = {fit.lr_p_value:.3g})")


if __name__ == "__main__":
    main()
