"""Modularity of unseeded LPA on the network against degree-preserving randomizations of it."""

import numpy as np

from acn.analysis import randomize_network
from acn.chain import GroundTruth
from acn.lpa import seeded_lpa
from acn.metrics import modularity
from _common import default_network, parser


def main():
    ap = parser(__doc__)
    ap.add_argument("--replicas", type=int, default=20)
    ap.add_argument("--swap-factor", type=int, default=4, help="attempted swaps per edge")
    args = ap.parse_args()
    _, net = default_network(args)
    empty = GroundTruth({})
    original = modularity(net, seeded_lpa(net, empty, 0.0, args.seed))
    qs = []
    for i in range(args.replicas):
        r = randomize_network(net, args.swap_factor * net.edge_count, args.seed * 1000 + i)
        qs.append(modularity(r, seeded_lpa(r, empty, 0.0, args.seed)))
    qs = np.array(qs)
    sd = qs.std(ddof=1) if len(qs) > 1 else 0.0
    print(f"nodes {net.node_count}  edges {net.edge_count}")
    print(f"original Q   {original:.4f}")
    print(f"randomized Q {qs.mean():.4f} +- {sd:.4f} over {len(qs)} replicas")
    if sd > 0:
        print(f"gap          {(original - qs.mean()) / sd:.1f} sd")


if __name__ == "__main__":
    main()
