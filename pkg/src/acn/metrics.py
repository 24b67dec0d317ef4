"""Clustering quality against the ground truth, plus weighted modularity.

Everything except modularity is computed from a cluster x entity contingency
table restricted to ground-truth addresses. Entropies are in bits.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Hashable, Sequence

import numpy as np
from scipy.special import gammaln

from .chain import GroundTruth
from .lpa import Clustering
from .network import CorrespondenceNetwork


@dataclass
class ContingencyTable:
    counts: np.ndarray  # int64, clusters x entities
    row_labels: list
    col_labels: list

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def contingency_from_labels(rows: Sequence[Hashable], cols: Sequence[Hashable]) -> ContingencyTable:
    if len(rows) != len(cols):
        raise ValueError("label sequences differ in length")
    row_labels = sorted(set(rows), key=str)
    col_labels = sorted(set(cols), key=str)
    ri = {r: k for k, r in enumerate(row_labels)}
    ci = {c: k for k, c in enumerate(col_labels)}
    counts = np.zeros((len(row_labels), len(col_labels)), dtype=np.int64)
    np.add.at(counts, ([ri[r] for r in rows], [ci[c] for c in cols]), 1)
    return ContingencyTable(counts, row_labels, col_labels)


def contingency(c: Clustering, gt: GroundTruth, net: CorrespondenceNetwork | None = None) -> ContingencyTable:
    """Cluster x entity counts over the network's ground-truth nodes only."""
    scope = net.gt_nodes if net is not None else [a for a in c.assignment if a in gt.labels]
    addrs = sorted(scope)
    return contingency_from_labels([c.assignment[a] for a in addrs], [gt.labels[a] for a in addrs])


# --------------------------------------------------------------------------
# entropies

def _check_dist(dist) -> np.ndarray:
    p = np.asarray(dist, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
        raise ValueError("expected a non-empty probability vector summing to 1")
    return p


def entropy(dist) -> float:
    p = _check_dist(dist)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def normalized_entropy(dist, k: int | None = None) -> float:
    """Entropy divided by log2 of the support size ``k`` (default: vector length); 0 when k == 1."""
    p = _check_dist(dist)
    k = len(p) if k is None else k
    if k <= 1:
        return 0.0
    return min(1.0, max(0.0, entropy(p) / math.log2(k)))


def _entropy_counts(counts: np.ndarray) -> float:
    counts = np.asarray(counts, dtype=np.float64)
    counts = counts[counts > 0]
    n = counts.sum()
    if n == 0:
        return 0.0
    return float(math.log2(n) - (counts * np.log2(counts)).sum() / n)


def per_cluster_entropies(t: ContingencyTable) -> dict:
    """Normalized entropy of the entity mix in each cluster, over the entities present in it."""
    out = {}
    for label, row in zip(t.row_labels, t.counts):
        k = int(np.count_nonzero(row))
        out[label] = 0.0 if k <= 1 else min(1.0, _entropy_counts(row) / math.log2(k))
    return out


def per_entity_entropies(t: ContingencyTable) -> dict:
    """Normalized entropy of each entity's spread over clusters, over all clusters of the table."""
    k = t.counts.shape[0]
    out = {}
    for label, col in zip(t.col_labels, t.counts.T):
        out[label] = 0.0 if k <= 1 else min(1.0, _entropy_counts(col) / math.log2(k))
    return out


def conditional_entropy(t: ContingencyTable) -> float:
    """H(E | C) in bits, entities given clusters."""
    n = t.total
    rows = t.row_totals
    nz = np.nonzero(t.counts)
    nij = t.counts[nz].astype(np.float64)
    return float(-(nij / n * np.log2(nij / rows[nz[0]])).sum())


def homogeneity(t: ContingencyTable) -> float:
    h_e = _entropy_counts(t.col_totals)
    if h_e == 0.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - conditional_entropy(t) / h_e))


def _mi_nats(counts: np.ndarray, a: np.ndarray, b: np.ndarray, n: int) -> float:
    nz = np.nonzero(counts)
    nij = counts[nz].astype(np.float64)
    return max(float((nij * (np.log(n * nij) - np.log(a[nz[0]] * b[nz[1]].astype(np.float64)))).sum() / n), 0.0)


def mutual_information(t: ContingencyTable, base: float = 2.0) -> float:
    return _mi_nats(t.counts, t.row_totals, t.col_totals, t.total) / math.log(base)


def _grouped(sizes) -> tuple[np.ndarray, np.ndarray]:
    """Distinct positive sizes and their multiplicities."""
    counts = np.bincount(np.asarray(sizes, dtype=np.int64))
    values = np.flatnonzero(counts)
    values = values[values > 0]
    return values, counts[values]


def expected_mutual_information(a: np.ndarray, b: np.ndarray, n: int) -> float:
    """E[MI] in nats under the permutation model with fixed margins ``a``, ``b``.

    Terms depend only on the margin values, so equal margins are grouped.
    """
    av, am = _grouped(a)
    bv, bm = _grouped(b)
    lf = gammaln(np.arange(n + 1, dtype=np.float64) + 1)  # log k!
    bj = bv[:, None]
    log_b = (lf[bv] + lf[n - bv] - lf[n])[:, None]
    emi = 0.0
    for ai, mult in zip(av.tolist(), am.tolist()):
        nij = np.arange(1, ai + 1)[None, :]
        rest = n - ai - bj + nij
        valid = (rest >= 0) & (nij <= bj)
        # invalid cells get clipped indices and are masked out
        log_p = (lf[ai] + lf[n - ai] + log_b - lf[nij] - lf[ai - nij]
                 - lf[np.maximum(bj - nij, 0)] - lf[np.clip(rest, 0, n)])
        term = (nij / n) * (np.log(n * nij) - np.log(ai * bj)) * np.exp(log_p)
        emi += mult * float(np.where(valid, term, 0.0).sum(axis=1) @ bm)
    return emi


_NORMALIZERS = {
    "arithmetic": lambda x, y: (x + y) / 2.0,
    "max": max,
    "min": min,
    "geometric": lambda x, y: math.sqrt(x * y),
}


def ami(t: ContingencyTable, normalizer: str = "arithmetic") -> float:
    n = t.total
    if n < 2:
        raise ValueError("AMI needs at least two labeled addresses")
    r, c = t.counts.shape
    if (r == c == 1) or (r == c == n):
        return 1.0
    a, b = t.row_totals, t.col_totals
    mi = _mi_nats(t.counts, a, b, n)
    emi = expected_mutual_information(a, b, n)
    h_c = _entropy_counts(a) * math.log(2)
    h_k = _entropy_counts(b) * math.log(2)
    denom = _NORMALIZERS[normalizer](h_c, h_k) - emi
    if denom == 0.0:
        return 1.0
    return float(min(1.0, max(-1.0, (mi - emi) / denom)))


def ari_exact(t: ContingencyTable) -> Fraction:
    """Adjusted Rand index as an exact rational from the pair counts of the table."""
    n = t.total
    if n < 2:
        raise ValueError("ARI needs at least two labeled addresses")
    comb2 = lambda x: x * (x - 1) // 2  # noqa: E731
    s = sum(comb2(int(x)) for x in t.counts.ravel() if x > 1)
    sa = sum(comb2(int(x)) for x in t.row_totals)
    sb = sum(comb2(int(x)) for x in t.col_totals)
    pairs = comb2(n)
    num = 2 * (s * pairs - sa * sb)
    den = (sa + sb) * pairs - 2 * sa * sb
    if den == 0:
        # both partitions trivial in the same way: nothing to adjust for
        return Fraction(1)
    return Fraction(num, den)


def ari(t: ContingencyTable) -> float:
    return float(ari_exact(t))


def modularity(net: CorrespondenceNetwork, c: Clustering) -> float:
    """Weighted modularity sum_i (q_ii - r_i^2)."""
    if not net.edges:
        raise ValueError("modularity is undefined without edges")
    codes = {lab: k for k, lab in enumerate(sorted(set(c.assignment[a] for a in net.node_list)))}
    node_code = np.array([codes[c.assignment[a]] for a in net.node_list], dtype=np.int64)
    src, dst, w = net.edge_arrays()
    w = w.astype(np.float64)
    total = w.sum()
    cs, cd = node_code[src], node_code[dst]
    inside = np.bincount(cs[cs == cd], weights=w[cs == cd], minlength=len(codes)) / total
    ends = (np.bincount(cs, weights=w, minlength=len(codes))
            + np.bincount(cd, weights=w, minlength=len(codes))) / (2 * total)
    return float((inside - ends ** 2).sum())


# --------------------------------------------------------------------------
# report

@dataclass
class MetricsReport:
    modularity: float | None
    homogeneity: float
    ami: float
    ari: float
    cluster_count: int
    per_cluster_entropy: dict = field(default_factory=dict)
    per_entity_entropy: dict = field(default_factory=dict)
    p: float = 0.0
    cluster_sizes: dict = field(default_factory=dict, repr=False)
    cluster_gt_sizes: dict = field(default_factory=dict, repr=False)
    entity_gt_sizes: dict = field(default_factory=dict, repr=False)

    def scalars(self) -> dict:
        return {"p": self.p, "cluster_count": self.cluster_count, "modularity": self.modularity,
                "homogeneity": self.homogeneity, "ami": self.ami, "ari": self.ari}

    def to_json(self) -> str:
        d = asdict(self)
        for key in ("cluster_sizes", "cluster_gt_sizes", "entity_gt_sizes"):
            d.pop(key)
        return json.dumps(d, indent=1, sort_keys=True) + "\n"

    def per_cluster_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cluster", "size", "gt_size", "norm_entropy"])
        for label in sorted(self.per_cluster_entropy, key=str):
            w.writerow([label, self.cluster_sizes.get(label, 0), self.cluster_gt_sizes.get(label, 0),
                        repr(self.per_cluster_entropy[label])])
        return buf.getvalue()

    def per_entity_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["entity", "gt_size", "norm_entropy"])
        for label in sorted(self.per_entity_entropy, key=str):
            w.writerow([label, self.entity_gt_sizes.get(label, 0), repr(self.per_entity_entropy[label])])
        return buf.getvalue()


def metrics_report(net: CorrespondenceNetwork, c: Clustering, gt: GroundTruth) -> MetricsReport:
    t = contingency(c, gt, net)
    if t.total < 2:
        raise ValueError("need at least two ground-truth addresses in the network to score a clustering")
    q = modularity(net, c) if net.edges else None
    sizes = Counter(c.assignment.values())
    return MetricsReport(
        modularity=q,
        homogeneity=homogeneity(t),
        ami=ami(t),
        ari=ari(t),
        cluster_count=len(sizes),
        per_cluster_entropy=per_cluster_entropies(t),
        per_entity_entropy=per_entity_entropies(t),
        p=c.p,
        cluster_sizes=dict(sizes),
        cluster_gt_sizes={lab: int(x) for lab, x in zip(t.row_labels, t.row_totals)},
        entity_gt_sizes={lab: int(x) for lab, x in zip(t.col_labels, t.col_totals)},
    )
