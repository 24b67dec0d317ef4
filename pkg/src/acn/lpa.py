"""Label propagation with a frozen, ground-truth-seeded subset of nodes.

Votes are weight-aware: an unseeded node adopts the label carrying the largest
total incident edge weight. Sweeps are asynchronous over a fresh random order
each iteration; seeded nodes never change label.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .chain import GroundTruth
from .network import CorrespondenceNetwork
from .rng import derive_seed, make_rng, sample_without_replacement

UNSEEDED_PREFIX = "lpa:"


@dataclass
class Clustering:
    assignment: dict[str, str]
    seeds: dict[str, str] = field(default_factory=dict)
    p: float = 0.0
    iterations_used: int = 0
    converged: bool = True
    rng_seed: int | None = None

    def clusters(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for node in sorted(self.assignment):
            out.setdefault(self.assignment[node], []).append(node)
        return out

    @property
    def cluster_count(self) -> int:
        return len(set(self.assignment.values()))

    def meta(self) -> dict:
        return {"p": self.p, "rng_seed": self.rng_seed, "iterations_used": self.iterations_used,
                "converged": self.converged, "seed_count": len(self.seeds),
                "cluster_count": self.cluster_count}


def seed_ceiling(net: CorrespondenceNetwork) -> float:
    """Largest admissible proportion of seeded nodes, |gt_nodes| / |nodes|."""
    return len(net.gt_nodes) / net.node_count if net.node_count else 0.0


def select_seeds(net: CorrespondenceNetwork, gt: GroundTruth, p: float, rng_seed: int) -> dict[str, str]:
    """Uniformly choose round(p * |nodes|) ground-truth nodes and freeze their entity labels."""
    ceiling = seed_ceiling(net)
    if not 0.0 <= p <= ceiling + 1e-12:
        raise ValueError(f"p={p} outside [0, {ceiling:.6g}]")
    k = min(math.floor(p * net.node_count + 0.5), len(net.gt_nodes))
    chosen = sample_without_replacement(sorted(net.gt_nodes), k, make_rng(rng_seed))
    return {a: gt.labels[a] for a in sorted(chosen)}


@njit(cache=True)
def _sweep_numba(indptr, indices, weights, labels, order, ties, keep_current, acc, touched):
    changed = 0
    for pos in range(order.shape[0]):
        v = order[pos]
        lo = indptr[v]
        hi = indptr[v + 1]
        if lo == hi:
            continue
        nt = 0
        for e in range(lo, hi):
            lab = labels[indices[e]]
            if acc[lab] == 0.0:
                touched[nt] = lab
                nt += 1
            acc[lab] += weights[e]
        best = 0.0
        for t in range(nt):
            if acc[touched[t]] > best:
                best = acc[touched[t]]
        cur = labels[v]
        if keep_current and acc[cur] == best:
            new = cur
        else:
            cand = np.sort(touched[:nt])
            nmax = 0
            for t in range(nt):
                if acc[cand[t]] == best:
                    cand[nmax] = cand[t]
                    nmax += 1
            new = cand[min(int(ties[pos] * nmax), nmax - 1)]
        for t in range(nt):
            acc[touched[t]] = 0.0
        if new != cur:
            labels[v] = new
            changed += 1
    return changed


def _sweep_python(indptr, indices, weights, labels, order, ties, keep_current, acc, touched):
    changed = 0
    for pos, v in enumerate(order):
        lo, hi = indptr[v], indptr[v + 1]
        if lo == hi:
            continue
        votes: dict[int, float] = {}
        for e in range(lo, hi):
            lab = int(labels[indices[e]])
            votes[lab] = votes.get(lab, 0.0) + weights[e]
        best = max(votes.values())
        cur = int(labels[v])
        if keep_current and votes.get(cur) == best:
            new = cur
        else:
            maximal = sorted(lab for lab, s in votes.items() if s == best)
            new = maximal[min(int(ties[pos] * len(maximal)), len(maximal) - 1)]
        if new != cur:
            labels[v] = new
            changed += 1
    return changed


def run_lpa(net: CorrespondenceNetwork, seeds: dict[str, str] | None = None, rng_seed: int = 0,
            max_iters: int = 100, random_ties: bool = False, backend: str = "numba",
            p: float | None = None) -> Clustering:
    seeds = dict(seeds or {})
    unknown = set(seeds) - net.nodes
    if unknown:
        raise ValueError(f"seeds reference nodes outside the network: {sorted(unknown)[:3]}")
    nodes = net.node_list
    n = len(nodes)
    entities = sorted(set(seeds.values()))
    ent_code = {e: k for k, e in enumerate(entities)}
    k = len(entities)

    labels = np.arange(k, k + n, dtype=np.int64)
    frozen = np.zeros(n, dtype=bool)
    for a, e in seeds.items():
        v = net.node_index[a]
        labels[v] = ent_code[e]
        frozen[v] = True
    free = np.flatnonzero(~frozen)

    indptr, indices, weights = net.csr()
    acc = np.zeros(k + n, dtype=np.float64)
    touched = np.zeros(max(1, int(np.diff(indptr).max(initial=0))), dtype=np.int64)
    sweep = _sweep_numba if backend == "numba" else _sweep_python
    rng = make_rng(rng_seed)

    iterations, converged = 0, False
    while iterations < max_iters:
        order = rng.permutation(free)
        ties = rng.random(order.shape[0])
        iterations += 1
        if sweep(indptr, indices, weights, labels, order, ties, not random_ties, acc, touched) == 0:
            converged = True
            break

    assignment = {}
    for v, a in enumerate(nodes):
        lab = int(labels[v])
        assignment[a] = entities[lab] if lab < k else UNSEEDED_PREFIX + nodes[lab - k]
    if p is None:
        p = len(seeds) / n if n else 0.0
    return Clustering(assignment, seeds, p, iterations, converged, rng_seed)


def seeded_lpa(net: CorrespondenceNetwork, gt: GroundTruth, p: float, rng_seed: int,
               max_iters: int = 100, **kwargs) -> Clustering:
    """Seed selection and propagation from two independent sub-streams of ``rng_seed``."""
    seeds = select_seeds(net, gt, p, derive_seed(rng_seed, "seeds"))
    c = run_lpa(net, seeds, derive_seed(rng_seed, "order"), max_iters, p=p, **kwargs)
    c.rng_seed = rng_seed
    return c


def cluster_size_distribution(c: Clustering) -> dict[int, int]:
    sizes = Counter(c.assignment.values()).values()
    return dict(sorted(Counter(sizes).items()))


def dump_clustering(c: Clustering) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["address", "cluster_label", "is_seed"])
    for a in sorted(c.assignment):
        w.writerow([a, c.assignment[a], int(a in c.seeds)])
    return buf.getvalue()


def load_clustering(text: str, gt: GroundTruth | None = None, meta: dict | None = None) -> Clustering:
    assignment, seeds = {}, {}
    for r in csv.DictReader(io.StringIO(text)):
        assignment[r["address"]] = r["cluster_label"]
        if r["is_seed"] == "1":
            seeds[r["address"]] = r["cluster_label"]
    meta = meta or {}
    return Clustering(assignment, seeds, float(meta.get("p", 0.0)), int(meta.get("iterations_used", 0)),
                      bool(meta.get("converged", True)), meta.get("rng_seed"))
