"""Independent brute-force reference implementations used only by tests.

Nothing here imports the metric, sampling or analysis code under test; the
point is a second route to every number.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np


# --------------------------------------------------------------------------
# set partitions

def set_partitions(n: int):
    """All partitions of range(n) as restricted growth strings (label lists)."""
    if n == 0:
        yield []
        return

    def rec(prefix, m):
        if len(prefix) == n:
            yield list(prefix)
            return
        for lab in range(m + 1):
            prefix.append(lab)
            yield from rec(prefix, max(m, lab + 1))
            prefix.pop()

    yield from rec([0], 1)


def integer_partitions(n: int, largest: int | None = None):
    largest = n if largest is None else largest
    if n == 0:
        yield ()
        return
    for k in range(min(n, largest), 0, -1):
        for rest in integer_partitions(n - k, k):
            yield (k,) + rest


def shape_representative(shape) -> list[int]:
    """Canonical labels for a block-size shape: consecutive runs 0,0,..,1,1,.."""
    out = []
    for lab, size in enumerate(shape):
        out.extend([lab] * size)
    return out


def bell(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


# --------------------------------------------------------------------------
# metrics from raw label lists

def _h(counts, n) -> float:
    return -sum(c / n * math.log2(c / n) for c in counts if c)


def brute_homogeneity(clusters, entities) -> float:
    n = len(clusters)
    h_e = _h(Counter(entities).values(), n)
    if h_e == 0:
        return 1.0
    joint = Counter(zip(clusters, entities))
    csize = Counter(clusters)
    h_e_given_c = -sum(k / n * math.log2(k / csize[c]) for (c, _), k in joint.items())
    return 1.0 - h_e_given_c / h_e


def brute_mi(clusters, entities) -> float:
    """Mutual information in nats by summing over the joint distribution."""
    n = len(clusters)
    joint = Counter(zip(clusters, entities))
    ca, cb = Counter(clusters), Counter(entities)
    return sum(k / n * math.log(n * k / (ca[c] * cb[e])) for (c, e), k in joint.items())


def brute_emi(a_sizes, b_sizes, n) -> float:
    """Expected MI (nats) under random relabeling, hypergeometric sum with exact binomials."""
    total = 0.0
    for ai in a_sizes:
        for bj in b_sizes:
            for k in range(max(1, ai + bj - n), min(ai, bj) + 1):
                prob = math.comb(bj, k) * math.comb(n - bj, ai - k) / math.comb(n, ai)
                total += prob * k / n * math.log(n * k / (ai * bj))
    return total


def brute_ami(clusters, entities, emi_cache: dict | None = None) -> float:
    n = len(clusters)
    ca, cb = Counter(clusters), Counter(entities)
    if (len(ca) == len(cb) == 1) or (len(ca) == len(cb) == n):
        return 1.0
    key = (tuple(sorted(ca.values())), tuple(sorted(cb.values())))
    if emi_cache is not None and key in emi_cache:
        emi = emi_cache[key]
    else:
        emi = brute_emi(ca.values(), cb.values(), n)
        if emi_cache is not None:
            emi_cache[key] = emi
    mi = brute_mi(clusters, entities)
    hc = _h(ca.values(), n) * math.log(2)
    hk = _h(cb.values(), n) * math.log(2)
    denom = (hc + hk) / 2 - emi
    if denom == 0:
        return 1.0
    return max(-1.0, min(1.0, (mi - emi) / denom))


def brute_ari_pair_counting(clusters, entities) -> float:
    """Hubert-Arabie ARI from the four pair categories, counted pair by pair."""
    n = len(clusters)
    both = only_c = only_e = 0
    for i, j in itertools.combinations(range(n), 2):
        sc, se = clusters[i] == clusters[j], entities[i] == entities[j]
        both += sc and se
        only_c += sc and not se
        only_e += se and not sc
    pairs = n * (n - 1) // 2
    sa, sb = both + only_c, both + only_e
    expected = Fraction(sa * sb, pairs)
    den = Fraction(sa + sb, 2) - expected
    if den == 0:
        return 1.0
    return float((both - expected) / den)


def rand_index_xy(clusters, entities) -> Fraction:
    """(x + y) / (n (n - 1)) over ordered pairs a1 != a2, literally."""
    n = len(clusters)
    x = y = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            same_c = clusters[i] == clusters[j]
            same_e = entities[i] == entities[j]
            x += same_c and same_e
            y += (not same_c) and (not same_e)
    return Fraction(x + y, n * (n - 1))


def ari_xy(clusters, entities, expectation_cache: dict) -> Fraction:
    """ARI = (RI - E[RI]) / (max RI - E[RI]) with E over every relabeling of the elements.

    E[RI] is the average over all n! permutations of the second partition and
    depends only on the two block-size shapes, so it is cached per shape pair.
    The maximum index is 1 (attained when both partitions coincide).
    """
    n = len(clusters)
    key = (tuple(sorted(Counter(clusters).values())), tuple(sorted(Counter(entities).values())))
    if key not in expectation_cache:
        acc = Fraction(0)
        count = 0
        for perm in itertools.permutations(range(n)):
            acc += rand_index_xy(clusters, [entities[p] for p in perm])
            count += 1
        expectation_cache[key] = acc / count
    e = expectation_cache[key]
    ri = rand_index_xy(clusters, entities)
    if e == 1:
        return Fraction(1)
    return (ri - e) / (1 - e)


def brute_modularity(edges: dict, assignment: dict) -> float:
    """Weighted Q from the q_ij matrix, off-diagonal weight split evenly."""
    labels = sorted(set(assignment.values()))
    idx = {lab: k for k, lab in enumerate(labels)}
    q = np.zeros((len(labels), len(labels)))
    total = sum(edges.values())
    for (a, b), w in edges.items():
        i, j = idx[assignment[a]], idx[assignment[b]]
        if i == j:
            q[i, i] += w / total
        else:
            q[i, j] += w / (2 * total)
            q[j, i] += w / (2 * total)
    r = q.sum(axis=1)
    return float(np.trace(q) - (r ** 2).sum())


# --------------------------------------------------------------------------
# sampling

def brute_snowball(transactions, s0: set):
    """The four set-builder definitions evaluated by exhaustive scans."""
    addrs = {t.tx_id: set(i.address for i in t.inputs) | set(o.address for o in t.outputs)
             for t in transactions}
    t0 = {tid for tid, a in addrs.items() if a & s0}
    s1 = set().union(*(addrs[t] for t in t0)) - s0 if t0 else set()
    t1 = set()
    for tid, a in addrs.items():
        if tid in t0:
            continue
        hits = [x for x in a if x in s1]
        if len(set(hits)) >= 2:
            t1.add(tid)
    s2 = set().union(*(addrs[t] for t in t1)) - s0 - s1 if t1 else set()
    return t0, s1, t1, s2


# --------------------------------------------------------------------------
# networks

def planted_partition(sizes, p_in: float, p_out_per_node: float, rng: np.random.Generator):
    """Stochastic block model with dense blocks and roughly ``p_out_per_node`` external edges per node.

    Returns (edges {(a, b): 1}, labels {node: block}).
    """
    labels = {}
    nodes = []
    for b, s in enumerate(sizes):
        for k in range(s):
            name = f"n{b:03d}_{k:03d}"
            labels[name] = f"B{b:03d}"
            nodes.append(name)
    n = len(nodes)
    p_out = p_out_per_node / n
    edges = {}
    for i in range(n):
        other = np.arange(i + 1, n)
        draws = rng.random(other.size)
        for j, r in zip(other, draws):
            j = int(j)
            thresh = p_in if labels[nodes[j]] == labels[nodes[i]] else p_out
            if r < thresh:
                edges[(nodes[i], nodes[j])] = 1
    return edges, labels


def classify_edges(edges, assignment):
    """Per cluster: (size, 2 * internal edges, boundary edges) by scanning every edge."""
    sizes = Counter(assignment.values())
    intra = Counter()
    inter = Counter()
    for a, b in edges:
        if assignment[a] == assignment[b]:
            intra[assignment[a]] += 2
        else:
            inter[assignment[a]] += 1
            inter[assignment[b]] += 1
    return {c: (sizes[c], intra[c], inter[c]) for c in sizes}


def lpa_reachable_fixed_points(edges: dict, nodes, seeds: dict | None = None) -> set:
    """Every stable partition reachable by single-node weighted-majority moves.

    Breadth-first search over labelings from the unique-label start; a move
    relabels one unseeded node to one of its maximal labels (the current label
    only, when it is maximal). Returns frozensets of frozenset blocks.
    """
    nodes = sorted(nodes)
    seeds = seeds or {}
    nbrs = {v: {} for v in nodes}
    for (a, b), w in edges.items():
        nbrs[a][b] = w
        nbrs[b][a] = w
    start = tuple(seeds.get(v, "u:" + v) for v in nodes)
    pos = {v: k for k, v in enumerate(nodes)}

    def moves(state):
        for v in nodes:
            if v in seeds or not nbrs[v]:
                continue
            votes = Counter()
            for u, w in nbrs[v].items():
                votes[state[pos[u]]] += w
            best = max(votes.values())
            cur = state[pos[v]]
            choices = [cur] if votes.get(cur) == best else [lab for lab, s in votes.items() if s == best]
            for lab in choices:
                if lab != cur:
                    yield state[: pos[v]] + (lab,) + state[pos[v] + 1:]

    seen, frontier, stable = {start}, [start], set()
    while frontier:
        nxt = []
        for s in frontier:
            succ = list(moves(s))
            if not succ:
                blocks = {}
                for v, lab in zip(nodes, s):
                    blocks.setdefault(lab, set()).add(v)
                stable.add(frozenset(frozenset(b) for b in blocks.values()))
            for t in succ:
                if t not in seen:
                    seen.add(t)
                    nxt.append(t)
        frontier = nxt
    return stable


def batch_raw_metrics(u, P, emi_by_shape, u_shape: int, p_shapes):
    """AMI, ARI and homogeneity of (u, P[k]) for every row k, from raw label arrays.

    ``u`` is one labelling of n elements, ``P`` an (m, n) array of labellings.
    Everything comes from co-membership: element e sees n_e elements sharing
    both its labels, a_e sharing its u label and b_e its P label, and each
    information quantity is an average over elements, e.g.
    MI = mean_e log(n n_e / (a_e b_e)). ARI uses the same co-membership over
    element pairs, and E[MI] comes from ``emi_by_shape[u_shape, p_shapes[k]]``
    (see ``brute_emi``).
    """
    u = np.asarray(u, dtype=np.int64)
    P = np.asarray(P, dtype=np.int64)
    m, n = P.shape
    same_u = u[:, None] == u[None, :]
    same_v = P[:, :, None] == P[:, None, :]
    a = same_u.sum(axis=1).astype(np.float64)
    b = same_v.sum(axis=2).astype(np.float64)
    both = (same_v & same_u).sum(axis=2).astype(np.float64)

    mi = np.log(n * both / (a * b)).mean(axis=1)
    h_c = -np.log(a / n).mean()
    h_k = -np.log(b / n).mean(axis=1)
    h_e_given_c_bits = -np.log2(both / a).mean(axis=1)
    h_e_bits = h_k / math.log(2)
    homog = np.where(h_e_bits == 0, 1.0, 1.0 - h_e_given_c_bits / np.where(h_e_bits == 0, 1.0, h_e_bits))

    ku = len(set(u.tolist()))
    kv = (1.0 / b).sum(axis=1).round().astype(np.int64)  # each block contributes 1
    emi = emi_by_shape[u_shape, p_shapes]
    denom = (h_c + h_k) / 2 - emi
    ami_v = np.clip((mi - emi) / np.where(denom == 0, 1.0, denom), -1.0, 1.0)
    ami_v = np.where(denom == 0, 1.0, ami_v)
    ami_v = np.where(((ku == 1) & (kv == 1)) | ((ku == n) & (kv == n)), 1.0, ami_v)

    i, k = np.triu_indices(n, 1)
    su = same_u[i, k].astype(np.int64)
    sv = same_v[:, i, k].astype(np.int64)
    together = sv @ su
    sa = int(su.sum())
    sb = sv.sum(axis=1)
    pairs = n * (n - 1) // 2
    num = 2 * (together * pairs - sa * sb)
    den = (sa + sb) * pairs - 2 * sa * sb
    ari_v = np.where(den == 0, 1.0, num / np.where(den == 0, 1, den))
    return ami_v, ari_v, homog


def block_shape(labels) -> tuple[int, ...]:
    return tuple(sorted(Counter(labels).values(), reverse=True))
