"""Address Correspondence Networks: weighted same-entity co-detection graphs."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping

import numpy as np

from .chain import ChainView, GroundTruth
from .heuristics import HeuristicConfig, HeuristicContext, PairDetection, detect_pairs
from .sampling import TimeWindow


@dataclass
class CorrespondenceNetwork:
    """Undirected weighted graph keyed by canonical ``(addr_a, addr_b)`` pairs, ``addr_a < addr_b``."""

    nodes: frozenset[str]
    edges: dict[tuple[str, str], int]
    window: TimeWindow | None = None
    gt_nodes: frozenset[str] = frozenset()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for (a, b), w in self.edges.items():
            if not a < b:
                raise ValueError(f"edge {(a, b)} is not canonical")
            if w < 1:
                raise ValueError(f"edge {(a, b)} has weight {w} < 1")
            if a not in self.nodes or b not in self.nodes:
                raise ValueError(f"edge {(a, b)} references a missing node")
        if not self.gt_nodes <= self.nodes:
            raise ValueError("gt_nodes must be a subset of nodes")

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def weight(self, a: str, b: str) -> int:
        return self.edges.get((a, b) if a < b else (b, a), 0)

    @cached_property
    def node_list(self) -> list[str]:
        return sorted(self.nodes)

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {a: k for k, a in enumerate(self.node_list)}

    def edge_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(src, dst, weight) integer arrays over ``node_list`` positions, edges sorted."""
        idx = self.node_index
        m = len(self.edges)
        src = np.empty(m, dtype=np.int64)
        dst = np.empty(m, dtype=np.int64)
        w = np.empty(m, dtype=np.int64)
        for k, ((a, b), wt) in enumerate(sorted(self.edges.items())):
            src[k], dst[k], w[k] = idx[a], idx[b], wt
        return src, dst, w

    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symmetric adjacency as (indptr, indices, weights); neighbours ascending."""
        n = len(self.nodes)
        src, dst, w = self.edge_arrays()
        rows = np.concatenate([src, dst])
        cols = np.concatenate([dst, src])
        ws = np.concatenate([w, w]).astype(np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, ws = rows[order], cols[order], ws[order]
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
        return indptr, cols, ws

    def degrees(self) -> dict[str, int]:
        deg = dict.fromkeys(self.nodes, 0)
        for a, b in self.edges:
            deg[a] += 1
            deg[b] += 1
        return deg


def network_from_detections(detections: Iterable[PairDetection], gt: GroundTruth | None = None,
                            window: TimeWindow | None = None,
                            extra_nodes: Iterable[str] = ()) -> CorrespondenceNetwork:
    weights = Counter(d.pair for d in detections)
    nodes = set(extra_nodes)
    for a, b in weights:
        nodes.add(a)
        nodes.add(b)
    gt_nodes = frozenset(a for a in nodes if gt is not None and a in gt.labels)
    return CorrespondenceNetwork(frozenset(nodes), dict(weights), window, gt_nodes)


def build_network(tx_ids: Iterable[str], chain: ChainView, ctx: HeuristicContext, cfg: HeuristicConfig,
                  gt: GroundTruth | None = None, window: TimeWindow | None = None,
                  retain_isolated: bool = False) -> CorrespondenceNetwork:
    """Count heuristic co-detections over ``tx_ids``.

    Only addresses in at least one detection become nodes unless
    ``retain_isolated`` keeps every address of the transactions.
    """
    txs = sorted((chain.by_id[t] for t in tx_ids), key=lambda t: t.order_key)
    detections: list[PairDetection] = []
    extra: set[str] = set()
    for tx in txs:
        if window is not None and not window.contains(tx.timestamp):
            raise ValueError(f"{tx.tx_id} lies outside the window")
        detections.extend(detect_pairs(tx, ctx, cfg))
        if retain_isolated:
            extra |= tx.addresses()
    return network_from_detections(detections, gt, window, extra)


def degree_distribution(net: CorrespondenceNetwork) -> dict[int, int]:
    return dict(sorted(Counter(net.degrees().values()).items()))


def network_stats(net: CorrespondenceNetwork) -> dict[str, int]:
    return {"node_count": net.node_count, "edge_count": net.edge_count, "gt_node_count": len(net.gt_nodes)}


# --------------------------------------------------------------------------
# edge-list files

def dump_edges(net: CorrespondenceNetwork) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["addr_a", "addr_b", "weight"])
    for (a, b), wt in sorted(net.edges.items()):
        w.writerow([a, b, wt])
    return buf.getvalue()


def load_edges(text: str, gt: GroundTruth | None = None, window: TimeWindow | None = None,
               isolated: Iterable[str] = ()) -> CorrespondenceNetwork:
    edges: dict[tuple[str, str], int] = {}
    for r in csv.DictReader(io.StringIO(text)):
        a, b = r["addr_a"], r["addr_b"]
        key = (a, b) if a < b else (b, a)
        if key in edges:
            raise ValueError(f"duplicate edge {key}")
        edges[key] = int(r["weight"])
    nodes = set(isolated)
    for a, b in edges:
        nodes.update((a, b))
    gt_nodes = frozenset(a for a in nodes if gt is not None and a in gt.labels)
    return CorrespondenceNetwork(frozenset(nodes), edges, window, gt_nodes)


def isolated_nodes(net: CorrespondenceNetwork) -> list[str]:
    return sorted(a for a, d in net.degrees().items() if d == 0)


def with_edges(net: CorrespondenceNetwork, edges: Mapping[tuple[str, str], int]) -> CorrespondenceNetwork:
    return CorrespondenceNetwork(net.nodes, dict(edges), net.window, net.gt_nodes, dict(net.meta))
