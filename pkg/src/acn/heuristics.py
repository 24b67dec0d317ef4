"""Same-entity address-pair detectors.

Change-style detectors return the set of candidate change *output addresses*
of one transaction; :func:`detect_pairs` links every candidate to every
distinct input address and adds the multi-input pairs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Iterable

from .chain import (
    ChainView,
    FirstSeenIndex,
    MissingOutpointsError,
    SpendIndex,
    Transaction,
    build_first_seen_index,
    build_spend_index,
)


class HeuristicId(str, Enum):
    MULTI_INPUT = "multi_input"
    CHANGE_TYPE = "change_type"
    CHANGE_BEHAVIOR = "change_behavior"
    CHANGE_LOCKTIME = "change_locktime"
    OPTIMAL_CHANGE = "optimal_change"
    PEELING_CHAIN = "peeling_chain"
    POWER_OF_TEN = "power_of_ten"


ALL_HEURISTICS = frozenset(HeuristicId)
CHANGE_HEURISTICS = tuple(h for h in HeuristicId if h is not HeuristicId.MULTI_INPUT)
NEEDS_OUTPOINTS = frozenset({HeuristicId.CHANGE_LOCKTIME, HeuristicId.PEELING_CHAIN})


@dataclass(frozen=True)
class HeuristicConfig:
    """Detector thresholds.

    ``locktime_tolerance`` is the largest gap ``block_height - locktime`` of a
    spending transaction for it to count as locktime-aware: wallets that set
    locktime to the current tip get mined one or a few blocks later.
    """

    enabled: frozenset[HeuristicId] = ALL_HEURISTICS
    power10_min_exponent: int = 4
    peeling_min_chain_length: int = 2
    unique_candidate_only: bool = False
    locktime_tolerance: int = 10

    def __post_init__(self):
        object.__setattr__(self, "enabled", frozenset(HeuristicId(h) for h in self.enabled))
        if not self.enabled:
            raise ValueError("at least one heuristic must be enabled")
        if self.power10_min_exponent < 0:
            raise ValueError("power10_min_exponent must be >= 0")
        if self.peeling_min_chain_length < 2:
            raise ValueError("peeling_min_chain_length must be >= 2")
        if self.locktime_tolerance < 1:
            raise ValueError("locktime_tolerance must be >= 1")

    def to_dict(self) -> dict:
        return {
            "enabled": sorted(h.value for h in self.enabled),
            "power10_min_exponent": self.power10_min_exponent,
            "peeling_min_chain_length": self.peeling_min_chain_length,
            "unique_candidate_only": self.unique_candidate_only,
            "locktime_tolerance": self.locktime_tolerance,
        }


@dataclass(frozen=True, order=True)
class PairDetection:
    addr_a: str
    addr_b: str
    heuristic: HeuristicId
    tx_id: str

    def __post_init__(self):
        if self.addr_a == self.addr_b:
            raise ValueError("self-pair")
        if self.addr_a > self.addr_b:
            a, b = self.addr_b, self.addr_a
            object.__setattr__(self, "addr_a", a)
            object.__setattr__(self, "addr_b", b)

    @property
    def pair(self) -> tuple[str, str]:
        return (self.addr_a, self.addr_b)


def canonical_pair(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass
class HeuristicContext:
    """Indexes the detectors consume, all built from one chain view."""

    chain: ChainView
    first_seen: FirstSeenIndex
    spend_index: SpendIndex | None
    _peel: dict[str, tuple[int, bool]] | None = field(default=None, repr=False)

    @property
    def peel_links(self) -> dict[str, tuple[int, bool]]:
        """tx_id -> (length of its maximal peel chain, continues_to_next_step)."""
        if self._peel is None:
            self._peel = _peel_chains(self.chain, self._require_spends())
        return self._peel

    def _require_spends(self) -> SpendIndex:
        if self.spend_index is None:
            raise MissingOutpointsError("locktime and peeling heuristics need input out-points")
        return self.spend_index


def build_context(chain: ChainView, cfg: HeuristicConfig | None = None) -> HeuristicContext:
    cfg = cfg or HeuristicConfig()
    needs = cfg.enabled & NEEDS_OUTPOINTS
    spend_index = None
    if chain.has_outpoints:
        spend_index = build_spend_index(chain)
    elif needs and len(chain):
        names = ", ".join(sorted(h.value for h in needs))
        raise MissingOutpointsError(f"{names} enabled but the chain carries no prev_tx out-points")
    return HeuristicContext(chain, build_first_seen_index(chain), spend_index)


# --------------------------------------------------------------------------
# detectors

def multi_input_pairs(tx: Transaction) -> set[tuple[str, str]]:
    return {canonical_pair(a, b) for a, b in combinations(sorted(set(tx.input_addresses())), 2)}


def _discriminating(tx: Transaction, flagged: list[bool]) -> set[str]:
    # a detector that flags every output carries no information
    if all(flagged):
        return set()
    return {o.address for o, f in zip(tx.outputs, flagged) if f}


def change_by_type(tx: Transaction) -> set[str]:
    types = {i.addr_type for i in tx.inputs}
    if len(types) != 1:
        return set()
    (t,) = types
    return _discriminating(tx, [o.addr_type is t for o in tx.outputs])


def change_by_behavior(tx: Transaction, first_seen: FirstSeenIndex) -> set[str]:
    return _discriminating(tx, [first_seen.get(o.address) == tx.tx_id for o in tx.outputs])


def change_by_locktime(tx: Transaction, ctx: HeuristicContext, cfg: HeuristicConfig) -> set[str]:
    if tx.locktime <= 0:
        return set()
    spends = ctx._require_spends()
    found = set()
    for k, o in enumerate(tx.outputs):
        spender_id = spends.get((tx.tx_id, k))
        if spender_id is None:
            continue
        s = ctx.chain.by_id[spender_id]
        if s.locktime > 0 and 0 < s.block_height - s.locktime <= cfg.locktime_tolerance:
            found.add(o.address)
    return found


def change_by_optimal(tx: Transaction) -> set[str]:
    smallest_input = min(i.amount for i in tx.inputs)
    return _discriminating(tx, [o.amount < smallest_input for o in tx.outputs])


def is_power_of_ten(amount: int, min_exponent: int = 0) -> bool:
    if amount < 10 ** min_exponent:
        return False
    while amount % 10 == 0:
        amount //= 10
    return amount == 1


def change_by_power10(tx: Transaction, cfg: HeuristicConfig) -> set[str]:
    round_ = [is_power_of_ten(o.amount, cfg.power10_min_exponent) for o in tx.outputs]
    if not any(round_):
        return set()
    return _discriminating(tx, [not r for r in round_])


def peel_continuation(tx: Transaction) -> int | None:
    """Output position of the larger output if ``tx`` is a 1-in/2-out peel step."""
    if len(tx.inputs) != 1 or len(tx.outputs) != 2:
        return None
    a, b = tx.outputs[0].amount, tx.outputs[1].amount
    if a == b:
        return None
    return 0 if a > b else 1


def _peel_chains(chain: ChainView, spends: SpendIndex) -> dict[str, tuple[int, bool]]:
    nxt: dict[str, str] = {}
    has_prev: set[str] = set()
    steps = {}
    for tx in chain.transactions:
        k = peel_continuation(tx)
        if k is not None:
            steps[tx.tx_id] = k
    for tx_id, k in steps.items():
        spender = spends.get((tx_id, k))
        if spender is not None and spender in steps:
            nxt[tx_id] = spender
            has_prev.add(spender)
    out: dict[str, tuple[int, bool]] = {}
    for head in steps:
        if head in has_prev:
            continue
        run = [head]
        while run[-1] in nxt and nxt[run[-1]] not in out and len(run) <= len(steps):
            run.append(nxt[run[-1]])
        for t in run:
            out[t] = (len(run), t in nxt)
    for t in steps:  # steps on a cycle have no head; leave them as chains of their own
        out.setdefault(t, (1, False))
    return out


def change_by_peeling(tx: Transaction, ctx: HeuristicContext, cfg: HeuristicConfig) -> set[str]:
    k = peel_continuation(tx)
    if k is None:
        return set()
    length, continues = ctx.peel_links.get(tx.tx_id, (1, False))
    if not continues or length < cfg.peeling_min_chain_length:
        return set()
    return {tx.outputs[k].address}


def change_candidates(tx: Transaction, h: HeuristicId, ctx: HeuristicContext, cfg: HeuristicConfig) -> set[str]:
    if h is HeuristicId.CHANGE_TYPE:
        return change_by_type(tx)
    if h is HeuristicId.CHANGE_BEHAVIOR:
        return change_by_behavior(tx, ctx.first_seen)
    if h is HeuristicId.CHANGE_LOCKTIME:
        return change_by_locktime(tx, ctx, cfg)
    if h is HeuristicId.OPTIMAL_CHANGE:
        return change_by_optimal(tx)
    if h is HeuristicId.PEELING_CHAIN:
        return change_by_peeling(tx, ctx, cfg)
    if h is HeuristicId.POWER_OF_TEN:
        return change_by_power10(tx, cfg)
    raise ValueError(f"{h} is not a change heuristic")


def detect_pairs(tx: Transaction, ctx: HeuristicContext, cfg: HeuristicConfig) -> list[PairDetection]:
    out = []
    inputs = sorted(set(tx.input_addresses()))
    if HeuristicId.MULTI_INPUT in cfg.enabled:
        out.extend(PairDetection(a, b, HeuristicId.MULTI_INPUT, tx.tx_id) for a, b in combinations(inputs, 2))
    for h in CHANGE_HEURISTICS:
        if h not in cfg.enabled:
            continue
        candidates = change_candidates(tx, h, ctx, cfg)
        if cfg.unique_candidate_only and len(candidates) != 1:
            continue
        for o in sorted(candidates):
            out.extend(PairDetection(i, o, h, tx.tx_id) for i in inputs if i != o)
    return out


def detect_all(txs: Iterable[Transaction], ctx: HeuristicContext, cfg: HeuristicConfig) -> list[PairDetection]:
    out = []
    for tx in txs:
        out.extend(detect_pairs(tx, ctx, cfg))
    return out


def dump_detections(detections: Iterable[PairDetection]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["addr_a", "addr_b", "heuristic", "tx_id"])
    for d in detections:
        w.writerow([d.addr_a, d.addr_b, d.heuristic.value, d.tx_id])
    return buf.getvalue()


def load_detections(text: str) -> list[PairDetection]:
    rows = csv.DictReader(io.StringIO(text))
    return [PairDetection(r["addr_a"], r["addr_b"], HeuristicId(r["heuristic"]), r["tx_id"]) for r in rows]
