"""Synthetic ledgers with planted entities.

Entities are wallets with a fixed address type, an activity weight drawn from
a discrete power law, and behaviours that trigger each heuristic. Every
transaction's construction is recorded, and the behaviour log lists a planted
pattern only when the construction guarantees the matching detector fires.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from datetime import date
from itertools import combinations

import numpy as np

from .chain import AddrType, ChainView, GroundTruth, Transaction, TxInput, TxOutput
from .heuristics import HeuristicId, canonical_pair, is_power_of_ten
from .rng import discrete_power_law, make_rng
from .sampling import semester_bounds, semesters_from

START_HEIGHT = 1000
MIN_SPEND = 20_000
FUNDING_RANGE = (10**6, 10**8)
PEEL_FUNDING_RANGE = (10**8, 10**9)


class InfeasibleConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    entity_count: int = 200
    entity_size_exponent: float = 2.0
    tx_count: int = 20_000
    address_reuse_rate: float = 0.8
    change_behavior_rate: float = 0.3
    locktime_wallet_fraction: float = 0.3
    peeling_chain_rate: float = 0.02
    power10_payment_rate: float = 0.2
    multi_input_rate: float = 0.3
    p2sh_fraction: float = 0.3
    semesters: int = 8
    start: str = "2012-01-01"
    txs_per_block: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("address_reuse_rate", "change_behavior_rate", "locktime_wallet_fraction",
                     "peeling_chain_rate", "power10_payment_rate", "multi_input_rate", "p2sh_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if self.entity_count < 2:
            raise ValueError("entity_count must be >= 2")
        if self.entity_size_exponent <= 1:
            raise ValueError("entity_size_exponent must exceed 1")
        if self.tx_count < 1 or self.semesters < 1 or self.txs_per_block < 1:
            raise ValueError("tx_count, semesters and txs_per_block must be positive")
        start = date.fromisoformat(self.start)
        if (start.month, start.day) not in ((1, 1), (7, 1)):
            raise ValueError("start must be the first day of a semester (Jan 1 or Jul 1)")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BehaviorRecord:
    tx_id: str
    pattern: HeuristicId
    planted_pairs: list[tuple[str, str]]

    def to_json(self) -> str:
        return json.dumps({"tx_id": self.tx_id, "pattern": self.pattern.value,
                           "planted_pairs": [list(p) for p in self.planted_pairs]}, separators=(",", ":"))


@dataclass
class GeneratedLedger:
    chain: ChainView
    ground_truth: GroundTruth
    spend_log: list[tuple[str, int, str]]
    behavior_log: list[BehaviorRecord]
    entity_attributes: dict[str, dict] = field(default_factory=dict)

    def planted(self, pattern: HeuristicId) -> set[tuple[str, str, str]]:
        """(addr_a, addr_b, tx_id) triples planted for ``pattern``."""
        return {(a, b, r.tx_id) for r in self.behavior_log if r.pattern is pattern for a, b in r.planted_pairs}

    def dump_behavior_log(self) -> str:
        return "".join(r.to_json() + "\n" for r in self.behavior_log)

    def dump_spend_log(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["prev_tx", "prev_index", "spending_tx"])
        w.writerows(self.spend_log)
        return buf.getvalue()


@dataclass
class _Wallet:
    name: str
    addr_type: AddrType
    locktime: bool
    weight: int
    utxos: list = field(default_factory=list)  # [prev_tx, prev_index, address, amount]
    received: list = field(default_factory=list)  # addresses seen as outputs
    received_set: set = field(default_factory=set)


@dataclass
class _Built:
    """How one transaction was put together; source of the behaviour log."""

    tx: Transaction
    payer: _Wallet
    change_pos: int | None
    pay_pos: int
    change_fresh: bool
    pay_fresh: bool
    pay_round: bool
    peel_continues: bool = False


class _Generator:
    def __init__(self, cfg: GeneratorConfig):
        self.cfg = cfg
        self.rng = make_rng(cfg.rng_seed)
        self.next_addr = 0
        self.labels: dict[str, str] = {}
        self.txs: list[Transaction] = []
        self.built: list[_Built] = []
        self.spend_log: list[tuple[str, int, str]] = []
        self._timestamps = self._make_timestamps()

        sizes = discrete_power_law(cfg.entity_size_exponent, 1, cfg.entity_count, self.rng)
        cap = max(1, cfg.tx_count // 50)
        self.wallets = []
        for k in range(cfg.entity_count):
            p2sh = self.rng.random() < cfg.p2sh_fraction
            lock = self.rng.random() < cfg.locktime_wallet_fraction
            self.wallets.append(_Wallet(f"E{k:04d}", AddrType.P2SH if p2sh else AddrType.P2PKH, lock,
                                        int(min(sizes[k], cap))))
        w = np.array([x.weight for x in self.wallets], dtype=np.float64)
        self.weights = w / w.sum()

    def _make_timestamps(self) -> list[int]:
        cfg = self.cfg
        out = []
        for s, (y, h) in enumerate(semesters_from(cfg.start, cfg.semesters)):
            lo, hi = semester_bounds(y, h)
            n = (s + 1) * cfg.tx_count // cfg.semesters - s * cfg.tx_count // cfg.semesters
            out.extend(sorted(int(t) for t in self.rng.integers(lo, hi + 1, size=n)))
        return out

    # --- helpers -----------------------------------------------------------

    def fresh_address(self, wallet: _Wallet) -> str:
        a = f"a{self.next_addr:08d}"
        self.next_addr += 1
        self.labels[a] = wallet.name
        return a

    def pick_payee(self, payer: _Wallet) -> _Wallet:
        while True:
            w = self.wallets[int(self.rng.choice(len(self.wallets), p=self.weights))]
            if w is not payer:
                return w

    def receive_address(self, wallet: _Wallet, reuse_rate: float) -> tuple[str, bool]:
        if wallet.received and self.rng.random() < reuse_rate:
            return wallet.received[int(self.rng.integers(len(wallet.received)))], False
        return self.fresh_address(wallet), True

    def funding_input(self, wallet: _Wallet, lo_hi=FUNDING_RANGE) -> list:
        amount = int(self.rng.integers(*lo_hi))
        if is_power_of_ten(amount):
            amount += 1
        return [None, None, self.fresh_address(wallet), amount]

    def emit(self, payer: _Wallet, spent: list, outputs: list[tuple[_Wallet, str, int]]) -> Transaction:
        i = len(self.txs)
        height = START_HEIGHT + i // self.cfg.txs_per_block
        tx_id = f"t{i:08d}"
        tx = Transaction(
            tx_id=tx_id,
            inputs=tuple(TxInput(u[2], payer.addr_type, u[3], u[0], u[1]) for u in spent),
            outputs=tuple(TxOutput(a, w.addr_type, amt) for w, a, amt in outputs),
            block_height=height,
            timestamp=self._timestamps[i],
            locktime=height - 1 if payer.locktime else 0,
        )
        for u in spent:
            if u[0] is not None:
                self.spend_log.append((u[0], u[1], tx_id))
        for k, (w, a, amt) in enumerate(outputs):
            w.utxos.append([tx_id, k, a, amt])
            if a not in w.received_set:
                w.received_set.add(a)
                w.received.append(a)
        self.txs.append(tx)
        return tx

    def take_utxos(self, wallet: _Wallet, n: int) -> list:
        n = min(n, len(wallet.utxos))
        picks = sorted(self.rng.choice(len(wallet.utxos), size=n, replace=False).tolist(), reverse=True)
        return [wallet.utxos.pop(k) for k in picks]

    def change_address(self, payer: _Wallet) -> tuple[str, bool]:
        if self.rng.random() < self.cfg.change_behavior_rate or not payer.received:
            return self.fresh_address(payer), True
        return payer.received[int(self.rng.integers(len(payer.received)))], False

    # --- events ------------------------------------------------------------

    def payment(self, payer: _Wallet) -> None:
        cfg = self.cfg
        n_in = int(self.rng.integers(2, 4)) if self.rng.random() < cfg.multi_input_rate else 1
        spent = self.take_utxos(payer, n_in)
        while len(spent) < n_in:
            spent.append(self.funding_input(payer))
        if sum(u[3] for u in spent) < MIN_SPEND:
            spent.append(self.funding_input(payer))
        total = sum(u[3] for u in spent)

        pay_round = False
        if self.rng.random() < cfg.power10_payment_rate and total >= 2 * 10**4:
            k = int(np.floor(np.log10(0.9 * total)))
            pay = 10 ** max(4, min(k, 4 + int(self.rng.integers(0, 4))))
            pay_round = True
        else:
            pay = int(self.rng.integers(int(0.05 * total), int(0.95 * total) + 1))
            if is_power_of_ten(pay):
                pay -= 1
        fee = min(1000, total // 100)
        change = total - pay - fee
        if is_power_of_ten(change):
            change -= 1

        payee = self.pick_payee(payer)
        pay_addr, pay_fresh = self.receive_address(payee, cfg.address_reuse_rate)
        change_addr, change_fresh = self.change_address(payer)
        outputs = [(payee, pay_addr, pay), (payer, change_addr, change)]
        swap = bool(self.rng.random() < 0.5)
        if swap:
            outputs.reverse()
        tx = self.emit(payer, spent, outputs)
        self.built.append(_Built(tx, payer, 0 if swap else 1, 1 if swap else 0,
                                 change_fresh, pay_fresh, pay_round))

    def peeling_chain(self, payer: _Wallet, length: int) -> None:
        utxo = self.funding_input(payer, PEEL_FUNDING_RANGE)
        for step in range(length):
            amount = utxo[3]
            pay = int(self.rng.integers(amount // 50, amount // 5))
            if is_power_of_ten(pay):
                pay -= 1
            fee = 1000
            cont = amount - pay - fee
            if is_power_of_ten(cont):
                cont -= 1
            payee = self.pick_payee(payer)
            pay_addr, pay_fresh = self.receive_address(payee, self.cfg.address_reuse_rate)
            cont_addr = self.fresh_address(payer)
            outputs = [(payee, pay_addr, pay), (payer, cont_addr, cont)]
            swap = bool(self.rng.random() < 0.5)
            if swap:
                outputs.reverse()
            tx = self.emit(payer, [utxo], outputs)
            cpos = 0 if swap else 1
            self.built.append(_Built(tx, payer, cpos, 1 - cpos, True, pay_fresh, False,
                                     peel_continues=step < length - 1))
            if step < length - 1:
                # the continuation feeds the next step instead of the pool
                utxo = payer.utxos.pop()
                assert utxo[0] == tx.tx_id and utxo[1] == cpos

    def run(self) -> None:
        cfg = self.cfg
        if cfg.tx_count < cfg.entity_count:
            raise InfeasibleConfigError("tx_count must be at least entity_count so every entity transacts")
        order = iter(self.wallets)  # each entity initiates once before weights take over
        while len(self.txs) < cfg.tx_count:
            payer = next(order, None)
            if payer is None:
                payer = self.wallets[int(self.rng.choice(len(self.wallets), p=self.weights))]
            remaining = cfg.tx_count - len(self.txs)
            if remaining >= 3 and self.rng.random() < cfg.peeling_chain_rate:
                self.peeling_chain(payer, int(self.rng.integers(3, min(6, remaining) + 1)))
            else:
                self.payment(payer)

    # --- behaviour log -------------------------------------------------------

    def behavior_log(self) -> list[BehaviorRecord]:
        spent = {(p, k) for p, k, _ in self.spend_log}
        first_pay_seen: dict[str, str] = {}
        for tx in self.txs:
            for o in tx.outputs:
                first_pay_seen.setdefault(o.address, tx.tx_id)
        log = []
        for b in self.built:
            tx = b.tx
            ins = sorted(set(tx.input_addresses()))
            if len(ins) >= 2:
                log.append(BehaviorRecord(tx.tx_id, HeuristicId.MULTI_INPUT,
                                          [canonical_pair(x, y) for x, y in combinations(ins, 2)]))
            if b.change_pos is None:
                continue
            change = tx.outputs[b.change_pos]
            pay = tx.outputs[b.pay_pos]
            pairs = sorted(canonical_pair(i, change.address) for i in ins if i != change.address)
            if not pairs:
                continue
            patterns = []
            if pay.addr_type is not b.payer.addr_type:
                patterns.append(HeuristicId.CHANGE_TYPE)
            if b.change_fresh and first_pay_seen[pay.address] != tx.tx_id:
                patterns.append(HeuristicId.CHANGE_BEHAVIOR)
            if b.payer.locktime and (tx.tx_id, b.change_pos) in spent:
                patterns.append(HeuristicId.CHANGE_LOCKTIME)
            smallest = min(i.amount for i in tx.inputs)
            if change.amount < smallest <= pay.amount:
                patterns.append(HeuristicId.OPTIMAL_CHANGE)
            if b.peel_continues:
                patterns.append(HeuristicId.PEELING_CHAIN)
            if b.pay_round:
                patterns.append(HeuristicId.POWER_OF_TEN)
            log.extend(BehaviorRecord(tx.tx_id, h, pairs) for h in patterns)
        return log


def generate_chain(cfg: GeneratorConfig | None = None) -> GeneratedLedger:
    cfg = cfg or GeneratorConfig()
    gen = _Generator(cfg)
    gen.run()
    chain = ChainView(gen.txs)
    attrs = {w.name: {"addr_type": w.addr_type.value, "locktime_wallet": w.locktime, "weight": w.weight}
             for w in gen.wallets}
    return GeneratedLedger(chain, GroundTruth(dict(sorted(gen.labels.items()))), gen.spend_log,
                           gen.behavior_log(), attrs)


def entity_sizes(gt: GroundTruth) -> dict[str, int]:
    sizes: dict[str, int] = {}
    for e in gt.labels.values():
        sizes[e] = sizes.get(e, 0) + 1
    return sizes
