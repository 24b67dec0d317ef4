"""Ledger domain types, file formats and the derived spend / first-receipt indexes."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import IO, Iterable, Iterator

log = logging.getLogger(__name__)


class AddrType(str, Enum):
    P2PKH = "P2PKH"
    P2SH = "P2SH"
    OTHER = "OTHER"


class ChainParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class ChainInvariantError(ValueError):
    def __init__(self, tx_id: str, invariant: str):
        super().__init__(f"transaction {tx_id!r} violates invariant: {invariant}")
        self.tx_id = tx_id
        self.invariant = invariant


class DanglingInputError(ValueError):
    pass


class MissingOutpointsError(ValueError):
    pass


class GroundTruthConflictError(ValueError):
    def __init__(self, address: str, first: str, second: str):
        super().__init__(f"address {address!r} labeled both {first!r} and {second!r}")
        self.address = address


@dataclass(frozen=True)
class Address:
    id: str
    addr_type: AddrType


@dataclass(frozen=True)
class TxOutput:
    address: str
    addr_type: AddrType
    amount: int


@dataclass(frozen=True)
class TxInput:
    """A spent output, carried with its resolved address and amount.

    ``prev_tx`` is None for funding that predates the chain view; such inputs
    never enter the spend index.
    """

    address: str
    addr_type: AddrType
    amount: int
    prev_tx: str | None = None
    prev_index: int | None = None


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]
    block_height: int
    timestamp: int
    locktime: int = 0

    @property
    def order_key(self) -> tuple[int, str]:
        return (self.block_height, self.tx_id)

    def input_addresses(self) -> list[str]:
        """Distinct input addresses in first-appearance order."""
        return list(dict.fromkeys(i.address for i in self.inputs))

    def output_addresses(self) -> list[str]:
        return list(dict.fromkeys(o.address for o in self.outputs))

    def addresses(self) -> set[str]:
        return {i.address for i in self.inputs} | {o.address for o in self.outputs}

    def validate(self) -> None:
        if not self.tx_id:
            raise ChainInvariantError(self.tx_id, "tx_id non-empty")
        if not self.inputs:
            raise ChainInvariantError(self.tx_id, "inputs non-empty")
        if not self.outputs:
            raise ChainInvariantError(self.tx_id, "outputs non-empty")
        for leg in (*self.inputs, *self.outputs):
            if not leg.address:
                raise ChainInvariantError(self.tx_id, "address id non-empty")
            if leg.amount < 0:
                raise ChainInvariantError(self.tx_id, "amount >= 0")
        if sum(i.amount for i in self.inputs) < sum(o.amount for o in self.outputs):
            raise ChainInvariantError(self.tx_id, "sum(inputs) >= sum(outputs)")
        if self.block_height < 0 or self.locktime < 0:
            raise ChainInvariantError(self.tx_id, "block_height, locktime >= 0")
        if self.locktime > 0 and self.block_height <= self.locktime:
            raise ChainInvariantError(self.tx_id, "block_height > locktime")


class ChainView:
    """Transactions in (block_height, tx_id) order plus the address registry."""

    def __init__(self, transactions: Iterable[Transaction]):
        txs = sorted(transactions, key=lambda t: t.order_key)
        self.by_id: dict[str, Transaction] = {}
        self.address_registry: dict[str, Address] = {}
        for tx in txs:
            tx.validate()
            if tx.tx_id in self.by_id:
                raise ChainInvariantError(tx.tx_id, "tx_id unique")
            self.by_id[tx.tx_id] = tx
            for leg in (*tx.inputs, *tx.outputs):
                known = self.address_registry.get(leg.address)
                if known is None:
                    self.address_registry[leg.address] = Address(leg.address, leg.addr_type)
                elif known.addr_type is not leg.addr_type:
                    raise ChainInvariantError(tx.tx_id, f"address {leg.address!r} has a fixed type")
        self.transactions: tuple[Transaction, ...] = tuple(txs)
        self.position = {tx.tx_id: k for k, tx in enumerate(txs)}

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self) -> Iterator[Transaction]:
        return iter(self.transactions)

    def __getitem__(self, tx_id: str) -> Transaction:
        return self.by_id[tx_id]

    @property
    def has_outpoints(self) -> bool:
        return any(i.prev_tx is not None for tx in self.transactions for i in tx.inputs)

    def address_index(self) -> dict[str, list[str]]:
        """address -> tx_ids (chain order) in which it appears on either side."""
        index: dict[str, list[str]] = {}
        for tx in self.transactions:
            for a in sorted(tx.addresses()):
                index.setdefault(a, []).append(tx.tx_id)
        return index


@dataclass
class GroundTruth:
    labels: dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, address: str) -> bool:
        return address in self.labels

    def __getitem__(self, address: str) -> str:
        return self.labels[address]

    def entities(self) -> set[str]:
        return set(self.labels.values())

    def unknown_addresses(self, chain: ChainView) -> list[str]:
        return sorted(a for a in self.labels if a not in chain.address_registry)


# --------------------------------------------------------------------------
# timestamps

def parse_timestamp(text: str) -> int:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_timestamp(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


# --------------------------------------------------------------------------
# JSONL / CSV ingestion

def _tx_from_record(rec: dict, line: int) -> Transaction | None:
    if rec.get("coinbase"):
        return None
    try:
        inputs = tuple(
            TxInput(
                address=str(i["address"]),
                addr_type=AddrType(i["type"]),
                amount=int(i["amount"]),
                prev_tx=i.get("prev_tx"),
                prev_index=None if i.get("prev_index") is None else int(i["prev_index"]),
            )
            for i in rec["inputs"]
        )
        outputs = tuple(
            TxOutput(address=str(o["address"]), addr_type=AddrType(o["type"]), amount=int(o["amount"]))
            for o in rec["outputs"]
        )
        tx = Transaction(
            tx_id=str(rec["tx_id"]),
            inputs=inputs,
            outputs=outputs,
            block_height=int(rec["block_height"]),
            timestamp=parse_timestamp(rec["timestamp"]),
            locktime=int(rec.get("locktime", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ChainParseError(line, f"malformed transaction record: {exc}") from exc
    tx.validate()
    return tx


def _read_jsonl(stream: IO[str]) -> list[Transaction]:
    txs = []
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ChainParseError(line_no, str(exc)) from exc
        tx = _tx_from_record(rec, line_no)
        if tx is not None:
            txs.append(tx)
    return txs


CSV_COLUMNS = [
    "tx_id", "block_height", "timestamp", "locktime",
    "side", "position", "address", "type", "amount", "prev_tx", "prev_index",
]


def _read_csv(stream: IO[str]) -> list[Transaction]:
    # one row per transaction leg; rows of a transaction are contiguous
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or set(CSV_COLUMNS) - set(reader.fieldnames):
        raise ChainParseError(1, f"CSV header must contain {CSV_COLUMNS}")
    records: dict[str, dict] = {}
    for line_no, row in enumerate(reader, start=2):
        tx_id = row["tx_id"]
        rec = records.get(tx_id)
        if rec is None:
            rec = records[tx_id] = {
                "tx_id": tx_id,
                "block_height": row["block_height"],
                "timestamp": row["timestamp"],
                "locktime": row["locktime"] or 0,
                "inputs": [],
                "outputs": [],
                "_line": line_no,
            }
        leg = {"address": row["address"], "type": row["type"], "amount": row["amount"]}
        if row["side"] == "in":
            leg["prev_tx"] = row["prev_tx"] or None
            leg["prev_index"] = row["prev_index"] or None
            rec["inputs"].append(leg)
        elif row["side"] == "out":
            rec["outputs"].append(leg)
        else:
            raise ChainParseError(line_no, f"side must be 'in' or 'out', got {row['side']!r}")
    txs = []
    for rec in records.values():
        tx = _tx_from_record(rec, rec.pop("_line"))
        if tx is not None:
            txs.append(tx)
    return txs


def load_transactions(source: IO[bytes] | IO[str], format: str = "jsonl") -> ChainView:
    """Parse a transaction file into a validated :class:`ChainView`.

    Records flagged ``"coinbase": true`` are skipped.
    """
    stream = _text(source)
    fmt = format.lower()
    if fmt == "jsonl":
        txs = _read_jsonl(stream)
    elif fmt == "csv":
        txs = _read_csv(stream)
    else:
        raise ValueError(f"unknown transaction format {format!r}")
    return ChainView(txs)


def _text(source: IO[bytes] | IO[str]) -> IO[str]:
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def tx_to_record(tx: Transaction) -> dict:
    inputs = []
    for i in tx.inputs:
        leg = {"address": i.address, "type": i.addr_type.value, "amount": i.amount, "prev_tx": i.prev_tx}
        if i.prev_tx is not None:
            leg["prev_index"] = i.prev_index
        inputs.append(leg)
    return {
        "tx_id": tx.tx_id,
        "block_height": tx.block_height,
        "timestamp": format_timestamp(tx.timestamp),
        "locktime": tx.locktime,
        "inputs": inputs,
        "outputs": [{"address": o.address, "type": o.addr_type.value, "amount": o.amount} for o in tx.outputs],
    }


def dump_transactions(chain: ChainView | Iterable[Transaction], format: str = "jsonl") -> str:
    """Canonical text form; ``load_transactions`` of it reproduces the chain."""
    txs = chain.transactions if isinstance(chain, ChainView) else sorted(chain, key=lambda t: t.order_key)
    if format.lower() == "jsonl":
        return "".join(json.dumps(tx_to_record(tx), separators=(",", ":")) + "\n" for tx in txs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for tx in txs:
        head = [tx.tx_id, tx.block_height, format_timestamp(tx.timestamp), tx.locktime]
        for k, i in enumerate(tx.inputs):
            writer.writerow(head + ["in", k, i.address, i.addr_type.value, i.amount,
                                    i.prev_tx or "", "" if i.prev_index is None else i.prev_index])
        for k, o in enumerate(tx.outputs):
            writer.writerow(head + ["out", k, o.address, o.addr_type.value, o.amount, "", ""])
    return buf.getvalue()


def load_ground_truth(source: IO[bytes] | IO[str], header: bool | None = None) -> GroundTruth:
    """Read ``address,entity`` rows. ``header=None`` sniffs for an ``address,entity`` header."""
    labels: dict[str, str] = {}
    reader = csv.reader(_text(source))
    for line_no, row in enumerate(reader, start=1):
        if not row or not any(row):
            continue
        if line_no == 1 and (header or (header is None and [c.strip() for c in row] == ["address", "entity"])):
            continue
        if len(row) != 2:
            raise ChainParseError(line_no, f"expected 2 columns, got {len(row)}")
        address, entity = row[0].strip(), row[1].strip()
        prior = labels.get(address)
        if prior is not None and prior != entity:
            raise GroundTruthConflictError(address, prior, entity)
        labels[address] = entity
    return GroundTruth(labels)


def dump_ground_truth(gt: GroundTruth) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["address", "entity"])
    for address in sorted(gt.labels):
        writer.writerow([address, gt.labels[address]])
    return buf.getvalue()


def join_ground_truth(gt: GroundTruth, chain: ChainView) -> GroundTruth:
    """Restrict labels to addresses present in ``chain``, warning about the rest."""
    unknown = gt.unknown_addresses(chain)
    if unknown:
        log.warning("%d ground-truth addresses are absent from the chain (e.g. %s)", len(unknown), unknown[0])
    return GroundTruth({a: e for a, e in gt.labels.items() if a in chain.address_registry})


# --------------------------------------------------------------------------
# indexes

SpendIndex = dict[tuple[str, int], str]
FirstSeenIndex = dict[str, str]


def build_spend_index(chain: ChainView) -> SpendIndex:
    """Map each spent out-point ``(tx_id, position)`` to its spending tx_id.

    Inputs without an out-point (funding from before the view) are skipped.
    """
    index: SpendIndex = {}
    for tx in chain.transactions:
        for i in tx.inputs:
            if i.prev_tx is None:
                continue
            prev = chain.by_id.get(i.prev_tx)
            if prev is None or i.prev_index is None or not 0 <= i.prev_index < len(prev.outputs):
                raise DanglingInputError(
                    f"{tx.tx_id} spends ({i.prev_tx}, {i.prev_index}) which was never created"
                )
            out = prev.outputs[i.prev_index]
            if (out.address, out.amount) != (i.address, i.amount):
                raise DanglingInputError(
                    f"{tx.tx_id} input does not match output ({i.prev_tx}, {i.prev_index})"
                )
            if prev.block_height > tx.block_height or prev.tx_id == tx.tx_id:
                raise ChainInvariantError(tx.tx_id, "spending block_height >= creating block_height")
            key = (i.prev_tx, i.prev_index)
            if key in index:
                raise ChainInvariantError(tx.tx_id, f"output {key} spent at most once")
            index[key] = tx.tx_id
    return index


def build_first_seen_index(chain: ChainView) -> FirstSeenIndex:
    first: FirstSeenIndex = {}
    for tx in chain.transactions:
        for o in tx.outputs:
            first.setdefault(o.address, tx.tx_id)
    return first
