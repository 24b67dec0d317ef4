"""Three-stage snowball transaction sample and semester time windows."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import date, datetime, timezone
from enum import Enum
from typing import Iterable, Sequence

from .chain import ChainView, GroundTruth
from .rng import make_rng, sample_without_replacement


@dataclass(frozen=True)
class SampleResult:
    s0: frozenset[str]
    s1: frozenset[str]
    s2: frozenset[str]
    t0: frozenset[str]
    t1: frozenset[str]
    seed: int

    @property
    def transactions(self) -> frozenset[str]:
        return self.t0 | self.t1

    @property
    def addresses(self) -> frozenset[str]:
        return self.s0 | self.s1 | self.s2

    def to_json(self) -> dict:
        return {
            "rng_seed": self.seed,
            **{name: sorted(getattr(self, name)) for name in ("s0", "s1", "s2", "t0", "t1")},
        }

    @classmethod
    def from_json(cls, data: dict) -> "SampleResult":
        return cls(
            *(frozenset(data[name]) for name in ("s0", "s1", "s2", "t0", "t1")),
            seed=int(data["rng_seed"]),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"


def snowball_sample(chain: ChainView, gt: GroundTruth, seed_count: int, rng_seed: int,
                    address_index: dict[str, list[str]] | None = None) -> SampleResult:
    """Seed addresses from the ground truth, their transactions, and one more hop.

    The second hop keeps only transactions touching at least two distinct
    first-hop addresses, on either side.
    """
    candidates = sorted(a for a in gt.labels if a in chain.address_registry)
    if seed_count < 1:
        raise ValueError("seed_count must be positive")
    if seed_count > len(candidates):
        raise ValueError(f"seed_count {seed_count} exceeds the {len(candidates)} ground-truth addresses in the chain")
    index = address_index if address_index is not None else chain.address_index()

    s0 = frozenset(sample_without_replacement(candidates, seed_count, make_rng(rng_seed)))
    t0 = frozenset(t for a in s0 for t in index.get(a, ()))
    s1 = frozenset(a for t in t0 for a in chain.by_id[t].addresses()) - s0

    hits: dict[str, int] = {}
    for a in s1:
        for t in index.get(a, ()):
            if t not in t0:
                hits[t] = hits.get(t, 0) + 1  # index lists each (address, tx) once
    t1 = frozenset(t for t, n in hits.items() if n >= 2)
    s2 = frozenset(a for t in t1 for a in chain.by_id[t].addresses()) - s0 - s1
    return SampleResult(s0, s1, s2, t0, t1, rng_seed)


# --------------------------------------------------------------------------
# windows

class WindowKind(str, Enum):
    CUMULATIVE = "cumulative"
    PARTIAL = "partial"


@dataclass(frozen=True)
class TimeWindow:
    """Closed interval ``[open, close]`` in UTC seconds."""

    open: int
    close: int
    kind: WindowKind

    def __post_init__(self):
        if self.open > self.close:
            raise ValueError("window open must not exceed close")

    def contains(self, ts: int) -> bool:
        return self.open <= ts <= self.close

    @property
    def name(self) -> str:
        fmt = "%Y%m%d"
        o = datetime.fromtimestamp(self.open, tz=timezone.utc).strftime(fmt)
        c = datetime.fromtimestamp(self.close, tz=timezone.utc).strftime(fmt)
        return f"{self.kind.value}_{o}_{c}"

    def to_json(self) -> dict:
        return {"open": self.open, "close": self.close, "kind": self.kind.value}

    @classmethod
    def from_json(cls, data: dict) -> "TimeWindow":
        return cls(int(data["open"]), int(data["close"]), WindowKind(data["kind"]))


def _utc(y: int, m: int, d: int, hh: int = 0, mm: int = 0, ss: int = 0) -> int:
    return int(datetime(y, m, d, hh, mm, ss, tzinfo=timezone.utc).timestamp())


def semester_bounds(year: int, half: int) -> tuple[int, int]:
    if half == 1:
        return _utc(year, 1, 1), _utc(year, 6, 30, 23, 59, 59)
    if half == 2:
        return _utc(year, 7, 1), _utc(year, 12, 31, 23, 59, 59)
    raise ValueError("semester must be 1 or 2")


def semesters_from(start: date | str, count: int) -> list[tuple[int, int]]:
    """``count`` consecutive (year, half) semesters, the first containing ``start``."""
    if isinstance(start, str):
        start = date.fromisoformat(start)
    year, half = start.year, 1 if start.month <= 6 else 2
    out = []
    for _ in range(count):
        out.append((year, half))
        year, half = (year, 2) if half == 1 else (year + 1, 1)
    return out


def make_windows(semesters: Sequence[tuple[int, int]], kind: WindowKind | str,
                 origin: date | str | None = None) -> list[TimeWindow]:
    """Partial windows are the semesters themselves; cumulative windows all open
    at ``origin`` (default: start of the first semester) and close at each
    semester's end."""
    if not semesters:
        raise ValueError("no semesters given")
    kind = WindowKind(kind)
    bounds = [semester_bounds(y, h) for y, h in semesters]
    if any(b[0] <= a[0] for a, b in zip(bounds, bounds[1:])):
        raise ValueError("semesters must be strictly increasing")
    if kind is WindowKind.PARTIAL:
        return [TimeWindow(o, c, kind) for o, c in bounds]
    if origin is None:
        start = bounds[0][0]
    else:
        if isinstance(origin, str):
            origin = date.fromisoformat(origin)
        start = _utc(origin.year, origin.month, origin.day)
    return [TimeWindow(start, c, kind) for _, c in bounds]


def slice_transactions(tx_ids: Iterable[str], chain: ChainView, window: TimeWindow) -> set[str]:
    return {t for t in tx_ids if window.contains(chain.by_id[t].timestamp)}
