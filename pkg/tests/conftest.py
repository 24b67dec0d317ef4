from __future__ import annotations

import hypothesis
import pytest

from acn.chain import AddrType, ChainView, Transaction, TxInput, TxOutput, parse_timestamp
from acn.heuristics import HeuristicConfig, build_context
from acn.network import build_network
from acn.synthgen import GeneratorConfig, generate_chain

hypothesis.settings.register_profile("ci", deadline=None, max_examples=60)
hypothesis.settings.load_profile("ci")

P2PKH, P2SH = AddrType.P2PKH, AddrType.P2SH
T0 = parse_timestamp("2012-03-01T00:00:00Z")


def tx(tx_id, inputs, outputs, height=100, timestamp=T0, locktime=0):
    """Terse transaction builder.

    inputs: (address, amount[, type[, prev_tx, prev_index]]); outputs: (address, amount[, type]).
    """
    ins = []
    for spec in inputs:
        addr, amount, *rest = spec
        kind = rest[0] if rest else P2PKH
        prev = tuple(rest[1:3]) if len(rest) >= 3 else (None, None)
        ins.append(TxInput(addr, kind, amount, *prev))
    outs = [TxOutput(addr, rest[0] if rest else P2PKH, amount) for addr, amount, *rest in outputs]
    return Transaction(tx_id, tuple(ins), tuple(outs), height, timestamp, locktime)


@pytest.fixture(scope="session")
def ledger():
    """The default 200-entity, 20k-transaction synthetic ledger."""
    return generate_chain(GeneratorConfig())


@pytest.fixture(scope="session")
def small_ledger():
    return generate_chain(GeneratorConfig(entity_count=40, tx_count=2000, rng_seed=3))


@pytest.fixture(scope="session")
def full_network(ledger):
    """All heuristics over every transaction of the default ledger."""
    cfg = HeuristicConfig()
    ctx = build_context(ledger.chain, cfg)
    return build_network([t.tx_id for t in ledger.chain], ledger.chain, ctx, cfg, ledger.ground_truth)


@pytest.fixture(scope="session")
def small_network(small_ledger):
    cfg = HeuristicConfig()
    ctx = build_context(small_ledger.chain, cfg)
    chain = small_ledger.chain
    return build_network([t.tx_id for t in chain], chain, ctx, cfg, small_ledger.ground_truth)


def chain_of(*txs) -> ChainView:
    return ChainView(txs)


SMALL_RUN = """\
rng_seed = 5

[paths]
out_dir = {out}

[generate]
entity_count = 30
tx_count = 1500
semesters = 4

[sample]
seed_count = 15

[windows]
semesters = 4
kind = both

[sweep]
p_grid = 0, 0.05
repeats = 2

[analysis]
randomize_count = 2
fit_min_tail = 10
"""

PIPELINE = ("generate", "sample", "build", "cluster", "metrics")


def write_config(directory, text=SMALL_RUN, **fmt):
    """Write an INI file into ``directory`` with outputs under ``directory/out``."""
    path = directory / "run.ini"
    path.write_text(text.format(out=directory / "out", **fmt))
    return path


CRITERIA: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
