import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from acn.chain import (
    AddrType,
    ChainInvariantError,
    ChainParseError,
    ChainView,
    DanglingInputError,
    GroundTruth,
    GroundTruthConflictError,
    build_first_seen_index,
    build_spend_index,
    dump_ground_truth,
    dump_transactions,
    format_timestamp,
    join_ground_truth,
    load_ground_truth,
    load_transactions,
    parse_timestamp,
)
from acn.synthgen import GeneratorConfig, generate_chain
from conftest import P2SH, T0, chain_of, tx

RECORD = {
    "tx_id": "t1", "block_height": 5, "timestamp": "2012-03-01T00:00:00Z", "locktime": 0,
    "inputs": [{"address": "a", "type": "P2PKH", "amount": 100, "prev_tx": None}],
    "outputs": [{"address": "b", "type": "P2PKH", "amount": 60}, {"address": "c", "type": "P2SH", "amount": 30}],
}


def _jsonl(*records):
    return io.BytesIO("".join(json.dumps(r) + "\n" for r in records).encode())


def test_single_record_loads():
    chain = load_transactions(_jsonl(RECORD))
    assert len(chain) == 1
    t = chain["t1"]
    assert [o.amount for o in t.outputs] == [60, 30]
    assert chain.address_registry["c"].addr_type is AddrType.P2SH


def test_overspend_names_tx():
    bad = dict(RECORD, tx_id="tbad", outputs=[{"address": "b", "type": "P2PKH", "amount": 101}])
    with pytest.raises(ChainInvariantError) as err:
        load_transactions(_jsonl(bad))
    assert err.value.tx_id == "tbad"
    assert "sum(inputs)" in err.value.invariant


def test_locktime_requires_later_block():
    with pytest.raises(ChainInvariantError, match="block_height > locktime"):
        load_transactions(_jsonl(dict(RECORD, locktime=5)))
    assert len(load_transactions(_jsonl(dict(RECORD, locktime=4)))) == 1


@pytest.mark.parametrize("field,value", [("inputs", []), ("outputs", [])])
def test_empty_legs_rejected(field, value):
    with pytest.raises(ChainInvariantError):
        load_transactions(_jsonl(dict(RECORD, **{field: value})))


def test_parse_error_reports_line():
    data = io.BytesIO((json.dumps(RECORD) + "\n{not json\n").encode())
    with pytest.raises(ChainParseError) as err:
        load_transactions(data)
    assert err.value.line == 2


def test_missing_key_is_parse_error():
    rec = {k: v for k, v in RECORD.items() if k != "block_height"}
    with pytest.raises(ChainParseError):
        load_transactions(_jsonl(rec))


def test_coinbase_skipped():
    cb = dict(RECORD, tx_id="t0", coinbase=True, inputs=[])
    assert [t.tx_id for t in load_transactions(_jsonl(cb, RECORD))] == ["t1"]


def test_duplicate_tx_id_rejected():
    with pytest.raises(ChainInvariantError, match="unique"):
        load_transactions(_jsonl(RECORD, RECORD))


def test_address_type_fixed():
    other = dict(RECORD, tx_id="t2", inputs=[{"address": "c", "type": "P2PKH", "amount": 30, "prev_tx": None}],
                 outputs=[{"address": "d", "type": "P2PKH", "amount": 1}])
    with pytest.raises(ChainInvariantError, match="fixed type"):
        load_transactions(_jsonl(RECORD, other))


def test_chain_order_is_height_then_id():
    a = tx("b", [("x", 10)], [("y", 5)], height=2)
    b = tx("a", [("x", 10)], [("y", 5)], height=2)
    c = tx("c", [("x", 10)], [("y", 5)], height=1)
    assert [t.tx_id for t in chain_of(a, b, c)] == ["c", "a", "b"]


def test_same_address_in_inputs_and_outputs_allowed():
    chain = chain_of(tx("t", [("a", 10)], [("a", 4), ("b", 5)]))
    assert chain["t"].addresses() == {"a", "b"}


def test_timestamp_roundtrip():
    assert format_timestamp(parse_timestamp("2015-12-31T23:59:59Z")) == "2015-12-31T23:59:59Z"
    assert parse_timestamp("1970-01-01T00:00:00Z") == 0


def test_jsonl_roundtrip_byte_identical(small_ledger):
    text = dump_transactions(small_ledger.chain)
    again = dump_transactions(load_transactions(io.BytesIO(text.encode())))
    assert again == text


def test_csv_roundtrip(small_ledger):
    text = dump_transactions(small_ledger.chain, "csv")
    chain = load_transactions(io.StringIO(text), format="csv")
    assert dump_transactions(chain, "csv") == text
    assert dump_transactions(chain) == dump_transactions(small_ledger.chain)


def test_ten_thousand_record_roundtrip():
    led = generate_chain(GeneratorConfig(entity_count=100, tx_count=10_000, rng_seed=11))
    assert len(led.chain) >= 10_000
    text = dump_transactions(led.chain)
    assert dump_transactions(load_transactions(io.BytesIO(text.encode()))) == text


# --------------------------------------------------------------------------
# ground truth

def test_ground_truth_rows():
    gt = load_ground_truth(io.StringIO("a1,E1\na2,E1\na3,E2\n"))
    assert len(gt) == 3 and gt.entities() == {"E1", "E2"}


def test_ground_truth_header_flag():
    assert len(load_ground_truth(io.StringIO("address,entity\na1,E1\n"))) == 1
    assert len(load_ground_truth(io.StringIO("h1,h2\na1,E1\n"), header=True)) == 1
    assert len(load_ground_truth(io.StringIO("a0,E0\na1,E1\n"), header=False)) == 2


def test_ground_truth_conflict():
    with pytest.raises(GroundTruthConflictError) as err:
        load_ground_truth(io.StringIO("a1,E1\na1,E2\n"))
    assert err.value.address == "a1"


def test_ground_truth_repeat_same_entity_ok():
    assert len(load_ground_truth(io.StringIO("a1,E1\na1,E1\n"))) == 1


def test_ground_truth_join_warns(caplog):
    chain = chain_of(tx("t", [("a", 10)], [("b", 5)]))
    joined = join_ground_truth(GroundTruth({"a": "E", "zz": "F"}), chain)
    assert joined.labels == {"a": "E"}
    assert "absent" in caplog.text


def test_generated_ground_truth_total(small_ledger):
    gt = load_ground_truth(io.StringIO(dump_ground_truth(small_ledger.ground_truth)))
    assert set(gt.labels) == set(small_ledger.chain.address_registry)
    assert len(gt.entities()) == 40


# --------------------------------------------------------------------------
# indexes

def test_spend_index_simple():
    t1 = tx("t1", [("a", 10)], [("b", 6), ("c", 3)], height=1)
    t2 = tx("t2", [("b", 6, AddrType.P2PKH, "t1", 0)], [("d", 5)], height=2)
    assert build_spend_index(chain_of(t1, t2)) == {("t1", 0): "t2"}


def test_unspent_outputs_absent():
    t1 = tx("t1", [("a", 10)], [("b", 6), ("c", 3)], height=1)
    assert build_spend_index(chain_of(t1)) == {}


def test_dangling_input():
    t2 = tx("t2", [("b", 6, AddrType.P2PKH, "nope", 0)], [("d", 5)], height=2)
    with pytest.raises(DanglingInputError):
        build_spend_index(chain_of(t2))


def test_dangling_bad_position_or_mismatch():
    t1 = tx("t1", [("a", 10)], [("b", 6)], height=1)
    with pytest.raises(DanglingInputError):
        build_spend_index(chain_of(t1, tx("t2", [("b", 6, AddrType.P2PKH, "t1", 3)], [("d", 5)], height=2)))
    with pytest.raises(DanglingInputError):
        build_spend_index(chain_of(t1, tx("t2", [("b", 7, AddrType.P2PKH, "t1", 0)], [("d", 5)], height=2)))


def test_double_spend_rejected():
    t1 = tx("t1", [("a", 10)], [("b", 6)], height=1)
    s1 = tx("t2", [("b", 6, AddrType.P2PKH, "t1", 0)], [("d", 5)], height=2)
    s2 = tx("t3", [("b", 6, AddrType.P2PKH, "t1", 0)], [("e", 5)], height=3)
    with pytest.raises(ChainInvariantError, match="at most once"):
        build_spend_index(chain_of(t1, s1, s2))


def test_spend_index_matches_generator_log(ledger):
    index = build_spend_index(ledger.chain)
    assert index == {(p, k): s for p, k, s in ledger.spend_log}
    with_outpoints = sum(1 for t in ledger.chain for i in t.inputs if i.prev_tx is not None)
    assert len(index) == with_outpoints
    for (p, _), s in index.items():
        assert ledger.chain[p].block_height <= ledger.chain[s].block_height


def test_first_seen_simple():
    t1 = tx("t1", [("a", 10)], [("a2", 6)], height=1)
    t5 = tx("t5", [("x", 10)], [("a2", 6)], height=5)
    first = build_first_seen_index(chain_of(t5, t1))
    assert first["a2"] == "t1"
    assert "a" not in first and "x" not in first


def test_first_seen_brute_force(ledger):
    first = build_first_seen_index(ledger.chain)
    txs = list(ledger.chain)
    expected = {}
    for t in sorted(txs, key=lambda t: (t.block_height, t.tx_id)):
        for o in t.outputs:
            if o.address not in expected:
                expected[o.address] = t.tx_id
    assert first == expected
    pos = {t.tx_id: k for k, t in enumerate(txs)}
    for a, t in list(first.items())[:2000]:
        assert not any(a in [o.address for o in u.outputs] for u in txs[: pos[t]])


@given(st.lists(st.tuples(st.integers(0, 20), st.sampled_from("abcdef")), min_size=1, max_size=25, unique=True))
def test_chain_view_ordering_property(specs):
    txs = [tx(f"{name}{h}", [("in", 10)], [("out", 5)], height=h) for h, name in specs]
    keys = [(t.block_height, t.tx_id) for t in ChainView(txs)]
    assert keys == sorted(keys)


def test_p2sh_helper_type():
    assert tx("t", [("a", 1, P2SH)], [("b", 1, P2SH)]).inputs[0].addr_type is P2SH
    assert tx("t", [("a", 1)], [("b", 1)], timestamp=T0).timestamp == T0
