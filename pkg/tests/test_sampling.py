import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from acn.chain import GroundTruth, format_timestamp, parse_timestamp
from acn.rng import derive_seed, make_rng, sample_without_replacement
from acn.sampling import (
    SampleResult,
    TimeWindow,
    WindowKind,
    make_windows,
    semester_bounds,
    semesters_from,
    slice_transactions,
    snowball_sample,
)
from conftest import chain_of, tx
from oracles import brute_snowball


def test_snowball_minimal():
    chain = chain_of(tx("t1", [("a1", 10)], [("a2", 5), ("b", 4)]))
    r = snowball_sample(chain, GroundTruth({"a1": "E"}), 1, 0)
    assert r.s0 == {"a1"} and r.t0 == {"t1"} and r.s1 == {"a2", "b"}
    assert r.t1 == set() and r.s2 == set()


def test_snowball_second_hop():
    chain = chain_of(tx("t1", [("a1", 10)], [("a2", 5), ("b", 4)], height=1),
                     tx("t2", [("a2", 5), ("b", 4)], [("c", 8)], height=2))
    r = snowball_sample(chain, GroundTruth({"a1": "E"}), 1, 0)
    assert r.t1 == {"t2"} and r.s2 == {"c"}


def test_snowball_second_hop_outputs_count():
    # two distinct first-hop addresses, both as outputs
    chain = chain_of(tx("t1", [("a1", 10)], [("a2", 5), ("b", 4)], height=1),
                     tx("t2", [("x", 9)], [("a2", 5), ("b", 4)], height=2),
                     tx("t3", [("a2", 9)], [("a2", 5), ("y", 4)], height=3))
    r = snowball_sample(chain, GroundTruth({"a1": "E"}), 1, 0)
    assert r.t1 == {"t2"}  # t3 touches only one distinct s1 address
    assert r.s2 == {"x"}


def test_snowball_too_many_seeds():
    chain = chain_of(tx("t1", [("a1", 10)], [("a2", 5)]))
    with pytest.raises(ValueError):
        snowball_sample(chain, GroundTruth({"a1": "E"}), 2, 0)


@pytest.mark.parametrize("seed", range(3))
def test_snowball_brute_force_small(small_ledger, seed):
    r = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 30, seed)
    t0, s1, t1, s2 = brute_snowball(small_ledger.chain, set(r.s0))
    assert (r.t0, r.s1, r.t1, r.s2) == (t0, s1, t1, s2)


def test_snowball_invariants(small_ledger):
    r = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 25, 4)
    assert len(r.s0) == 25 and r.s0 <= set(small_ledger.ground_truth.labels)
    assert not (r.s0 & r.s1) and not (r.s0 & r.s2) and not (r.s1 & r.s2)
    assert not (r.t0 & r.t1)


def test_snowball_deterministic_and_seed_sensitive(small_ledger):
    a = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 20, 9)
    b = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 20, 9)
    c = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 20, 10)
    assert a == b and a.s0 != c.s0


def test_sample_json_roundtrip(small_ledger):
    r = snowball_sample(small_ledger.chain, small_ledger.ground_truth, 10, 1)
    data = json.loads(r.dumps())
    assert data["s0"] == sorted(data["s0"]) and data["rng_seed"] == 1
    assert SampleResult.from_json(data) == r


# --------------------------------------------------------------------------
# windows

def test_semester_bounds_inclusive():
    o, c = semester_bounds(2012, 1)
    assert format_timestamp(o) == "2012-01-01T00:00:00Z"
    assert format_timestamp(c) == "2012-06-30T23:59:59Z"
    o2, c2 = semester_bounds(2012, 2)
    assert o2 == c + 1 and format_timestamp(c2) == "2012-12-31T23:59:59Z"


def test_cumulative_windows_from_origin():
    ws = make_windows(semesters_from("2012-01-01", 8), "cumulative", origin="2011-07-01")
    assert len(ws) == 8
    assert {format_timestamp(w.open) for w in ws} == {"2011-07-01T00:00:00Z"}
    closes = [format_timestamp(w.close)[:10] for w in ws]
    assert closes == ["2012-06-30", "2012-12-31", "2013-06-30", "2013-12-31",
                      "2014-06-30", "2014-12-31", "2015-06-30", "2015-12-31"]


def test_partial_windows_disjoint():
    ws = make_windows(semesters_from("2012-01-01", 8), "partial")
    assert len(ws) == 8
    for a, b in zip(ws, ws[1:]):
        assert b.open == a.close + 1


def test_single_semester_kinds_coincide():
    sem = semesters_from("2014-07-01", 1)
    (c,), (p,) = make_windows(sem, "cumulative"), make_windows(sem, "partial")
    assert (c.open, c.close) == (p.open, p.close)


def test_windows_errors():
    with pytest.raises(ValueError):
        make_windows([], "partial")
    with pytest.raises(ValueError):
        make_windows([(2013, 1), (2012, 2)], "partial")
    with pytest.raises(ValueError):
        TimeWindow(10, 5, WindowKind.PARTIAL)


def test_window_name_and_json():
    w = make_windows(semesters_from("2013-07-01", 1), "partial")[0]
    assert w.name == "partial_20130701_20131231"
    assert TimeWindow.from_json(json.loads(json.dumps(w.to_json()))) == w


def test_slice_bounds():
    w = make_windows(semesters_from("2012-01-01", 1), "partial")[0]
    at_open = tx("a", [("x", 1)], [("y", 1)], timestamp=w.open)
    at_close = tx("b", [("x", 1)], [("y", 1)], timestamp=w.close)
    after = tx("c", [("x", 1)], [("y", 1)], timestamp=w.close + 1)
    chain = chain_of(at_open, at_close, after)
    assert slice_transactions({"a", "b", "c"}, chain, w) == {"a", "b"}


def test_partial_slices_partition_year(ledger):
    ids = {t.tx_id for t in ledger.chain}
    sems = semesters_from("2012-01-01", 8)
    parts = [slice_transactions(ids, ledger.chain, w) for w in make_windows(sems, "partial")]
    cum = make_windows(sems, "cumulative")
    assert set().union(*parts) == slice_transactions(ids, ledger.chain, cum[-1]) == ids
    assert sum(len(p) for p in parts) == len(ids)
    # monotone cumulative slices
    sizes = [len(slice_transactions(ids, ledger.chain, w)) for w in cum]
    assert sizes == sorted(sizes)
    # disjoint transaction sets may still share addresses
    addrs = [set().union(*(ledger.chain[t].addresses() for t in p)) for p in parts]
    assert any(addrs[k] & addrs[k + 1] for k in range(7))


@given(st.integers(2000, 2030), st.integers(1, 2), st.integers(1, 12))
def test_partial_union_equals_envelope(year, half, count):
    sems = semesters_from(f"{year}-{'01' if half == 1 else '07'}-01", count)
    parts = make_windows(sems, "partial")
    env = make_windows(sems, "cumulative")[-1]
    assert parts[0].open == env.open and parts[-1].close == env.close
    assert all(b.open == a.close + 1 for a, b in zip(parts, parts[1:]))


# --------------------------------------------------------------------------
# rng helpers

def test_derive_seed_stable_and_distinct():
    assert derive_seed(5, "a", 1) == derive_seed(5, "a", 1)
    assert len({derive_seed(5, k) for k in ("a", "b", 1, 2)}) == 4


@given(st.integers(0, 40), st.integers(0, 2**32))
def test_sample_without_replacement_nested(k, seed):
    items = list(range(40))
    small = sample_without_replacement(items, k, make_rng(seed))
    big = sample_without_replacement(items, 40, make_rng(seed))
    assert small == big[:k]
    assert len(set(small)) == k


def test_parse_timestamp_naive_is_utc():
    assert parse_timestamp("2012-01-01T00:00:00") == parse_timestamp("2012-01-01T00:00:00Z")
