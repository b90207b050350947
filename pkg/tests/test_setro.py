from __future__ import annotations

import random

import numpy as np
import pytest

from ddendgame.core import Partition, Seat, Shape, Trump, enumerate_shapes, first_deal, iter_deals, parse_deal
from ddendgame.retro import RetroDatabase, rank
from ddendgame.rules import minimax_value
from ddendgame.sets import SetEntry, candidate_with_xcounts, enumerate_members, member_count, random_entry
from ddendgame.setdb import PartitionTree
from ddendgame.setro import (
    BuildReport,
    IncompletePriorError,
    OpenList,
    PartitionValues,
    PriorTables,
    Probe,
    SetroDatabase,
    build_setro_db,
    database_lookup,
    generalize_to_set,
    next_independent_state,
    oracle,
    oracle_setwise,
    setwise_bounds,
    successors,
    suit_search_order,
)

from conftest import spade_partition

N, S, E, W = (1 << p for p in range(4))


@pytest.fixture(scope="module")
def ladder(single_setro):
    deal = first_deal(Shape.single_suit(2), Seat.E, Trump.NT)
    sets = {c: candidate_with_xcounts(deal, [k, 0, 0, 0]) for c, k in zip("abcdefgh", range(1, 9))}
    return deal, sets, single_setro


def test_first_deals_render():
    assert str(first_deal(Shape.single_suit(2), Seat.E, Trump.NT)).startswith("N:98")


def test_open_list_pops_greatest_first():
    ol = OpenList()
    deals = list(iter_deals(spade_partition(1)))
    for d in random.Random(1).sample(deals, len(deals)):
        assert ol.push(d)
    assert not ol.push(deals[3])
    popped = [ol.pop() for _ in range(len(deals))]
    assert [rank(d) for d in popped] == sorted((rank(d) for d in deals), reverse=True)
    assert not ol and ol.peak == 24


def test_four_card_probe_trace(single_setro):
    probes: list[Probe] = []
    tree, _ = build_setro_db(1, Shape.single_suit(1), Seat.E, Trump.NT, single_setro, probes=probes)
    assert [(p.xcount, p.consistent) for p in probes[:2]] == [(3, True), (4, False)]
    first = tree.entries()
    assert len(first) == 2


def test_eight_card_probe_trace_and_next_state(single_setro):
    probes: list[Probe] = []
    trace: list = []
    tree, report = build_setro_db(
        2, Shape.single_suit(2), Seat.E, Trump.NT, single_setro, probes=probes, trace=trace
    )
    assert [(p.xcount, p.consistent) for p in probes[:3]] == [(5, True), (7, False), (6, True)]
    (s0, f), (s1, _) = trace[:2]
    assert f.masks[0] == (N, N) and f.xcounts[0] == 6 and f.value == 2
    assert s1 == parse_deal("N:97... E:54... S:86... W:32... leader=E trump=NT")
    assert report.balanced


def test_successors_of_ladder_f(ladder):
    deal, sets, _ = ladder
    (nxt,) = successors(deal, sets["f"])
    assert nxt == parse_deal("N:97... E:54... S:86... W:32... leader=E trump=NT")


def test_next_independent_state_steps_over_covered_deals(ladder):
    deal, sets, _ = ladder
    part = deal.partition
    tree = PartitionTree(part)
    f = sets["f"].with_value(2)
    tree.insert(f)
    ol = OpenList()
    report = BuildReport(part)
    s = next_independent_state(ol, tree, (deal, f), report)
    assert tree.lookup_state(s) is None
    # an entry covering the whole partition empties the list
    everything = SetEntry(part, ((), (), (), ()), (8, 0, 0, 0), 1)
    full = PartitionTree(part)
    full.insert(everything)
    assert next_independent_state(OpenList(), full, (deal, everything)) is None


def test_database_lookup_matches_minimax_on_eight_cards(single_setro):
    for deal in iter_deals(spade_partition(2)):
        assert database_lookup(deal, single_setro) == minimax_value(deal)


def test_forced_winner_at_depth_one():
    d = parse_deal("N:5... E:4... S:3... W:2... leader=N trump=NT")
    assert database_lookup(d, {}) == 1


def test_ladder_values_and_oracle(ladder):
    deal, sets, db = ladder
    assert database_lookup(deal, db) == 2
    for c in "abcdef":
        assert oracle(sets[c], 2, db), c
    for c in "gh":
        assert not oracle(sets[c], 2, db), c
    assert oracle(candidate_with_xcounts(deal, [1, 0, 0, 0]), 2, db)


def test_setwise_oracle_on_ladder(ladder):
    deal, sets, db = ladder
    calls = []

    def fallback(e, v):
        calls.append(e)
        return oracle(e, v, db)

    assert setwise_bounds(sets["f"], db) == (2, 2)
    assert oracle_setwise(sets["f"], 2, db, fallback) and not calls
    assert not oracle_setwise(sets["g"], 2, db, fallback)
    assert not oracle_setwise(sets["h"], 2, db, fallback)
    assert not oracle_setwise(sets["f"], 1, db, fallback)


def test_setwise_oracle_agrees_with_reference(all_d1):
    rng = random.Random(7)
    shapes = [s for s in enumerate_shapes(8) if sum(1 for n in s.suit_sizes if n) <= 2]
    dense: dict = {}
    tables = PriorTables(all_d1)

    def reference(e, v):
        part = e.partition
        if part not in dense:
            dense[part] = PartitionValues(part, tables)
        return dense[part].consistent(e, v)

    decided = 0
    for _ in range(10_000):
        part = Partition(rng.choice(shapes), Seat(rng.randrange(4)), Trump.NT if rng.random() < 0.8 else Trump(rng.randrange(5)))
        e = random_entry(part, rng)
        v = rng.randint(0, 2)
        calls = []

        def fb(x, y):
            calls.append(1)
            return reference(x, y)

        assert oracle_setwise(e, v, all_d1, fb) == reference(e, v)
        decided += not calls
    assert decided > 0


def test_generalization_is_a_consistent_maximum(single_setro):
    part = spade_partition(2)
    values = PartitionValues(part, PriorTables(single_setro))
    for deal in list(iter_deals(part))[::97]:
        v = values.value(deal)
        e = generalize_to_set(deal, v, values.consistent)
        assert values.consistent(e, v)
        assert deal in enumerate_members(e)
        n = e.xcounts[0]
        if n < 8:
            assert not values.consistent(candidate_with_xcounts(deal, [n + 1, 0, 0, 0]), v)


def test_suit_search_order():
    shape = Shape(((1, 2, 0, 0),) * 4)
    assert suit_search_order(Partition(shape, Seat.N, Trump.NT)) == [1, 0]


def test_entry_counts_and_balance(single_setro):
    for d, lo, hi, states in [(1, 2, 2, 24), (2, 15, 23, 2520), (3, 235, 355, 369600)]:
        part = spade_partition(d)
        tree = single_setro.trees[part]
        report = single_setro.reports[part]
        assert lo <= tree.entry_count <= hi
        assert tree.covered_count() == states
        assert report.balanced
        assert report.generated_states == report.independent_states + report.duplicate_states
        if d >= 2:
            assert tree.node_count / tree.entry_count < 2
    twelve = single_setro.trees[spade_partition(3)]
    assert twelve.entry_count / twelve.covered_count() <= 1e-2


def test_twelve_card_tree_matches_retro(single_setro, single_retro):
    part = spade_partition(3)
    want = single_retro.get(part).values
    got = single_setro.trees[part].dense_values()
    assert np.array_equal(got.astype(np.int64), np.asarray(want, dtype=np.int64))


def test_entry_sample_reverifies(single_setro):
    rng = random.Random(3)
    for d in (2, 3):
        tree = single_setro.trees[spade_partition(d)]
        entries = tree.entries()
        sample = rng.sample(entries, max(1, len(entries) // 100))
        for e in sample:
            if member_count(e) <= 2000:
                assert oracle(e, e.value, single_setro)
            else:
                values = PartitionValues(e.partition, PriorTables(single_setro))
                assert values.consistent(e, e.value)


def test_missing_prior_is_reported():
    with pytest.raises(IncompletePriorError) as exc:
        build_setro_db(2, Shape.single_suit(2), Seat.E, Trump.NT, {})
    assert exc.value.partition.d == 1


def test_every_d1_build_is_balanced(all_d1, all_d1_retro):
    assert len(all_d1.reports) == 256 * 4 * 5
    for part, report in all_d1.reports.items():
        assert report.balanced
        want = np.asarray(all_d1_retro.get(part).values)
        assert np.array_equal(all_d1.trees[part].dense_values(), want.astype(np.int8))


def test_database_persists(tmp_path):
    db = SetroDatabase(tmp_path)
    part = spade_partition(2)
    db.ensure([part])
    again = SetroDatabase(tmp_path)
    assert part in again
    assert again.ensure([part]) == []
    d = first_deal(part.shape, part.leader, part.trump)
    assert again.value(d) == 2
