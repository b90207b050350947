from __future__ import annotations

import itertools
import random

import numpy as np
import pytest

from ddendgame.core import Partition, Seat, Shape, Trump, first_deal, iter_deals
from ddendgame.retro import (
    FormatError,
    RetroDB,
    RetroDatabase,
    build_retro_db,
    pack_nibbles,
    rank,
    retro_path,
    unpack_nibbles,
    unrank,
)
from ddendgame.rules import MissingPartitionError, minimax_value

from conftest import spade_partition


def test_first_deal_has_rank_zero():
    for shape in (Shape.single_suit(2), Shape.of([[1, 1, 0, 0], [0, 1, 1, 0], [2, 0, 0, 0], [0, 0, 1, 1]])):
        assert rank(first_deal(shape, Seat.W, Trump.C)) == 0


def test_state_count_of_eight_spades():
    assert spade_partition(2).state_count == 2520
    assert spade_partition(3).state_count == 369600


def test_rank_round_trip_against_all_assignments():
    shape = Shape.single_suit(1)
    seen = set()
    for perm in itertools.permutations(range(4)):
        words = (tuple(perm), (), (), ())
        from ddendgame.core import CanonicalDeal

        deal = CanonicalDeal(words, Seat.E, Trump.NT)
        r = rank(deal)
        assert unrank(shape, Seat.E, Trump.NT, r) == deal
        seen.add(r)
    assert seen == set(range(24))
    with pytest.raises(IndexError):
        unrank(shape, Seat.E, Trump.NT, 24)


def test_four_card_values_follow_the_top_spade(single_retro):
    db = single_retro.get(spade_partition(1))
    assert len(db.values) == 24
    for deal in iter_deals(db.partition):
        top = deal.words[0][0]
        assert db.value(deal) == (1 if top in (Seat.N, Seat.S) else 0)


def test_eight_card_first_deal_value(single_retro):
    deal = first_deal(Shape.single_suit(2), Seat.E, Trump.NT)
    assert single_retro.value(deal) == 2


def test_exhaustive_agreement_with_minimax_up_to_eight_cards(single_retro):
    for d in (1, 2):
        for leader in Seat:
            db = single_retro.get(spade_partition(d, leader))
            for i, deal in enumerate(iter_deals(db.partition)):
                assert db.values[i] == minimax_value(deal)


def test_twelve_card_samples_agree_with_minimax(single_retro):
    db = single_retro.get(spade_partition(3))
    assert len(db.values) == 369600
    assert db.values.max() <= 3
    rng = random.Random(1234)
    for r in rng.sample(range(369600), 1000):
        assert db.values[r] == minimax_value(unrank(db.partition.shape, Seat.E, Trump.NT, r))


def test_multi_suit_partitions_exhaustive_at_eight_cards():
    retro = RetroDatabase()
    shape = Shape.of([[1, 1, 0, 0], [2, 0, 0, 0], [0, 1, 0, 1], [1, 0, 1, 0]])
    for trump in (Trump.NT, Trump.S, Trump.C):
        db = retro.get(Partition(shape, Seat.E, trump))
        for i, deal in enumerate(iter_deals(db.partition)):
            assert db.values[i] == minimax_value(deal)


def test_missing_prior_names_the_partition():
    with pytest.raises(MissingPartitionError) as err:
        build_retro_db(2, Shape.single_suit(2), Seat.E, Trump.NT, {})
    assert err.value.partition.d == 1


def test_depth_mismatch_is_rejected():
    with pytest.raises(ValueError):
        build_retro_db(3, Shape.single_suit(2), Seat.E, Trump.NT, {})


def test_nibble_packing_low_nibble_first():
    vals = np.array([1, 2, 3, 4, 5], dtype=np.uint8)
    packed = pack_nibbles(vals)
    assert packed == bytes([0x21, 0x43, 0x05])
    assert np.array_equal(unpack_nibbles(packed, 5), vals)


def test_file_round_trip_and_corruption(single_retro, tmp_path):
    part = spade_partition(2)
    db = single_retro.get(part)
    data = db.to_bytes()
    assert data[:4] == b"RGDB"
    assert len(data) == 4 + 2 + 3 + 16 + 8 + 1260
    back = RetroDB.from_bytes(data)
    assert back.partition == part and np.array_equal(back.values, db.values)
    with pytest.raises(FormatError) as err:
        RetroDB.from_bytes(b"XXXX" + data[4:])
    assert err.value.offset == 0
    with pytest.raises(FormatError):
        RetroDB.from_bytes(data[:-1])
    path = single_retro.save(tmp_path, part)
    assert path == retro_path(tmp_path, part)
    assert path.parts[-4:] == ("8", "NT", "E", "2000200020002000.rdb")
    reloaded = RetroDatabase(tmp_path)
    assert part in reloaded
    assert np.array_equal(reloaded.get(part).values, db.values)
