from __future__ import annotations

import random

import numpy as np
import pytest

from ddendgame.core import (
    Card,
    Partition,
    Seat,
    Shape,
    Trump,
    canonicalize,
    deal_words_batch,
    enumerate_shapes,
    iter_deals,
    parse_deal,
)
from ddendgame.retro import RetroDatabase, unrank
from ddendgame.rules import (
    MissingPartitionError,
    TrickEvaluator,
    TrickState,
    legal_plays,
    minimax_value,
    trick_minimax,
    trick_successors,
    trick_winner,
)


def test_follow_suit_when_able():
    deal = parse_deal("N:98... E:54... S:76... W:32... leader=N trump=NT")
    state = TrickState(deal, [(Seat.N, Card(0, 9))])
    assert legal_plays(state) == [Card(0, 5), Card(0, 4)]


def test_void_player_may_play_anything():
    deal = parse_deal("N:5.-.-.2 E:-.K.-.3 S:4.-.-.4 W:3.2.-.- leader=N trump=NT")
    state = TrickState(deal, [(Seat.N, Card(0, 4))])
    assert state.to_move == Seat.E
    assert set(legal_plays(state)) == set(deal.hands()[Seat.E])


def test_leader_may_lead_any_card():
    deal = parse_deal("N:5.-.-.2 E:-.K.-.3 S:4.-.-.4 W:3.2.-.- leader=N trump=NT")
    assert set(legal_plays(TrickState(deal))) == set(deal.hands()[Seat.N])


def test_trick_winner_rules():
    plays = [(Seat.N, Card(2, 5)), (Seat.E, Card(2, 13)), (Seat.S, Card(3, 14)), (Seat.W, Card(2, 2))]
    assert trick_winner(plays, 2, Trump.NT) == Seat.E
    assert trick_winner(plays, 2, Trump.C) == Seat.S
    with pytest.raises(ValueError):
        trick_winner(plays[:3], 2, Trump.NT)


@pytest.mark.parametrize(
    "text,value",
    [
        ("N:98... E:32... S:76... W:54... leader=N trump=NT", 2),
        ("N:96... W:87... E:54... S:32... leader=E trump=NT", 1),
        ("N:5... W:2... E:3... S:4... leader=E trump=NT", 1),
        ("N:98... E:54... S:76... W:32... leader=E trump=NT", 2),
    ],
)
def test_minimax_known_values(text, value):
    assert minimax_value(parse_deal(text)) == value


def test_single_trick_ties_to_top_card():
    deal = parse_deal("N:A... E:2... S:3... W:4... leader=E trump=NT")
    assert minimax_value(deal) == 1


def test_successors_of_last_trick_are_empty():
    deal = parse_deal("N:A... E:2... S:3... W:4... leader=E trump=NT")
    outs = trick_successors(deal)
    assert all(s.d == 0 for _, s in outs)


def test_two_trick_single_suit_outcomes_bounded():
    deal = parse_deal("N:98... E:54... S:76... W:32... leader=E trump=NT")
    outs = trick_successors(deal)
    assert 1 <= len(outs) <= 16
    assert len(set(outs)) == len(outs)


def _split_value(deal):
    if deal.d == 0:
        return 0
    return trick_minimax(deal, lambda won, succ: won + _split_value(succ))


def single_suit_deals(d, leaders, trumps):
    for leader in leaders:
        for trump in trumps:
            yield from iter_deals(Partition(Shape.single_suit(d), leader, trump))


def test_trick_step_equals_full_search_single_suit_exhaustive():
    for deal in single_suit_deals(1, Seat, Trump):
        assert _split_value(deal) == minimax_value(deal)
    for deal in single_suit_deals(2, Seat, (Trump.NT,)):
        assert _split_value(deal) == minimax_value(deal)


def test_trick_step_equals_full_search_single_suit_sampled_depth3():
    part = Partition(Shape.single_suit(3), Seat.E, Trump.NT)
    rng = random.Random(7)
    for r in rng.sample(range(part.state_count), 150):
        deal = unrank(part.shape, part.leader, part.trump, r)
        assert _split_value(deal) == minimax_value(deal)


def test_batched_trick_step_matches_full_search_on_random_multi_suit_deals():
    rng = random.Random(11)
    shapes = {d: enumerate_shapes(4 * d) for d in (1, 2)}
    retro = RetroDatabase()
    for _ in range(1000):
        d = rng.choice((1, 1, 2, 2, 2))
        part = Partition(rng.choice(shapes[d]), Seat(rng.randrange(4)), Trump(rng.randrange(5)))
        deal = unrank(part.shape, part.leader, part.trump, rng.randrange(part.state_count))
        assert retro.value(deal) == minimax_value(deal)


def test_batched_trick_step_depth3_multi_suit_samples():
    rng = random.Random(5)
    shape = Shape.of([[2, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [1, 0, 1, 1]])
    retro = RetroDatabase()
    for trump in (Trump.NT, Trump.H):
        part = Partition(shape, Seat.S, trump)
        table = retro.get(part).values
        for r in rng.sample(range(part.state_count), 60):
            assert table[r] == minimax_value(unrank(shape, part.leader, trump, r))


def test_values_stay_in_range_and_sum_to_d():
    rng = random.Random(2)
    for _ in range(120):
        shape = rng.choice(enumerate_shapes(8))
        part = Partition(shape, Seat(rng.randrange(4)), Trump(rng.randrange(5)))
        deal = unrank(shape, part.leader, part.trump, rng.randrange(part.state_count))
        ns = minimax_value(deal)
        assert 0 <= ns <= deal.d
        assert ns + _ew_tricks(deal) == deal.d


def _ew_tricks(deal):
    # plain search with EW maximizing their own tricks
    hands = [list(h) for h in deal.hands()]

    def play(seat, trick, left):
        if len(trick) == 4:
            led = trick[0][1].suit
            w = trick_winner(trick, led, deal.trump)
            won = 0 if w.is_ns else 1
            if left == 1:
                return won
            return won + play(w, [], left - 1)
        hand = hands[seat]
        opts = [c for c in hand if trick and c.suit == trick[0][1].suit] or list(hand)
        vals = []
        for c in opts:
            hand.remove(c)
            vals.append(play(Seat(seat).next, trick + [(Seat(seat), c)], left))
            hand.append(c)
        return min(vals) if seat < 2 else max(vals)

    return play(deal.leader, [], deal.d)


def test_raising_a_north_south_card_never_hurts():
    retro = RetroDatabase()
    for d in (1, 2):
        for leader in Seat:
            for deal in iter_deals(Partition(Shape.single_suit(d), leader, Trump.NT)):
                base = retro.value(deal)
                hands = deal.hands()
                in_play = {c.rank for h in hands for c in h}
                for p in (0, 1):
                    for card in hands[p]:
                        for higher in range(card.rank + 1, 15):
                            if higher in in_play:
                                continue
                            new = [list(h) for h in hands]
                            new[p] = [Card(0, higher) if c == card else c for c in new[p]]
                            assert retro.value(canonicalize(new, leader, Trump.NT)) >= base


def test_evaluator_requires_prior_tables():
    part = Partition(Shape.single_suit(2), Seat.E, Trump.NT)
    ev = TrickEvaluator(part)
    words = deal_words_batch(part, np.arange(4))
    with pytest.raises(MissingPartitionError):
        ev.evaluate(words, lambda p: None)
    succ = ev.successor_partitions()
    assert {p.leader for p in succ} == set(Seat)
    assert all(p.d == 1 for p in succ)
