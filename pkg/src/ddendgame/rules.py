"""Trick-play rules, the brute-force minimax oracle and the within-trick step.

Two evaluation routes live here.  :func:`minimax_value` is a plain
card-at-a-time alpha-beta search with no tables; it is the ground truth.
:class:`TrickEvaluator` resolves one trick for a whole batch of deals of a
partition at once and defers the rest of the game to a table of values for
the successor partitions.  Both the retrograde and the set-based builders
use the latter.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .core import (
    NEXT_SEAT,
    CanonicalDeal,
    Card,
    Partition,
    Seat,
    Shape,
    Trump,
    canonicalize,
    code_rank,
    encode_words,
    remove_fields,
)


@dataclass
class TrickState:
    deal: CanonicalDeal
    played: list[tuple[Seat, Card]] = field(default_factory=list)
    ns_tricks: int = 0

    @property
    def suit_led(self) -> int | None:
        return self.played[0][1].suit if self.played else None

    @property
    def to_move(self) -> Seat:
        seat = self.deal.leader
        for _ in self.played:
            seat = Seat(NEXT_SEAT[seat])
        return seat

    def hand(self, seat: Seat) -> list[Card]:
        gone = {c for p, c in self.played if p == seat}
        return [c for c in self.deal.hands()[seat] if c not in gone]


def legal_plays(state: TrickState) -> list[Card]:
    """Cards the player to move may play: follow suit when able."""
    if len(state.played) >= 4:
        raise ValueError("trick already complete")
    hand = state.hand(state.to_move)
    led = state.suit_led
    if led is None:
        return hand
    follow = [c for c in hand if c.suit == led]
    return follow or hand


def trick_winner(plays: Sequence[tuple[Seat, Card]], suit_led: int, trump: Trump) -> Seat:
    if len(plays) != 4:
        raise ValueError("a trick has four plays")
    ts = trump.suit
    trumps = [(c.rank, p) for p, c in plays if c.suit == ts]
    if trumps:
        return Seat(max(trumps)[1])
    return Seat(max((c.rank, p) for p, c in plays if c.suit == suit_led)[1])


def _successor(hands: list[list[Card]], winner: Seat, trump: Trump) -> CanonicalDeal:
    return canonicalize(hands, winner, trump)


def minimax_value(deal: CanonicalDeal) -> int:
    """Tricks North-South take from ``deal`` under perfect play."""
    if deal.d == 0:
        return 0
    hands = [sorted(h, key=lambda c: (-c.rank, c.suit)) for h in deal.hands()]
    return _play(hands, deal.leader, deal.trump, [], -1, deal.d + 1)


def _play(hands, seat, trump, trick, alpha, beta) -> int:
    # card-at-a-time alpha-beta; highest card first
    if len(trick) == 4:
        led = trick[0][1].suit
        winner = trick_winner(trick, led, trump)
        won = 1 if winner.is_ns else 0
        return won + minimax_value(_successor(hands, winner, trump))
    hand = hands[seat]
    if trick:
        led = trick[0][1].suit
        options = [c for c in hand if c.suit == led] or hand
    else:
        options = hand
    maximize = seat < 2
    best = -1 if maximize else 99
    nxt = Seat(NEXT_SEAT[seat])
    for card in options:
        hands[seat] = [c for c in hand if c != card]
        v = _play(hands, nxt, trump, trick + [(Seat(seat), card)], alpha, beta)
        hands[seat] = hand
        if maximize:
            if v > best:
                best = v
            alpha = max(alpha, v)
        else:
            if v < best:
                best = v
            beta = min(beta, v)
        if alpha >= beta:
            break
    return best


def _trick_sequences(deal: CanonicalDeal):
    hands = deal.hands()
    out = []

    def rec(seat, trick):
        if len(trick) == 4:
            out.append(list(trick))
            return
        hand = [c for c in hands[seat] if all(c != t for _, t in trick)]
        if trick:
            led = trick[0][1].suit
            options = [c for c in hand if c.suit == led] or hand
        else:
            options = hand
        for card in options:
            rec(Seat(NEXT_SEAT[seat]), trick + [(Seat(seat), card)])

    rec(deal.leader, [])
    return hands, out


def trick_successors(deal: CanonicalDeal) -> list[tuple[int, CanonicalDeal]]:
    """Distinct (NS won the trick, canonical successor) outcomes of one trick."""
    if deal.d < 1:
        raise ValueError("no trick left to play")
    hands, seqs = _trick_sequences(deal)
    seen = {}
    for trick in seqs:
        winner = trick_winner(trick, trick[0][1].suit, deal.trump)
        rest = [[c for c in hands[p] if all(c != t for _, t in trick)] for p in range(4)]
        key = (int(winner.is_ns), _successor(rest, winner, deal.trump))
        seen.setdefault(key, None)
    return list(seen)


def trick_minimax(deal: CanonicalDeal, leaf: Callable[[int, CanonicalDeal], int]) -> int:
    """Partnership minimax over one trick; ``leaf`` scores each outcome."""
    hands = deal.hands()
    cache: dict = {}

    def rec(seat, trick):
        if len(trick) == 4:
            winner = trick_winner(trick, trick[0][1].suit, deal.trump)
            rest = [[c for c in hands[p] if all(c != t for _, t in trick)] for p in range(4)]
            succ = _successor(rest, winner, deal.trump)
            key = (winner.is_ns, succ)
            if key not in cache:
                cache[key] = leaf(int(winner.is_ns), succ)
            return cache[key]
        hand = [c for c in hands[seat] if all(c != t for _, t in trick)]
        if trick:
            led = trick[0][1].suit
            options = [c for c in hand if c.suit == led] or hand
        else:
            options = hand
        vals = [rec(Seat(NEXT_SEAT[seat]), trick + [(Seat(seat), c)]) for c in options]
        return max(vals) if seat < 2 else min(vals)

    return rec(deal.leader, [])


# --- batched within-trick evaluation ----------------------------------------

PriorTable = Callable[[Partition], np.ndarray]


class MissingPartitionError(LookupError):
    def __init__(self, partition: Partition):
        super().__init__(f"missing prior partition {partition}")
        self.partition = partition


EMPTY_SHAPE = Shape.of([[0] * 4] * 4)


@dataclass(frozen=True)
class _Leaf:
    plays: tuple[tuple[int, int, int], ...]  # (seat, suit, j-th card held in suit)
    win_suit: int
    contenders: tuple[int, ...]  # indices into plays that can win
    succ_shape: Shape


class TrickEvaluator:
    """Resolves the next trick for batches of deals of one partition.

    Which cards are legal depends only on the shape, so the within-trick
    game tree is the same for every deal of the partition.  It is built once
    here, and deals are then evaluated many at a time.
    """

    def __init__(self, partition: Partition):
        if partition.d < 1:
            raise ValueError("partition has no tricks left")
        self.partition = partition
        shape = partition.shape
        order = [int(partition.leader)]
        for _ in range(3):
            order.append(NEXT_SEAT[order[-1]])
        self.order = tuple(order)
        ts = partition.trump.suit
        self.root = self._build(shape, ts, [])

    def _build(self, shape: Shape, ts, plays):
        step = len(plays)
        if step == 4:
            led = plays[0][1]
            suits = [s for _, s, _ in plays]
            win_suit = ts if ts is not None and ts in suits else led
            contenders = tuple(i for i, s in enumerate(suits) if s == win_suit)
            succ = shape.minus((p, s) for p, s, _ in plays)
            return _Leaf(tuple(plays), win_suit, contenders, succ)
        seat = self.order[step]
        row = shape.lengths[seat]
        if plays and row[plays[0][1]]:
            suits = [plays[0][1]]
        else:
            suits = [s for s in range(4) if row[s]]
        children = []
        for s in suits:
            for j in range(row[s]):
                children.append(self._build(shape, ts, plays + [(seat, s, j)]))
        return (seat, children)

    def successor_partitions(self) -> set[Partition]:
        """Partitions a trick from this partition can lead into."""
        out = set()
        for leaf in self._leaves(self.root):
            for i in leaf.contenders:
                out.add(Partition(leaf.succ_shape, Seat(leaf.plays[i][0]), self.partition.trump))
        return out

    def _leaves(self, node):
        if isinstance(node, _Leaf):
            yield node
        else:
            for child in node[1]:
                yield from self._leaves(child)

    def evaluate(self, words: Sequence[np.ndarray], prior: PriorTable) -> np.ndarray:
        """NS tricks under perfect play for each deal in the batch."""
        shape = self.partition.shape
        b = len(words[0])
        # column index (into the suit word) of each seat's j-th card per suit
        pos = {}
        for s in range(4):
            w = words[s]
            for p in range(4):
                h = shape.lengths[p][s]
                if h:
                    pos[p, s] = np.nonzero(w == p)[1].reshape(b, h)
        codes = [encode_words(words[s]) for s in range(4)]
        base = [code_rank(codes[s], words[s].shape[1]) for s in range(4)]
        ctx = (words, codes, pos, base, prior, b, {})
        return self._eval(self.root, ctx).astype(np.int8)

    def _eval(self, node, ctx) -> np.ndarray:
        if isinstance(node, _Leaf):
            return self._leaf(node, ctx)
        seat, children = node
        vals = [self._eval(c, ctx) for c in children]
        if len(vals) == 1:
            return vals[0]
        return np.maximum.reduce(vals) if seat < 2 else np.minimum.reduce(vals)

    def _leaf(self, leaf: _Leaf, ctx) -> np.ndarray:
        words, codes, pos, base, prior, b, tables = ctx
        cols = [pos[p, s][:, j] for p, s, j in leaf.plays]
        if len(leaf.contenders) == 1:
            winner = None
            only = leaf.plays[leaf.contenders[0]][0]
        else:
            top = np.minimum.reduce([cols[i] for i in leaf.contenders])
            winner = words[leaf.win_suit][np.arange(b), top]
        succ_shape = leaf.succ_shape
        radices = Partition(succ_shape, self.partition.leader, self.partition.trump).radices
        rank = np.zeros(b, dtype=np.int64)
        for s in range(4):
            played = [cols[i] for i, (_, ps, _) in enumerate(leaf.plays) if ps == s]
            if not played:
                r = base[s]
            else:
                n = words[s].shape[1]
                r = code_rank(remove_fields(codes[s], n, played), n - len(played))
            if radices[s] != 1:
                r = r * radices[s]
            rank += r
        trump = self.partition.trump
        if winner is None:
            part = Partition(succ_shape, Seat(only), trump)
            return int(only < 2) + _table(tables, prior, part)[rank]
        out = (winner < 2).astype(np.int64)
        for i in leaf.contenders:
            seat = leaf.plays[i][0]
            sel = winner == seat
            if sel.any():
                part = Partition(succ_shape, Seat(seat), trump)
                out[sel] += _table(tables, prior, part)[rank[sel]]
        return out


def _table(cache: dict, prior: PriorTable, partition: Partition) -> np.ndarray:
    table = cache.get(partition)
    if table is None:
        table = cache[partition] = _prior_values(prior, partition)
    return table


def _prior_values(prior: PriorTable, partition: Partition) -> np.ndarray:
    if partition.d == 0:
        return np.zeros(1, dtype=np.int8)
    table = prior(partition)
    if table is None:
        raise MissingPartitionError(partition)
    return table
