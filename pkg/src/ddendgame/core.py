"""Cards, seats, shapes and canonical relative-rank deals.

A deal is stored per suit as a *holder word*: a tuple of seat digits read
from the highest in-play card of the suit down to the lowest.  Seat digits
follow the canonical comparison order N < S < E < W, so comparing words
lexicographically (spades first, then hearts, diamonds, clubs) gives the
canonical ordering that iteration and ranking rely on.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from enum import IntEnum
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

RANK_SYMBOLS = "23456789TJQKA"
SUIT_SYMBOLS = "SHDC"
SUIT_GLYPHS = "♠♥♦♣"


class DealError(ValueError):
    """Raised for illegal or malformed deals."""


class ParseError(DealError):
    def __init__(self, message: str, column: int):
        super().__init__(f"{message} (column {column})")
        self.column = column


class Seat(IntEnum):
    """Seats, numbered in canonical comparison order."""

    N = 0
    S = 1
    E = 2
    W = 3

    @property
    def is_ns(self) -> bool:
        return self < 2

    @property
    def next(self) -> "Seat":
        return Seat(NEXT_SEAT[self])

    @property
    def file_code(self) -> int:
        return FILE_SEAT_CODE[self]

    @classmethod
    def from_file_code(cls, code: int) -> "Seat":
        return cls(PLAY_ORDER[code])


# clockwise play order N -> E -> S -> W, as canonical digits
PLAY_ORDER = (0, 2, 1, 3)
NEXT_SEAT = (2, 3, 1, 0)
# on-disk seat codes are in play order: 0=N, 1=E, 2=S, 3=W
FILE_SEAT_CODE = (0, 2, 1, 3)


class Suit(IntEnum):
    S = 0
    H = 1
    D = 2
    C = 3

    @property
    def glyph(self) -> str:
        return SUIT_GLYPHS[self]


class Trump(IntEnum):
    NT = 0
    S = 1
    H = 2
    D = 3
    C = 4

    @property
    def suit(self) -> int | None:
        """Suit index of the trump suit, None at no-trump."""
        return None if self == Trump.NT else int(self) - 1

    @classmethod
    def parse(cls, text: str) -> "Trump":
        try:
            return cls[text.upper()]
        except KeyError:
            raise DealError(f"unknown trump {text!r}") from None


class Card(NamedTuple):
    suit: int
    rank: int

    def __str__(self) -> str:
        return SUIT_GLYPHS[self.suit] + RANK_SYMBOLS[self.rank - 2]


@dataclass(frozen=True)
class Shape:
    """Per-seat per-suit hand lengths, ``lengths[seat][suit]``."""

    lengths: tuple[tuple[int, int, int, int], ...]

    def __post_init__(self):
        if len(self.lengths) != 4 or any(len(r) != 4 for r in self.lengths):
            raise DealError("shape must be 4x4")
        rows = {sum(r) for r in self.lengths}
        if len(rows) != 1:
            raise DealError(f"unequal hand sizes in shape {self.lengths}")
        if any(n < 0 for r in self.lengths for n in r):
            raise DealError("negative length in shape")
        if any(n > 13 for n in self.suit_sizes):
            raise DealError("more than 13 cards in a suit")

    @classmethod
    def of(cls, rows: Sequence[Sequence[int]]) -> "Shape":
        return cls(tuple(tuple(int(n) for n in r) for r in rows))

    @classmethod
    def single_suit(cls, per_seat: int, suit: int = Suit.S) -> "Shape":
        rows = [[0, 0, 0, 0] for _ in range(4)]
        for r in rows:
            r[suit] = per_seat
        return cls.of(rows)

    @property
    def d(self) -> int:
        return sum(self.lengths[0])

    @property
    def suit_sizes(self) -> tuple[int, int, int, int]:
        return tuple(sum(self.lengths[p][s] for p in range(4)) for s in range(4))

    def suit_counts(self, suit: int) -> tuple[int, int, int, int]:
        """Per-seat holdings of one suit, in seat-digit order."""
        return tuple(self.lengths[p][suit] for p in range(4))

    def minus(self, plays: Iterable[tuple[int, int]]) -> "Shape":
        rows = [list(r) for r in self.lengths]
        for seat, suit in plays:
            rows[seat][suit] -= 1
        return Shape.of(rows)

    @property
    def shape_id(self) -> str:
        """Hex digits, seats in N,E,S,W order, suits in S,H,D,C order."""
        return "".join(f"{self.lengths[p][s]:x}" for p in PLAY_ORDER for s in range(4))

    @classmethod
    def from_id(cls, shape_id: str) -> "Shape":
        if len(shape_id) != 16:
            raise DealError(f"bad shape id {shape_id!r}")
        digits = [int(c, 16) for c in shape_id]
        rows = [[0] * 4 for _ in range(4)]
        for i, seat in enumerate(PLAY_ORDER):
            rows[seat] = digits[4 * i : 4 * i + 4]
        return cls.of(rows)

    def file_bytes(self) -> bytes:
        return bytes(self.lengths[p][s] for p in PLAY_ORDER for s in range(4))

    @classmethod
    def from_file_bytes(cls, data: bytes) -> "Shape":
        return cls.from_id("".join(f"{b:x}" for b in data))

    def __str__(self) -> str:
        return " ".join(
            f"{Seat(p).name}:" + "".join(str(n) for n in self.lengths[p]) for p in PLAY_ORDER
        )


@dataclass(frozen=True)
class Partition:
    """Database partition key: shape plus leader and trump."""

    shape: Shape
    leader: Seat
    trump: Trump

    @property
    def d(self) -> int:
        return self.shape.d

    @property
    def suit_word_counts(self) -> tuple[int, ...]:
        return tuple(multinomial(self.shape.suit_counts(s)) for s in range(4))

    @property
    def radices(self) -> tuple[int, ...]:
        """Mixed-radix place values, spades most significant."""
        counts = self.suit_word_counts
        return tuple(math.prod(counts[s + 1 :]) for s in range(4))

    @property
    def state_count(self) -> int:
        return math.prod(self.suit_word_counts)

    @property
    def card_order(self) -> tuple[tuple[int, int], ...]:
        return card_order(self.shape.suit_sizes)

    def __str__(self) -> str:
        return f"d={self.d} [{self.shape}] leader={self.leader.name} trump={self.trump.name}"


@dataclass(frozen=True)
class CanonicalDeal:
    """Relative-rank deal: one holder word per suit, highest card first."""

    words: tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...], tuple[int, ...]]
    leader: Seat
    trump: Trump

    def __post_init__(self):
        if len(self.words) != 4:
            raise DealError("a deal has four suit words")
        sizes = [0, 0, 0, 0]
        for w in self.words:
            for p in w:
                sizes[p] += 1
        if len(set(sizes)) != 1:
            raise DealError(f"unequal hand sizes {sizes}")

    @property
    def d(self) -> int:
        return sum(len(w) for w in self.words) // 4

    @property
    def shape(self) -> Shape:
        rows = [[0] * 4 for _ in range(4)]
        for s, w in enumerate(self.words):
            for p in w:
                rows[p][s] += 1
        return Shape.of(rows)

    @property
    def partition(self) -> Partition:
        return Partition(self.shape, self.leader, self.trump)

    def holder(self, card: Card) -> Seat:
        w = self.words[card.suit]
        return Seat(w[len(w) + 1 - card.rank])

    def hands(self) -> list[list[Card]]:
        """Cards per seat digit, each hand sorted high to low by suit."""
        hands: list[list[Card]] = [[], [], [], []]
        for s, w in enumerate(self.words):
            n = len(w)
            for i, p in enumerate(w):
                hands[p].append(Card(s, n + 1 - i))
        return hands

    def __str__(self) -> str:
        return format_deal(self)


def multinomial(counts: Sequence[int]) -> int:
    total = 0
    out = 1
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def card_order(suit_sizes: Sequence[int]) -> tuple[tuple[int, int], ...]:
    """Global card order as (suit, word index) pairs.

    High relative ranks first regardless of suit; equal ranks are broken by
    the suit order spades, hearts, diamonds, clubs.
    """
    cards = [(s, i) for s in range(4) for i in range(suit_sizes[s])]
    cards.sort(key=lambda c: (-(suit_sizes[c[0]] + 1 - c[1]), c[0]))
    return tuple(cards)


# --- deal construction -------------------------------------------------------


def canonicalize(
    hands: Mapping[Seat, Iterable[Card]] | Sequence[Iterable[Card]],
    leader: Seat,
    trump: Trump,
) -> CanonicalDeal:
    """Map an absolute deal onto relative ranks.

    ``hands`` maps seats (or seat digits) to cards with absolute ranks 2..14.
    Each suit's in-play cards are renumbered order-preservingly onto
    2..n+1; holders, leader and trump are unchanged.
    """
    if isinstance(hands, Mapping):
        items = [(Seat(p), list(c)) for p, c in hands.items()]
    else:
        items = [(Seat(p), list(c)) for p, c in enumerate(hands)]
    sizes = {len(c) for _, c in items}
    if len(items) != 4 or len(sizes) != 1:
        raise DealError(f"malformed deal: hand sizes {[len(c) for _, c in items]}")
    per_suit: list[list[tuple[int, int]]] = [[], [], [], []]
    seen = set()
    for seat, cards in items:
        for card in cards:
            if card in seen:
                raise DealError(f"card {card} dealt twice")
            if not 2 <= card.rank <= 14:
                raise DealError(f"bad rank in {card!r}")
            seen.add(card)
            per_suit[card.suit].append((card.rank, int(seat)))
    words = tuple(tuple(p for _, p in sorted(cs, reverse=True)) for cs in per_suit)
    return CanonicalDeal(words, Seat(leader), Trump(trump))


def from_hands(hands: Sequence[Iterable[Card]], leader: Seat, trump: Trump) -> CanonicalDeal:
    """Build a deal from per-seat hands; alias of :func:`canonicalize`."""
    return canonicalize(hands, leader, trump)


def enumerate_shapes(cards: int) -> list[Shape]:
    """All hand-length matrices for ``cards`` cards in play."""
    if cards % 4 or not 4 <= cards <= 52:
        raise DealError(f"cards must be a multiple of 4 in 4..52, got {cards}")
    d = cards // 4
    rows = [r for r in itertools.product(range(d, -1, -1), repeat=4) if sum(r) == d]
    rows.reverse()
    out = []
    for combo in itertools.product(rows, repeat=4):
        if all(sum(r[s] for r in combo) <= 13 for s in range(4)):
            out.append(Shape(combo))
    return out


def single_suit_shapes(cards: int, suit: int = Suit.S) -> list[Shape]:
    return [Shape.single_suit(cards // 4, suit)]


def first_word(counts: Sequence[int]) -> tuple[int, ...]:
    return tuple(p for p in range(4) for _ in range(counts[p]))


def first_deal(shape: Shape, leader: Seat, trump: Trump) -> CanonicalDeal:
    """Lexicographically least deal of a shape."""
    words = tuple(first_word(shape.suit_counts(s)) for s in range(4))
    return CanonicalDeal(words, Seat(leader), Trump(trump))


def next_word(word: Sequence[int], counts: Sequence[int], fixed: int) -> tuple[int, ...] | None:
    """Successor of the top ``fixed`` digits of ``word``; lower digits reset.

    Returns the first word (in lexicographic order) whose top-``fixed``
    prefix follows the current one, or None if the prefix is maximal.
    """
    if fixed <= 0:
        return None
    prefix = list(word[:fixed])
    used = [0, 0, 0, 0]
    for p in prefix:
        used[p] += 1
    for i in range(fixed - 1, -1, -1):
        used[prefix[i]] -= 1
        for t in range(prefix[i] + 1, 4):
            if used[t] < counts[t]:
                head = prefix[:i] + [t]
                rest = [counts[p] - used[p] - (p == t) for p in range(4)]
                return tuple(head) + first_word(rest)
    return None


def next_suit_permutation(deal: CanonicalDeal, suit: int, fixed_high: int) -> CanonicalDeal | None:
    counts = deal.shape.suit_counts(suit)
    w = next_word(deal.words[suit], counts, fixed_high)
    if w is None:
        return None
    words = list(deal.words)
    words[suit] = w
    return CanonicalDeal(tuple(words), deal.leader, deal.trump)


def iter_deals(partition: Partition) -> Iterator[CanonicalDeal]:
    """Every deal of a partition in canonical order (slow, for checking)."""
    per_suit = [list(iter_words(partition.shape.suit_counts(s))) for s in range(4)]
    for combo in itertools.product(*per_suit):
        yield CanonicalDeal(tuple(combo), partition.leader, partition.trump)


def iter_words(counts: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Multiset permutations of seat digits in lexicographic order."""
    n = sum(counts)
    if n == 0:
        yield ()
        return
    counts = list(counts)
    for p in range(4):
        if counts[p]:
            counts[p] -= 1
            for tail in iter_words(counts):
                yield (p,) + tail
            counts[p] += 1


# --- vectorised word tables and ranking --------------------------------------


@lru_cache(maxsize=None)
def suit_words(counts: tuple[int, int, int, int]) -> np.ndarray:
    """All holder words for per-seat ``counts``, in lexicographic order.

    Returns a read-only ``(M, n)`` uint8 array.
    """
    n = sum(counts)
    if n == 0:
        out = np.zeros((1, 0), dtype=np.uint8)
    else:
        blocks = []
        for p in range(4):
            if counts[p]:
                rest = list(counts)
                rest[p] -= 1
                tail = suit_words(tuple(rest))
                head = np.full((len(tail), 1), p, dtype=np.uint8)
                blocks.append(np.hstack([head, tail]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


_STRIDE = np.array([14**3, 14**2, 14, 1], dtype=np.int64)


def _rank_tables() -> tuple[np.ndarray, np.ndarray]:
    # PREFIX[code, digit]: number of words that place a smaller digit first,
    # given remaining per-seat counts encoded base-14 in ``code``
    multi = np.zeros(14**4, dtype=np.int64)
    prefix = np.zeros((14**4, 4), dtype=np.int64)
    for idx in itertools.product(range(14), repeat=4):
        if sum(idx) <= 13:
            multi[int(np.dot(idx, _STRIDE))] = multinomial(idx)
    for idx in itertools.product(range(14), repeat=4):
        if sum(idx) <= 13:
            code = int(np.dot(idx, _STRIDE))
            acc = 0
            for t in range(4):
                prefix[code, t] = acc
                if idx[t]:
                    acc += multi[code - _STRIDE[t]]
    return multi, prefix


_MULTI, _PREFIX = _rank_tables()


def word_rank(words: np.ndarray, counts: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
    """Lexicographic rank of each row of ``words`` among words with ``counts``.

    ``counts`` may be one count vector for all rows, a ``(B, 4)`` array, or
    None to take each row's own digit counts.
    """
    words = np.asarray(words)
    b, n = words.shape
    rank = np.zeros(b, dtype=np.int64)
    if n <= 1:
        return rank
    if counts is None:
        counts = np.stack([(words == p).sum(axis=1) for p in range(4)], axis=1)
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim == 1:
        code = np.full(b, int(counts @ _STRIDE), dtype=np.int64)
    else:
        code = counts @ _STRIDE
    for i in range(n - 1):
        digit = words[:, i]
        rank += _PREFIX[code, digit]
        code -= _STRIDE[digit]
    return rank


# Words are also handled packed into integers, two bits per card with the
# highest card in the most significant position.
CODE_TABLE_MAX = 10


def encode_words(words: np.ndarray) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    code = np.zeros(len(words), dtype=np.int64)
    for i in range(words.shape[1]):
        code = (code << 2) | words[:, i]
    return code


def decode_words(codes: np.ndarray, n: int) -> np.ndarray:
    codes = np.asarray(codes, dtype=np.int64)
    shifts = 2 * np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 3).astype(np.uint8)


@lru_cache(maxsize=None)
def _code_rank_table(n: int) -> np.ndarray:
    words = decode_words(np.arange(4**n, dtype=np.int64), n)
    return word_rank(words).astype(np.int32)


def code_rank(codes: np.ndarray, n: int) -> np.ndarray:
    """Rank of packed words of length ``n`` among words with the same counts."""
    if n <= 1:
        return np.zeros(len(codes), dtype=np.int64)
    if n <= CODE_TABLE_MAX:
        return _code_rank_table(n)[codes]
    return word_rank(decode_words(codes, n))


def remove_fields(codes: np.ndarray, n: int, cols: Sequence[np.ndarray]) -> np.ndarray:
    """Drop the cards at word positions ``cols`` (per row) from packed words."""
    fields = [n - 1 - c for c in cols]
    if len(fields) > 1:
        fields = np.sort(np.stack(fields), axis=0)
    out = codes
    for k, f in enumerate(fields):
        shift = 2 * (f - k)
        low = out & ((np.int64(1) << shift) - 1)
        out = ((out >> (shift + 2)) << shift) | low
    return out


def word_rank_scalar(word: Sequence[int], counts: Sequence[int]) -> int:
    rem = list(counts)
    rank = 0
    for digit in word:
        for t in range(digit):
            if rem[t]:
                rem[t] -= 1
                rank += multinomial(rem)
                rem[t] += 1
        rem[digit] -= 1
    return rank


def word_unrank_scalar(index: int, counts: Sequence[int]) -> tuple[int, ...]:
    rem = list(counts)
    out = []
    for _ in range(sum(counts)):
        for t in range(4):
            if rem[t]:
                rem[t] -= 1
                block = multinomial(rem)
                if index < block:
                    out.append(t)
                    break
                index -= block
                rem[t] += 1
    return tuple(out)


def deal_words_batch(partition: Partition, ranks: np.ndarray) -> list[np.ndarray]:
    """Unrank many states of a partition at once into per-suit word arrays."""
    ranks = np.asarray(ranks, dtype=np.int64)
    counts = partition.suit_word_counts
    radices = partition.radices
    out = []
    for s in range(4):
        table = suit_words(partition.shape.suit_counts(s))
        out.append(table[(ranks // radices[s]) % counts[s]])
    return out


def deal_rank_batch(partition: Partition, words: Sequence[np.ndarray]) -> np.ndarray:
    radices = partition.radices
    total = None
    for s in range(4):
        r = word_rank(words[s], partition.shape.suit_counts(s)) * radices[s]
        total = r if total is None else total + r
    return total


def batch_to_deals(partition: Partition, words: Sequence[np.ndarray]) -> list[CanonicalDeal]:
    rows = zip(*(w.tolist() for w in words))
    return [
        CanonicalDeal(tuple(tuple(w) for w in combo), partition.leader, partition.trump)
        for combo in rows
    ]


def deals_to_batch(deals: Sequence[CanonicalDeal]) -> list[np.ndarray]:
    out = []
    for s in range(4):
        n = len(deals[0].words[s])
        out.append(np.array([d.words[s] for d in deals], dtype=np.uint8).reshape(len(deals), n))
    return out


# --- text grammar ------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


def parse_deal(text: str, leader: Seat | str | None = None, trump: Trump | str | None = None) -> CanonicalDeal:
    """Parse ``N:<s>.<h>.<d>.<c> E:... S:... W:... leader=E trump=NT``.

    Ranks may be absolute (any of 23456789TJQKA); they are compressed onto
    relative ranks.  ``leader``/``trump`` arguments override the text.
    """
    hands: dict[Seat, list[Card]] = {}
    for m in _TOKEN.finditer(text):
        tok, col = m.group(), m.start() + 1
        key, sep, val = tok.partition(":")
        if sep and key.upper() in ("N", "E", "S", "W"):
            seat = Seat[key.upper()]
            if seat in hands:
                raise ParseError(f"seat {seat.name} given twice", col)
            fields = val.split(".")
            if len(fields) != 4:
                raise ParseError(f"expected 4 suit fields for {seat.name}", col)
            cards = []
            offset = col + len(key) + 1
            for s, field in enumerate(fields):
                if field not in ("-", ""):
                    for j, ch in enumerate(field):
                        r = RANK_SYMBOLS.find(ch.upper())
                        if r < 0:
                            raise ParseError(f"bad rank symbol {ch!r}", offset + j)
                        cards.append(Card(s, r + 2))
                offset += len(field) + 1
            hands[seat] = cards
            continue
        key, sep, val = tok.partition("=")
        if sep and key.lower() == "leader" and leader is None:
            if val.upper() not in ("N", "E", "S", "W"):
                raise ParseError(f"bad leader {val!r}", col)
            leader = Seat[val.upper()]
        elif sep and key.lower() == "trump" and trump is None:
            if val.upper() not in Trump.__members__:
                raise ParseError(f"bad trump {val!r}", col)
            trump = Trump[val.upper()]
        elif not sep or key.lower() not in ("leader", "trump"):
            raise ParseError(f"unexpected token {tok!r}", col)
    if len(hands) != 4:
        raise ParseError("deal needs all four seats", len(text) + 1)
    if leader is None or trump is None:
        raise ParseError("leader and trump are required", len(text) + 1)
    leader = Seat[leader.upper()] if isinstance(leader, str) else Seat(leader)
    trump = Trump.parse(trump) if isinstance(trump, str) else Trump(trump)
    return canonicalize(hands, leader, trump)


def format_deal(deal: CanonicalDeal, with_context: bool = True) -> str:
    hands = deal.hands()
    parts = []
    for p in PLAY_ORDER:
        fields = []
        for s in range(4):
            ranks = [RANK_SYMBOLS[c.rank - 2] for c in hands[p] if c.suit == s]
            fields.append("".join(ranks) or "-")
        parts.append(f"{Seat(p).name}:" + ".".join(fields))
    if with_context:
        parts.append(f"leader={deal.leader.name}")
        parts.append(f"trump={deal.trump.name}")
    return " ".join(parts)
