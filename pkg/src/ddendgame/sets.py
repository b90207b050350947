"""Consistent sets of deals in the four-bit holder-mask representation.

A :class:`SetEntry` constrains, per suit, the top ranked cards with a 4-bit
holder mask each (bit 0 = N, 1 = S, 2 = E, 3 = W) and leaves the lowest
``xcounts[suit]`` cards free.  Its members are all deals of the partition
whose ranked cards sit with an allowed holder.  Because the shape fixes each
seat's length in every suit, the member set is a product over suits.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .core import (
    RANK_SYMBOLS,
    SUIT_GLYPHS,
    CanonicalDeal,
    Partition,
    Seat,
    batch_to_deals,
    multinomial,
    suit_words,
    word_rank,
)

ALL = 0xF
SEAT_LETTERS = "NSEW"


class SetError(ValueError):
    pass


def mask_of(*seats: int) -> int:
    m = 0
    for p in seats:
        m |= 1 << int(p)
    return m


def mask_bits(mask: int) -> str:
    """Mask as a bit string in N,S,E,W order, e.g. ``1100`` for N or S."""
    return "".join("1" if mask >> p & 1 else "0" for p in range(4))


def mask_seats(mask: int) -> str:
    return "".join(SEAT_LETTERS[p] for p in range(4) if mask >> p & 1)


@dataclass(frozen=True)
class SetEntry:
    partition: Partition
    masks: tuple[tuple[int, ...], ...]  # per suit, ranked cards high to low
    xcounts: tuple[int, int, int, int]
    value: int | None = None

    def __post_init__(self):
        sizes = self.partition.shape.suit_sizes
        for s in range(4):
            if len(self.masks[s]) + self.xcounts[s] != sizes[s]:
                raise SetError(f"suit {s}: {len(self.masks[s])} ranked + {self.xcounts[s]} x != {sizes[s]}")
            if any(not 0 < m <= ALL for m in self.masks[s]):
                raise SetError("holder masks need at least one bit")

    def full_masks(self, suit: int) -> tuple[int, ...]:
        return self.masks[suit] + (ALL,) * self.xcounts[suit]

    @property
    def ranked_counts(self) -> tuple[int, ...]:
        return tuple(len(m) for m in self.masks)

    @property
    def total_x(self) -> int:
        return sum(self.xcounts)

    def with_value(self, value: int | None) -> "SetEntry":
        return replace(self, value=value)

    def __str__(self) -> str:
        return format_entry(self)


def from_full_masks(partition: Partition, full: Sequence[Sequence[int]], value=None) -> SetEntry:
    """Build an entry from full-length masks; trailing free cards become x."""
    masks, xs = [], []
    for s in range(4):
        f = list(full[s])
        x = 0
        while f and f[-1] == ALL:
            f.pop()
            x += 1
        masks.append(tuple(f))
        xs.append(x)
    return SetEntry(partition, tuple(masks), tuple(xs), value)


# --- per-suit member words ---------------------------------------------------


def _prefixes(counts: tuple[int, ...], masks: tuple[int, ...]) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Feasible holder assignments for the ranked cards, with leftover counts."""
    out = []

    def rec(i, rem, acc):
        if i == len(masks):
            out.append((tuple(acc), tuple(rem)))
            return
        m = masks[i]
        for p in range(4):
            if m >> p & 1 and rem[p]:
                rem[p] -= 1
                acc.append(p)
                rec(i + 1, rem, acc)
                acc.pop()
                rem[p] += 1

    rec(0, list(counts), [])
    return out


@lru_cache(maxsize=65536)
def suit_member_words(counts: tuple[int, ...], masks: tuple[int, ...]) -> np.ndarray:
    """All words of one suit satisfying the ranked masks, lexicographic order."""
    n = sum(counts)
    blocks = []
    for prefix, rem in _prefixes(counts, masks):
        tail = suit_words(rem)
        head = np.broadcast_to(np.array(prefix, dtype=np.uint8), (len(tail), len(prefix)))
        blocks.append(np.hstack([head, tail]))
    if not blocks:
        out = np.zeros((0, n), dtype=np.uint8)
    else:
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=65536)
def suit_member_count(counts: tuple[int, ...], masks: tuple[int, ...]) -> int:
    return sum(multinomial(rem) for _, rem in _prefixes(counts, masks))


@lru_cache(maxsize=65536)
def suit_tight_masks(counts: tuple[int, ...], masks: tuple[int, ...]) -> tuple[int, ...]:
    """Holders each card actually takes over the suit's member words."""
    n = sum(counts)
    tight = [0] * n
    k = len(masks)
    for prefix, rem in _prefixes(counts, masks):
        for i, p in enumerate(prefix):
            tight[i] |= 1 << p
        free = mask_of(*(p for p in range(4) if rem[p]))
        for i in range(k, n):
            tight[i] |= free
    return tuple(tight)


def _suit_key(entry: SetEntry, s: int):
    return entry.partition.shape.suit_counts(s), entry.masks[s]


# --- operations ----------------------------------------------------------------


def member(entry: SetEntry, deal: CanonicalDeal) -> bool:
    if deal.partition != entry.partition:
        return False
    for s in range(4):
        word = deal.words[s]
        for i, m in enumerate(entry.masks[s]):
            if not m >> word[i] & 1:
                return False
    return True


def member_count(entry: SetEntry) -> int:
    total = 1
    for s in range(4):
        total *= suit_member_count(*_suit_key(entry, s))
    return total


def member_words(entry: SetEntry) -> list[np.ndarray]:
    """Per-suit arrays of allowed words; members are their cross product."""
    return [suit_member_words(*_suit_key(entry, s)) for s in range(4)]


def member_ranks(entry: SetEntry) -> np.ndarray:
    """Canonical ranks of every member, ascending."""
    part = entry.partition
    total = np.zeros(1, dtype=np.int64)
    for s, radix in enumerate(part.radices):
        words = suit_member_words(*_suit_key(entry, s))
        r = word_rank(words, part.shape.suit_counts(s)) * radix
        total = (total[:, None] + r[None, :]).ravel()
    return total


def enumerate_members(entry: SetEntry) -> list[CanonicalDeal]:
    per_suit = member_words(entry)
    sizes = [len(w) for w in per_suit]
    total = int(np.prod(sizes))
    if total == 0:
        return []
    idx = np.indices(sizes).reshape(4, -1)
    words = [per_suit[s][idx[s]] for s in range(4)]
    return batch_to_deals(entry.partition, words)


def iter_member_batches(entry: SetEntry, chunk: int = 1 << 16) -> Iterator[np.ndarray]:
    """Member ranks in chunks, for evaluation with early exit."""
    ranks = member_ranks(entry)
    for start in range(0, len(ranks), chunk):
        yield ranks[start : start + chunk]


def candidate_with_xcounts(deal: CanonicalDeal, xcounts: Sequence[int], value=None) -> SetEntry:
    """The set fixing the holders of ``deal``'s top cards, the rest x."""
    masks = []
    for s in range(4):
        n = len(deal.words[s])
        x = xcounts[s]
        if n and not 1 <= x <= n:
            raise SetError(f"x-count {x} out of range 1..{n} for suit {s}")
        if not n and x:
            raise SetError(f"x-count {x} for an empty suit")
        masks.append(tuple(1 << p for p in deal.words[s][: n - x]))
    return SetEntry(deal.partition, tuple(masks), tuple(xcounts), value)


def tight_masks(entry: SetEntry) -> tuple[tuple[int, ...], ...]:
    return tuple(suit_tight_masks(*_suit_key(entry, s)) for s in range(4))


def subsumes(a: SetEntry, b: SetEntry) -> bool:
    """True iff every member of ``b`` is a member of ``a``."""
    if a.partition != b.partition:
        return False
    ta, tb = tight_masks(a), tight_masks(b)
    return all(not (mb & ~ma) for s in range(4) for ma, mb in zip(ta[s], tb[s]))


def intersects(a: SetEntry, b: SetEntry) -> bool:
    """True iff the two sets share at least one deal."""
    if a.partition != b.partition:
        return False
    shape = a.partition.shape
    for s in range(4):
        both = tuple(x & y for x, y in zip(a.full_masks(s), b.full_masks(s)))
        if any(m == 0 for m in both):
            return False
        if not _prefixes(shape.suit_counts(s), both):
            return False
    return True


def try_merge(a: SetEntry, b: SetEntry) -> SetEntry | None:
    """A single entry whose members are exactly the union of ``a`` and ``b``.

    Returns the subsuming entry when one contains the other, the OR-merged
    entry when the two differ in exactly one card's mask, otherwise None.
    """
    if a.partition != b.partition or a.value != b.value:
        return None
    if subsumes(a, b):
        return a
    if subsumes(b, a):
        return b
    diff = None
    for s in range(4):
        fa, fb = a.full_masks(s), b.full_masks(s)
        for i, (ma, mb) in enumerate(zip(fa, fb)):
            if ma != mb:
                if diff is not None:
                    return None
                diff = (s, i)
    if diff is None:
        return a
    s, i = diff
    full = [list(a.full_masks(t)) for t in range(4)]
    full[s][i] |= b.full_masks(s)[i]
    return from_full_masks(a.partition, full, a.value)


def format_entry(entry: SetEntry) -> str:
    parts = []
    for s in range(4):
        n = len(entry.masks[s]) + entry.xcounts[s]
        if not n:
            continue
        cards = [
            f"{SUIT_GLYPHS[s]}{RANK_SYMBOLS[n - i - 1]}[{mask_seats(m)}]"
            for i, m in enumerate(entry.masks[s])
        ]
        cards += ["x"] * entry.xcounts[s]
        parts.append(" ".join(cards))
    text = " | ".join(parts)
    if entry.value is not None:
        text += f" -> {entry.value}"
    return text


def random_entry(partition: Partition, rng, value=None) -> SetEntry:
    """A random nonempty entry of a partition (for tests and fuzzing)."""
    shape = partition.shape
    while True:
        masks, xs = [], []
        for s in range(4):
            n = shape.suit_sizes[s]
            if not n:
                masks.append(())
                xs.append(0)
                continue
            x = rng.randint(1, n)
            masks.append(tuple(rng.randint(1, ALL) for _ in range(n - x)))
            xs.append(x)
        entry = SetEntry(partition, tuple(masks), tuple(xs), value)
        if member_count(entry):
            return entry


__all__ = [
    "ALL",
    "SEAT_LETTERS",
    "Seat",
    "SetEntry",
    "SetError",
    "candidate_with_xcounts",
    "enumerate_members",
    "format_entry",
    "from_full_masks",
    "intersects",
    "mask_bits",
    "mask_of",
    "member",
    "member_count",
    "member_ranks",
    "member_words",
    "random_entry",
    "subsumes",
    "tight_masks",
    "try_merge",
]
