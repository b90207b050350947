"""State-wise retrograde analysis over a perfect ranking of each partition.

Every state of a partition gets a dense index (its rank in canonical order),
and its value is stored as a 4-bit nibble.  This is the exhaustive oracle the
set-based databases are checked against.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import (
    CanonicalDeal,
    Partition,
    Seat,
    Shape,
    Trump,
    deal_words_batch,
    word_rank_scalar,
    word_unrank_scalar,
)
from .rules import EMPTY_SHAPE, MissingPartitionError, TrickEvaluator

logger = logging.getLogger(__name__)

MAGIC = b"RGDB"
VERSION = 1
_HEADER = struct.Struct("<4sHBBB16sQ")
CHUNK = 1 << 17


class FormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


def state_count(shape: Shape, leader: Seat, trump: Trump) -> int:
    return Partition(shape, leader, trump).state_count


def rank(deal: CanonicalDeal) -> int:
    """Index of ``deal`` within its partition; rank order is canonical order."""
    part = deal.partition
    shape = part.shape
    total = 0
    for s, radix in enumerate(part.radices):
        total += word_rank_scalar(deal.words[s], shape.suit_counts(s)) * radix
    return total


def unrank(shape: Shape, leader: Seat, trump: Trump, index: int) -> CanonicalDeal:
    part = Partition(shape, Seat(leader), Trump(trump))
    if not 0 <= index < part.state_count:
        raise IndexError(f"index {index} out of range for {part}")
    words = []
    for s, (radix, count) in enumerate(zip(part.radices, part.suit_word_counts)):
        words.append(word_unrank_scalar((index // radix) % count, shape.suit_counts(s)))
    return CanonicalDeal(tuple(words), part.leader, part.trump)


@dataclass
class RetroDB:
    partition: Partition
    values: np.ndarray  # uint8 per state, indexed by rank

    @property
    def d(self) -> int:
        return self.partition.d

    def value(self, deal: CanonicalDeal) -> int:
        if deal.partition != self.partition:
            raise KeyError(f"deal not in {self.partition}")
        return int(self.values[rank(deal)])

    def packed(self) -> bytes:
        return pack_nibbles(self.values)

    def to_bytes(self) -> bytes:
        p = self.partition
        head = _HEADER.pack(
            MAGIC, VERSION, p.d, int(p.trump), p.leader.file_code, p.shape.file_bytes(), len(self.values)
        )
        return head + self.packed()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RetroDB":
        if len(data) < _HEADER.size:
            raise FormatError("truncated header", len(data))
        magic, version, d, trump, leader, shape_bytes, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", 0)
        if version != VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        part = Partition(Shape.from_file_bytes(shape_bytes), Seat.from_file_code(leader), Trump(trump))
        if part.d != d or part.state_count != count:
            raise FormatError("header does not match shape", 6)
        body = data[_HEADER.size :]
        if len(body) != (count + 1) // 2:
            raise FormatError("truncated value array", len(data))
        return cls(part, unpack_nibbles(body, count))


def pack_nibbles(values: np.ndarray) -> bytes:
    """Two values per byte, low nibble holds the even index."""
    v = np.asarray(values, dtype=np.uint8)
    if len(v) % 2:
        v = np.append(v, 0)
    return (v[0::2] | (v[1::2] << 4)).astype(np.uint8).tobytes()


def unpack_nibbles(data: bytes, count: int) -> np.ndarray:
    raw = np.frombuffer(data, dtype=np.uint8)
    out = np.empty(2 * len(raw), dtype=np.uint8)
    out[0::2] = raw & 0x0F
    out[1::2] = raw >> 4
    return out[:count]


def build_retro_db(
    d: int, shape: Shape, leader: Seat, trump: Trump, prior: Mapping[Partition, RetroDB]
) -> RetroDB:
    """Value every state of one partition from the depth ``d - 1`` tables."""
    part = Partition(shape, Seat(leader), Trump(trump))
    if part.d != d:
        raise ValueError(f"shape has {part.d} tricks, expected {d}")
    evaluator = TrickEvaluator(part)
    for need in evaluator.successor_partitions():
        if need.d and need not in prior:
            raise MissingPartitionError(need)

    def table(p: Partition) -> np.ndarray | None:
        db = prior.get(p)
        return None if db is None else db.values

    total = part.state_count
    values = np.empty(total, dtype=np.uint8)
    visited = 0
    for start in range(0, total, CHUNK):
        ranks = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        words = deal_words_batch(part, ranks)
        values[ranks] = evaluator.evaluate(words, table)
        visited += len(ranks)
    assert visited == total
    return RetroDB(part, values)


class RetroDatabase:
    """All retrograde partitions built so far, built on demand.

    Prior partitions a requested one depends on are built first, bottom-up.
    With a ``root`` directory, tables are read from and written to
    ``retro/<cards>/<trump>/<leader>/<shape-id>.rdb``.
    """

    def __init__(self, root: Path | None = None):
        self.root = Path(root) if root is not None else None
        self.tables: dict[Partition, RetroDB] = {}

    def __contains__(self, partition: Partition) -> bool:
        return self._find(partition) is not None

    def _find(self, partition: Partition) -> RetroDB | None:
        db = self.tables.get(partition)
        if db is None and self.root is not None:
            path = retro_path(self.root, partition)
            if path.exists():
                db = self.tables[partition] = RetroDB.from_bytes(path.read_bytes())
        return db

    def get(self, partition: Partition) -> RetroDB:
        db = self._find(partition)
        if db is None:
            self.ensure([partition])
            db = self.tables[partition]
        return db

    def ensure(self, partitions: Iterable[Partition]) -> list[Partition]:
        plan = _dependency_order(partitions, lambda p: p in self)
        for part in plan:
            need = {
                p: self.get(p) for p in TrickEvaluator(part).successor_partitions() if p.d
            }
            db = build_retro_db(part.d, part.shape, part.leader, part.trump, need)
            self.tables[part] = db
            if self.root is not None:
                self.save(self.root, part)
        return plan

    def value(self, deal: CanonicalDeal) -> int:
        if deal.d == 0:
            return 0
        return self.get(deal.partition).value(deal)

    def save(self, root: Path, partition: Partition) -> Path:
        path = retro_path(root, partition)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(self.tables[partition].to_bytes())
        tmp.replace(path)
        return path


def retro_path(root: Path, partition: Partition) -> Path:
    cards = 4 * partition.d
    return (
        Path(root) / "retro" / str(cards) / partition.trump.name / partition.leader.name
        / f"{partition.shape.shape_id}.rdb"
    )


def _dependency_order(partitions, done) -> list[Partition]:
    """Partitions to build (including priors) so each comes after its priors."""
    order: list[Partition] = []
    seen: set[Partition] = set()
    stack = [(p, False) for p in partitions]
    while stack:
        part, expanded = stack.pop()
        if expanded:
            order.append(part)
            continue
        if part in seen or part.d == 0 or done(part):
            continue
        seen.add(part)
        stack.append((part, True))
        for need in sorted(TrickEvaluator(part).successor_partitions(), key=_sort_key, reverse=True):
            if need.d and need not in seen and not done(need):
                stack.append((need, False))
    return order


def _sort_key(p: Partition):
    return (p.d, p.shape.lengths, int(p.leader), int(p.trump))


__all__ = [
    "EMPTY_SHAPE",
    "FormatError",
    "RetroDB",
    "RetroDatabase",
    "build_retro_db",
    "rank",
    "retro_path",
    "state_count",
    "unrank",
]
