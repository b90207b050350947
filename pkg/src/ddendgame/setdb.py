"""Shallow-tree storage for set databases, one tree per partition.

Every tree level fixes four cards of the global card order (high cards
first, regardless of suit).  A node holds a 16-bit key with one 4-bit holder
mask per card, a pair of value bounds, a relative offset to its next sibling
and two flags.  Children follow their parent directly in the node array.

Packed node layout (little-endian u64):

====== =================================================
bits   field
====== =================================================
0-15   key, card slot ``k`` in bits ``4k..4k+3`` (N,S,E,W from the low bit)
16-19  lower bound
20-23  upper bound
24-55  sibling offset in nodes, 0 for the last sibling
56     has child (the child is the next node)
57     is entry
====== =================================================
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import CanonicalDeal, Partition, Seat, Shape, Trump, deal_words_batch
from .retro import FormatError
from .sets import ALL, SetEntry, from_full_masks, intersects, member_count

MAGIC = b"SGDB"
VERSION = 1
_HEADER = struct.Struct("<4sHBBB16sQQ")
HEADER_SIZE = _HEADER.size
NODE_BYTES = 8
FULL_KEY = 0xFFFF
EXACT_COUNT_LIMIT = 10**7
_CHUNK = 1 << 16

_HAS_CHILD = 1 << 56
_IS_ENTRY = 1 << 57


class ConflictError(ValueError):
    """Two entries with different values claim the same set."""


def pack_node(key: int, lo: int, hi: int, sibling: int, has_child: bool, is_entry: bool) -> int:
    if not (0 <= lo <= hi <= 15):
        raise ValueError(f"bad bounds [{lo}, {hi}]")
    if not 0 <= sibling < 1 << 32:
        raise ValueError("sibling offset out of range")
    return (
        (key & 0xFFFF)
        | lo << 16
        | hi << 20
        | sibling << 24
        | (_HAS_CHILD if has_child else 0)
        | (_IS_ENTRY if is_entry else 0)
    )


def unpack_node(word: int) -> tuple[int, int, int, int, bool, bool]:
    word = int(word)
    return (
        word & 0xFFFF,
        word >> 16 & 0xF,
        word >> 20 & 0xF,
        word >> 24 & 0xFFFFFFFF,
        bool(word & _HAS_CHILD),
        bool(word & _IS_ENTRY),
    )


@dataclass
class _Node:
    key: int
    lo: int
    hi: int
    value: int | None = None  # set on entry nodes
    children: list["_Node"] = field(default_factory=list)


def _descendants(node: _Node) -> Iterator[_Node]:
    stack = list(node.children)
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children)


def entry_keys(entry: SetEntry) -> tuple[int, ...]:
    """Per-level keys of an entry, truncated after the last constrained card."""
    order = entry.partition.card_order
    full = [entry.full_masks(s) for s in range(4)]
    g = [full[s][i] for s, i in order]
    last = max((k for k, m in enumerate(g) if m != ALL), default=-1)
    levels = max(1, (last + 4) // 4)
    keys = []
    for lv in range(levels):
        key = 0
        for t in range(4):
            key |= g[4 * lv + t] << 4 * t
        keys.append(key)
    return tuple(keys)


def keys_to_entry(partition: Partition, keys: Sequence[int], value: int | None) -> SetEntry:
    order = partition.card_order
    sizes = partition.shape.suit_sizes
    full = [[ALL] * sizes[s] for s in range(4)]
    for lv, key in enumerate(keys):
        for t in range(4):
            s, i = order[4 * lv + t]
            full[s][i] = key >> 4 * t & 0xF
    return from_full_masks(partition, full, value)


def state_keys(partition: Partition, words: Sequence[np.ndarray]) -> np.ndarray:
    """``(B, d)`` uint16 keys with one bit set per card slot."""
    order = partition.card_order
    b = len(words[0])
    d = partition.d
    out = np.zeros((b, max(d, 1)), dtype=np.uint16)
    for k, (s, i) in enumerate(order):
        bit = np.left_shift(np.uint16(1), words[s][:, i].astype(np.uint16) + np.uint16(4 * (k % 4)))
        out[:, k // 4] |= bit
    return out


def deal_keys(deal: CanonicalDeal) -> tuple[int, ...]:
    order = deal.partition.card_order
    keys = [0] * max(deal.d, 1)
    for k, (s, i) in enumerate(order):
        keys[k // 4] |= 1 << (deal.words[s][i] + 4 * (k % 4))
    return tuple(keys)


class PartitionTree:
    """The set database of one partition.

    Entries are inserted into a mutable trie; :meth:`nodes` packs it into the
    64-bit node array (depth-first preorder) used for storage and batch
    queries.
    """

    def __init__(self, partition: Partition):
        self.partition = partition
        self._roots: list[_Node] = []
        self._entry_count = 0
        self._packed: np.ndarray | None = None

    # --- building -------------------------------------------------------

    @property
    def entry_count(self) -> int:
        return self._entry_count

    def __len__(self) -> int:
        return self._entry_count

    def insert(self, entry: SetEntry) -> bool:
        """Add an entry; returns False when an entry on its path already covers it.

        A lookup stops at the first entry node it matches, so entries below
        an entry node are unreachable: inserting a key prefix of stored
        entries absorbs them.
        """
        if entry.partition != self.partition:
            raise ValueError(f"entry of {entry.partition} inserted into {self.partition}")
        if entry.value is None:
            raise ValueError("stored entries need a value")
        v = int(entry.value)
        keys = entry_keys(entry)
        path, level = [], self._roots
        for key in keys:
            node = next((n for n in level if n.key == key), None)
            if node is None:
                break
            path.append(node)
            if node.value is not None:
                if node.value != v:
                    raise ConflictError(f"entry {entry} already covered with value {node.value}")
                return False
            level = node.children
        absorbed = 0
        if len(path) == len(keys):
            below = [n.value for n in _descendants(path[-1]) if n.value is not None]
            if any(x != v for x in below):
                raise ConflictError(f"entry {entry} covers entries with other values")
            absorbed = len(below)
        level = self._roots
        for depth, key in enumerate(keys):
            if depth < len(path):
                node = path[depth]
                node.lo, node.hi = min(node.lo, v), max(node.hi, v)
            else:
                node = _Node(key, v, v)
                level.append(node)
            level = node.children
        node.value = v
        node.lo = node.hi = v
        node.children = []
        self._entry_count += 1 - absorbed
        self._packed = None
        return True

    # --- scalar queries on the trie ---------------------------------------

    def _find(self, keys: Sequence[int]):
        def rec(level, depth, path):
            sk = keys[depth]
            for node in level:
                if sk & node.key != sk:
                    continue
                path.append(node.key)
                if node.value is not None:
                    return node, tuple(path)
                if node.children and depth + 1 < len(keys):
                    hit = rec(node.children, depth + 1, path)
                    if hit is not None:
                        return hit
                path.pop()
            return None

        return rec(self._roots, 0, [])

    def lookup_state(self, deal: CanonicalDeal) -> int | None:
        """Value of the first entry found covering ``deal``, else None."""
        if deal.partition != self.partition:
            raise ValueError(f"deal of {deal.partition} looked up in {self.partition}")
        hit = self._find(deal_keys(deal))
        return None if hit is None else hit[0].value

    def find_entry(self, deal: CanonicalDeal) -> SetEntry | None:
        """The entry :meth:`lookup_state` would answer from."""
        hit = self._find(deal_keys(deal))
        if hit is None:
            return None
        node, path = hit
        return keys_to_entry(self.partition, path, node.value)

    def entries(self) -> list[SetEntry]:
        out = []
        for path, node in self._walk():
            if node.value is not None:
                out.append(keys_to_entry(self.partition, path, node.value))
        return out

    def _walk(self) -> Iterator[tuple[tuple[int, ...], _Node]]:
        stack = [((n.key,), n) for n in reversed(self._roots)]
        while stack:
            path, node = stack.pop()
            yield path, node
            for child in reversed(node.children):
                stack.append((path + (child.key,), child))

    def _overlap_walk(self, probe: SetEntry, prune=None):
        """Entries whose masks meet the probe's, with optional bound pruning."""
        keys = entry_keys(probe)
        d = self.partition.d
        keys = keys + (FULL_KEY,) * (d - len(keys))

        def meets(a, b):
            c = a & b
            return all(c >> 4 * t & 0xF for t in range(4))

        stack = [((n.key,), n) for n in reversed(self._roots)]
        while stack:
            path, node = stack.pop()
            if not meets(keys[len(path) - 1], node.key):
                continue
            if prune is not None and prune(node):
                continue
            if node.value is not None:
                entry = keys_to_entry(self.partition, path, node.value)
                if intersects(entry, probe):
                    yield entry
            for child in reversed(node.children):
                stack.append((path + (child.key,), child))

    def find_overlapping(self, probe: SetEntry) -> list[tuple[SetEntry, int]]:
        """All stored entries sharing at least one deal with ``probe``."""
        if probe.partition != self.partition:
            raise ValueError("probe from another partition")
        return [(e, e.value) for e in self._overlap_walk(probe)]

    def overlap_bounds(self, probe: SetEntry) -> tuple[int, int] | None:
        """Min and max value over entries overlapping ``probe``."""
        lo = hi = None
        for e in self._overlap_walk(probe):
            lo = e.value if lo is None else min(lo, e.value)
            hi = e.value if hi is None else max(hi, e.value)
        return None if lo is None else (lo, hi)

    # --- packed form --------------------------------------------------------

    def nodes(self) -> np.ndarray:
        if self._packed is None:
            self._packed = self._pack()
        return self._packed

    @property
    def node_count(self) -> int:
        return len(self.nodes())

    def _pack(self) -> np.ndarray:
        out: list[int] = []

        def emit(level):
            starts = []
            for node in level:
                starts.append(len(out))
                out.append(0)
                if node.children:
                    emit(node.children)
            for j, node in enumerate(level):
                sib = starts[j + 1] - starts[j] if j + 1 < len(level) else 0
                out[starts[j]] = pack_node(
                    node.key, node.lo, node.hi, sib, bool(node.children), node.value is not None
                )

        emit(self._roots)
        arr = np.array(out, dtype=np.uint64)
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_nodes(cls, partition: Partition, nodes: np.ndarray) -> "PartitionTree":
        tree = cls(partition)
        nodes = np.asarray(nodes, dtype=np.uint64)

        def parse(start, end, level, depth):
            i = start
            while True:
                if i >= end or depth >= max(partition.d, 1):
                    raise FormatError("node index out of range", HEADER_SIZE + NODE_BYTES * min(i, end))
                key, lo, hi, sib, has_child, is_entry = unpack_node(nodes[i])
                node = _Node(key, lo, hi, lo if is_entry else None)
                if is_entry:
                    if lo != hi:
                        raise FormatError("entry node with loose bounds", HEADER_SIZE + NODE_BYTES * i)
                    tree._entry_count += 1
                level.append(node)
                nxt = i + sib if sib else end
                if has_child:
                    parse(i + 1, nxt, node.children, depth + 1)
                if not sib:
                    return
                i = nxt

        if len(nodes):
            parse(0, len(nodes), tree._roots, 0)
        packed = tree._pack()
        if not np.array_equal(packed, nodes):
            raise FormatError("node array is not in canonical preorder", HEADER_SIZE)
        tree._packed = packed
        return tree

    # --- batch queries on the packed form ------------------------------------

    def lookup_batch(self, words: Sequence[np.ndarray]) -> np.ndarray:
        """Values for a batch of deals (per-suit word arrays), -1 if uncovered."""
        keys = state_keys(self.partition, words)
        out = np.full(len(keys), -1, dtype=np.int8)
        nodes = self.nodes()
        if len(nodes) and len(keys):
            fields = (
                (nodes & 0xFFFF).astype(np.uint16),
                ((nodes >> 16) & 0xF).astype(np.int8),
                ((nodes >> 24) & 0xFFFFFFFF).astype(np.int64),
                (nodes & _HAS_CHILD) != 0,
                (nodes & _IS_ENTRY) != 0,
            )
            self._descend(fields, 0, 0, keys, np.arange(len(keys)), out)
        return out

    def _descend(self, fields, i, depth, keys, active, out) -> np.ndarray:
        key, lo, sib, has_child, is_entry = fields
        while active.size:
            sk = keys[active, depth]
            hit = (sk & key[i]) == sk
            if hit.any():
                matched = active[hit]
                rest = active[~hit]
                if is_entry[i]:
                    out[matched] = lo[i]
                elif has_child[i] and depth + 1 < keys.shape[1]:
                    left = self._descend(fields, i + 1, depth + 1, keys, matched, out)
                    rest = np.concatenate([rest, left]) if left.size else rest
                else:
                    rest = np.concatenate([rest, matched])
                active = np.sort(rest) if rest.size else rest
            if not sib[i]:
                break
            i += int(sib[i])
        return active

    def dense_values(self) -> np.ndarray:
        """Looked-up value of every state of the partition, -1 if uncovered."""
        part = self.partition
        total = part.state_count
        out = np.empty(total, dtype=np.int8)
        for start in range(0, total, _CHUNK):
            ranks = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
            out[start : start + len(ranks)] = self.lookup_batch(deal_words_batch(part, ranks))
        return out

    # --- storage ------------------------------------------------------------

    def to_bytes(self) -> bytes:
        p = self.partition
        nodes = self.nodes()
        head = _HEADER.pack(
            MAGIC, VERSION, p.d, int(p.trump), p.leader.file_code, p.shape.file_bytes(),
            len(nodes), self._entry_count,
        )
        return head + nodes.astype("<u8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "PartitionTree":
        if len(data) < HEADER_SIZE:
            raise FormatError("truncated header", len(data))
        magic, version, d, trump, leader, shape_bytes, count, entries = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}", 0)
        if version != VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        if trump > 4 or leader > 3:
            raise FormatError("bad trump or leader code", 7)
        try:
            shape = Shape.from_file_bytes(shape_bytes)
        except ValueError as exc:
            raise FormatError(f"bad shape ({exc})", 9) from None
        part = Partition(shape, Seat.from_file_code(leader), Trump(trump))
        if part.d != d:
            raise FormatError("depth does not match shape", 6)
        body = data[HEADER_SIZE:]
        if len(body) != NODE_BYTES * count:
            raise FormatError("truncated node array", len(data))
        nodes = np.frombuffer(body, dtype="<u8").astype(np.uint64)
        tree = cls.from_nodes(part, nodes)
        if tree.entry_count != entries:
            raise FormatError("entry count does not match nodes", 33)
        return tree

    def save(self, root: Path) -> Path:
        path = setdb_path(root, self.partition)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(self.to_bytes())
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: Path) -> "PartitionTree":
        return cls.from_bytes(Path(path).read_bytes())

    # --- accounting ---------------------------------------------------------

    def covered_count(self) -> int:
        part = self.partition
        if part.state_count <= EXACT_COUNT_LIMIT:
            return int((self.dense_values() >= 0).sum())
        return max((member_count(e) for e in self.entries()), default=0)

    def stats(self) -> "TreeStats":
        nodes = self.node_count
        covered = self.covered_count() if nodes else 0
        size = nodes * NODE_BYTES
        return TreeStats(self._entry_count, nodes, size, covered, covered / size if size else 0.0)

    def node_fields(self) -> list[tuple[int, int, int, int, bool, bool]]:
        return [unpack_node(w) for w in self.nodes()]

    def check_bounds(self) -> bool:
        """Every node's interval contains those of its descendants."""

        def ok(node):
            for c in node.children:
                if not (node.lo <= c.lo <= c.hi <= node.hi) or not ok(c):
                    return False
            if node.value is not None and not node.lo <= node.value <= node.hi:
                return False
            return True

        return all(ok(n) for n in self._roots)

    def max_depth(self) -> int:
        return max((len(path) for path, _ in self._walk()), default=0)


@dataclass(frozen=True)
class TreeStats:
    entries: int
    nodes: int
    bytes: int
    states_covered: int
    states_per_byte: float


# --- compaction ------------------------------------------------------------------


def compact(tree: PartitionTree) -> PartitionTree:
    """Merge entries whose union is a single set, drop subsumed ones."""
    from .sets import subsumes, try_merge

    alive: dict[int, SetEntry] = {}
    buckets: dict[tuple, dict[int, None]] = {}
    next_id = 0

    def full_vector(e):
        return tuple(m for s in range(4) for m in e.full_masks(s))

    def bucket_keys(e):
        vec = full_vector(e)
        return [(e.value, j, vec[:j] + vec[j + 1 :]) for j in range(len(vec))]

    def add(e):
        nonlocal next_id
        eid = next_id
        next_id += 1
        alive[eid] = e
        for k in bucket_keys(e):
            buckets.setdefault(k, {})[eid] = None
        return eid

    def remove(eid):
        e = alive.pop(eid)
        for k in bucket_keys(e):
            buckets[k].pop(eid, None)

    work = [add(e) for e in tree.entries()]
    while work:
        eid = work.pop(0)
        if eid not in alive:
            continue
        e = alive[eid]
        merged = None
        for k in bucket_keys(e):
            for oid in buckets.get(k, ()):
                if oid == eid:
                    continue
                m = try_merge(e, alive[oid])
                if m is not None:
                    merged = (oid, m)
                    break
            if merged:
                break
        if merged:
            oid, m = merged
            remove(eid)
            remove(oid)
            work.append(add(m))

    entries = list(alive.values())
    # drop entries contained in another one
    probe = PartitionTree(tree.partition)
    for e in entries:
        probe.insert(e)
    keep = []
    for e in entries:
        covered = any(
            o != e and subsumes(o, e) and not (subsumes(e, o) and _order(o) > _order(e))
            for o, _ in probe.find_overlapping(e)
        )
        if not covered:
            keep.append(e)
    out = PartitionTree(tree.partition)
    for e in keep:
        out.insert(e)
    return out


def _order(e: SetEntry):
    return (e.masks, e.xcounts)


# --- files ---------------------------------------------------------------------


def setdb_dir(root: Path, cards: int, trump: Trump, leader: Seat) -> Path:
    return Path(root) / "setdb" / str(cards) / Trump(trump).name / Seat(leader).name


def setdb_path(root: Path, partition: Partition) -> Path:
    directory = setdb_dir(root, 4 * partition.d, partition.trump, partition.leader)
    return directory / f"{partition.shape.shape_id}.sgdb"


MANIFEST = "MANIFEST"


@dataclass(frozen=True)
class ManifestRow:
    shape_id: str
    entries: int
    nodes: int
    elapsed: float


def write_manifest(directory: Path, elapsed: dict[str, float] | None = None) -> Path:
    """List every partition file in a directory with its entry count.

    Build times come from ``elapsed`` or, failing that, the old manifest.
    """
    directory = Path(directory)
    old = read_manifest(directory)
    elapsed = elapsed or {}
    lines = []
    for path in sorted(directory.glob("*.sgdb")):
        with path.open("rb") as fh:
            head = fh.read(HEADER_SIZE)
        if len(head) < HEADER_SIZE:
            raise FormatError("truncated header", len(head))
        *_, nodes, entries = _HEADER.unpack(head)
        prev = old.get(path.stem)
        secs = elapsed.get(path.stem, prev.elapsed if prev else 0.0)
        lines.append(f"{path.stem} {entries} {nodes} {secs:.4f}")
    target = directory / MANIFEST
    target.write_text("".join(line + "\n" for line in lines))
    return target


def read_manifest(directory: Path) -> dict[str, ManifestRow]:
    target = Path(directory) / MANIFEST
    if not target.exists():
        return {}
    out = {}
    for line in target.read_text().splitlines():
        parts = line.split()
        if len(parts) == 4:
            out[parts[0]] = ManifestRow(parts[0], int(parts[1]), int(parts[2]), float(parts[3]))
    return out


__all__ = [
    "ConflictError",
    "FULL_KEY",
    "HEADER_SIZE",
    "ManifestRow",
    "MAGIC",
    "NODE_BYTES",
    "PartitionTree",
    "TreeStats",
    "VERSION",
    "compact",
    "deal_keys",
    "entry_keys",
    "keys_to_entry",
    "pack_node",
    "read_manifest",
    "setdb_dir",
    "setdb_path",
    "state_keys",
    "unpack_node",
    "write_manifest",
]
