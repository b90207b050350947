"""The set-based retrograde driver and its helpers.

For every partition at depth ``d`` the builder walks independent states in
descending canonical order.  Each one is valued from the depth ``d - 1``
trees, generalized into the largest consistent set the binary search over
x-counts finds, and inserted.  The next independent state is found by
advancing the generalized set's ranked cards by one permutation in a suit.
"""

from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

import numpy as np

from .core import (
    CanonicalDeal,
    Partition,
    Seat,
    Shape,
    Trump,
    deal_words_batch,
    first_deal,
    next_suit_permutation,
)
from .retro import _dependency_order, rank
from .rules import EMPTY_SHAPE, MissingPartitionError, TrickEvaluator, trick_minimax
from .sets import (
    SetEntry,
    candidate_with_xcounts,
    enumerate_members,
    member_ranks,
    member_words,
)
from .setdb import PartitionTree, compact, setdb_path

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


class IncompletePriorError(LookupError):
    """A prior tree is missing or does not cover a successor state."""

    def __init__(self, partition: Partition, deal: CanonicalDeal | None = None):
        what = f"missing prior partition {partition}" if deal is None else f"{deal} not covered"
        super().__init__(what)
        self.partition = partition
        self.deal = deal


# --- open list ---------------------------------------------------------------


class OpenList:
    """Pending deals of one partition, popped greatest canonical position first."""

    def __init__(self):
        self._heap: list[tuple[int, CanonicalDeal]] = []
        self._members: set[int] = set()
        self.peak = 0

    def push(self, deal: CanonicalDeal) -> bool:
        r = rank(deal)
        if r in self._members:
            return False
        self._members.add(r)
        heapq.heappush(self._heap, (-r, deal))
        self.peak = max(self.peak, len(self._heap))
        return True

    def pop(self) -> CanonicalDeal:
        _, deal = heapq.heappop(self._heap)
        self._members.discard(rank(deal))
        return deal

    def __len__(self) -> int:
        return len(self._heap)

    def __bool__(self) -> bool:
        return bool(self._heap)


@dataclass
class BuildReport:
    partition: Partition
    generated_states: int = 0
    independent_states: int = 0
    duplicate_states: int = 0
    entries_before_compaction: int = 0
    entries_after_compaction: int = 0
    elapsed: float = 0.0
    oracle_queries: int = 0
    nodes: int = 0
    open_list_peak: int = 0

    def as_dict(self) -> dict:
        p = self.partition
        return {
            "d": p.d,
            "shape": p.shape.shape_id,
            "leader": p.leader.name,
            "trump": p.trump.name,
            "generated": self.generated_states,
            "independent": self.independent_states,
            "duplicates": self.duplicate_states,
            "entries_before": self.entries_before_compaction,
            "entries": self.entries_after_compaction,
            "nodes": self.nodes,
            "oracle_queries": self.oracle_queries,
            "open_list_peak": self.open_list_peak,
            "elapsed": round(self.elapsed, 4),
        }

    @property
    def balanced(self) -> bool:
        return (
            self.generated_states == self.independent_states + self.duplicate_states
            and self.independent_states == self.entries_before_compaction
        )


# --- state evaluation ----------------------------------------------------------


PriorTrees = Mapping[Partition, PartitionTree]


def _prior_tree(prior: PriorTrees, partition: Partition) -> PartitionTree:
    tree = prior.get(partition)
    if tree is None:
        raise IncompletePriorError(partition)
    return tree


def database_lookup(deal: CanonicalDeal, prior: PriorTrees) -> int:
    """Tricks NS take from ``deal``: one trick of minimax, then prior lookups."""

    def leaf(won: int, succ: CanonicalDeal) -> int:
        if succ.d == 0:
            return won
        v = _prior_tree(prior, succ.partition).lookup_state(succ)
        if v is None:
            raise IncompletePriorError(succ.partition, succ)
        return won + v

    return trick_minimax(deal, leaf)


class PriorTables:
    """Dense value arrays expanded from prior trees by batch lookups."""

    def __init__(self, prior: PriorTrees):
        self.prior = prior
        self._cache: dict[Partition, np.ndarray] = {}

    def __call__(self, partition: Partition) -> np.ndarray:
        table = self._cache.get(partition)
        if table is None:
            tree = _prior_tree(self.prior, partition)
            table = tree.dense_values()
            if (table < 0).any():
                miss = int(np.argmax(table < 0))
                from .retro import unrank

                p = partition
                raise IncompletePriorError(p, unrank(p.shape, p.leader, p.trump, miss))
            self._cache[partition] = table
        return table


class PartitionValues:
    """``databaseLookup`` for every state of one partition, computed in bulk."""

    def __init__(self, partition: Partition, tables: PriorTables):
        self.partition = partition
        evaluator = TrickEvaluator(partition)
        for need in evaluator.successor_partitions():
            if need.d:
                _prior_tree(tables.prior, need)
        total = partition.state_count
        self.values = np.empty(total, dtype=np.int8)
        try:
            for start in range(0, total, _CHUNK):
                ranks = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
                self.values[ranks] = evaluator.evaluate(deal_words_batch(partition, ranks), tables)
        except MissingPartitionError as exc:
            raise IncompletePriorError(exc.partition) from None

    def value(self, deal: CanonicalDeal) -> int:
        return int(self.values[rank(deal)])

    def consistent(self, entry: SetEntry, v: int) -> bool:
        """Whether every member of ``entry`` has value ``v`` (early exit)."""
        ranks = member_ranks(entry)
        for start in range(0, len(ranks), _CHUNK):
            if (self.values[ranks[start : start + _CHUNK]] != v).any():
                return False
        return True


# --- oracles -------------------------------------------------------------------


def oracle(entry: SetEntry, v: int, prior: PriorTrees) -> bool:
    """Reference consistency check: every member evaluated one by one."""
    for deal in enumerate_members(entry):
        if database_lookup(deal, prior) != v:
            return False
    return True


def oracle_setwise(
    entry: SetEntry,
    v: int,
    prior: PriorTrees,
    fallback: Callable[[SetEntry, int], bool] | None = None,
) -> bool:
    """Consistency decided on sets where possible, else by the reference oracle.

    The trick is played with ranked cards kept distinct and each seat's x
    cards treated as interchangeable lows.  A trick that is decided by a
    ranked card leads to a resultant set whose value range is bounded by the
    prior entries overlapping it.  Partnership minimax over those ranges
    bounds every member's value; a bound excluding ``v`` refutes the set, a
    tight bound equal to ``v`` confirms it.  Otherwise the reference oracle
    decides, or ``fallback`` when given.  Only no-trump entries with no
    voids and singleton masks are handled set-wise.
    """
    bounds = setwise_bounds(entry, prior)
    if bounds is not None:
        lo, hi = bounds
        if lo == hi == v:
            return True
        if not lo <= v <= hi:
            return False
    if fallback is not None:
        return fallback(entry, v)
    return oracle(entry, v, prior)


def setwise_bounds(entry: SetEntry, prior: PriorTrees) -> tuple[int, int] | None:
    part = entry.partition
    shape = part.shape
    sizes = shape.suit_sizes
    if part.trump != Trump.NT or any(
        shape.lengths[p][s] == 0 for p in range(4) for s in range(4) if sizes[s]
    ):
        return None
    if any(m & (m - 1) for s in range(4) for m in entry.masks[s]):
        return None
    # ranked holdings per seat, per suit: list of word indices
    ranked = [[[i for i, m in enumerate(entry.masks[s]) if m == 1 << p] for s in range(4)] for p in range(4)]
    order = [int(part.leader)]
    for _ in range(3):
        order.append(int(Seat(order[-1]).next))
    def options(p, led):
        suits = [led] if led is not None else [s for s in range(4) if sizes[s]]
        out = []
        for s in suits:
            for i in ranked[p][s]:
                out.append((s, i))
            if shape.lengths[p][s] > len(ranked[p][s]):
                out.append((s, None))  # one of p's x cards
        return out

    def rec(step, plays):
        if step == 4:
            return leaf(plays)
        p = order[step]
        led = plays[0][1] if plays else None
        vals = [rec(step + 1, plays + [(p, s, i)]) for s, i in options(p, led)]
        if p < 2:
            return max(v[0] for v in vals), max(v[1] for v in vals)
        return min(v[0] for v in vals), min(v[1] for v in vals)

    def leaf(plays):
        led = plays[0][1]
        ranked_follow = [(i, p) for p, s, i in plays if s == led and i is not None]
        if ranked_follow:
            winners = [min(ranked_follow)[1]]
        else:
            # only x cards: whoever holds the highest of them wins
            winners = sorted({p for p, s, _ in plays if s == led})
        lo, hi = 99, -1
        for w in winners:
            won = 1 if w < 2 else 0
            succ = _resultant(entry, plays, w)
            if succ is None:
                b = (0, 0)
            else:
                b = _prior_tree(prior, succ.partition).overlap_bounds(succ)
                if b is None:
                    raise IncompletePriorError(succ.partition)
            lo = min(lo, won + b[0])
            hi = max(hi, won + b[1])
        return lo, hi

    return rec(0, [])


def _resultant(entry: SetEntry, plays, winner: int) -> SetEntry | None:
    """The set of successors after a trick with x plays left abstract."""
    part = entry.partition
    shape = part.shape.minus((p, s) for p, s, _ in plays)
    if shape.d == 0:
        return None
    succ_part = Partition(shape, Seat(winner), part.trump)
    masks, xs = [], []
    for s in range(4):
        gone = {i for p, ps, i in plays if ps == s and i is not None}
        x_played = sum(1 for p, ps, i in plays if ps == s and i is None)
        kept = tuple(m for i, m in enumerate(entry.masks[s]) if i not in gone)
        masks.append(kept)
        xs.append(entry.xcounts[s] - x_played)
    return SetEntry(succ_part, tuple(masks), tuple(xs))


# --- generalization ------------------------------------------------------------


@dataclass
class Probe:
    suit: int
    xcount: int
    consistent: bool


def suit_search_order(partition: Partition) -> list[int]:
    sizes = partition.shape.suit_sizes
    return sorted((s for s in range(4) if sizes[s]), key=lambda s: (-sizes[s], s))


def generalize_to_set(
    deal: CanonicalDeal,
    v: int,
    consistent: Callable[[SetEntry, int], bool],
    probes: list[Probe] | None = None,
) -> SetEntry:
    """Largest consistent set around ``deal`` found by per-suit binary search."""
    part = deal.partition
    sizes = part.shape.suit_sizes
    xs = [1 if sizes[s] else 0 for s in range(4)]
    for s in suit_search_order(part):
        lo, hi = 1, sizes[s]
        seen: list[tuple[int, bool]] = []
        while lo < hi:
            mid = (lo + hi + 1) // 2
            trial = list(xs)
            trial[s] = mid
            ok = consistent(candidate_with_xcounts(deal, trial), v)
            seen.append((mid, ok))
            if probes is not None:
                probes.append(Probe(s, mid, ok))
            if ok:
                lo = mid
            else:
                hi = mid - 1
        if any(not ok and k <= lo for k, ok in seen):
            logger.warning("non-monotone x-count consistency in suit %d of %s", s, deal)
            lo = max(
                k for k in range(1, sizes[s] + 1)
                if consistent(candidate_with_xcounts(deal, xs[:s] + [k] + xs[s + 1 :]), v)
            )
        xs[s] = lo
    return candidate_with_xcounts(deal, xs, v)


def successors(deal: CanonicalDeal, entry: SetEntry) -> list[CanonicalDeal]:
    """Per suit, the first deal past ``entry``'s ranked cards."""
    out = []
    for s in range(4):
        k = len(entry.masks[s])
        if k:
            nxt = next_suit_permutation(deal, s, k)
            if nxt is not None:
                out.append(nxt)
    return out


def next_independent_state(
    open_list: OpenList,
    tree: PartitionTree,
    last: tuple[CanonicalDeal, SetEntry] | None,
    report: BuildReport | None = None,
) -> CanonicalDeal | None:
    """Push the successors of the last set, then pop the next uncovered deal.

    A popped deal that is already covered is a duplicate; its own successors
    past the covering entry are pushed so no region is skipped.
    """
    report = report if report is not None else BuildReport(tree.partition)

    def push_all(deals):
        for s in deals:
            if open_list.push(s):
                report.generated_states += 1

    if last is not None:
        push_all(successors(*last))
    while open_list:
        s = open_list.pop()
        cover = tree.find_entry(s)
        if cover is None:
            report.open_list_peak = max(report.open_list_peak, open_list.peak)
            return s
        report.duplicate_states += 1
        push_all(successors(s, cover))
    report.open_list_peak = max(report.open_list_peak, open_list.peak)
    return None


# --- builders --------------------------------------------------------------------


def build_setro_db(
    d: int,
    shape: Shape,
    leader: Seat,
    trump: Trump,
    prior: PriorTrees,
    *,
    tables: PriorTables | None = None,
    do_compact: bool = True,
    debug_sweep: bool = False,
    probes: list[Probe] | None = None,
    trace: list | None = None,
    uncompacted: list | None = None,
) -> tuple[PartitionTree, BuildReport]:
    """Build one partition's set database from the depth ``d - 1`` trees.

    ``probes`` collects the binary-search probes, ``trace`` the
    (state, entry) pairs in insertion order and ``uncompacted`` the tree as
    it stood before compaction.
    """
    started = time.perf_counter()
    part = Partition(shape, Seat(leader), Trump(trump))
    if part.d != d:
        raise ValueError(f"shape has {part.d} tricks, expected {d}")
    report = BuildReport(part)
    values = PartitionValues(part, tables or PriorTables(prior))

    def consistent(entry: SetEntry, v: int) -> bool:
        report.oracle_queries += 1
        return values.consistent(entry, v)

    tree = PartitionTree(part)
    open_list = OpenList()
    open_list.push(first_deal(shape, part.leader, part.trump))
    report.generated_states = 1
    last = None
    while True:
        s = next_independent_state(open_list, tree, last, report)
        if s is None:
            break
        report.independent_states += 1
        v = values.value(s)
        entry = generalize_to_set(s, v, consistent, probes)
        if tree.insert(entry):
            report.entries_before_compaction += 1
        if trace is not None:
            trace.append((s, entry))
        last = (s, entry)
    if uncompacted is not None:
        uncompacted.append(tree)
    if do_compact:
        tree = compact(tree)
    report.entries_after_compaction = tree.entry_count
    report.nodes = tree.node_count
    if debug_sweep:
        looked = tree.dense_values()
        if (looked != values.values).any():
            bad = int(np.argmax(looked != values.values))
            raise AssertionError(f"state {bad} of {part} looks up {looked[bad]}, value {values.values[bad]}")
    report.elapsed = time.perf_counter() - started
    return tree, report


class SetroDatabase:
    """Set databases of many partitions, built bottom-up on demand.

    With a ``root`` directory, finished trees are read from and written to
    ``setdb/<cards>/<trump>/<leader>/<shape-id>.sgdb``.
    """

    def __init__(self, root: Path | None = None, *, debug_sweep: bool = False):
        self.root = Path(root) if root is not None else None
        self.trees: dict[Partition, PartitionTree] = {}
        self.reports: dict[Partition, BuildReport] = {}
        self.tables = PriorTables(self)
        self.debug_sweep = debug_sweep

    # mapping protocol used by the builders
    def get(self, partition: Partition, default=None):
        tree = self.trees.get(partition)
        if tree is None:
            tree = self._load(partition)
        return tree if tree is not None else default

    def __contains__(self, partition: Partition) -> bool:
        return self.get(partition) is not None

    def _load(self, partition: Partition) -> PartitionTree | None:
        if self.root is None:
            return None
        path = setdb_path(self.root, partition)
        if not path.exists():
            return None
        tree = PartitionTree.load(path)
        self.trees[partition] = tree
        return tree

    def ensure(self, partitions: Iterable[Partition]) -> list[BuildReport]:
        done = []
        for part in _dependency_order(partitions, lambda p: p in self):
            tree, report = build_setro_db(
                part.d, part.shape, part.leader, part.trump, self,
                tables=self.tables, debug_sweep=self.debug_sweep,
            )
            self.add(tree, report)
            done.append(report)
        return done

    def add(self, tree: PartitionTree, report: BuildReport | None = None) -> None:
        self.trees[tree.partition] = tree
        if report is not None:
            self.reports[tree.partition] = report
        if self.root is not None:
            tree.save(self.root)

    def tree(self, partition: Partition) -> PartitionTree:
        tree = self.get(partition)
        if tree is None:
            self.ensure([partition])
            tree = self.trees[partition]
        return tree

    def value(self, deal: CanonicalDeal) -> int:
        if deal.d == 0:
            return 0
        v = self.tree(deal.partition).lookup_state(deal)
        if v is None:
            raise IncompletePriorError(deal.partition, deal)
        return v


__all__ = [
    "BuildReport",
    "EMPTY_SHAPE",
    "IncompletePriorError",
    "OpenList",
    "PartitionValues",
    "PriorTables",
    "Probe",
    "SetroDatabase",
    "build_setro_db",
    "database_lookup",
    "generalize_to_set",
    "member_words",
    "next_independent_state",
    "oracle",
    "oracle_setwise",
    "setwise_bounds",
    "successors",
    "suit_search_order",
]
