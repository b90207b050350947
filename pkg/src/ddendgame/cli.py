"""Command-line front end: build, query, validate and stats.

Exit codes: 0 success, 2 validation mismatch, 3 missing dependency,
4 format or parse error.  The database root defaults to ``$DDENDGAME_DB``
or ``./ddendgame-db``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    DealError,
    deal_words_batch,
    Partition,
    Seat,
    Shape,
    Trump,
    enumerate_shapes,
    format_deal,
    parse_deal,
    single_suit_shapes,
)
from .retro import FormatError, RetroDatabase, _dependency_order, unrank
from .rules import minimax_value
from .setdb import PartitionTree, read_manifest, setdb_dir, write_manifest
from .setro import IncompletePriorError, SetroDatabase, build_setro_db

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 2
EXIT_MISSING = 3
EXIT_FORMAT = 4

ENV_ROOT = "DDENDGAME_DB"
DEFAULT_ROOT = "ddendgame-db"


@dataclass(frozen=True)
class BuildSpec:
    cards: int
    suit_mode: str = "single"
    trumps: tuple[Trump, ...] = (Trump.NT,)
    leaders: tuple[Seat, ...] = (Seat.E,)
    out: Path = Path(DEFAULT_ROOT)
    engine: str = "setro"
    debug_sweep: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.cards % 4 or not 4 <= self.cards <= 52:
            raise ValueError("cards must be a multiple of 4 between 4 and 52")
        if self.suit_mode not in ("single", "full"):
            raise ValueError("suit mode is single or full")
        if self.suit_mode == "single" and self.cards > 12:
            raise ValueError("a single suit holds at most 13 cards, so at most 12 in play")
        if self.engine not in ("retro", "setro", "both"):
            raise ValueError("engine is retro, setro or both")


def shapes_for(cards: int, suit_mode: str) -> list[Shape]:
    if suit_mode == "single":
        if cards > 13:
            raise ValueError("single-suit mode is limited to 13 cards")
        return single_suit_shapes(cards)
    return enumerate_shapes(cards)


def plan(spec: BuildSpec) -> list[list[Partition]]:
    """Partitions per depth, including every prior partition they need."""
    targets = [
        Partition(shape, leader, trump)
        for cards in range(4, spec.cards + 1, 4)
        for shape in shapes_for(cards, spec.suit_mode)
        for trump in spec.trumps
        for leader in spec.leaders
    ]
    ordered = _dependency_order(targets, lambda p: False)
    by_depth: list[list[Partition]] = [[] for _ in range(spec.cards // 4)]
    for p in ordered:
        by_depth[p.d - 1].append(p)
    return by_depth


def _build_one(root: str, part: Partition, engine: str, debug_sweep: bool) -> dict | None:
    """Build one partition from priors on disk; returns the setro report."""
    root_path = Path(root)
    out = None
    if engine in ("retro", "both"):
        rdb = RetroDatabase(root_path)
        if part not in rdb:
            rdb.ensure([part])
    if engine in ("setro", "both"):
        sdb = SetroDatabase(root_path, debug_sweep=debug_sweep)
        if part not in sdb:
            tree, report = build_setro_db(
                part.d, part.shape, part.leader, part.trump, sdb,
                tables=sdb.tables, debug_sweep=debug_sweep,
            )
            tree.save(root_path)
            out = report.as_dict()
    return out


def run_build(spec: BuildSpec) -> list[dict]:
    """Build every planned partition bottom-up; returns new setro reports."""
    reports: list[dict] = []
    root = str(spec.out)
    for level in plan(spec):
        if spec.workers > 1 and len(level) > 1:
            with ProcessPoolExecutor(spec.workers) as pool:
                results = list(
                    pool.map(_build_one, [root] * len(level), level,
                             [spec.engine] * len(level), [spec.debug_sweep] * len(level))
                )
        else:
            results = [_build_one(root, p, spec.engine, spec.debug_sweep) for p in level]
        fresh = [r for r in results if r is not None]
        reports.extend(fresh)
        _update_manifests(spec.out, level, fresh)
    return reports


def _update_manifests(root: Path, level: Sequence[Partition], reports: Sequence[dict]) -> None:
    dirs: dict[Path, dict[str, float]] = {}
    for p in level:
        dirs.setdefault(setdb_dir(root, 4 * p.d, p.trump, p.leader), {})
    for r in reports:
        key = setdb_dir(root, 4 * r["d"], Trump[r["trump"]], Seat[r["leader"]])
        dirs.setdefault(key, {})[r["shape"]] = r["elapsed"]
    for directory, elapsed in dirs.items():
        if directory.exists():
            write_manifest(directory, elapsed)


def iter_trees(root: Path):
    """Every stored set-database file under ``root``."""
    base = Path(root) / "setdb"
    if not base.exists():
        return
    for path in sorted(base.glob("*/*/*/*.sgdb"), key=lambda p: (int(p.parts[-4]), str(p))):
        yield path


def validate(
    root: Path, against: str = "retro", samples: int | None = None, seed: int = 0,
    cards: int | None = None,
) -> dict:
    """Compare stored lookups with the retrograde tables or direct minimax.

    ``samples=None`` checks every state; otherwise that many uniformly
    drawn states per partition.
    """
    rng = np.random.default_rng(seed)
    rdb = RetroDatabase(root) if against == "retro" else None
    checked = 0
    failures = 0
    partitions = 0
    mismatches: list[str] = []
    for path in iter_trees(root):
        tree = PartitionTree.load(path)
        part = tree.partition
        if cards is not None and 4 * part.d != cards:
            continue
        partitions += 1
        total = part.state_count
        if samples is None:
            ranks = np.arange(total, dtype=np.int64)
        elif samples <= 0:
            continue
        else:
            ranks = np.sort(rng.integers(0, total, size=samples))
        looked = tree.lookup_batch(deal_words_batch(part, ranks)).astype(np.int64)
        if against == "retro":
            truth = rdb.get(part).values[ranks].astype(np.int64)
        else:
            truth = np.array(
                [minimax_value(unrank(part.shape, part.leader, part.trump, int(r))) for r in ranks]
            )
        bad = np.nonzero(looked != truth)[0]
        failures += len(bad)
        for i in bad[: 10 - len(mismatches)]:
            deal = unrank(part.shape, part.leader, part.trump, int(ranks[i]))
            mismatches.append(f"{format_deal(deal)}: db {looked[i]} vs {against} {truth[i]}")
        checked += len(ranks)
    return {
        "partitions": partitions,
        "states_checked": checked,
        "mismatches": failures,
        "examples": mismatches,
        "against": against,
        "seed": seed,
    }


def stats(root: Path) -> list[dict]:
    """Per-depth totals over every stored partition."""
    rows: dict[int, dict] = {}
    for path in iter_trees(root):
        tree = PartitionTree.load(path)
        st = tree.stats()
        d = tree.partition.d
        row = rows.setdefault(
            d, {"cards": 4 * d, "partitions": 0, "entries": 0, "nodes": 0, "bytes": 0,
                "states_covered": 0, "build_seconds": 0.0}
        )
        row["partitions"] += 1
        row["entries"] += st.entries
        row["nodes"] += st.nodes
        row["bytes"] += st.bytes
        row["states_covered"] += st.states_covered
        manifest = read_manifest(path.parent)
        if path.stem in manifest:
            row["build_seconds"] += manifest[path.stem].elapsed
    out = []
    for d in sorted(rows):
        row = rows[d]
        row["states_per_byte"] = row["states_covered"] / row["bytes"] if row["bytes"] else 0.0
        row["build_seconds"] = round(row["build_seconds"], 4)
        out.append(row)
    return out


# --- argument handling ----------------------------------------------------------


def _seats(text: str) -> tuple[Seat, ...]:
    if text.lower() == "all":
        return tuple(Seat)
    return (Seat[text.upper()],)


def _trumps(text: str) -> tuple[Trump, ...]:
    if text.lower() == "all":
        return tuple(Trump)
    return (Trump.parse(text),)


def _root(args) -> Path:
    return Path(args.db or os.environ.get(ENV_ROOT) or DEFAULT_ROOT)


def _emit(args, payload, text: str) -> None:
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def cmd_build(args) -> int:
    spec = BuildSpec(
        cards=args.cards,
        suit_mode=args.suit_mode,
        trumps=_trumps(args.trump),
        leaders=_seats(args.leader),
        out=_root(args),
        engine=args.engine,
        debug_sweep=args.debug_sweep,
        workers=args.workers or os.cpu_count() or 1,
    )
    started = time.perf_counter()
    reports = run_build(spec)
    elapsed = time.perf_counter() - started
    totals: dict[int, int] = {}
    for r in reports:
        totals[r["d"]] = totals.get(r["d"], 0) + r["entries"]
    payload = {"built": len(reports), "entries_by_depth": totals, "elapsed": round(elapsed, 3), "reports": reports}
    lines = [
        f"{r['d'] * 4:>3} cards {r['trump']:>2} {r['leader']} {r['shape']}: "
        f"{r['entries']} entries ({r['entries_before']} before compaction), "
        f"{r['independent']} independent, {r['duplicates']} duplicates"
        for r in reports
    ]
    lines.append(f"built {len(reports)} partitions in {elapsed:.2f}s")
    _emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_query(args) -> int:
    deal = parse_deal(args.deal, leader=args.leader, trump=args.trump)
    if deal.d == 0:
        _emit(args, {"value": 0}, "0")
        return EXIT_OK
    sdb = SetroDatabase(_root(args))
    tree = sdb.get(deal.partition)
    if tree is None:
        print(f"no database for {deal.partition}; build {4 * deal.d} cards first", file=sys.stderr)
        return EXIT_MISSING
    value = tree.lookup_state(deal)
    if value is None:
        print(f"deal not covered by {deal.partition}", file=sys.stderr)
        return EXIT_MISSING
    _emit(args, {"deal": format_deal(deal), "value": value}, str(value))
    return EXIT_OK


def cmd_validate(args) -> int:
    samples = None if args.exhaustive else args.samples
    if samples == 0:
        print("warning: zero samples requested, nothing checked", file=sys.stderr)
    report = validate(_root(args), args.against, samples, args.seed, args.cards)
    text = (
        f"{report['states_checked']} states in {report['partitions']} partitions checked "
        f"against {args.against}: {report['mismatches']} mismatches"
    )
    if report["examples"]:
        text += "\n" + "\n".join(report["examples"])
    _emit(args, report, text)
    return EXIT_MISMATCH if report["mismatches"] else EXIT_OK


def cmd_stats(args) -> int:
    rows = stats(_root(args))
    header = f"{'cards':>5} {'parts':>6} {'entries':>8} {'nodes':>7} {'bytes':>8} {'states':>9} {'st/byte':>8} {'secs':>7}"
    lines = [header] + [
        f"{r['cards']:>5} {r['partitions']:>6} {r['entries']:>8} {r['nodes']:>7} {r['bytes']:>8} "
        f"{r['states_covered']:>9} {r['states_per_byte']:>8.2f} {r['build_seconds']:>7.2f}"
        for r in rows
    ]
    _emit(args, rows, "\n".join(lines))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddendgame", description=__doc__.splitlines()[0])
    parser.add_argument("--db", help=f"database root (default ${ENV_ROOT} or ./{DEFAULT_ROOT})")
    parser.add_argument("--json", action="store_true", help="machine-readable output")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build databases bottom-up")
    b.add_argument("--cards", type=int, required=True)
    b.add_argument("--suit-mode", choices=("single", "full"), default="single")
    b.add_argument("--trump", default="NT", help="NT, S, H, D, C or all")
    b.add_argument("--leader", default="E", help="N, E, S, W or all")
    b.add_argument("--engine", choices=("retro", "setro", "both"), default="setro")
    b.add_argument("--debug-sweep", action="store_true", help="check every state is covered")
    b.add_argument("--workers", type=int, default=None)
    b.set_defaults(func=cmd_build)

    q = sub.add_parser("query", help="value of one deal")
    q.add_argument("deal", help='e.g. "N:98... E:54... S:76... W:32... leader=E trump=NT"')
    q.add_argument("--leader")
    q.add_argument("--trump")
    q.set_defaults(func=cmd_query)

    v = sub.add_parser("validate", help="compare stored values with an oracle")
    v.add_argument("--against", choices=("retro", "minimax"), default="retro")
    mode = v.add_mutually_exclusive_group()
    mode.add_argument("--exhaustive", action="store_true")
    mode.add_argument("--samples", type=int, default=1000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--cards", type=int, default=None, help="only partitions of this size")
    v.set_defaults(func=cmd_validate)

    s = sub.add_parser("stats", help="per-depth storage statistics")
    s.set_defaults(func=cmd_stats)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except (IncompletePriorError, FileNotFoundError) as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DealError, FormatError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT


if __name__ == "__main__":
    sys.exit(main())
