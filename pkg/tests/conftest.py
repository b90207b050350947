from __future__ import annotations

import itertools
import re

import pytest

from ddendgame.core import (
    Card,
    Partition,
    Seat,
    Shape,
    Trump,
    canonicalize,
    enumerate_shapes,
    iter_deals,
)
from ddendgame.retro import RetroDatabase
from ddendgame.setro import SetroDatabase

# acceptance outcomes, printed once at the end of the run
ACCEPTANCE: dict[str, tuple[bool | None, str]] = {}


def record(criterion: str, ok: bool | None, detail: str) -> None:
    ACCEPTANCE[criterion] = (ok, detail)
    print(f"{criterion}: {'PASS' if ok else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda k: [(int(t), "") if t.isdigit() else (-1, t) for t in re.findall(r"\d+|\D+", k)]):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'} - {detail}")


def spade_partition(d: int, leader=Seat.E, trump=Trump.NT) -> Partition:
    return Partition(Shape.single_suit(d), Seat(leader), Trump(trump))


@pytest.fixture(scope="session")
def single_setro() -> SetroDatabase:
    """Spade-only NT trees up to 12 cards, East leading at the top."""
    db = SetroDatabase(debug_sweep=True)
    db.ensure([spade_partition(3)])
    return db


@pytest.fixture(scope="session")
def single_retro() -> RetroDatabase:
    db = RetroDatabase()
    db.ensure([spade_partition(3)])
    return db


@pytest.fixture(scope="session")
def all_d1() -> SetroDatabase:
    """Every 4-card partition: all shapes, trumps and leaders."""
    db = SetroDatabase()
    db.ensure([Partition(s, l, t) for s in enumerate_shapes(4) for l in Seat for t in Trump])
    return db


@pytest.fixture(scope="session")
def all_d1_retro() -> RetroDatabase:
    db = RetroDatabase()
    db.ensure([Partition(s, l, t) for s in enumerate_shapes(4) for l in Seat for t in Trump])
    return db


def brute_member(entry, deal) -> bool:
    """Membership straight from the definition, card by card."""
    if deal.partition != entry.partition:
        return False
    for s in range(4):
        full = entry.full_masks(s)
        for i, holder in enumerate(deal.words[s]):
            if not full[i] >> holder & 1:
                return False
    return True


def all_deals(partition: Partition):
    return list(iter_deals(partition))


def absolute_deals_one_suit(per_seat: int):
    """All absolute spade deals with the given ranks in play, from itertools."""
    n = 4 * per_seat
    for ranks in itertools.combinations(range(2, 15), n):
        yield ranks


def make_absolute(hands_ranks, leader=Seat.N, trump=Trump.NT):
    return canonicalize([[Card(s, r) for s, r in h] for h in hands_ranks], leader, trump)
