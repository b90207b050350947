"""Exact double-dummy Bridge endgame databases built from consistent sets."""

from __future__ import annotations

from .core import (
    CanonicalDeal,
    Card,
    DealError,
    ParseError,
    Partition,
    Seat,
    Shape,
    Suit,
    Trump,
    canonicalize,
    enumerate_shapes,
    first_deal,
    format_deal,
    next_suit_permutation,
    parse_deal,
)
from .retro import FormatError, RetroDatabase, RetroDB, build_retro_db
from .rules import minimax_value, trick_successors
from .setdb import PartitionTree, compact
from .sets import SetEntry, candidate_with_xcounts, member, subsumes, try_merge
from .setro import BuildReport, SetroDatabase, build_setro_db, database_lookup, generalize_to_set

__version__ = "0.1.0"

__all__ = [
    "BuildReport",
    "CanonicalDeal",
    "Card",
    "DealError",
    "FormatError",
    "ParseError",
    "Partition",
    "PartitionTree",
    "RetroDB",
    "RetroDatabase",
    "Seat",
    "SetEntry",
    "SetroDatabase",
    "Shape",
    "Suit",
    "Trump",
    "build_retro_db",
    "build_setro_db",
    "candidate_with_xcounts",
    "canonicalize",
    "compact",
    "database_lookup",
    "enumerate_shapes",
    "first_deal",
    "format_deal",
    "generalize_to_set",
    "member",
    "minimax_value",
    "next_suit_permutation",
    "parse_deal",
    "subsumes",
    "trick_successors",
    "try_merge",
]
