"""Generalize the first 8-card deal into ever larger sets and test each one.

The deal N:98 S:76 E:54 W:32 with East leading is worth 2 tricks to NS.
Replacing low cards by x keeps that value until North's 8 becomes an x.

Run: python demos/generalizing_a_state.py
"""

from __future__ import annotations

from ddendgame import Seat, Shape, Trump
from ddendgame.core import first_deal
from ddendgame.sets import candidate_with_xcounts, member_count
from ddendgame.setro import SetroDatabase, database_lookup, oracle, setwise_bounds, successors


def main() -> None:
    prior = SetroDatabase()
    deal = first_deal(Shape.single_suit(2), Seat.E, Trump.NT)
    prior.ensure([deal.partition])
    v = database_lookup(deal, prior)
    print(f"{deal} is worth {v}\n")
    print(f"{'set':<4}{'entry':<46}{'deals':>6}  consistent  set-wise bounds")
    for label, x in zip("abcdefgh", range(1, 9)):
        entry = candidate_with_xcounts(deal, [x, 0, 0, 0])
        bounds = setwise_bounds(entry, prior)
        print(f"{label:<4}{str(entry):<46}{member_count(entry):>6}  {str(oracle(entry, v, prior)):<10}  {bounds}")
    f = candidate_with_xcounts(deal, [6, 0, 0, 0], v)
    print("\nnext state after storing f:", *successors(deal, f))


if __name__ == "__main__":
    main()
