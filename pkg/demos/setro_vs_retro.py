"""Build the 12-card spade database both ways and compare size and values.

Run: python demos/setro_vs_retro.py   (about 15 seconds)
"""

from __future__ import annotations

import time

import numpy as np

from ddendgame import Partition, Seat, Shape, Trump
from ddendgame.retro import RetroDatabase
from ddendgame.setro import SetroDatabase


def main() -> None:
    for d in (1, 2, 3):
        part = Partition(Shape.single_suit(d), Seat.E, Trump.NT)
        t0 = time.perf_counter()
        setro = SetroDatabase()
        setro.ensure([part])
        t1 = time.perf_counter()
        retro = RetroDatabase()
        retro.ensure([part])
        t2 = time.perf_counter()
        tree = setro.trees[part]
        stats = tree.stats()
        same = np.array_equal(tree.dense_values(), np.asarray(retro.get(part).values, dtype=np.int8))
        report = setro.reports[part]
        print(
            f"{4 * d:>2} cards: {part.state_count:>7} states -> {stats.entries:>3} sets, "
            f"{stats.bytes:>5} bytes ({stats.states_per_byte:6.1f} states/byte); "
            f"{report.independent_states} of {report.generated_states} generated states independent; "
            f"setro {t1 - t0:5.2f}s retro {t2 - t1:5.2f}s; identical values: {same}"
        )


if __name__ == "__main__":
    main()
