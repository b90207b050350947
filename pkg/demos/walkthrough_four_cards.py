"""Build the 4-card spade database with East on lead and look inside it.

Run: python demos/walkthrough_four_cards.py
"""

from __future__ import annotations

from ddendgame import Seat, Shape, Trump
from ddendgame.core import format_deal, iter_deals
from ddendgame.setro import Probe, build_setro_db
from ddendgame.setdb import unpack_node


def main() -> None:
    probes: list[Probe] = []
    trace: list = []
    tree, report = build_setro_db(1, Shape.single_suit(1), Seat.E, Trump.NT, {}, probes=probes, trace=trace)

    print("independent states and the sets they grew into:")
    for state, entry in trace:
        print(f"  {format_deal(state, with_context=False):<32} -> {entry}")
    print("binary-search probes (x-count, consistent):", [(p.xcount, p.consistent) for p in probes])

    print(f"\nafter compaction: {tree.entry_count} entries in {tree.node_count} nodes")
    for entry in tree.entries():
        print("  ", entry)
    for word in tree.nodes():
        key, lo, hi, sib, child, is_entry = unpack_node(word)
        print(f"   node key={key:016b} bounds=[{lo},{hi}] sibling=+{sib} entry={is_entry}")

    print("\nlookups:")
    for deal in list(iter_deals(tree.partition))[:6]:
        print(f"  {format_deal(deal, with_context=False):<32} NS take {tree.lookup_state(deal)}")
    print("\nreport:", report.as_dict())


if __name__ == "__main__":
    main()
