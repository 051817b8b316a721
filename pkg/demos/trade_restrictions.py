#!/usr/bin/env python3
"""Blocked trades and exact arithmetic.

Three importers and three goods; some pairs are forbidden outright. The
solver runs on exact rationals, so the final budgets balance to the last
digit, and the operation counters can be checked against their bounds.
"""
from fractions import Fraction

from tcfisher import BLOCKED, check_approx_equilibrium, make_instance, round_bound, solve
from tcfisher.bench import check_counter_bounds


def main():
    market = make_instance(
        budgets=[5, 3, 2],
        utilities=[[4, 2, 1], [1, 3, 3], [2, 2, 5]],
        costs=[[0, Fraction(1, 2), BLOCKED],
               [BLOCKED, 0, Fraction(1, 4)],
               [Fraction(1, 3), BLOCKED, 0]],
        buyer_ids=["north", "east", "south"],
        good_ids=["grain", "steel", "timber"],
    )
    eps = Fraction(1, 20)
    res = solve(market, eps)

    print("prices:")
    for g, p in zip(market.good_ids, res.prices):
        print(f"  {g:<7} {float(p):.6f}")
    print("spend per buyer (exact):")
    for i, b in enumerate(market.buyer_ids):
        spend = sum((res.prices[j] + market.costs[i][j]) * res.allocation[i][j]
                    for j in range(market.m) if market.costs[i][j] is not BLOCKED)
        print(f"  {b:<6} {spend} of budget {market.budgets[i]}")

    rep = check_approx_equilibrium(market, res.prices, res.allocation, eps)
    print(rep.format_table())

    c = res.counters
    print(f"\nrounds {c.rounds} (bound {round_bound(market, eps)}), walks {c.walks}, "
          f"edge-drop walks {c.edge_drop_walks}")
    print("bound violations:", check_counter_bounds(market, eps, c) or "none")


if __name__ == "__main__":
    main()
