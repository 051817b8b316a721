#!/usr/bin/env python3
"""Two buyers, two goods, and a shipping cost that makes one good almost
worthless to one of them.

Buyer i values good 1 a thousand times more than good 2, pays 1 per unit to
ship good 1 and 1000 per unit to ship good 2. Buyer k is indifferent and ships for free. At equilibrium
both goods cost 1/sqrt(2), and i ends up with about 0.586 of good 1.
"""
import math

from tcfisher import SolverConfig, check_approx_equilibrium, make_instance, solve, solve_oracle


def main():
    market = make_instance(
        budgets=[1, 1],
        utilities=[[1000, 1], [1, 1]],
        costs=[[1, 1000], [0, 0]],
        buyer_ids=["i", "k"],
    )

    # The auction: prices climb from eps in (1+eps) steps until no buyer
    # has money left over.
    for eps in (0.1, 0.01, 0.001):
        res = solve(market, eps, SolverConfig(numeric="float64"))
        p = res.prices_float()
        x = res.allocation_float()
        ok = check_approx_equilibrium(market, res.prices, res.allocation, eps, res.numeric).passed
        print(f"eps={eps:<6} prices=({p[0]:.5f}, {p[1]:.5f})  "
              f"x_i1={x[0][0]:.5f} x_k1={x[1][0]:.5f} x_k2={x[1][1]:.5f}  "
              f"rounds={res.counters.rounds:<6} verified={ok}")

    # The convex program gives the exact answer to compare against.
    dual, x, kkt = solve_oracle(market)
    print(f"\nconvex program: prices=({dual.p[0]:.8f}, {dual.p[1]:.8f}), 1/sqrt(2)={1 / math.sqrt(2):.8f}")
    print(f"allocation:\n{x.round(6)}")
    print(f"largest KKT residual: {kkt.max():.1e}")


if __name__ == "__main__":
    main()
