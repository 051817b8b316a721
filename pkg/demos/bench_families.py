#!/usr/bin/env python3
"""Run each generated instance family and compare the work done with the
worst-case bounds.

Ratios near 1 for rounds are expected: every good's price climbs the same
ladder. Walk counts sit far below their bound.
"""
from fractions import Fraction

from tcfisher.bench import FAMILIES, BenchConfig, GeneratorSpec, run_benchmark


def main():
    eps = Fraction(1, 20)
    for family in FAMILIES:
        specs = [GeneratorSpec(family, n=4, m=4, seed=s) for s in range(20)]
        report = run_benchmark(specs, eps, BenchConfig(workers=4))
        agg = report.aggregate()
        print(f"{family:<15} passed={report.passed}  "
              f"rounds/R={agg['rounds_ratio']:.3f}  walks/bound={agg['walks_ratio']:.3f}  "
              f"edge-drop walks/nR={agg['edge_drop_walks_ratio']:.3f}")


if __name__ == "__main__":
    main()
