#!/usr/bin/env python3
"""Without transaction costs the market is the classic linear Fisher
market. The auction and the convex program should agree up to a factor
close to 1 + eps.
"""
import random
from fractions import Fraction

import numpy as np

from tcfisher import minimize, solve
from tcfisher.bench import GeneratorSpec, generate

eps = Fraction(1, 100)
worst = 1.0
for seed in range(10):
    rng = random.Random(seed)
    inst = generate(GeneratorSpec(n=rng.randint(1, 4), m=rng.randint(1, 4), seed=seed, zero_costs=True))
    auction = np.array([float(p) for p in solve(inst, eps).prices])
    oracle = np.maximum(minimize(inst).p, float(eps))
    ratio = np.maximum(auction / oracle, oracle / auction).max()
    worst = max(worst, ratio)
    print(f"seed {seed}: n={inst.n} m={inst.m}  auction {np.round(auction, 4)}  "
          f"oracle {np.round(oracle, 4)}  ratio {ratio:.4f}")
print(f"worst ratio {worst:.4f}, 1+3eps = {1 + 3 * float(eps):.2f}")
