"""Instance generators and batch runs with operation-count bound checks.

Randomness comes from :class:`random.Random` (Mersenne Twister), seeded per
instance, and only ``randint``/``random`` draws are used so a seed maps to
the same instance on every platform. Generated numbers are small rationals.
"""
from __future__ import annotations

import csv
import io
import json
import math
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

from .engine import Counters, SolverConfig, SolverError, round_bound, solve
from .model import BLOCKED, MarketInstance, dump_instance, make_instance
from .verify import check_approx_equilibrium

FAMILIES = ("uniform-random", "shipping-grid", "blocked-random", "reserve-price")


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    family: str = "uniform-random"
    n: int = 3
    m: int = 3
    seed: int = 0
    budget_range: tuple = (1, 10)
    utility_range: tuple = (0, 10)
    # costs are drawn as k / cost_denominator with k in cost_range
    cost_range: tuple = (0, 10)
    cost_denominator: int = 10
    blocked_probability: float = 0.3
    grid: int = 5
    zero_costs: bool = False
    max_tries: int = 100

    def label(self) -> str:
        return f"{self.family}/n{self.n}m{self.m}/s{self.seed}"


def _row_utilities(rng, m, lo, hi):
    row = [rng.randint(lo, hi) for _ in range(m)]
    if not any(row):
        row[rng.randint(0, m - 1)] = rng.randint(max(lo, 1), max(hi, 1))
    return row


def shipping_grid_layout(spec: GeneratorSpec):
    """Buyer and good locations used by the shipping-grid family."""
    rng = random.Random(spec.seed)
    return _layout(rng, spec)


def _layout(rng, spec):
    buyers = [(rng.randint(0, spec.grid), rng.randint(0, spec.grid)) for _ in range(spec.n)]
    goods = [(rng.randint(0, spec.grid), rng.randint(0, spec.grid)) for _ in range(spec.m)]
    return buyers, goods


def grid_distance(a, b) -> int:
    return abs(a[0] - b[0]) + abs(a[1] - b[1])


def generate(spec: GeneratorSpec) -> MarketInstance:
    """Deterministically generate a valid instance of the requested family."""
    if spec.family not in FAMILIES:
        raise GeneratorError(f"unknown family {spec.family!r}")
    if spec.n < 1 or spec.m < 1:
        raise GeneratorError("need at least one buyer and one good")
    if spec.budget_range[0] < 1 or spec.utility_range[1] < 1:
        raise GeneratorError("budgets and some utilities must be positive")
    rng = random.Random(spec.seed)
    n, m = spec.n, spec.m
    den = spec.cost_denominator

    def cost():
        if spec.zero_costs:
            return Fraction(0)
        return Fraction(rng.randint(*spec.cost_range), den)

    layout = _layout(rng, spec) if spec.family == "shipping-grid" else None
    budgets = [rng.randint(*spec.budget_range) for _ in range(n)]
    utilities = [_row_utilities(rng, m, *spec.utility_range) for _ in range(n)]

    if spec.family == "uniform-random":
        costs = [[cost() for _ in range(m)] for _ in range(n)]
    elif spec.family == "shipping-grid":
        buyers, goods = layout
        costs = [[Fraction(grid_distance(b, g), den) for g in goods] for b in buyers]
    elif spec.family == "reserve-price":
        surcharge = [cost() for _ in range(m)]
        premium = [rng.random() < 0.5 for _ in range(n)]
        costs = [[surcharge[j] if premium[i] else Fraction(0) for j in range(m)] for i in range(n)]
    else:  # blocked-random
        q = spec.blocked_probability
        costs = []
        for i in range(n):
            for _ in range(spec.max_tries):
                row = [BLOCKED if rng.random() < q else cost() for _ in range(m)]
                if any(row[j] is not BLOCKED and utilities[i][j] > 0 for j in range(m)):
                    break
            else:
                raise GeneratorError(f"no usable good for buyer {i} after {spec.max_tries} tries "
                                     f"(blocked probability {q})")
            costs.append(row)

    return make_instance(budgets, utilities, costs,
                         buyer_ids=[f"b{i}" for i in range(n)], good_ids=[f"g{j}" for j in range(m)])


# ---------------------------------------------------------------------------
# counter bounds


def counter_bounds(inst: MarketInstance, eps) -> dict:
    """Upper bounds on the solver counters for ``inst`` at ``eps``."""
    n, m = inst.n, inst.m
    R = round_bound(inst, eps)
    B = (1 + float(eps)) * float(inst.total_budget())
    return {
        "R": R,
        # the same bound with a natural log and no rounding, for reference
        "R_natural_log": 1 + m / float(eps) * math.log(B / float(eps)),
        "rounds": R,
        "price_raised": R - 1,
        "sink_fed_supply_exhausted": m,
        "edge_drop_walks": n * R,
        "edge_drops": n * R,
        "surplus_exhausted": n + n * R,
        "walks": 2 * n * R + n + m + R,
    }


def check_counter_bounds(inst: MarketInstance, eps, counters: Counters) -> list:
    """Names of every counter that exceeds its bound (empty when all hold)."""
    bounds = counter_bounds(inst, eps)
    got = counters.as_dict()
    return [f"{key}={got[key]} > {bounds[key]}" for key in
            ("rounds", "price_raised", "sink_fed_supply_exhausted", "edge_drop_walks",
             "edge_drops", "surplus_exhausted", "walks")
            if got[key] > bounds[key]]


# ---------------------------------------------------------------------------
# batch runs


@dataclass
class BenchConfig:
    numeric: str = "exact"
    tol: float = 1e-9
    workers: int = 1
    debug: bool = False


@dataclass
class BenchRow:
    label: str
    n: int
    m: int
    counters: dict
    bounds: dict
    seconds: float
    verified: bool
    violations: list
    error: str | None = None
    instance: str | None = None

    @property
    def ok(self) -> bool:
        return self.verified and not self.violations and self.error is None


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.ok for r in self.rows)

    def aggregate(self) -> dict:
        """Worst-case ratios of counters to their bounds; ``None`` when empty."""
        if not self.rows:
            return {"rounds_ratio": None, "walks_ratio": None, "edge_drop_walks_ratio": None}
        done = [r for r in self.rows if r.error is None]

        def worst(key):
            vals = [r.counters[key] / r.bounds[key] for r in done if r.bounds[key]]
            return max(vals) if vals else None

        return {
            "rounds_ratio": worst("rounds"),
            "walks_ratio": worst("walks"),
            "edge_drop_walks_ratio": worst("edge_drop_walks"),
        }

    def as_dict(self, timing: bool = True) -> dict:
        """Report as plain data; ``timing=False`` drops wall times so the
        result depends only on the inputs."""
        return {
            "passed": self.passed,
            "aggregate": self.aggregate(),
            "instances": [
                {
                    "label": r.label, "n": r.n, "m": r.m, "counters": r.counters,
                    "bounds": r.bounds, "seconds": r.seconds if timing else None, "verified": r.verified,
                    "violations": r.violations, "error": r.error, "instance": r.instance,
                }
                for r in self.rows
            ],
        }

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.as_dict(timing), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        cols = ["label", "n", "m", "rounds", "walks", "price_raised", "sink_fed", "cycle_resolved",
                "edge_dropped", "edge_drops", "R", "seconds", "verified", "ok"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            c = r.counters
            w.writerow([r.label, r.n, r.m, c.get("rounds"), c.get("walks"), c.get("price_raised"),
                        c.get("sink_fed"), c.get("cycle_resolved"), c.get("edge_dropped"),
                        c.get("edge_drops"), r.bounds.get("R"), f"{r.seconds:.4f}", r.verified, r.ok])
        return buf.getvalue()


def _run_one(item, eps, config: BenchConfig) -> BenchRow:
    if isinstance(item, GeneratorSpec):
        inst, label = generate(item), item.label()
    elif isinstance(item, tuple):
        label, inst = item
    else:
        inst, label = item, "instance"
    bounds = counter_bounds(inst, eps)
    solver_cfg = SolverConfig(numeric=config.numeric, tol=config.tol, debug=config.debug)
    t0 = time.perf_counter()
    try:
        res = solve(inst, eps, solver_cfg)
    except SolverError as exc:
        return BenchRow(label, inst.n, inst.m, {}, bounds, time.perf_counter() - t0, False, [],
                        error=str(exc), instance=dump_instance(inst))
    seconds = time.perf_counter() - t0
    rep = check_approx_equilibrium(inst, res.prices, res.allocation, res.eps, res.numeric)
    violations = check_counter_bounds(inst, eps, res.counters)
    row = BenchRow(label, inst.n, inst.m, res.counters.as_dict(), bounds, seconds, rep.passed, violations)
    if not row.ok:
        row.instance = dump_instance(inst)
    return row


def run_benchmark(specs, eps, config: BenchConfig | None = None) -> BenchReport:
    """Solve, verify and bound-check every instance in ``specs``.

    ``specs`` may mix :class:`GeneratorSpec` items, instances, and
    ``(label, instance)`` pairs. Rows come back in input order.
    """
    config = config or BenchConfig()
    specs = list(specs)
    if config.workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(lambda s: _run_one(s, eps, config), specs))
    else:
        rows = [_run_one(s, eps, config) for s in specs]
    return BenchReport(rows)
