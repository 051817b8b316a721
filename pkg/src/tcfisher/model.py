"""Market instances, the instance file format, and price/demand primitives."""
from __future__ import annotations

import enum
import json
import numbers
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from .numeric import Numeric, infer_backend


class _Blocked(enum.Enum):
    BLOCKED = "blocked"

    def __repr__(self) -> str:
        return "BLOCKED"

    __str__ = __repr__


#: Marker for a forbidden buyer/good pair (an infinite transaction cost).
BLOCKED = _Blocked.BLOCKED


class InstanceError(ValueError):
    """Raised for malformed or invalid instance documents."""


@dataclass(frozen=True)
class MarketInstance:
    """A linear Fisher market with per-pair transaction costs.

    Every good has unit supply. Instances read from files with a ``supply``
    other than one are rescaled at parse time; ``supply`` keeps the original
    amounts so that results can be mapped back with :meth:`denormalize`.
    """

    budgets: tuple
    utilities: tuple
    costs: tuple
    buyer_ids: tuple = ()
    good_ids: tuple = ()
    supply: tuple = ()
    epsilon: Fraction | None = None

    def __post_init__(self):
        n, m = len(self.budgets), len(self.utilities[0]) if self.utilities else 0
        if not self.buyer_ids:
            object.__setattr__(self, "buyer_ids", tuple(f"b{i}" for i in range(n)))
        if not self.good_ids:
            object.__setattr__(self, "good_ids", tuple(f"g{j}" for j in range(m)))
        if not self.supply:
            object.__setattr__(self, "supply", (Fraction(1),) * m)

    @property
    def n(self) -> int:
        return len(self.budgets)

    @property
    def m(self) -> int:
        return len(self.utilities[0]) if self.utilities else 0

    def blocked(self, i: int, j: int) -> bool:
        return self.costs[i][j] is BLOCKED

    def usable(self, i: int, j: int) -> bool:
        return self.costs[i][j] is not BLOCKED and self.utilities[i][j] > 0

    def total_budget(self) -> Fraction:
        return sum(self.budgets, Fraction(0))

    def denormalize(self, prices, allocation):
        """Map unit-supply prices/allocations back to the file's supplies."""
        s = self.supply
        p = [pj / sj if isinstance(pj, numbers.Rational) else pj / float(sj) for pj, sj in zip(prices, s)]
        x = [
            [xij * sj if isinstance(xij, numbers.Rational) else xij * float(sj) for xij, sj in zip(row, s)]
            for row in allocation
        ]
        return p, x


def make_instance(budgets, utilities, costs, *, buyer_ids=(), good_ids=(), epsilon=None,
                  check=True) -> MarketInstance:
    """Build an instance from plain sequences, converting numbers to fractions.

    Costs may contain ``BLOCKED`` or the string ``"blocked"``.
    """
    def cost(v):
        if v is BLOCKED or (isinstance(v, str) and v.strip().lower() == "blocked"):
            return BLOCKED
        return _to_fraction(v)

    inst = MarketInstance(
        budgets=tuple(_to_fraction(b) for b in budgets),
        utilities=tuple(tuple(_to_fraction(u) for u in row) for row in utilities),
        costs=tuple(tuple(cost(c) for c in row) for row in costs),
        buyer_ids=tuple(buyer_ids),
        good_ids=tuple(good_ids),
        epsilon=None if epsilon is None else _to_fraction(epsilon),
    )
    if check:
        problems = validate(inst)
        if problems:
            raise InstanceError("; ".join(problems.issues))
    return inst


def _to_fraction(v) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(str(v))
    if isinstance(v, str):
        try:
            return Fraction(v.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise InstanceError(f"not a number: {v!r}") from exc
    if isinstance(v, bool):
        raise InstanceError(f"not a number: {v!r}")
    try:
        return Fraction(v)
    except TypeError as exc:
        raise InstanceError(f"not a number: {v!r}") from exc


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    issues: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def __bool__(self) -> bool:
        # truthy when there is something to report
        return bool(self.issues)


def validate(inst: MarketInstance) -> ValidationReport:
    """List every violated instance invariant (empty report iff valid)."""
    rep = ValidationReport()
    n, m = inst.n, inst.m
    if n == 0:
        rep.issues.append("market has no buyers")
    if m == 0:
        rep.issues.append("market has no goods")
    if len(inst.utilities) != n or len(inst.costs) != n:
        rep.issues.append(f"dimension mismatch: {n} budgets, {len(inst.utilities)} utility rows, "
                          f"{len(inst.costs)} cost rows")
        return rep
    for i in range(n):
        if len(inst.utilities[i]) != m or len(inst.costs[i]) != m:
            rep.issues.append(f"dimension mismatch, buyer {i + 1}: expected {m} goods")
    if rep.issues:
        return rep
    for i in range(n):
        if inst.budgets[i] <= 0:
            rep.issues.append(f"non-positive budget, buyer {i + 1}")
        for j in range(m):
            if inst.utilities[i][j] < 0:
                rep.issues.append(f"negative utility, buyer {i + 1}, good {j + 1}")
            c = inst.costs[i][j]
            if c is not BLOCKED and c < 0:
                rep.issues.append(f"negative cost, buyer {i + 1}, good {j + 1}")
        if not any(inst.usable(i, j) for j in range(m)):
            rep.issues.append(f"buyer has no usable good, buyer {i + 1}")
    return rep


# ---------------------------------------------------------------------------
# prices and demand


@dataclass(frozen=True)
class BangPerBuck:
    alpha: object
    demand_set: tuple


def effective_price(inst: MarketInstance, p: Sequence, i: int, j: int):
    """Per-unit cost ``p_j + c_ij`` of good ``j`` to buyer ``i``, or ``BLOCKED``."""
    c = inst.costs[i][j]
    if c is BLOCKED:
        return BLOCKED
    pj = p[j]
    if isinstance(pj, float):
        return pj + float(c)
    return pj + c


def compute_demand(inst: MarketInstance, p: Sequence, i: int,
                   numeric: Numeric | None = None) -> BangPerBuck:
    """Bang-per-buck ``alpha_i`` and demand set ``D_i`` of buyer ``i`` at ``p``.

    ``D_i`` is returned sorted by good index. In FLOAT64 mode membership uses
    the backend's relative tolerance against ``alpha_i * (p_j + c_ij)``.
    """
    if numeric is None:
        numeric = infer_backend(p)
    ratios = {}
    for j in range(inst.m):
        ep = effective_price(inst, p, i, j)
        if ep is BLOCKED:
            continue
        ep = numeric.num(ep)
        u = numeric.num(inst.utilities[i][j])
        if ep <= 0 and u > 0:
            raise ValueError(f"zero effective price for buyer {i}, good {j}")
        ratios[j] = (u, ep)
    if not ratios:
        raise ValueError(f"buyer {i} has every good blocked")
    alpha = max(u / ep if u > 0 else u for u, ep in ratios.values())
    # worthless goods belong to D_i only when everything is worthless
    demand = tuple(j for j, (u, ep) in sorted(ratios.items())
                   if (u > 0 or alpha == 0) and numeric.eq(u, alpha * ep))
    return BangPerBuck(alpha, demand)


def bang_per_buck(inst: MarketInstance, p: Sequence, numeric: Numeric | None = None) -> list:
    if numeric is None:
        numeric = infer_backend(p)
    return [compute_demand(inst, p, i, numeric) for i in range(inst.n)]


# ---------------------------------------------------------------------------
# instance file format


def parse_instance(text: str) -> MarketInstance:
    """Parse and validate a JSON instance document.

    Numbers may be JSON numbers, decimal strings or ``"a/b"`` rational
    strings; all are read losslessly as fractions.
    """
    try:
        doc = json.loads(text, parse_float=Fraction, parse_int=Fraction)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise InstanceError("instance document must be an object")
    buyers = doc.get("buyers")
    goods = doc.get("goods")
    if not isinstance(buyers, list) or not buyers:
        raise InstanceError("'buyers' must be a non-empty array")
    if goods is None:
        m = len(buyers[0].get("utilities", []))
        goods = [{} for _ in range(m)]
    if not isinstance(goods, list) or not goods:
        raise InstanceError("'goods' must be a non-empty array")
    m = len(goods)

    supply = []
    good_ids = []
    for j, g in enumerate(goods):
        if not isinstance(g, dict):
            raise InstanceError(f"good {j + 1} must be an object")
        s = _to_fraction(g.get("supply", 1))
        if s <= 0:
            raise InstanceError(f"non-positive supply, good {j + 1}")
        supply.append(s)
        good_ids.append(str(g.get("id", f"g{j}")))

    budgets, utilities, costs, buyer_ids = [], [], [], []
    for i, b in enumerate(buyers):
        if not isinstance(b, dict):
            raise InstanceError(f"buyer {i + 1} must be an object")
        for key in ("budget", "utilities", "costs"):
            if key not in b:
                raise InstanceError(f"buyer {i + 1} is missing {key!r}")
        u, c = b["utilities"], b["costs"]
        if not isinstance(u, list) or len(u) != m or not isinstance(c, list) or len(c) != m:
            raise InstanceError(f"dimension mismatch, buyer {i + 1}: expected {m} utilities and costs")
        buyer_ids.append(str(b.get("id", f"b{i}")))
        budgets.append(_to_fraction(b["budget"]))
        # a good with supply s is traded in bundles of s units
        utilities.append([_to_fraction(v) * s for v, s in zip(u, supply)])
        row = []
        for v, s in zip(c, supply):
            if isinstance(v, str) and v.strip().lower() == "blocked":
                row.append(BLOCKED)
            else:
                row.append(_to_fraction(v) * s)
        costs.append(row)

    eps = doc.get("epsilon")
    inst = MarketInstance(
        budgets=tuple(budgets),
        utilities=tuple(tuple(r) for r in utilities),
        costs=tuple(tuple(r) for r in costs),
        buyer_ids=tuple(buyer_ids),
        good_ids=tuple(good_ids),
        supply=tuple(supply),
        epsilon=None if eps is None else _to_fraction(eps),
    )
    rep = validate(inst)
    if rep.issues:
        raise InstanceError("; ".join(rep.issues))
    return inst


def format_number(v) -> str:
    """Lossless text form: integers and ``a/b`` fractions, floats via repr."""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, numbers.Rational):
        num, den = int(v.numerator), int(v.denominator)
        return str(num) if den == 1 else f"{num}/{den}"
    return repr(float(v))


def instance_to_dict(inst: MarketInstance) -> dict:
    doc = {}
    if inst.epsilon is not None:
        doc["epsilon"] = format_number(inst.epsilon)
    doc["goods"] = [
        {"id": gid} if s == 1 else {"id": gid, "supply": format_number(s)}
        for gid, s in zip(inst.good_ids, inst.supply)
    ]
    doc["buyers"] = []
    for i in range(inst.n):
        doc["buyers"].append({
            "id": inst.buyer_ids[i],
            "budget": format_number(inst.budgets[i]),
            "utilities": [format_number(u / s) for u, s in zip(inst.utilities[i], inst.supply)],
            "costs": ["blocked" if c is BLOCKED else format_number(c / s)
                      for c, s in zip(inst.costs[i], inst.supply)],
        })
    return doc


def dump_instance(inst: MarketInstance) -> str:
    return json.dumps(instance_to_dict(inst), indent=2)


__all__ = [
    "BLOCKED", "BangPerBuck", "InstanceError", "MarketInstance", "ValidationReport",
    "bang_per_buck", "compute_demand", "dump_instance", "effective_price", "format_number",
    "instance_to_dict", "make_instance", "parse_instance", "validate",
]
