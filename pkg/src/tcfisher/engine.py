"""Ascending-price auction for Fisher markets with transaction costs.

The solver keeps every good's allocation on two price tiers: ``h`` holds
units bought at the current price ``p_j`` and ``y`` holds units bought
before the last raise, still charged at ``p_j / (1 + eps)``. Each round
fixes one demanded good ``pi(i)`` per buyer and runs transfer walks along
the demand graph until some buyer with surplus demands a good that is
entirely held at the current price; that good's price is then raised by a
factor ``1 + eps`` and the next round begins. Once no buyer has surplus,
the two tiers are merged into the final allocation.
"""
from __future__ import annotations

import enum
import hashlib
import heapq
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from .model import BLOCKED, MarketInstance, format_number
from .numeric import Numeric, get_backend


class SolverError(RuntimeError):
    """Engine defect: an iteration guard tripped or an invariant broke."""

    def __init__(self, msg, dump=None):
        super().__init__(msg)
        self.dump = dump


class EventKind(enum.Enum):
    PRICE_RAISED = "price_raised"        # event 2a
    SINK_FED = "sink_fed"                # event 2b
    CYCLE_RESOLVED = "cycle_resolved"    # event 2c
    EDGE_DROPPED = "edge_dropped"        # event 2d
    NO_SURPLUS_NODE = "no_surplus_node"


@dataclass(frozen=True)
class WalkEvent:
    kind: EventKind
    good: int | None = None
    buyer: int | None = None
    surplus_zeroed: bool = False
    edge_dropped: bool = False
    edge: tuple | None = None

    @property
    def surplus_exhausted(self) -> bool:
        """The walk ended with every node on its path at zero surplus."""
        if self.kind is EventKind.SINK_FED:
            return self.surplus_zeroed
        return self.kind is EventKind.CYCLE_RESOLVED and not self.edge_dropped


class EdgeOutcome(enum.Enum):
    SURPLUS_ZEROED = "surplus_zeroed"
    EDGE_DROPPED = "edge_dropped"
    SURPLUS_REDUCED = "surplus_reduced"  # self-edge only


@dataclass
class Counters:
    rounds: int = 0
    walks: int = 0
    price_raised: int = 0
    sink_fed: int = 0
    sink_fed_supply_exhausted: int = 0
    cycle_resolved: int = 0
    cycle_edge_dropped: int = 0
    edge_dropped: int = 0
    surplus_exhausted: int = 0
    edge_drops: int = 0
    r_plus_increase: int = 0

    @property
    def edge_drop_walks(self) -> int:
        """Walks that ended because an edge left the demand graph."""
        return self.edge_dropped + self.cycle_edge_dropped

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["edge_drop_walks"] = self.edge_drop_walks
        return d


@dataclass
class SolverConfig:
    numeric: str | Numeric = "exact"
    tol: float = 1e-9
    max_rounds: int | None = None
    debug: bool = False
    trace: Callable[[dict], None] | None = None

    def backend(self) -> Numeric:
        if isinstance(self.numeric, Numeric):
            return self.numeric
        return get_backend(self.numeric, self.tol)


# ---------------------------------------------------------------------------
# state


class DemandIndex:
    """Per-buyer ordering of goods by bang-per-buck, ties by index.

    EXACT mode keeps a lazy max-heap per buyer so ``pi(i)`` costs
    ``O(log m)`` after a price change; FLOAT64 mode scans, since tolerance
    ties cannot be ordered by a heap.
    """

    def __init__(self, state: "SolverState"):
        self.state = state
        inst = state.inst
        self.ratio = [[None] * inst.m for _ in range(inst.n)]
        self.heaps = [[] for _ in range(inst.n)]
        for i in range(inst.n):
            for j in range(inst.m):
                if not inst.blocked(i, j):
                    self._push(i, j)
            heapq.heapify(self.heaps[i])

    def _push(self, i, j):
        s = self.state
        r = s.u[i][j] / (s.p[j] + s.c[i][j])
        self.ratio[i][j] = r
        heapq.heappush(self.heaps[i], (-r, j))

    def price_changed(self, j: int):
        for i in range(self.state.inst.n):
            if not self.state.inst.blocked(i, j):
                self._push(i, j)

    def alpha(self, i: int):
        heap = self.heaps[i]
        while -heap[0][0] != self.ratio[i][heap[0][1]]:
            heapq.heappop(heap)
        return -heap[0][0]

    def pi(self, i: int) -> int:
        nb = self.state.numeric
        if nb.exact:
            self.alpha(i)
            return self.heaps[i][0][1]
        alpha = self.alpha(i)
        s = self.state
        for j in range(s.inst.m):
            r = self.ratio[i][j]
            if r is not None and nb.eq(s.u[i][j], alpha * (s.p[j] + s.c[i][j])):
                return j
        raise SolverError(f"empty demand set for buyer {i}")


class DemandGraph:
    """Bipartite graph H behind the buyer demand graph G.

    Buyer ``i`` points at good ``pi[i]``; good ``j`` points at every buyer
    holding it on the lower tier. ``holders[j]`` is fixed when ``j``'s price
    is raised (the only time lower-tier holdings appear) and a monotone
    ``cursor[j]`` skips holders whose ``y`` reached zero, so the first out-edge
    of buyer ``i`` in G is ``holders[pi[i]][cursor[pi[i]]]``.
    """

    def __init__(self, pi, holders):
        self.pi = pi
        self.holders = holders
        self.cursor = [0] * len(holders)

    def first_edge(self, i: int, y) -> int | None:
        j = self.pi[i]
        lst, cur = self.holders[j], self.cursor[j]
        while cur < len(lst) and y[lst[cur]][j] == 0:
            cur += 1
        self.cursor[j] = cur
        return lst[cur] if cur < len(lst) else None

    def successors(self, i: int, y) -> list:
        j = self.pi[i]
        return [k for k in self.holders[j][self.cursor[j]:] if y[k][j] != 0]

    def has_edge(self, i: int, k: int, y) -> bool:
        return y[k][self.pi[i]] != 0

    def g_edges(self, y) -> list:
        return [(i, k) for i in range(len(self.pi)) for k in self.successors(i, y)]

    def h_edges(self, y) -> list:
        """Edges of H as ``("b", i, "g", j)`` and ``("g", j, "b", k)`` tuples."""
        out = [("b", i, "g", j) for i, j in enumerate(self.pi)]
        for j in range(len(self.holders)):
            out.extend(("g", j, "b", k) for k in self.holders[j][self.cursor[j]:] if y[k][j] != 0)
        return out


@dataclass
class SolverState:
    inst: MarketInstance
    eps: object
    numeric: Numeric
    u: list
    c: list
    B: list
    k: list
    p: list
    h: list
    y: list
    z: list
    r: list
    pi: list = field(default_factory=list)
    counters: Counters = field(default_factory=Counters)
    graph: DemandGraph | None = None
    demand: DemandIndex | None = None
    trace: Callable[[dict], None] | None = None
    debug: bool = False

    @property
    def n(self) -> int:
        return self.inst.n

    @property
    def m(self) -> int:
        return self.inst.m

    def price(self, j: int):
        return self.p[j]

    def lower_price(self, j: int):
        return self.p[j] / (1 + self.eps)

    def prices_from_exponents(self) -> list:
        return [self.eps * (1 + self.eps) ** kj for kj in self.k]

    def r_threshold(self, i: int):
        return 0 if self.numeric.exact else self.numeric.tol * self.B[i]

    def has_surplus(self, i: int) -> bool:
        return self.r[i] > self.r_threshold(i)

    def surplus_digest(self) -> str:
        text = ",".join(format_number(v) for v in self.r)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def dump(self) -> dict:
        f = format_number
        return {
            "eps": f(self.eps),
            "numeric": self.numeric.name,
            "k": list(self.k),
            "p": [f(v) for v in self.p],
            "h": [[f(v) for v in row] for row in self.h],
            "y": [[f(v) for v in row] for row in self.y],
            "z": [f(v) for v in self.z],
            "r": [f(v) for v in self.r],
            "pi": list(self.pi),
            "counters": self.counters.as_dict(),
        }


def initialize(inst: MarketInstance, eps, config: SolverConfig | None = None) -> SolverState:
    """All prices at ``eps``, empty allocations, surplus equal to budget."""
    config = config or SolverConfig()
    nb = config.backend()
    eps = nb.num(eps)
    if not eps > 0:
        raise ValueError("epsilon must be positive")
    n, m = inst.n, inst.m
    zero = nb.num(0)
    c = [[zero if v is BLOCKED else nb.num(v) for v in row] for row in inst.costs]
    state = SolverState(
        inst=inst, eps=eps, numeric=nb,
        u=nb.mat(inst.utilities), c=c, B=nb.vec(inst.budgets),
        k=[0] * m, p=[eps] * m,
        h=[[zero] * m for _ in range(n)], y=[[zero] * m for _ in range(n)],
        z=[nb.num(1)] * m, r=nb.vec(inst.budgets),
        trace=config.trace, debug=config.debug,
    )
    state.demand = DemandIndex(state)
    fix_pi(state)
    state.graph = build_demand_graph(state)
    state.counters.rounds = 1
    return state


def fix_pi(state: SolverState) -> SolverState:
    """Fix ``pi(i)``, the lowest-index good in buyer ``i``'s demand set."""
    if state.demand is None:
        state.demand = DemandIndex(state)
    state.pi = [state.demand.pi(i) for i in range(state.n)]
    if state.graph is not None:
        state.graph.pi = state.pi
    return state


def build_demand_graph(state: SolverState) -> DemandGraph:
    holders = [[k for k in range(state.n) if state.y[k][j] != 0] for j in range(state.m)]
    return DemandGraph(state.pi, holders)


# ---------------------------------------------------------------------------
# surplus transfers


def _take_lower(state: SolverState, k: int, j: int, delta):
    """Remove ``delta`` lower-tier units of ``j`` from ``k``; True if the
    holding hit zero (an H edge dropped)."""
    y = state.y[k][j] - delta
    if y <= 0 or state.numeric.is_zero(y):
        if state.numeric.exact and y < 0:
            raise SolverError(f"negative lower-tier holding y[{k}][{j}]")
        state.y[k][j] = state.numeric.num(0)
        state.counters.edge_drops += 1
        return True
    state.y[k][j] = y
    return False


def transfer_edge(state: SolverState, i: int, k: int) -> EdgeOutcome:
    """Move surplus from ``i`` to ``k`` across the G-edge ``i -> k``.

    Buyer ``i`` buys ``delta = min(r_i / (p_j + c_ij), y_kj)`` units of
    ``j = pi(i)`` at the current price, taken from ``k``'s lower tier; ``k``
    is refunded at the price it paid. Either ``r_i`` reaches zero or the
    edge drops (a tie counts as a drop).
    """
    nb = state.numeric
    j = state.pi[i]
    yk = state.y[k][j]
    if not state.r[i] > 0 or yk == 0:
        raise SolverError(f"transfer_edge({i}, {k}) called without surplus or edge")
    cost_i = state.p[j] + state.c[i][j]
    refund_k = state.lower_price(j) + state.c[k][j]
    want = state.r[i] / cost_i
    if yk <= want or nb.eq(yk, want):
        delta = yk
        outcome = EdgeOutcome.EDGE_DROPPED
    else:
        delta = want
        outcome = EdgeOutcome.SURPLUS_ZEROED

    state.h[i][j] += delta
    dropped = _take_lower(state, k, j, delta)
    if i == k:
        # net charge is delta * eps * p_j / (1 + eps)
        state.r[i] = state.r[i] - delta * cost_i + delta * refund_k
        if dropped:
            return EdgeOutcome.EDGE_DROPPED
        return EdgeOutcome.SURPLUS_REDUCED
    if outcome is EdgeOutcome.SURPLUS_ZEROED:
        state.r[i] = nb.num(0)
    else:
        r = state.r[i] - delta * cost_i
        state.r[i] = nb.num(0) if nb.is_zero(r, state.B[i]) else r
    state.r[k] += delta * refund_k
    return outcome


def transfer_path(state: SolverState, path) -> int | None:
    """Apply :func:`transfer_edge` along ``path`` in order.

    Returns ``None`` when every node but the last ended at zero surplus, or
    the position ``q`` of the dropped edge ``(path[q], path[q+1])``; nodes
    past a drop are left untouched.
    """
    for q in range(len(path) - 1):
        if transfer_edge(state, path[q], path[q + 1]) is EdgeOutcome.EDGE_DROPPED:
            return q
    return None


@dataclass(frozen=True)
class CycleOutcome:
    edge_dropped: bool
    dropped_at: tuple = ()
    coefficient: object = None
    delta0: object = None


def transfer_cycle(state: SolverState, cycle) -> CycleOutcome:
    """Resolve a cycle ``v_0 .. v_l`` (``v_0 == v_l``) in which only ``v_0``
    holds surplus.

    Each ``v_q`` buys ``delta_q`` of ``pi(v_q)`` from ``v_{q+1}``'s lower
    tier. The ``delta`` ratios keep every intermediate node at zero surplus;
    ``v_0`` changes by ``C * delta_0``. ``delta_0`` is pushed as far as the
    lower-tier holdings allow, stopping early if ``v_0``'s surplus hits zero.
    """
    nb = state.numeric
    if len(cycle) < 2 or cycle[0] != cycle[-1]:
        raise SolverError(f"not a closed cycle: {cycle}")
    l = len(cycle) - 1
    v = cycle
    for q in range(1, l):
        if state.r[v[q]] != 0:
            raise SolverError(f"cycle node {v[q]} has surplus")
    v0 = v[0]
    if not state.r[v0] > 0:
        raise SolverError(f"cycle head {v0} has no surplus")

    goods = [state.pi[v[q]] for q in range(l)]
    cost = [state.p[goods[q]] + state.c[v[q]][goods[q]] for q in range(l)]
    # refund[q]: what v_{q+1} paid per unit of goods[q]
    refund = [state.lower_price(goods[q]) + state.c[v[q + 1]][goods[q]] for q in range(l)]
    ratio = [nb.num(1)]
    for q in range(l - 1):
        ratio.append(ratio[q] * refund[q] / cost[q + 1])
    C = refund[l - 1] * ratio[l - 1] - cost[0]

    bound = None if C >= 0 else state.r[v0] / (-C)
    delta0 = bound
    for q in range(l):
        cap = state.y[v[q + 1]][goods[q]] / ratio[q]
        if delta0 is None or cap < delta0:
            delta0 = cap
    if delta0 is None:
        raise SolverError("unbounded cycle transfer")

    dropped = []
    for q in range(l):
        d = delta0 * ratio[q]
        state.h[v[q]][goods[q]] += d
        if _take_lower(state, v[q + 1], goods[q], d):
            dropped.append((v[q], v[q + 1]))
    zeroed = bound is not None and (delta0 == bound or nb.eq(delta0, bound))
    if zeroed:
        state.r[v0] = nb.num(0)
    else:
        r = state.r[v0] + C * delta0
        state.r[v0] = nb.num(0) if nb.is_zero(r, state.B[v0]) else r
    # a simultaneous zero surplus and drop counts as exhaustion
    return CycleOutcome(edge_dropped=bool(dropped) and not zeroed, dropped_at=tuple(dropped),
                        coefficient=C, delta0=delta0)


# ---------------------------------------------------------------------------
# price raise, walks, rounds


def raise_price(state: SolverState, j: int) -> SolverState:
    """Raise ``p_j`` by ``1 + eps`` and start the next round.

    Every current-tier holding of ``j`` moves to the lower tier, where it
    keeps its old charge; ``pi`` and the demand graph are refreshed.
    """
    if any(state.y[i][j] != 0 for i in range(state.n)):
        raise SolverError(f"price raise on good {j} with lower-tier holdings left")
    if not state.numeric.is_zero(state.z[j]):
        raise SolverError(f"price raise on good {j} with unallocated supply")
    zero = state.numeric.num(0)
    for i in range(state.n):
        state.y[i][j] = state.h[i][j]
        state.h[i][j] = zero
    state.z[j] = zero
    state.k[j] += 1
    state.p[j] = state.eps * (1 + state.eps) ** state.k[j]
    state.demand.price_changed(j)
    fix_pi(state)
    state.graph.holders[j] = [i for i in range(state.n) if state.y[i][j] != 0]
    state.graph.cursor[j] = 0
    state.counters.rounds += 1
    return state


def first_surplus_buyer(state: SolverState) -> int | None:
    for i in range(state.n):
        if state.has_surplus(i):
            return i
    return None


def _feed_sink(state: SolverState, i: int) -> WalkEvent:
    nb = state.numeric
    j = state.pi[i]
    cost = state.p[j] + state.c[i][j]
    want = state.r[i] / cost
    z = state.z[j]
    if z <= want or nb.eq(z, want):
        delta = z
        state.z[j] = nb.num(0)
        r = state.r[i] - delta * cost
        zeroed = nb.is_zero(r, state.B[i])
        state.r[i] = nb.num(0) if zeroed else r
        state.counters.sink_fed_supply_exhausted += 1
    else:
        delta = want
        state.z[j] = z - delta
        state.r[i] = nb.num(0)
        zeroed = True
    state.h[i][j] += delta
    return WalkEvent(EventKind.SINK_FED, good=j, buyer=i, surplus_zeroed=zeroed)


def transfer_walk(state: SolverState) -> WalkEvent:
    """Run one transfer walk from the lowest-index buyer with surplus."""
    i0 = first_surplus_buyer(state)
    if i0 is None:
        return WalkEvent(EventKind.NO_SURPLUS_NODE)
    graph = state.graph
    path = [i0]
    pos = {i0: 0}
    while True:
        i = path[-1]
        k = graph.first_edge(i, state.y)
        if k is None or k in pos:
            q = transfer_path(state, path)
            if q is not None:
                return WalkEvent(EventKind.EDGE_DROPPED, buyer=path[q], edge=(path[q], path[q + 1]),
                                 edge_dropped=True)
            if k is None:
                j = state.pi[i]
                if state.numeric.is_zero(state.z[j]):
                    raise_price(state, j)
                    return WalkEvent(EventKind.PRICE_RAISED, good=j, buyer=i)
                return _feed_sink(state, i)
            cycle = [i] + path[pos[k]:]
            out = transfer_cycle(state, cycle)
            return WalkEvent(EventKind.CYCLE_RESOLVED, buyer=i, edge_dropped=out.edge_dropped,
                             surplus_zeroed=not out.edge_dropped,
                             edge=out.dropped_at[0] if out.dropped_at else None)
        path.append(k)
        pos[k] = len(path) - 1


def _record(state: SolverState, ev: WalkEvent, rnd: int):
    c = state.counters
    c.walks += 1
    if ev.kind is EventKind.PRICE_RAISED:
        c.price_raised += 1
    elif ev.kind is EventKind.SINK_FED:
        c.sink_fed += 1
    elif ev.kind is EventKind.CYCLE_RESOLVED:
        c.cycle_resolved += 1
        if ev.edge_dropped:
            c.cycle_edge_dropped += 1
    elif ev.kind is EventKind.EDGE_DROPPED:
        c.edge_dropped += 1
    if ev.surplus_exhausted:
        c.surplus_exhausted += 1
    if state.trace is not None:
        state.trace({
            "round": rnd,
            "event": ev.kind.value,
            "good": ev.good,
            "buyer": ev.buyer,
            "edge": list(ev.edge) if ev.edge else None,
            "surplus": state.surplus_digest(),
        })


def round_bound(inst: MarketInstance, eps) -> int:
    """``R = 1 + m * ceil(log_{1+eps}(B / eps))`` with ``B = (1+eps) * sum(B_i)``."""
    eps = Fraction(eps) if not isinstance(eps, float) else Fraction(str(eps))
    target = (1 + eps) * inst.total_budget() / eps
    K = max(0, math.ceil(math.log(float(target)) / math.log1p(float(eps))))
    # settle floating-point doubt exactly
    while (1 + eps) ** K < target:
        K += 1
    while K > 0 and (1 + eps) ** (K - 1) >= target:
        K -= 1
    return 1 + inst.m * K


def default_max_rounds(inst: MarketInstance, eps) -> int:
    B = (1 + float(eps)) * float(inst.total_budget())
    return 2 * (1 + math.ceil(inst.m / float(eps) * math.log(B / float(eps))))


@dataclass
class EquilibriumResult:
    prices: list
    allocation: list
    counters: Counters
    termination_reason: str
    eps: object
    numeric: Numeric
    state: SolverState | None = None

    def prices_float(self) -> list:
        return [float(v) for v in self.prices]

    def allocation_float(self) -> list:
        return [[float(v) for v in row] for row in self.allocation]


def merge_tiers(state: SolverState) -> list:
    """Final allocation ``x = h + y * (p/(1+eps) + c) / (p + c)``.

    The lower tier is rescaled so each buyer's spend at the final prices
    equals what it actually paid.
    """
    for i in range(state.n):
        if state.has_surplus(i):
            raise SolverError(f"merge_tiers with surplus left at buyer {i}")
    x = []
    for i in range(state.n):
        row = []
        for j in range(state.m):
            y = state.y[i][j]
            if y == 0:
                row.append(state.h[i][j])
            else:
                cost = state.p[j] + state.c[i][j]
                row.append(state.h[i][j] + (state.lower_price(j) + state.c[i][j]) / cost * y)
        x.append(row)
    return x


def run(state: SolverState, max_rounds: int | None = None, on_event=None) -> EquilibriumResult:
    """Drive ``state`` to termination: walks until no buyer has surplus."""
    if max_rounds is None:
        max_rounds = default_max_rounds(state.inst, state.eps)
    check = None
    if state.debug:
        from .verify import check_invariants
        check = check_invariants
    r_plus = sum(1 for i in range(state.n) if state.has_surplus(i))
    while True:
        rnd = state.counters.rounds
        ev = transfer_walk(state)
        if ev.kind is EventKind.NO_SURPLUS_NODE:
            break
        _record(state, ev, rnd)
        new_r_plus = sum(1 for i in range(state.n) if state.has_surplus(i))
        if new_r_plus > r_plus:
            state.counters.r_plus_increase += new_r_plus - r_plus
            if state.debug and (ev.kind is not EventKind.EDGE_DROPPED or new_r_plus > r_plus + 1):
                raise SolverError(f"positive-surplus count rose by {new_r_plus - r_plus} at {ev.kind.value}",
                                  state.dump())
        r_plus = new_r_plus
        if check is not None:
            rep = check(state)
            if not rep.passed:
                raise SolverError(f"invariant violation after {ev.kind.value}: {rep.failures()}",
                                  state.dump())
        if on_event is not None:
            on_event(state, ev)
        if state.counters.rounds > max_rounds:
            raise SolverError(f"round limit {max_rounds} exceeded", state.dump())
    x = merge_tiers(state)
    return EquilibriumResult(
        prices=list(state.p), allocation=x, counters=state.counters,
        termination_reason="no_surplus", eps=state.eps, numeric=state.numeric, state=state,
    )


def solve(inst: MarketInstance, eps=None, config: SolverConfig | None = None) -> EquilibriumResult:
    """Compute eps-approximate equilibrium prices and allocations.

    ``eps`` defaults to the instance file's ``epsilon``.
    """
    config = config or SolverConfig()
    if eps is None:
        eps = inst.epsilon
    if eps is None:
        raise ValueError("no epsilon given and the instance carries none")
    state = initialize(inst, eps, config)
    if state.debug:
        from .verify import check_invariants
        rep = check_invariants(state)
        if not rep.passed:
            raise SolverError(f"invariant violation at start: {rep.failures()}", state.dump())
    return run(state, config.max_rounds)


def trace_writer(fh) -> Callable[[dict], None]:
    """Trace sink writing one JSON record per line to ``fh``."""
    def write(rec):
        fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return write
