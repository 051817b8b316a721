"""Equilibrium-condition and solver-invariant checks.

The market checks take prices and an allocation only and recompute every
bang-per-buck from scratch through :func:`tcfisher.model.compute_demand`, so
they can be pointed at the auction's output, the convex oracle's output, or
anything typed in by hand.

Residuals are relative where a natural scale exists (budgets, effective
prices) and absolute for supply amounts, which are already on a unit scale.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import BLOCKED, MarketInstance, compute_demand, format_number
from .numeric import Numeric, infer_backend


@dataclass
class Check:
    condition: str
    passed: bool
    residual: object = 0
    witness: tuple = ()

    def as_dict(self) -> dict:
        return {
            "condition": self.condition,
            "passed": self.passed,
            "residual": format_number(self.residual),
            "witness": list(self.witness),
        }


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, condition: str) -> Check:
        for c in self.checks:
            if c.condition == condition:
                return c
        raise KeyError(condition)

    def failures(self) -> list:
        return [c.condition for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": [c.as_dict() for c in self.checks]}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    def format_table(self) -> str:
        rows = [f"{'condition':<28} {'ok':<4} {'residual':>14}  witness"]
        for c in self.checks:
            rows.append(f"{c.condition:<28} {'yes' if c.passed else 'NO':<4} "
                        f"{float(c.residual):>14.3e}  {list(c.witness) if c.witness else ''}")
        rows.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(rows)


class _Worst:
    """Track the largest residual and where it occurred."""

    def __init__(self, nb: Numeric, zero):
        self.nb = nb
        self.value = zero
        self.witness = ()

    def add(self, value, *witness):
        if value > self.value:
            self.value = value
            self.witness = witness

    def check(self, name, tol) -> Check:
        return Check(name, self.value <= tol, self.value, self.witness)


def _prepare(inst, p, x, numeric):
    if numeric is None:
        numeric = infer_backend(p, x)
    p = numeric.vec(p)
    x = numeric.mat(x)
    if len(p) != inst.m or len(x) != inst.n or any(len(row) != inst.m for row in x):
        raise ValueError("price/allocation dimensions do not match the instance")
    return numeric, p, x


def _cost(nb, inst, i, j):
    c = inst.costs[i][j]
    return None if c is BLOCKED else nb.num(c)


def _budget_check(inst, nb, p, x, name, tol) -> Check:
    w = _Worst(nb, nb.num(0))
    for i in range(inst.n):
        spend = nb.num(0)
        for j in range(inst.m):
            if x[i][j] == 0:
                continue
            c = _cost(nb, inst, i, j)
            if c is None:
                continue  # reported by the blocked-pair check
            spend += (p[j] + c) * x[i][j]
        B = nb.num(inst.budgets[i])
        w.add(abs(spend - B) / B, i)
    return w.check(name, tol)


def _supply_check(inst, nb, x, name, tol) -> Check:
    w = _Worst(nb, nb.num(0))
    for j in range(inst.m):
        w.add(sum((x[i][j] for i in range(inst.n)), nb.num(0)) - 1, j)
    return w.check(name, tol)


def _blocked_check(inst, nb, x, tol) -> Check:
    w = _Worst(nb, nb.num(0))
    for i in range(inst.n):
        for j in range(inst.m):
            if inst.costs[i][j] is BLOCKED:
                w.add(abs(x[i][j]), i, j)
            elif x[i][j] < 0:
                w.add(-x[i][j], i, j)
    return w.check("feasible pairs", tol)


def _optimality_check(inst, nb, p, x, relax, name, tol, positive) -> Check:
    """``x_ij > 0  =>  u_ij >= alpha_i (p_j + c_ij) / relax``; with
    ``relax == 1`` and ``exact_equality`` the demand-set condition."""
    w = _Worst(nb, nb.num(0))
    for i in range(inst.n):
        alpha = compute_demand(inst, p, i, nb).alpha
        for j in range(inst.m):
            c = _cost(nb, inst, i, j)
            if c is None or not positive(x[i][j]):
                continue
            need = alpha * (p[j] + c) / relax
            u = nb.num(inst.utilities[i][j])
            if need > u:
                w.add((need - u) / need, i, j)
    return w.check(name, tol)


def check_approx_equilibrium(inst: MarketInstance, p, x, eps, numeric: Numeric | None = None,
                             tol=None) -> VerificationReport:
    """Check the eps-approximate equilibrium conditions.

    * budget: every buyer spends exactly its budget;
    * supply: no good is over-allocated;
    * clearing: goods priced above ``eps`` are at least ``1/(1+eps)`` sold;
    * optimality: held goods have ``u_ij >= alpha_i (p_j + c_ij) / (1+eps)``.
    """
    nb, p, x = _prepare(inst, p, x, numeric)
    eps = nb.num(eps)
    if tol is None:
        tol = 0 if nb.exact else nb.tol
    zero = nb.num(0)
    rep = VerificationReport()
    rep.checks.append(_budget_check(inst, nb, p, x, "budget", tol))
    rep.checks.append(_supply_check(inst, nb, x, "supply", tol))

    w = _Worst(nb, zero)
    floor = 1 / (1 + eps)
    for j in range(inst.m):
        if nb.gt(p[j], eps):
            sold = sum((x[i][j] for i in range(inst.n)), zero)
            w.add(floor - sold, j)
    rep.checks.append(w.check("clearing", tol))
    rep.checks.append(_optimality_check(inst, nb, p, x, 1 + eps, "optimality", tol,
                                        lambda v: v > 0))
    rep.checks.append(_blocked_check(inst, nb, x, tol))
    return rep


def check_exact_equilibrium(inst: MarketInstance, p, x, numeric: Numeric | None = None,
                            tol=None) -> VerificationReport:
    """Check the exact equilibrium conditions under backend equality.

    In FLOAT64 mode ``tol`` (default: the backend tolerance) bounds every
    residual and decides which prices and holdings count as positive.
    """
    nb, p, x = _prepare(inst, p, x, numeric)
    if tol is None:
        tol = 0 if nb.exact else nb.tol
    zero = nb.num(0)
    rep = VerificationReport()
    rep.checks.append(_budget_check(inst, nb, p, x, "budget", tol))
    rep.checks.append(_supply_check(inst, nb, x, "supply", tol))

    w = _Worst(nb, zero)
    for j in range(inst.m):
        if p[j] > tol:
            sold = sum((x[i][j] for i in range(inst.n)), zero)
            w.add(abs(1 - sold), j)
        elif p[j] < 0:
            w.add(-p[j], j)
    rep.checks.append(w.check("clearing", tol))
    rep.checks.append(_optimality_check(inst, nb, p, x, 1, "optimality", tol,
                                        lambda v: v > tol))
    rep.checks.append(_blocked_check(inst, nb, x, tol))
    return rep


def check_invariants(state) -> VerificationReport:
    """Check the solver invariants on a live :class:`~tcfisher.engine.SolverState`.

    Besides the five structural invariants this recomputes ``z`` and ``r``
    from the tier matrices and compares them with the stored values.
    """
    inst, nb, eps = state.inst, state.numeric, state.eps
    n, m = inst.n, inst.m
    zero = nb.num(0)
    tol = 0 if nb.exact else nb.tol
    rep = VerificationReport()

    w = _Worst(nb, zero)
    for i in range(n):
        w.add(-state.r[i] / state.B[i], i)
    rep.checks.append(w.check("I1 surplus", tol))

    w = _Worst(nb, zero)
    for j in range(m):
        w.add((eps - state.p[j]) / eps, j)
    rep.checks.append(w.check("I2 price floor", tol))

    w = _Worst(nb, zero)
    for j in range(m):
        if not nb.eq(state.p[j], eps):
            w.add(abs(state.z[j]), j)
    rep.checks.append(w.check("I3 priced goods sold", tol))

    w = _Worst(nb, zero)
    for i in range(n):
        alpha = compute_demand(inst, state.p, i, nb).alpha
        for j in range(m):
            if state.h[i][j] == 0 and state.y[i][j] == 0:
                continue
            if inst.blocked(i, j):
                w.add(nb.num(1), i, j)
                continue
            need = alpha * (state.p[j] + state.c[i][j]) / (1 + eps)
            if need > state.u[i][j]:
                w.add((need - state.u[i][j]) / need, i, j)
    rep.checks.append(w.check("I4 near-optimal holdings", tol))

    w = _Worst(nb, zero)
    ok_shape = len(state.h) == n and len(state.y) == n
    for i in range(n):
        for j in range(m):
            w.add(-state.h[i][j], i, j)
            w.add(-state.y[i][j], i, j)
    for j in range(m):
        # prices sit on the eps * (1+eps)^k ladder
        expected = eps * (1 + eps) ** state.k[j]
        if not nb.eq(expected, state.p[j]):
            w.add(abs(expected - state.p[j]) / expected, j)
    chk = w.check("I5 two price tiers", tol)
    chk.passed = chk.passed and ok_shape
    rep.checks.append(chk)

    w = _Worst(nb, zero)
    for j in range(m):
        held = sum((state.h[i][j] + state.y[i][j] for i in range(n)), zero)
        w.add(abs(1 - held - state.z[j]), j)
        w.add(-state.z[j], j)
    rep.checks.append(w.check("unallocated identity", tol))

    w = _Worst(nb, zero)
    for i in range(n):
        spent = zero
        for j in range(m):
            if state.h[i][j] != 0:
                spent += (state.p[j] + state.c[i][j]) * state.h[i][j]
            if state.y[i][j] != 0:
                spent += (state.p[j] / (1 + eps) + state.c[i][j]) * state.y[i][j]
        w.add(abs(state.B[i] - spent - state.r[i]) / state.B[i], i)
    rep.checks.append(w.check("surplus identity", tol))
    return rep


__all__ = [
    "Check", "VerificationReport", "check_approx_equilibrium", "check_exact_equilibrium",
    "check_invariants",
]
