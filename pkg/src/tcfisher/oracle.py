"""Equilibrium via the convex program, for cross-checking the auction.

The program is::

    minimize   sum_j p_j - sum_i B_i log(beta_i)
    subject to p_j + c_ij >= u_ij beta_i,   p >= 0,  beta > 0

whose minimizer gives the (unique) equilibrium prices, with ``beta_i`` the
inverse bang-per-buck of buyer ``i`` and the constraint multipliers the
allocation. It is solved here with a primal log-barrier method (damped
Newton centering on an increasing barrier weight); allocations are then
recovered by a small linear program over the tight buyer/good pairs.
Intended for small instances only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .model import BLOCKED, MarketInstance


class OracleError(RuntimeError):
    pass


@dataclass
class DualPoint:
    beta: np.ndarray
    p: np.ndarray
    objective: float = float("nan")
    iterations: int = 0
    multipliers: np.ndarray | None = None
    history: list = field(default_factory=list)
    polished: bool = False


@dataclass
class KKTResiduals:
    complementary_slackness: float
    budget: float
    clearing: float

    def max(self) -> float:
        return max(self.complementary_slackness, self.budget, self.clearing)


def _arrays(inst: MarketInstance):
    u = np.array([[float(v) for v in row] for row in inst.utilities])
    blocked = np.array([[c is BLOCKED for c in row] for row in inst.costs])
    c = np.array([[0.0 if v is BLOCKED else float(v) for v in row] for row in inst.costs])
    B = np.array([float(b) for b in inst.budgets])
    return u, c, B, blocked


def induced_prices(inst: MarketInstance, beta) -> np.ndarray:
    """Cheapest prices feasible for ``beta``: ``max(0, max_i u_ij beta_i - c_ij)``."""
    u, c, _, blocked = _arrays(inst)
    beta = np.asarray(beta, dtype=float)
    bids = np.where(blocked, -np.inf, u * beta[:, None] - c)
    return np.maximum(0.0, bids.max(axis=0))


def reduced_objective(inst: MarketInstance, beta) -> float:
    """Objective with prices eliminated: ``sum_j p_j(beta) - sum_i B_i log beta_i``."""
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    B = np.array([float(b) for b in inst.budgets])
    return float(induced_prices(inst, beta).sum() - B @ np.log(beta))


def _constraint_pairs(u, blocked):
    # pairs with u_ij = 0 only restate p_j >= 0 (costs are non-negative)
    return np.argwhere(~blocked & (u > 0))


def minimize(inst: MarketInstance, tol: float = 1e-10, *, max_newton: int = 200,
             max_outer: int = 60, polish: bool = True) -> DualPoint:
    """Minimize the convex program to a duality gap of about ``tol * (1 + |f|)``.

    With ``polish`` the barrier solution is refined on its active set when
    that yields a feasible optimum (see :func:`_polish`).

    Raises :class:`OracleError` when Newton centering does not converge.
    """
    u, c, B, blocked = _arrays(inst)
    n, m = u.shape
    pairs = _constraint_pairs(u, blocked)
    bi, gj = pairs[:, 0], pairs[:, 1]
    uv, cv = u[bi, gj], c[bi, gj]
    n_cons = len(pairs) + m

    usum = np.where(blocked, 0.0, u).sum(axis=1)
    beta = B / usum
    p = np.maximum(0.0, np.max(np.where(blocked, -np.inf, u * beta[:, None] - c), axis=0)) + 1.0

    def slacks(p, beta):
        return p[gj] + cv - uv * beta[bi]

    def phi(p, beta, t):
        s = slacks(p, beta)
        if np.any(s <= 0) or np.any(p <= 0) or np.any(beta <= 0):
            return np.inf
        return t * (p.sum() - B @ np.log(beta)) - np.log(s).sum() - np.log(p).sum()

    t = 1.0
    history = []
    iters = 0
    for _ in range(max_outer):
        prev = None
        for _ in range(max_newton):
            iters += 1
            s = slacks(p, beta)
            inv = 1.0 / s
            gp = t - np.bincount(gj, inv, m) - 1.0 / p
            gb = -t * B / beta + np.bincount(bi, uv * inv, n)
            g = np.concatenate([gp, gb])
            w = inv ** 2
            H = np.zeros((m + n, m + n))
            np.add.at(H, (gj, gj), w)
            np.add.at(H, (m + bi, m + bi), uv ** 2 * w)
            np.add.at(H, (gj, m + bi), -uv * w)
            np.add.at(H, (m + bi, gj), -uv * w)
            H[np.arange(m), np.arange(m)] += 1.0 / p ** 2
            H[m + np.arange(n), m + np.arange(n)] += t * B / beta ** 2
            try:
                step = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError as exc:
                raise OracleError("singular Newton system") from exc
            decrement = -g @ step
            if decrement <= 1e-12:
                break
            # rounding floor: quadratic convergence has stopped
            if decrement < 1e-6 and prev is not None and decrement > 0.25 * prev:
                break
            prev = decrement
            # damped Newton: the barrier is self-concordant, so a step of
            # 1/(1+lambda) stays feasible and decreases phi without comparing
            # function values (which lose all precision once t is large)
            lam = np.sqrt(decrement)
            a = 1.0 if lam < 0.25 else 1.0 / (1.0 + lam)
            while phi(p + a * step[:m], beta + a * step[m:], t) == np.inf:
                a *= 0.5
            p, beta = p + a * step[:m], beta + a * step[m:]
        else:
            raise OracleError(f"Newton centering did not converge at t={t:g}")
        f = reduced_objective(inst, beta)
        history.append(f)
        if n_cons / t <= tol * (1 + abs(f)):
            break
        t *= 10.0
    else:
        raise OracleError("barrier iteration cap exceeded")

    mult = np.zeros((n, m))
    mult[bi, gj] = 1.0 / (t * slacks(p, beta))
    dual = DualPoint(beta=beta, p=induced_prices(inst, beta), objective=reduced_objective(inst, beta),
                     iterations=iters, multipliers=mult, history=history)
    if polish:
        polished = _polish(inst, dual, np.sqrt(tol))
        if polished is not None:
            return polished
    return dual


def _polish(inst: MarketInstance, dual: DualPoint, zero_tol: float):
    """Refine a barrier point by Gauss-Newton on the active-set equations.

    With the tight pairs ``T`` and the zero-priced goods fixed, the
    equilibrium solves a square system: ``p_j + c_ij = u_ij beta_i`` on
    ``T``, budgets spent, priced goods cleared. The barrier point only
    approaches degenerate optima at ``1/sqrt(t)``; this recovers them to
    rounding accuracy. Returns ``None`` unless the result is a feasible
    optimum.
    """
    u, c, B, blocked = _arrays(inst)
    n, m = inst.n, inst.m
    pairs = tight_pairs(inst, dual)
    scale = max(1.0, float(dual.p.max(initial=0.0)))
    free = [j for j in range(m) if dual.p[j] > zero_tol * scale and any(jj == j for _, jj in pairs)]
    col = {j: q for q, j in enumerate(free)}
    nf, k = len(free), len(pairs)
    if k == 0:
        return None
    price = np.zeros(m)
    price[free] = dual.p[free]
    beta = dual.beta.copy()
    x = np.array([dual.multipliers[i, j] for i, j in pairs])

    def residual(price, beta, x):
        f = np.zeros(k + n + nf)
        for e, (i, j) in enumerate(pairs):
            f[e] = price[j] + c[i, j] - u[i, j] * beta[i]
            f[k + i] += (price[j] + c[i, j]) * x[e] / B[i]
            if j in col:
                f[k + n + col[j]] += x[e]
        f[k:k + n] -= 1.0
        f[k + n:] -= 1.0
        return f

    for _ in range(30):
        f = residual(price, beta, x)
        if np.abs(f).max() <= 1e-14:
            break
        J = np.zeros((k + n + nf, nf + n + k))
        for e, (i, j) in enumerate(pairs):
            if j in col:
                J[e, col[j]] = 1.0
                J[k + i, col[j]] += x[e] / B[i]
                J[k + n + col[j], nf + n + e] = 1.0
            J[e, nf + i] = -u[i, j]
            J[k + i, nf + n + e] = (price[j] + c[i, j]) / B[i]
        step = np.linalg.lstsq(J, -f, rcond=None)[0]
        price[free] += step[:nf]
        beta += step[nf:nf + n]
        x += step[nf + n:]
    f = residual(price, beta, x)
    if np.abs(f).max() > 1e-12 or np.any(beta <= 0) or np.any(price < 0) or np.any(x < -1e-12):
        return None
    slack = np.where(blocked, np.inf, price[None, :] + c - u * beta[:, None])
    if slack.min() < -1e-12 * scale:
        return None
    for j in range(m):
        if j not in col and sum(x[e] for e, (_, jj) in enumerate(pairs) if jj == j) > 1 + 1e-12:
            return None
    mult = np.zeros((n, m))
    for e, (i, j) in enumerate(pairs):
        mult[i, j] = max(x[e], 0.0)
    return DualPoint(beta=beta, p=induced_prices(inst, beta), objective=reduced_objective(inst, beta),
                     iterations=dual.iterations, multipliers=mult, history=dual.history, polished=True)


def tight_pairs(inst: MarketInstance, dual: DualPoint, tight_tol: float = 1e-7) -> list:
    """Pairs with ``p_j + c_ij = u_ij beta_i`` up to a relative tolerance.

    When barrier multipliers are attached, a pair whose multiplier exceeds
    its slack also counts as tight: near-degenerate optima can leave a small
    holding on a pair whose slack sits just above the tolerance.
    """
    u, c, _, blocked = _arrays(inst)
    out = []
    for i in range(inst.n):
        for j in range(inst.m):
            if blocked[i, j] or u[i, j] <= 0:
                continue
            ep = dual.p[j] + c[i, j]
            slack = ep - u[i, j] * dual.beta[i]
            active = dual.multipliers is not None and dual.multipliers[i, j] > slack
            if abs(slack) <= tight_tol * max(1.0, ep) or active:
                out.append((i, j))
    return out


def recover_allocation(inst: MarketInstance, dual: DualPoint, tol: float = 1e-7,
                       tight_tol: float = 1e-7) -> np.ndarray:
    """Allocation supported on tight pairs that spends budgets and clears goods.

    Solved as a transportation-style linear program minimizing the total
    violation of the budget and clearing equations; raises
    :class:`OracleError` if the least violation exceeds ``tol`` (the dual is
    not accurate enough and ``tight_tol`` or the oracle tolerance needs work).
    """
    u, c, B, _ = _arrays(inst)
    n, m = inst.n, inst.m
    pairs = tight_pairs(inst, dual, tight_tol)
    k = len(pairs)
    priced = [j for j in range(m) if dual.p[j] > tight_tol]
    # variables: x (k), budget slack +/- (2n), clearing slack +/- (2 per priced good)
    nv = k + 2 * n + 2 * len(priced)
    A_eq, b_eq = [], []
    for i in range(n):
        row = np.zeros(nv)
        for e, (a, j) in enumerate(pairs):
            if a == i:
                row[e] = (dual.p[j] + c[i, j]) / B[i]
        row[k + 2 * i], row[k + 2 * i + 1] = 1.0, -1.0
        A_eq.append(row)
        b_eq.append(1.0)
    for q, j in enumerate(priced):
        row = np.zeros(nv)
        for e, (a, jj) in enumerate(pairs):
            if jj == j:
                row[e] = 1.0
        row[k + 2 * n + 2 * q], row[k + 2 * n + 2 * q + 1] = 1.0, -1.0
        A_eq.append(row)
        b_eq.append(1.0)
    A_ub, b_ub = [], []
    for j in range(m):
        row = np.zeros(nv)
        for e, (a, jj) in enumerate(pairs):
            if jj == j:
                row[e] = 1.0
        A_ub.append(row)
        b_ub.append(1.0)
    cost = np.concatenate([np.zeros(k), np.ones(nv - k)])
    res = linprog(cost, A_ub=np.array(A_ub), b_ub=b_ub, A_eq=np.array(A_eq), b_eq=b_eq,
                  bounds=[(0, None)] * nv, method="highs")
    if res.status != 0:
        raise OracleError(f"allocation LP failed: {res.message}")
    if res.fun > tol:
        raise OracleError(f"no allocation on tight pairs within {tol:g} (violation {res.fun:.3g})")
    x = np.zeros((n, m))
    for e, (i, j) in enumerate(pairs):
        x[i, j] = res.x[e]
    return x


def kkt_residuals(inst: MarketInstance, p, beta, x) -> KKTResiduals:
    """Max-norm residuals of the optimality conditions.

    * complementary slackness: worst ``|p_j + c_ij - u_ij beta_i|`` over held
      pairs, together with any violated constraint ``p_j + c_ij < u_ij beta_i``;
    * budget: worst relative gap in ``sum_j u_ij x_ij = B_i / beta_i``;
    * clearing: worst over-allocation, and under-allocation of priced goods.
    """
    u, c, B, blocked = _arrays(inst)
    p = np.asarray(p, dtype=float)
    beta = np.asarray(beta, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    slack = np.where(blocked, np.inf, p[None, :] + c - u * beta[:, None])
    held = (x > 0) & ~blocked
    cs = max(float(np.abs(slack[held]).max(initial=0.0)), float(np.maximum(0.0, -slack).max(initial=0.0)))
    target = B / beta
    budget = float((np.abs((u * x).sum(axis=1) - target) / target).max(initial=0.0))
    sold = x.sum(axis=0)
    clear = np.maximum(sold - 1.0, 0.0)
    clear = np.where(p > 0, np.abs(sold - 1.0), clear)
    return KKTResiduals(cs, budget, float(clear.max(initial=0.0)))


def solve_oracle(inst: MarketInstance, tol: float = 1e-10):
    """Prices, allocation and KKT residuals in one call."""
    dual = minimize(inst, tol)
    x = recover_allocation(inst, dual)
    return dual, x, kkt_residuals(inst, dual.p, dual.beta, x)
