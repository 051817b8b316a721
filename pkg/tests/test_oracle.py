import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import E1_ALLOC, E1_PRICE, E4_PRICE
from tcfisher.bench import GeneratorSpec, generate
from tcfisher.model import make_instance
from tcfisher.numeric import get_backend
from tcfisher.oracle import (DualPoint, OracleError, induced_prices, kkt_residuals, minimize,
                             recover_allocation, reduced_objective, solve_oracle)
from tcfisher.verify import check_exact_equilibrium

TOL = 1e-10


def test_reduced_objective_values(e1, e2):
    assert reduced_objective(e2, [1.0]) == pytest.approx(1.0)
    # beta_i = 1/alpha_i at the known equilibrium
    r = 1 / math.sqrt(2)
    beta = [(1 + r) / 1000, r]
    assert induced_prices(e1, beta) == pytest.approx([E1_PRICE, E1_PRICE], abs=1e-12)
    assert reduced_objective(e2, [1e-12]) > reduced_objective(e2, [1e-3]) > 6.9
    with pytest.raises(ValueError):
        reduced_objective(e2, [0.0])


@pytest.mark.parametrize("name, price", [("e2", [1.0]), ("e1", [E1_PRICE, E1_PRICE]),
                                         ("e4", [E4_PRICE])])
def test_minimize_fixtures(request, name, price):
    inst = request.getfixturevalue(name)
    dual = minimize(inst, TOL)
    assert dual.p == pytest.approx(price, abs=1e-8)
    assert np.all(dual.beta > 0)
    # objective sequence over barrier stages only goes down
    assert all(b <= a + 1e-12 for a, b in zip(dual.history, dual.history[1:]))


def test_minimize_e2_beta(e2):
    assert minimize(e2, TOL).beta == pytest.approx([1.0], abs=1e-8)


def test_recover_allocation_fixtures(e1, e2, e4):
    assert recover_allocation(e2, minimize(e2, TOL))[0, 0] == pytest.approx(1.0, abs=1e-8)
    x = recover_allocation(e1, minimize(e1, TOL))
    assert [x[0, 0], x[1, 0], x[1, 1]] == pytest.approx(list(E1_ALLOC), abs=1e-6)
    assert x[0, 1] == pytest.approx(0, abs=1e-9)
    x = recover_allocation(e4, minimize(e4, TOL))
    p = E4_PRICE
    assert x[:, 0] == pytest.approx([1 / p, 1 / (p + 0.5)], abs=1e-7)
    assert x.sum() == pytest.approx(1.0, abs=1e-9)


def test_recover_allocation_rejects_bad_dual(e4):
    dual = minimize(e4, TOL)
    bad = DualPoint(beta=dual.beta * 1.1, p=induced_prices(e4, dual.beta * 1.1))
    with pytest.raises(OracleError):
        recover_allocation(e4, bad)


def test_kkt_residuals(e1):
    r = 1 / math.sqrt(2)
    beta = np.array([(1 + r) / 1000, r])
    p = [E1_PRICE, E1_PRICE]
    x = [[E1_ALLOC[0], 0], [E1_ALLOC[1], E1_ALLOC[2]]]
    assert kkt_residuals(e1, p, beta, x).max() <= 1e-9
    assert kkt_residuals(e1, p, beta * 1.1, x).budget > 0
    assert kkt_residuals(e1, p, beta, np.zeros((2, 2))).clearing == 1


@pytest.mark.parametrize("name", ["e1", "e2", "e4"])
def test_oracle_output_is_exact_equilibrium(request, name):
    inst = request.getfixturevalue(name)
    dual, x, res = solve_oracle(inst, TOL)
    rep = check_exact_equilibrium(inst, dual.p.tolist(), x.tolist(), get_backend("float64", 100 * TOL))
    assert rep.passed, rep.format_table()
    assert res.max() <= 1e-8


@pytest.mark.parametrize("budgets, utilities, prices", [
    ([1, 1], [[1], [1]], [2.0]),
    ([1], [[1, 2]], [1 / 3, 2 / 3]),
    ([1, 2], [[1, 0], [0, 1]], [1.0, 2.0]),
    ([1, 1], [[2, 1], [1, 2]], [1.0, 1.0]),
    ([3, 1], [[1, 1], [1, 1]], [2.0, 2.0]),
])
def test_zero_cost_matches_hand_solution(budgets, utilities, prices):
    inst = make_instance(budgets, utilities, [[0] * len(utilities[0])] * len(budgets))
    assert minimize(inst, TOL).p == pytest.approx(prices, abs=1e-8)


specs = st.builds(GeneratorSpec, family=st.sampled_from(["uniform-random", "shipping-grid",
                                                         "blocked-random", "reserve-price"]),
                  n=st.integers(1, 4), m=st.integers(1, 4), seed=st.integers(0, 10**6))


@settings(max_examples=25)
@given(specs, st.randoms(use_true_random=False))
def test_prices_invariant_under_buyer_order(spec, rnd):
    inst = generate(spec)
    order = list(range(inst.n))
    rnd.shuffle(order)
    shuffled = make_instance([inst.budgets[i] for i in order], [inst.utilities[i] for i in order],
                             [inst.costs[i] for i in order])
    a, b = minimize(inst, TOL), minimize(shuffled, TOL)
    assert b.p == pytest.approx(a.p, abs=10 * TOL * max(1.0, a.p.max()) + 1e-8)


@settings(max_examples=25)
@given(specs)
def test_generated_instances_recover(spec):
    inst = generate(spec)
    dual, x, res = solve_oracle(inst, TOL)
    rep = check_exact_equilibrium(inst, dual.p.tolist(), x.tolist(), get_backend("float64", 1e-6))
    assert rep.passed, rep.format_table()
