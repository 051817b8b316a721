from fractions import Fraction as F

import pytest

from conftest import E1_ALLOC, E1_PRICE, E4_PRICE
from tcfisher.engine import initialize, transfer_walk
from tcfisher.model import BLOCKED, make_instance
from tcfisher.numeric import FLOAT64
from tcfisher.verify import check_approx_equilibrium, check_exact_equilibrium, check_invariants

E1_P = [E1_PRICE, E1_PRICE]
E1_X = [[E1_ALLOC[0], 0.0], [E1_ALLOC[1], E1_ALLOC[2]]]


def e4_solution():
    p = E4_PRICE
    return [p], [[1 / p], [1 / (p + 0.5)]]


def test_fresh_state_passes(e1):
    assert check_invariants(initialize(e1, F(1, 10))).passed


def test_corrupted_surplus_is_caught(e1):
    s = initialize(e1, F(1, 10))
    s.r[0] = F(-1, 10)
    rep = check_invariants(s)
    assert not rep.passed
    assert rep["I1 surplus"].witness == (0,)
    assert "surplus identity" in rep.failures()


def test_invariants_after_walks(e1):
    s = initialize(e1, F(1, 10))
    for _ in range(25):
        transfer_walk(s)
        assert check_invariants(s).passed


def test_price_off_ladder_is_caught(e1):
    s = initialize(e1, F(1, 10))
    s.p[1] = F(1, 5)
    assert "I5 two price tiers" in check_invariants(s).failures()


@pytest.mark.parametrize("eps", [0.5, 0.1, 1e-3, 1e-6])
def test_known_equilibrium_is_approximate_equilibrium(e1, eps):
    assert check_approx_equilibrium(e1, E1_P, E1_X, eps).passed


def test_single_good_reports(e2):
    assert check_approx_equilibrium(e2, [F(1)], [[F(1)]], F(1, 10)).passed
    rep = check_approx_equilibrium(e2, [F(2)], [[F(1, 2)]], F(1, 10))
    assert rep.failures() == ["clearing"]
    assert rep["clearing"].residual == F(10, 11) - F(1, 2)
    assert rep["clearing"].witness == (0,)


def test_exact_conditions(e1, e2, e4):
    assert check_exact_equilibrium(e1, E1_P, E1_X, FLOAT64).passed
    assert check_exact_equilibrium(e2, [F(1)], [[F(1)]]).passed
    assert check_exact_equilibrium(e4, *e4_solution(), FLOAT64).passed


def test_suboptimal_holding_fails(e1):
    x = [[0.0, 1e-3], [E1_ALLOC[1], E1_ALLOC[2]]]
    rep = check_exact_equilibrium(e1, E1_P, x, FLOAT64)
    assert "optimality" in rep.failures()
    assert rep["optimality"].witness == (0, 1)


def test_blocked_holding_fails():
    inst = make_instance([1], [[1, 1]], [[0, BLOCKED]])
    rep = check_approx_equilibrium(inst, [F(1), F(1, 10)], [[F(1), F(1, 10)]], F(1, 10))
    assert "feasible pairs" in rep.failures()


def test_overallocation_fails(e2):
    rep = check_exact_equilibrium(e2, [F(1, 2)], [[F(2)]])
    assert "supply" in rep.failures()


def test_dimension_mismatch(e1):
    with pytest.raises(ValueError):
        check_exact_equilibrium(e1, [1], [[1, 0], [0, 1]])


@pytest.mark.parametrize("eps", [F(1, 2), F(1, 10), F(1, 1000)])
def test_exact_implies_approximate(e1, e2, e4, eps):
    cases = [(e1, E1_P, E1_X, FLOAT64), (e2, [F(1)], [[F(1)]], None),
             (e4, *e4_solution(), FLOAT64)]
    for inst, p, x, nb in cases:
        assert check_exact_equilibrium(inst, p, x, nb).passed
        assert check_approx_equilibrium(inst, p, x, eps, nb).passed


def test_report_serialization(e2):
    rep = check_approx_equilibrium(e2, [F(2)], [[F(1, 2)]], F(1, 10))
    d = rep.as_dict()
    assert d["passed"] is False
    assert {c["condition"] for c in d["checks"]} == {"budget", "supply", "clearing", "optimality",
                                                    "feasible pairs"}
    assert "FAIL" in rep.format_table()
    assert rep.to_json().startswith("{")
