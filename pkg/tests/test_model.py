import json
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import E1_PRICE, load
from tcfisher.model import (BLOCKED, InstanceError, compute_demand, dump_instance, effective_price,
                            make_instance, parse_instance, validate)
from tcfisher.numeric import EXACT, FLOAT64, get_backend, infer_backend


def doc(buyers, goods=None, **extra):
    d = {"buyers": buyers, **extra}
    if goods is not None:
        d["goods"] = goods
    return json.dumps(d)


def test_parse_smallest_instance():
    inst = load("e2")
    assert (inst.n, inst.m) == (1, 1)
    assert inst.budgets == (1,) and inst.costs == ((0,),)
    assert inst.epsilon == F(1, 100)


def test_parse_two_buyer_example():
    inst = load("e1")
    assert (inst.n, inst.m) == (2, 2)
    assert inst.utilities == ((1000, 1), (1, 1))
    assert inst.costs == ((1, 1000), (0, 0))
    assert inst.buyer_ids == ("i", "k")


def test_parse_is_lossless():
    inst = parse_instance(doc([{"id": "a", "budget": "0.1", "utilities": ["1/3", 0.2],
                                "costs": ["blocked", "2/7"]}], [{}, {}]))
    assert inst.budgets == (F(1, 10),)
    assert inst.utilities[0] == (F(1, 3), F(1, 5))
    assert inst.costs[0] == (BLOCKED, F(2, 7))


def test_all_blocked_buyer_rejected():
    text = doc([{"id": "a", "budget": 1, "utilities": [1, 1], "costs": ["blocked", "blocked"]}],
               [{}, {}])
    with pytest.raises(InstanceError, match="buyer has no usable good"):
        parse_instance(text)


def test_syntax_error_reports_position():
    with pytest.raises(InstanceError, match=r"line 2, column \d+"):
        parse_instance('{"buyers": [\n  {"budget": 1,, }]}')


@pytest.mark.parametrize("buyer, message", [
    ({"budget": -1, "utilities": [1], "costs": [0]}, "non-positive budget, buyer 1"),
    ({"budget": 1, "utilities": [-1], "costs": [0]}, "negative utility"),
    ({"budget": 1, "utilities": [1], "costs": [-1]}, "negative cost"),
    ({"budget": 1, "utilities": [1, 2], "costs": [0]}, "dimension mismatch"),
    ({"budget": 1, "utilities": [1]}, "missing 'costs'"),
    ({"budget": "x", "utilities": [1], "costs": [0]}, "not a number"),
])
def test_parse_errors(buyer, message):
    with pytest.raises(InstanceError, match=message):
        parse_instance(doc([buyer], [{}]))


def test_validate_reports():
    e1 = make_instance([1, 1], [[1000, 1], [1, 1]], [[1, 1000], [0, 0]])
    assert validate(e1).ok
    bad = make_instance([0, 1], [[1], [1]], [[0], [0]], check=False)
    assert validate(bad).issues == ["non-positive budget, buyer 1"]
    worthless = make_instance([1], [[0, 0]], [[0, 0]], check=False)
    assert "buyer has no usable good, buyer 1" in validate(worthless).issues


def test_supply_is_normalized_and_restored():
    inst = parse_instance(doc([{"budget": 1, "utilities": [3], "costs": ["1/2"]}], [{"supply": 2}]))
    # two units become one bundle worth twice as much and costing twice as much to ship
    assert inst.utilities[0][0] == 6 and inst.costs[0][0] == 1
    p, x = inst.denormalize([F(4)], [[F(1, 4)]])
    assert p == [2] and x == [[F(1, 2)]]
    again = parse_instance(dump_instance(inst))
    assert again == inst


def test_effective_price(e1, e2):
    assert effective_price(e2, [1], 0, 0) == 1
    assert effective_price(e1, [E1_PRICE, E1_PRICE], 0, 0) == pytest.approx(1.70711, abs=1e-5)
    blocked = make_instance([1], [[1, 1]], [[BLOCKED, 0]])
    assert effective_price(blocked, [1, 1], 0, 0) is BLOCKED


def test_demand_examples(e1, e2):
    p = [F(1, 10), F(1, 10)]
    d = compute_demand(e1, p, 0)
    assert d.alpha == F(1000) / F(11, 10) and d.demand_set == (0,)
    d = compute_demand(e1, p, 1)
    assert d.alpha == 10 and d.demand_set == (0, 1)
    d = compute_demand(e2, [F(1)], 0)
    assert d.alpha == 1 and d.demand_set == (0,)


def test_demand_float_tolerance():
    inst = make_instance([1], [[1, 1]], [[0, 0]])
    assert compute_demand(inst, [1.0, 1.0 + 1e-12], 0, FLOAT64).demand_set == (0, 1)
    assert compute_demand(inst, [F(1), F(1) + F(1, 10**12)], 0, EXACT).demand_set == (0,)


def test_blocked_goods_never_demanded():
    inst = make_instance([1], [[5, 1]], [[BLOCKED, 0]])
    d = compute_demand(inst, [F(1, 100), F(1)], 0)
    assert d.demand_set == (1,) and d.alpha == 1


def test_backend_selection(monkeypatch):
    monkeypatch.setenv("TCFISHER_NUMERIC", "float64")
    assert not get_backend().exact
    monkeypatch.delenv("TCFISHER_NUMERIC")
    assert get_backend().exact
    with pytest.raises(ValueError):
        get_backend("decimal")
    assert infer_backend([F(1)], [[1]]).exact and not infer_backend([0.5]).exact
    assert FLOAT64.eq(1.0, 1.0 + 1e-10) and not FLOAT64.eq(1.0, 1.0 + 1e-8)


# ---------------------------------------------------------------------------
# properties

rational = st.fractions(min_value=0, max_value=10, max_denominator=20)
positive = st.fractions(min_value=F(1, 20), max_value=10, max_denominator=20)


@st.composite
def markets(draw, max_n=8, max_m=8):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    budgets = [draw(positive) for _ in range(n)]
    utilities = [[draw(rational) for _ in range(m)] for _ in range(n)]
    costs = [[draw(st.one_of(rational, st.just(BLOCKED))) for _ in range(m)] for _ in range(n)]
    for i in range(n):
        j = draw(st.integers(0, m - 1))
        utilities[i][j] = draw(positive)
        costs[i][j] = draw(rational)
    return make_instance(budgets, utilities, costs)


@st.composite
def market_and_prices(draw):
    inst = draw(markets())
    return inst, [draw(positive) for _ in range(inst.m)]


@given(market_and_prices())
def test_demand_matches_brute_force(case):
    inst, p = case
    for i in range(inst.n):
        ratios = {j: inst.utilities[i][j] / (p[j] + inst.costs[i][j])
                  for j in range(inst.m) if inst.costs[i][j] is not BLOCKED}
        best = max(ratios.values())
        d = compute_demand(inst, p, i)
        assert d.alpha == best
        assert d.demand_set == tuple(sorted(j for j, r in ratios.items() if r == best))


@given(market_and_prices(), st.data())
def test_alpha_non_increasing_in_prices(case, data):
    inst, p = case
    raised = [pj + data.draw(rational) for pj in p]
    for i in range(inst.n):
        assert compute_demand(inst, raised, i).alpha <= compute_demand(inst, p, i).alpha


@given(market_and_prices(), rational)
def test_effective_price_monotone_and_local(case, bump):
    inst, p = case
    j = 0
    raised = [p[0] + bump] + p[1:]
    for i in range(inst.n):
        if inst.costs[i][j] is BLOCKED:
            continue
        assert effective_price(inst, raised, i, j) >= effective_price(inst, p, i, j)
        for other in range(1, inst.m):
            assert effective_price(inst, raised, i, other) == effective_price(inst, p, i, other)


@given(markets(max_n=4, max_m=4))
def test_dump_parse_roundtrip(inst):
    assert parse_instance(dump_instance(inst)) == inst
