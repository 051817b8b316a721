"""Transfer amounts that respect shipping costs, and why the naive ones fail."""
from fractions import Fraction as F

from literal_rules import edge_case, edge_transfer_with_max, sink_case, sink_feed_by_eps
from tcfisher.engine import EdgeOutcome, EventKind, transfer_edge, transfer_walk
from tcfisher.verify import check_invariants


def test_edge_transfer_takes_the_smaller_amount():
    s = edge_case()
    assert transfer_edge(s, 0, 1) is EdgeOutcome.SURPLUS_ZEROED
    # r_i / (p + c) = 0.22 / 1.2 is below the 0.3 units on offer
    assert s.h[0][0] == F(22, 100) / F(12, 10)
    assert s.y[1][0] == F(3, 10) - F(22, 100) / F(12, 10)
    assert s.r[0] == 0
    assert check_invariants(s)["I1 surplus"].passed


def test_larger_amount_overspends():
    s = edge_case()
    edge_transfer_with_max(s, 0, 1)
    assert s.r[0] == F(22, 100) - F(3, 10) * F(12, 10) < 0
    rep = check_invariants(s)
    assert not rep["I1 surplus"].passed and rep["I1 surplus"].witness == (0,)


def test_sink_feed_pays_price_plus_cost():
    s = sink_case()
    ev = transfer_walk(s)
    assert ev.kind is EventKind.SINK_FED
    # min(r / (eps + c), z) = min(1 / 1.1, 1)
    assert s.h[0][0] == F(10, 11) and s.r[0] == 0
    assert check_invariants(s).passed


def test_sink_feed_by_eps_overspends():
    s = sink_case()
    sink_feed_by_eps(s, 0)
    # min(r / eps, z) = 1 unit at 1.1 per unit
    assert s.h[0][0] == 1 and s.r[0] == F(-1, 10)
    assert not check_invariants(s)["I1 surplus"].passed


def test_rules_agree_without_costs():
    from tcfisher.engine import initialize
    from tcfisher.model import make_instance

    inst = make_instance([1, 1], [[1, 1], [1, 1]], [[0, 0], [0, 0]])
    a, b = initialize(inst, F(1, 10)), initialize(inst, F(1, 10))
    transfer_walk(a)
    sink_feed_by_eps(b, 0)
    assert a.h == b.h and a.r == b.r
