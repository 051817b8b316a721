import math
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from tcfisher.model import make_instance, parse_instance

FIXTURES = Path(__file__).parent / "fixtures"

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SQRT2 = math.sqrt(2)
# known equilibrium of the two-buyer example with a near-prohibitive cost
E1_PRICE = 1 / SQRT2
E1_ALLOC = (SQRT2 / (SQRT2 + 1), 1 / (SQRT2 + 1), 1.0)
# positive root of p^2 - 1.5p - 0.5
E4_PRICE = (1.5 + math.sqrt(4.25)) / 2


def load(name):
    return parse_instance((FIXTURES / f"{name}.json").read_text())


@pytest.fixture
def e1():
    return make_instance([1, 1], [[1000, 1], [1, 1]], [[1, 1000], [0, 0]], buyer_ids=["i", "k"])


@pytest.fixture
def e2():
    return make_instance([1], [[1]], [[0]])


@pytest.fixture
def e4():
    return make_instance([1, 1], [[1], [1]], [[0], [Fraction(1, 2)]])


@pytest.fixture
def fixture_path():
    return lambda name: str(FIXTURES / f"{name}.json")


def hand_state(inst, eps, *, p=None, k=None, h=None, y=None, r=None, numeric="exact"):
    """A solver state with prices and holdings set by hand.

    ``z`` is derived from the holdings and ``r`` (unless given) from the
    surplus definition; ``pi`` and the demand graph are rebuilt.
    """
    from tcfisher.engine import DemandIndex, SolverConfig, build_demand_graph, fix_pi, initialize

    state = initialize(inst, eps, SolverConfig(numeric=numeric))
    nb = state.numeric
    n, m = inst.n, inst.m
    if k is not None:
        state.k = list(k)
        state.p = state.prices_from_exponents()
    elif p is not None:
        state.p = nb.vec(p)
    if h is not None:
        state.h = nb.mat(h)
    if y is not None:
        state.y = nb.mat(y)
    state.z = [1 - sum(state.h[i][j] + state.y[i][j] for i in range(n)) for j in range(m)]
    if r is not None:
        state.r = nb.vec(r)
    else:
        state.r = [state.B[i] - sum((state.p[j] + state.c[i][j]) * state.h[i][j]
                                    + (state.lower_price(j) + state.c[i][j]) * state.y[i][j]
                                    for j in range(m)) for i in range(n)]
    state.demand = DemandIndex(state)
    state.graph = None
    fix_pi(state)
    state.graph = build_demand_graph(state)
    return state


def surplus_from_definition(state, i):
    return state.B[i] - sum((state.p[j] + state.c[i][j]) * state.h[i][j]
                            + (state.lower_price(j) + state.c[i][j]) * state.y[i][j]
                            for j in range(state.m))


CYCLE_EPS = Fraction(1, 10)
CYCLE_EXPONENT = 25


def cycle_instance(eps=CYCLE_EPS):
    """Two buyers who each mildly prefer the good the other one holds."""
    third = 1 + eps / 3
    return make_instance([1, 1], [[third, 2], [2, third]], [[0, 1], [1, 0]], buyer_ids=["i", "k"])


def cycle_state(eps=CYCLE_EPS, extra=Fraction(1, 2)):
    """Both prices raised above one, ``i`` holding good 1 and ``k`` good 2 on
    the lower tier, and ``extra`` surplus left with ``i`` only.

    Budgets are chosen so that the holdings plus ``extra`` exactly exhaust
    them; the instance is rebuilt around those budgets.
    """
    from tcfisher.model import make_instance as mk

    base = cycle_instance(eps)
    price = eps * (1 + eps) ** CYCLE_EXPONENT
    lower = price / (1 + eps)
    inst = mk([lower + extra, lower], base.utilities, base.costs, buyer_ids=base.buyer_ids)
    return hand_state(inst, eps, k=[CYCLE_EXPONENT, CYCLE_EXPONENT], y=[[1, 0], [0, 1]])
