import math

import numpy as np
import pytest

from piggyback.demand import DemandTensor
from piggyback.routing import (
    EMPTY_ROUTE,
    PackageRequest,
    build_graph,
    optimal_route,
    route_from_legs,
    route_probability,
    shortest_route,
)

N = 24


def tensor_from(p):
    p = np.asarray(p, dtype=np.float64)
    return DemandTensor(p=p, marginal_x=p.sum(axis=0))


def random_instance(rng, m, fill=0.85):
    """Random tensor and travel matrix for a small city."""
    p = rng.uniform(0.02, 0.9, size=(m, m, N))
    p[rng.random((m, m, N)) > fill] = 0.0
    delta = rng.integers(1, 4, size=(m, m))
    delta = np.minimum(delta, delta.T)
    np.fill_diagonal(delta, 0)
    return tensor_from(p), delta.astype(np.int64)


def enumerate_best(dep, des, dep_slot, budget, tensor, delta):
    """DFS over every feasible leg sequence; returns the max route probability."""
    if dep == des:
        return 1.0
    p = tensor.p
    m = p.shape[0]
    best = 0.0

    def dfs(block, t, prob):
        nonlocal best
        if block == des:
            best = max(best, prob)
            return  # longer continuations only multiply by <= 1 factors
        for j in range(m):
            if j == block:
                continue
            nt = t + int(delta[block, j])
            if nt > budget:
                continue
            leg_p = p[j, block, (dep_slot + t) % N]
            if leg_p > 0.0:
                dfs(j, nt, prob * leg_p)

    dfs(dep, 0, 1.0)
    return best


def pkg(dep, des, dep_slot=0, max_slots=6):
    return PackageRequest("t", dep, des, dep_slot, dep_slot, max_slots)


# ---------------------------------------------------------------- graph

def test_zero_tensor_builds_edgeless_graph():
    tensor = tensor_from(np.zeros((3, 3, N)))
    delta = np.array([[0, 1, 2], [1, 0, 1], [2, 1, 0]])
    graph = build_graph(tensor, delta, origin_slot=0, horizon=4)
    assert graph.node_count == 15
    assert graph.edge_set() == set()


def test_two_block_single_edge_family():
    p = np.zeros((2, 2, N))
    p[1, 0, :] = 0.5
    tensor = tensor_from(p)
    delta = np.array([[0, 1], [1, 0]])
    horizon = 7
    graph = build_graph(tensor, delta, origin_slot=3, horizon=horizon)
    edges = graph.edge_set()
    assert len(edges) == horizon
    assert edges == {(graph.node(0, t), graph.node(1, t + 1)) for t in range(horizon)}
    for u, nbrs in enumerate(graph.adjacency):
        for _, w in nbrs:
            assert w == pytest.approx(math.log(2.0))


def test_graph_edges_match_brute_force_rule():
    rng = np.random.default_rng(4)
    tensor, delta = random_instance(rng, 3)
    horizon = 4
    origin = 7
    graph = build_graph(tensor, delta, origin, horizon)
    want = set()
    for tk in range(horizon + 1):
        for i in range(3):
            for tg in range(horizon + 1):
                for j in range(3):
                    if tg - tk == delta[i, j] and tensor.p[j, i, (origin + tk) % N] > 0:
                        want.add((graph.node(i, tk), graph.node(j, tg)))
    assert graph.edge_set() == want


# ---------------------------------------------------------------- optimal route

def test_same_block_package_needs_no_route():
    rng = np.random.default_rng(1)
    tensor, delta = random_instance(rng, 4)
    route = optimal_route(pkg(2, 2), tensor, delta)
    assert route == EMPTY_ROUTE
    assert route.weight == 0.0
    assert route.probability == 1.0


def test_uniform_tensor_prefers_minimum_hops():
    m = 4
    p = np.full((m, m, N), 0.37)
    tensor = tensor_from(p)
    delta = np.array([
        [0, 1, 1, 2],
        [1, 0, 1, 1],
        [1, 1, 0, 1],
        [2, 1, 1, 0],
    ])
    route = optimal_route(pkg(0, 3, max_slots=6), tensor, delta)
    assert len(route.legs) == 1  # direct hop beats any chain
    assert route.weight == pytest.approx(-math.log(0.37))


def test_unreachable_destination_returns_none():
    p = np.zeros((3, 3, N))
    p[1, 0, :] = 0.5  # only 0 -> 1 ever has probability
    tensor = tensor_from(p)
    delta = np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]])
    assert optimal_route(pkg(0, 2, max_slots=5), tensor, delta) is None


def test_budget_below_any_leg_returns_none():
    rng = np.random.default_rng(2)
    tensor, delta = random_instance(rng, 3)
    delta[:] = 3
    np.fill_diagonal(delta, 0)
    assert shortest_route(0, 1, 0, 2, tensor, delta) is None


def test_route_respects_deadline_and_chains_legs():
    rng = np.random.default_rng(3)
    for _ in range(30):
        tensor, delta = random_instance(rng, 5)
        request = pkg(int(rng.integers(5)), int(rng.integers(5)),
                      int(rng.integers(N)), int(rng.integers(2, 7)))
        route = optimal_route(request, tensor, delta)
        if route is None or not route.legs:
            continue
        assert route.legs[0].from_block == request.dep
        assert route.legs[-1].to_block == request.des
        assert route.duration <= request.max_slots
        for a, b in zip(route.legs[:-1], route.legs[1:]):
            assert a.to_block == b.from_block
            assert a.arr_slot == b.dep_slot


def test_optimal_route_matches_exhaustive_enumeration():
    rng = np.random.default_rng(2718)
    checked = 0
    for _ in range(60):
        m = int(rng.integers(2, 6))
        tensor, delta = random_instance(rng, m)
        dep, des = int(rng.integers(m)), int(rng.integers(m))
        budget = int(rng.integers(1, 7))
        dep_slot = int(rng.integers(N))
        best = enumerate_best(dep, des, dep_slot, budget, tensor, delta)
        route = shortest_route(dep, des, dep_slot, budget, tensor, delta)
        if route is None:
            assert best == 0.0
        else:
            assert route.probability == pytest.approx(best, abs=1e-12)
            assert route.weight == pytest.approx(-math.log(best), abs=1e-9)
            checked += 1
    assert checked > 20


def test_raising_an_entry_never_hurts_the_optimum():
    rng = np.random.default_rng(5)
    tensor, delta = random_instance(rng, 4)
    request = pkg(0, 3, max_slots=5)
    base = optimal_route(request, tensor, delta)
    base_p = base.probability if base else 0.0
    for _ in range(40):
        j, i = rng.integers(4, size=2)
        k = rng.integers(N)
        p2 = tensor.p.copy()
        p2[j, i, k] = min(1.0, p2[j, i, k] + rng.uniform(0.05, 0.5))
        bumped = optimal_route(request, tensor_from(p2), delta)
        bumped_p = bumped.probability if bumped else 0.0
        assert bumped_p >= base_p - 1e-12


def test_optimal_route_is_deterministic():
    rng = np.random.default_rng(6)
    tensor, delta = random_instance(rng, 5)
    a = optimal_route(pkg(0, 4, 9, 6), tensor, delta)
    b = optimal_route(pkg(0, 4, 9, 6), tensor, delta)
    assert a == b


# ---------------------------------------------------------------- route math

def test_route_probability_of_empty_route_is_one():
    rng = np.random.default_rng(7)
    tensor, _ = random_instance(rng, 3)
    assert route_probability(EMPTY_ROUTE, tensor) == 1.0


def test_route_probability_single_and_chained_legs():
    p = np.zeros((4, 4, N))
    p[1, 0, 0] = 0.3
    p[2, 1, 1] = 0.4
    p[3, 2, 2] = 0.25
    p[1, 0, 5] = 0.5
    tensor = tensor_from(p)
    one = route_from_legs([(0, 1, 5, 6)], tensor)
    assert route_probability(one, tensor) == pytest.approx(0.5)

    legs = [(0, 1, 0, 1), (1, 2, 1, 2), (2, 3, 2, 4)]
    p[1, 0, 0] = 0.5
    chained = route_from_legs(legs, tensor_from(p))
    assert chained.probability == pytest.approx(0.5 * 0.4 * 0.25)
    assert chained.weight == pytest.approx(-math.log(0.05), abs=1e-9)
