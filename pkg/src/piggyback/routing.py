"""Time-expanded routing: the block-slot graph and exact route planning.

Nodes are (block, relative slot) pairs over a bounded horizon; an edge
exists from (i, t) to (j, t + delta[i, j]) whenever the flow tensor gives
the hop positive probability, weighted -ln P. Minimizing total weight is
equivalent to maximizing the product of hop probabilities, so a
non-negative-weight shortest path yields the maximum-probability route.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .demand import DemandTensor


class Leg(NamedTuple):
    from_block: int
    to_block: int
    dep_slot: int   # absolute (unwrapped) slot
    arr_slot: int


@dataclass(frozen=True)
class Route:
    """An ordered chain of passenger hops carrying a package."""

    legs: tuple[Leg, ...]
    weight: float         # sum of -ln P over legs
    probability: float    # product of P over legs

    @property
    def duration(self) -> int:
        return self.legs[-1].arr_slot - self.legs[0].dep_slot if self.legs else 0


EMPTY_ROUTE = Route((), 0.0, 1.0)


@dataclass(frozen=True)
class PackageRequest:
    """A package: origin/destination blocks, timing, and the delivery budget."""

    id: str
    dep: int
    des: int
    dep_slot: int   # absolute slot the carrying taxi departs (depT)
    gen_slot: int   # absolute slot the request appeared (genT)
    max_slots: int  # delivery deadline, in slots after departure (maxT)

    def __post_init__(self):
        if self.max_slots < 1:
            raise ValueError("max_slots must be >= 1")


def route_probability(route: Route, tensor: DemandTensor) -> float:
    """Product of the tensor entries of each leg at its departure slot (1 if empty)."""
    n = tensor.slot_count
    prob = 1.0
    for leg in route.legs:
        prob *= float(tensor.p[leg.to_block, leg.from_block, leg.dep_slot % n])
    return prob


def route_from_legs(legs, tensor: DemandTensor) -> Route:
    """Assemble a Route, deriving weight and probability from the tensor."""
    legs = tuple(Leg(*leg) for leg in legs)
    n = tensor.slot_count
    weight = 0.0
    prob = 1.0
    for leg in legs:
        w = float(tensor.neglog[leg.to_block, leg.from_block, leg.dep_slot % n])
        weight += w
        prob *= float(tensor.p[leg.to_block, leg.from_block, leg.dep_slot % n])
    return Route(legs, weight, prob)


@dataclass(frozen=True)
class TimeExpandedGraph:
    """Explicit adjacency representation of the block-slot graph."""

    block_count: int
    horizon: int
    origin_slot: int
    adjacency: tuple[tuple[tuple[int, float], ...], ...]  # node -> ((target, weight), ...)

    def node(self, block: int, t: int) -> int:
        return t * self.block_count + block

    @property
    def node_count(self) -> int:
        return (self.horizon + 1) * self.block_count

    def edge_set(self) -> set[tuple[int, int]]:
        return {(u, v) for u, nbrs in enumerate(self.adjacency) for v, _ in nbrs}


def build_graph(tensor: DemandTensor, delta: np.ndarray, origin_slot: int,
                horizon: int) -> TimeExpandedGraph:
    """Materialize the time-expanded graph for a bounded horizon.

    Slot lookups into the daily tensor wrap, so horizons longer than one
    day reuse the daily pattern.
    """
    m = tensor.block_count
    n = tensor.slot_count
    adjacency: list[tuple[tuple[int, float], ...]] = []
    neglog = tensor.neglog
    for t in range(horizon + 1):
        slot = (origin_slot + t) % n
        for i in range(m):
            arr = t + delta[i]
            weights = neglog[:, i, slot]
            ok = (arr <= horizon) & np.isfinite(weights)
            targets = arr[ok] * m + np.flatnonzero(ok)
            adjacency.append(tuple(zip(targets.tolist(), weights[ok].tolist())))
    return TimeExpandedGraph(m, horizon, origin_slot, tuple(adjacency))


def _path_blocks(pred: np.ndarray, node: int, block_count: int) -> tuple[int, ...]:
    blocks = []
    while node >= 0:
        blocks.append(node % block_count)
        node = int(pred[node])
    return tuple(reversed(blocks))


def shortest_route(dep: int, des: int, dep_slot: int, budget: int,
                   tensor: DemandTensor, delta: np.ndarray) -> Optional[Route]:
    """Maximum-probability route from dep to des arriving within ``budget`` slots.

    Dijkstra over the dense node lattice: every pop scans the full distance
    array, trading asymptotic elegance for branch-free numpy inner loops.
    Ties are broken toward the earliest arrival slot, then the
    lexicographically smallest block sequence, so results are deterministic.
    """
    if dep == des:
        return EMPTY_ROUTE
    if budget < 1:
        return None
    m = tensor.block_count
    n = tensor.slot_count
    neglog = tensor.neglog
    node_count = (budget + 1) * m
    dist = np.full(node_count, np.inf)
    pred = np.full(node_count, -1, dtype=np.int64)
    settled = np.zeros(node_count, dtype=bool)
    dist[dep] = 0.0
    block_ids = np.arange(m)

    for _ in range(node_count):
        u = int(np.argmin(np.where(settled, np.inf, dist)))
        du = dist[u]
        if not np.isfinite(du) or settled[u]:
            break
        settled[u] = True
        t, i = divmod(u, m)
        arr = t + delta[i]
        weights = neglog[:, i, (dep_slot + t) % n]
        ok = (arr <= budget) & np.isfinite(weights) & (block_ids != i)
        if not ok.any():
            continue
        targets = arr[ok] * m + block_ids[ok]
        cand = du + weights[ok]
        current = dist[targets]
        improve = cand < current
        dist[targets[improve]] = cand[improve]
        pred[targets[improve]] = u
        tied = np.flatnonzero((cand == current) & ~improve)
        for idx in tied:
            v = int(targets[idx])
            if pred[v] < 0 or pred[v] == u:
                continue
            challenger = _path_blocks(pred, u, m) + (v % m,)
            if challenger < _path_blocks(pred, v, m):
                pred[v] = u

    # Among destination copies: minimum weight, ties to the earliest arrival
    # (path-level ties were already settled during relaxation).
    best_node = -1
    best_dist = np.inf
    for t in range(1, budget + 1):
        node = t * m + des
        if np.isfinite(dist[node]) and dist[node] < best_dist:
            best_dist = dist[node]
            best_node = node
    if best_node < 0:
        return None

    blocks = _path_blocks(pred, best_node, m)
    legs = []
    t = 0
    for a, b in zip(blocks[:-1], blocks[1:]):
        hop = int(delta[a, b])
        legs.append(Leg(a, b, dep_slot + t, dep_slot + t + hop))
        t += hop
    return route_from_legs(legs, tensor)


def optimal_route(pkg: PackageRequest, tensor: DemandTensor,
                  delta: np.ndarray) -> Optional[Route]:
    """Best route for a package request, or None when no feasible route exists."""
    return shortest_route(pkg.dep, pkg.des, pkg.dep_slot, pkg.max_slots, tensor, delta)
