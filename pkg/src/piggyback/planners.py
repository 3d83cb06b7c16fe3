"""Online per-step passenger-selection policies.

Each planner inspects the passenger orders revealed at the package's
current block and slot and decides whether to ride one of them, wait a
slot, or give up. Planner steps are pure functions of (state, candidates,
model); the simulator owns the delivery state and advances it through
:func:`apply_decision`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .demand import DemandTensor
from .errors import InvalidDecisionError
from .routing import EMPTY_ROUTE, Leg, PackageRequest, Route, route_from_legs

IN_FLIGHT = "in_flight"
DELIVERED = "delivered"
FAILED = "failed"

TAKE = "take"
WAIT = "wait"
GIVE_UP = "give_up"


@dataclass(frozen=True)
class PassengerOrder:
    """A revealed passenger trip; in replay, riders follow shortest paths."""

    id: str
    dep_block: int
    dep_slot: int    # absolute slot
    des_block: int
    des_slot: int    # absolute slot, dep_slot + delta[dep, des]
    reveal_seq: int  # order of appearance within the slot


@dataclass(frozen=True)
class DeliveryState:
    """Progress of one package through its delivery."""

    pkg: PackageRequest
    cur_block: int
    cur_slot: int                       # absolute
    elapsed: int = 0                    # slots since departure
    planned: Optional[Route] = None     # remaining optimal route, if tracked
    taken: tuple[str, ...] = ()         # passenger order ids ridden so far
    legs: tuple[Leg, ...] = ()
    status: str = IN_FLIGHT


@dataclass(frozen=True)
class PlannerDecision:
    """One planner verdict: ride an order, wait a slot, or give up."""

    kind: str
    order: Optional[PassengerOrder] = None
    route: Optional[Route] = None       # replanned remainder, when the policy tracks one

    @classmethod
    def take(cls, order: PassengerOrder, route: Optional[Route] = None) -> "PlannerDecision":
        return cls(TAKE, order, route)

    @classmethod
    def wait(cls) -> "PlannerDecision":
        return cls(WAIT)

    @classmethod
    def give_up(cls) -> "PlannerDecision":
        return cls(GIVE_UP)


def candidate_set(state: DeliveryState, slot_orders: Sequence[PassengerOrder]) -> list[PassengerOrder]:
    """Orders the package can ride right now.

    Filters to the current block and slot and drops any order whose ride
    would burn more budget than remains; taking one of those would force a
    missed deadline, so they are never offered to policies.
    """
    budget = state.pkg.max_slots - state.elapsed
    picked = [
        v for v in slot_orders
        if v.dep_block == state.cur_block
        and v.dep_slot == state.cur_slot
        and v.des_slot - v.dep_slot <= budget
    ]
    picked.sort(key=lambda v: v.reveal_seq)
    return picked


def _first_direct(state: DeliveryState, cand: Sequence[PassengerOrder]) -> Optional[PassengerOrder]:
    for v in cand:
        if v.des_block == state.pkg.des:
            return v
    return None


def hsp_step(state: DeliveryState, cand: Sequence[PassengerOrder],
             tensor: DemandTensor) -> PlannerDecision:
    """Greedy one-hop policy: ride toward the block most likely to flow onward.

    A candidate heading straight to the package destination is always taken.
    Otherwise the candidate whose drop-off block has the highest predicted
    flow probability toward the destination (at the drop-off slot) wins;
    zero-probability drop-offs score infinitely bad, and an all-bad or empty
    candidate set means wait in place.
    """
    if not cand:
        return PlannerDecision.wait()
    direct = _first_direct(state, cand)
    if direct is not None:
        return PlannerDecision.take(direct, route=EMPTY_ROUTE)
    n = tensor.slot_count
    des = state.pkg.des
    best = None
    best_score = np.inf
    for v in cand:
        score = tensor.neglog[des, v.des_block, v.des_slot % n]
        if score < best_score:
            best, best_score = v, score
    if best is None:
        return PlannerDecision.wait()
    return PlannerDecision.take(best)


@dataclass
class TailTable:
    """Minimum route weights from every (block, slot) into one destination.

    Backward pass over the time-expanded lattice for a fixed absolute
    deadline; ``dist[r, i]`` is the best achievable weight from block i at
    ``dep_slot + r`` arriving at the destination no later than the deadline,
    and ``succ`` chains the corresponding next blocks.
    """

    des: int
    dep_slot: int
    max_slots: int
    dist: np.ndarray   # (max_slots + 1, M)
    succ: np.ndarray   # (max_slots + 1, M)

    def extract_route(self, block: int, layer: int, tensor: DemandTensor,
                      delta: np.ndarray) -> Optional[Route]:
        if block == self.des:
            return EMPTY_ROUTE
        if not np.isfinite(self.dist[layer, block]):
            return None
        legs = []
        i, r = block, layer
        while i != self.des:
            j = int(self.succ[r, i])
            hop = int(delta[i, j])
            legs.append(Leg(i, j, self.dep_slot + r, self.dep_slot + r + hop))
            i, r = j, r + hop
        return route_from_legs(legs, tensor)


def route_tail_table(des: int, dep_slot: int, max_slots: int,
                     tensor: DemandTensor, delta: np.ndarray) -> TailTable:
    """Build the backward shortest-path table for one package's deadline."""
    m = tensor.block_count
    n = tensor.slot_count
    dist = np.full((max_slots + 1, m), np.inf)
    dist[:, des] = 0.0
    succ = np.full((max_slots + 1, m), -1, dtype=np.int64)
    cols = np.arange(m)
    reach = np.minimum(delta, max_slots + 1)  # layer offsets; clip keeps indexing safe
    for r in range(max_slots - 1, -1, -1):
        slot = (dep_slot + r) % n
        hop_w = tensor.neglog[:, :, slot].T          # [from i, to j]
        layers = r + reach
        valid = (r + delta) <= max_slots
        tails = np.where(valid, dist[np.minimum(layers, max_slots), cols[None, :]], np.inf)
        cand = hop_w + tails
        np.fill_diagonal(cand, np.inf)
        best = cand.min(axis=1)
        better = best < dist[r]
        dist[r, better] = best[better]
        succ[r, better] = cand.argmin(axis=1)[better]
    return TailTable(des, dep_slot, max_slots, dist, succ)


def psp_step(state: DeliveryState, cand: Sequence[PassengerOrder], tensor: DemandTensor,
             delta: np.ndarray, tails: Optional[TailTable] = None) -> PlannerDecision:
    """Replanning policy: follow the tracked optimal route, replan on mismatch.

    Priority order: a direct candidate ends the delivery; a candidate that
    realizes the next leg of the tracked route is followed without
    replanning; otherwise every candidate is scored by its hop weight plus
    the best remaining route weight from its drop-off, and the tracked
    route is replaced by the winner's remainder. ``tails`` may carry the
    package's precomputed backward table; it is rebuilt when absent.
    """
    if not cand:
        return PlannerDecision.wait()
    direct = _first_direct(state, cand)
    if direct is not None:
        return PlannerDecision.take(direct, route=EMPTY_ROUTE)

    planned = state.planned
    if planned is not None and planned.legs:
        leg0 = planned.legs[0]
        for v in cand:
            if v.des_block == leg0.to_block and v.des_slot == leg0.arr_slot:
                return PlannerDecision.take(v, route=route_from_legs(planned.legs[1:], tensor))

    pkg = state.pkg
    if tails is None or tails.des != pkg.des or tails.dep_slot != pkg.dep_slot \
            or tails.max_slots != pkg.max_slots:
        tails = route_tail_table(pkg.des, pkg.dep_slot, pkg.max_slots, tensor, delta)
    n = tensor.slot_count
    best = None
    best_layer = -1
    best_score = np.inf
    for v in cand:
        layer = v.des_slot - pkg.dep_slot
        if layer < 0 or layer > pkg.max_slots:   # outside the budget lattice
            continue
        hop_w = tensor.neglog[v.des_block, state.cur_block, state.cur_slot % n]
        score = hop_w + tails.dist[layer, v.des_block]
        if np.isfinite(score) and score < best_score:
            best, best_layer, best_score = v, layer, score
    if best is None:
        return PlannerDecision.wait()
    return PlannerDecision.take(best, route=tails.extract_route(best.des_block, best_layer,
                                                                tensor, delta))


def baseline_step(policy: str, state: DeliveryState, cand: Sequence[PassengerOrder],
                  delta: np.ndarray) -> PlannerDecision:
    """Reference policies: first-come-first-served and nearest-destination greedy."""
    if not cand:
        return PlannerDecision.wait()
    if policy == "fcfs":
        return PlannerDecision.take(cand[0])
    if policy == "descloser":
        des = state.pkg.des
        best = min(cand, key=lambda v: (int(delta[v.des_block, des]), v.reveal_seq))
        return PlannerDecision.take(best)
    raise ValueError(f"unknown baseline policy {policy!r}")


def apply_decision(state: DeliveryState, decision: PlannerDecision, delta: np.ndarray,
                   candidates: Sequence[PassengerOrder]) -> DeliveryState:
    """Advance a delivery state by one planner decision.

    Riding an order moves the package to the order's destination and burns
    its ride time; waiting burns one slot in place. A package that reaches
    its destination within budget is delivered; one whose budget is
    exhausted anywhere else has failed (the carrying taxi then drives
    direct, which by definition lands past the deadline).
    """
    pkg = state.pkg
    if decision.kind == GIVE_UP:
        return replace(state, status=FAILED)
    if decision.kind == WAIT:
        elapsed = state.elapsed + 1
        status = FAILED if elapsed >= pkg.max_slots else IN_FLIGHT
        return replace(state, cur_slot=state.cur_slot + 1, elapsed=elapsed, status=status)
    if decision.kind != TAKE:
        raise InvalidDecisionError(f"unknown decision kind {decision.kind!r}")

    order = decision.order
    if order is None or all(order.id != v.id for v in candidates):
        raise InvalidDecisionError("take decision references an order outside the candidate set")
    duration = order.des_slot - order.dep_slot
    elapsed = state.elapsed + duration
    cur_block = order.des_block
    leg = Leg(order.dep_block, cur_block, order.dep_slot, order.des_slot)
    if cur_block == pkg.des:
        status = DELIVERED
    elif elapsed >= pkg.max_slots:
        status = FAILED
    else:
        status = IN_FLIGHT
    return replace(
        state,
        cur_block=cur_block,
        cur_slot=state.cur_slot + duration,
        elapsed=elapsed,
        planned=decision.route if decision.route is not None else state.planned,
        taken=state.taken + (order.id,),
        legs=state.legs + (leg,),
        status=status,
    )
