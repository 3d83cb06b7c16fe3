"""Slot-stepped replay: packages, taxis, and a revealed passenger-order stream.

The simulator walks absolute slots. Each slot it matches waiting packages
to idle taxis in their block, then lets every in-flight package's planner
look at that slot's unconsumed orders and act. With order exclusivity on
(the default), an order ridden by one package-carrying taxi disappears
from every other package's view; the rest of the fleet's ordinary
passenger service is out of scope.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .demand import DemandTensor, OrderRecord
from .errors import ConfigError
from .grid import GridSpec, SECONDS_PER_DAY
from .planners import (
    DELIVERED,
    FAILED,
    IN_FLIGHT,
    TAKE,
    DeliveryState,
    PassengerOrder,
    TailTable,
    apply_decision,
    baseline_step,
    candidate_set,
    hsp_step,
    psp_step,
    route_tail_table,
)
from .routing import PackageRequest, route_from_legs

PLANNERS = ("hsp", "psp", "fcfs", "descloser", "aveprob")

UNMATCHED = "unmatched"


@dataclass
class TaxiState:
    """One taxi: where it is, when it frees up, and what it carries."""

    id: int
    block: int
    available_from: int = 0
    carrying: Optional[str] = None


@dataclass(frozen=True)
class SimConfig:
    max_slots: int
    planner: str
    seed: int
    package_count: int
    order_exclusive: bool = True
    wait_limit_for_match: int = 6

    def __post_init__(self):
        if self.max_slots < 1 or self.package_count < 1:
            raise ValueError("max_slots and package_count must be >= 1")


@dataclass
class PackageRecord:
    """Per-package outcome row feeding the aggregate metrics."""

    package_id: str
    status: str
    matched: bool
    match_wait: int = 0
    elapsed: int = 0
    hops: int = 0
    candidates_seen: int = 0
    neglogp: float = math.nan   # -ln(route probability), delivered packages only
    plan_seconds: float = 0.0
    plan_steps: int = 0
    order_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class SimMetrics:
    success_rate: float
    average_neglogp: float
    matching_rate: float
    mean_step_ms: float
    delivered: int
    failed: int
    unmatched: int
    records: tuple[PackageRecord, ...] = field(repr=False, default=())


def generate_packages(grid: GridSpec, district_weights: Sequence[tuple[Iterable[int], float]],
                      count: int, seed: int, dep_slots, max_slots: int,
                      exclude_same_block: bool = False) -> list[PackageRequest]:
    """Draw package requests: origins follow district density, destinations are uniform.

    ``dep_slots`` is one absolute slot or a sequence of them; ``count``
    packages are drawn at each. Sampling is reproducible under ``seed``.
    ``exclude_same_block`` redraws destinations that land on the origin
    block (those deliver trivially at dispatch).
    """
    m = grid.block_count
    weights = np.zeros(m)
    for blocks, density in district_weights:
        for b in blocks:
            weights[b] = density
    if np.any(weights <= 0):
        raise ValueError("district weights must cover every block with positive density")
    weights = weights / weights.sum()
    if isinstance(dep_slots, int):
        dep_slots = [dep_slots]
    rng = np.random.default_rng(seed)
    packages = []
    for slot in dep_slots:
        origins = rng.choice(m, size=count, p=weights)
        dests = rng.integers(0, m, size=count)
        for i in range(count):
            while exclude_same_block and dests[i] == origins[i]:
                dests[i] = rng.integers(0, m)
            packages.append(PackageRequest(
                id=f"pkg-{slot}-{i:05d}",
                dep=int(origins[i]),
                des=int(dests[i]),
                dep_slot=int(slot),
                gen_slot=int(slot),
                max_slots=max_slots,
            ))
    return packages


def generate_taxi_roster(grid: GridSpec, count: int, seed: int,
                         district_weights=None) -> list[TaxiState]:
    """Scatter idle taxis over blocks, optionally following district density."""
    m = grid.block_count
    rng = np.random.default_rng(seed)
    if district_weights is None:
        blocks = rng.integers(0, m, size=count)
    else:
        weights = np.zeros(m)
        for bs, density in district_weights:
            for b in bs:
                weights[b] = density
        blocks = rng.choice(m, size=count, p=weights / weights.sum())
    return [TaxiState(id=i, block=int(blocks[i])) for i in range(count)]


def match_taxi(pkg: PackageRequest, taxis: Sequence[TaxiState], cur_slot: int) -> Optional[int]:
    """Lowest-id taxi idle in the package's block this slot, or None.

    Block granularity makes every co-located taxi equidistant, so the id
    is the only stable tie-break.
    """
    best = None
    for taxi in taxis:
        if taxi.carrying is None and taxi.available_from <= cur_slot and taxi.block == pkg.dep:
            if best is None or taxi.id < best:
                best = taxi.id
    return best


def to_passenger_orders(orders: Sequence[OrderRecord], delta: np.ndarray, grid: GridSpec,
                        utc_offset_seconds: int = 0) -> list[PassengerOrder]:
    """Convert raw orders to replayable passenger orders on an absolute slot axis.

    Riders follow shortest paths, so the drop-off slot is pinned to
    departure slot plus the travel matrix entry. Absolute slots count from
    the local midnight of the earliest order; reveal order is raw
    timestamp order.
    """
    if not orders:
        return []
    base_day = min((o.dep_epoch + utc_offset_seconds) // SECONDS_PER_DAY for o in orders)
    indexed = sorted(range(len(orders)), key=lambda ix: (orders[ix].dep_epoch, ix))
    out = []
    for seq, ix in enumerate(indexed):
        o = orders[ix]
        day = (o.dep_epoch + utc_offset_seconds) // SECONDS_PER_DAY - base_day
        dep_abs = int(day) * grid.slot_count + o.dep_slot
        ride = int(delta[o.dep_block, o.des_block])
        out.append(PassengerOrder(
            id=o.order_id,
            dep_block=o.dep_block,
            dep_slot=dep_abs,
            des_block=o.des_block,
            des_slot=dep_abs + ride,
            reveal_seq=seq,
        ))
    return out


def _plan_step(planner: str, state: DeliveryState, cand, tensor: DemandTensor,
               delta: np.ndarray, tails: Optional[TailTable]):
    if planner == "hsp":
        return hsp_step(state, cand, tensor)
    if planner in ("psp", "aveprob"):
        return psp_step(state, cand, tensor, delta, tails)
    return baseline_step(planner, state, cand, delta)


@dataclass
class _Flight:
    state: DeliveryState
    taxi: TaxiState
    record: PackageRecord
    tails: Optional[TailTable] = None


def run_simulation(cfg: SimConfig, tensor: DemandTensor, delta: np.ndarray,
                   test_orders: Sequence[PassengerOrder], packages: Sequence[PackageRequest],
                   taxis: Sequence[TaxiState]) -> SimMetrics:
    """Replay one configuration and return its metrics.

    Packages are processed in list order (ascending id) inside every slot,
    so exclusivity conflicts resolve deterministically; the whole run is a
    pure function of its inputs.
    """
    if cfg.planner not in PLANNERS:
        raise ConfigError(f"unknown planner {cfg.planner!r}; expected one of {PLANNERS}")
    uses_tails = cfg.planner in ("psp", "aveprob")
    taxis = [replace(t) for t in taxis]  # the roster is simulator state; callers keep theirs
    taxi_by_id = {taxi.id: taxi for taxi in taxis}

    by_slot_block: dict[int, dict[int, list[PassengerOrder]]] = {}
    for order in test_orders:
        by_slot_block.setdefault(order.dep_slot, {}).setdefault(order.dep_block, []).append(order)
    consumed: set[str] = set()

    pending: list[PackageRequest] = sorted(packages, key=lambda p: (p.gen_slot, p.id))
    flights: list[_Flight] = []
    done: list[PackageRecord] = []
    tail_cache: dict[tuple[int, int, int], TailTable] = {}

    t = min((p.gen_slot for p in pending), default=0)
    horizon = max((p.gen_slot for p in pending), default=0) + cfg.wait_limit_for_match \
        + cfg.max_slots + 1

    while (pending or flights) and t <= horizon:
        # Matching: packages wait in place for an idle taxi, bounded by the window.
        still_pending = []
        for pkg in pending:
            if pkg.gen_slot > t:
                still_pending.append(pkg)
                continue
            taxi_id = match_taxi(pkg, taxis, t)
            if taxi_id is None:
                if t - pkg.gen_slot >= cfg.wait_limit_for_match:
                    done.append(PackageRecord(pkg.id, UNMATCHED, matched=False,
                                              match_wait=t - pkg.gen_slot))
                else:
                    still_pending.append(pkg)
                continue
            taxi = taxi_by_id[taxi_id]
            taxi.carrying = pkg.id
            dispatched = replace(pkg, dep_slot=t)
            record = PackageRecord(pkg.id, IN_FLIGHT, matched=True, match_wait=t - pkg.gen_slot)
            if dispatched.dep == dispatched.des:
                record.status = DELIVERED
                record.neglogp = 0.0
                taxi.carrying = None
                taxi.available_from = t
                done.append(record)
                continue
            state = DeliveryState(pkg=dispatched, cur_block=dispatched.dep, cur_slot=t)
            tails = None
            if uses_tails:
                key = (dispatched.des, t, cfg.max_slots)
                tails = tail_cache.get(key)
                if tails is None:
                    tails = route_tail_table(dispatched.des, t, cfg.max_slots, tensor, delta)
                    tail_cache[key] = tails
                state = replace(state, planned=tails.extract_route(dispatched.dep, 0, tensor, delta))
            flights.append(_Flight(state, taxi, record, tails))
        pending = still_pending

        # Planning: every package idle at this slot consults its policy.
        remaining = []
        for flight in flights:
            state = flight.state
            if state.cur_slot != t:          # mid-ride; resumes at its arrival slot
                remaining.append(flight)
                continue
            bucket = by_slot_block.get(t, {}).get(state.cur_block, [])
            if consumed:
                bucket = [v for v in bucket if v.id not in consumed]
            cand = candidate_set(state, bucket)
            flight.record.candidates_seen += len(cand)
            started = time.perf_counter()
            decision = _plan_step(cfg.planner, state, cand, tensor, delta, flight.tails)
            flight.record.plan_seconds += time.perf_counter() - started
            flight.record.plan_steps += 1
            state = apply_decision(state, decision, delta, cand)
            if decision.kind == TAKE and cfg.order_exclusive:
                consumed.add(decision.order.id)
            flight.state = state
            flight.taxi.block = state.cur_block
            flight.taxi.available_from = state.cur_slot
            if state.status == IN_FLIGHT:
                remaining.append(flight)
            else:
                flight.record.status = state.status
                flight.record.elapsed = state.elapsed
                flight.record.hops = len(state.legs)
                flight.record.order_ids = state.taken
                if state.status == DELIVERED:
                    flight.record.neglogp = route_from_legs(state.legs, tensor).weight
                flight.taxi.carrying = None
                done.append(flight.record)
        flights = remaining
        t += 1

    for flight in flights:  # horizon safety net; should not trigger
        flight.record.status = FAILED
        flight.record.elapsed = flight.state.elapsed
        flight.record.hops = len(flight.state.legs)
        flight.record.order_ids = flight.state.taken
        flight.taxi.carrying = None
        done.append(flight.record)

    return compute_metrics(done)


def compute_metrics(records: Sequence[PackageRecord],
                    exclude_unmatched: bool = False) -> SimMetrics:
    """Aggregate success, route-quality, and matching rates from package records.

    Unmatched packages count as failures by default; ``exclude_unmatched``
    drops them from the success-rate denominator for matching-focused runs.
    Empty aggregates are NaN sentinels rather than zeros.
    """
    records = tuple(records)
    delivered = [r for r in records if r.status == DELIVERED]
    failed = sum(1 for r in records if r.status == FAILED)
    unmatched = sum(1 for r in records if r.status == UNMATCHED)
    sr_total = len(records) - (unmatched if exclude_unmatched else 0)
    success_rate = len(delivered) / sr_total if sr_total else math.nan
    average_neglogp = (sum(r.neglogp for r in delivered) / len(delivered)
                       if delivered else math.nan)
    matching_rate = (sum(1 for r in records if r.matched) / len(records)
                     if records else math.nan)
    steps = sum(r.plan_steps for r in records)
    mean_step_ms = (sum(r.plan_seconds for r in records) / steps * 1000.0
                    if steps else math.nan)
    return SimMetrics(
        success_rate=success_rate,
        average_neglogp=average_neglogp,
        matching_rate=matching_rate,
        mean_step_ms=mean_step_ms,
        delivered=len(delivered),
        failed=failed,
        unmatched=unmatched,
        records=records,
    )
