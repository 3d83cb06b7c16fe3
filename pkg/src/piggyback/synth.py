"""Synthetic city specifications and reproducible order-stream generation.

Stands in for proprietary trip data: a city is a set of origin-destination
flow components, each with a daily volume and a wrapped-normal departure
peak. Generation is a pure function of (spec, days).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .demand import OrderRecord
from .grid import GridSpec, block_of, manhattan_slots, slot_of

DEFAULT_START_EPOCH = 1_623_024_000  # 2021-06-07 00:00 UTC, a Monday

# Population densities of the five bands used by the demo city and the
# package generator defaults (people per km^2, census-style magnitudes).
BAND_DENSITIES = (6990.0, 9822.0, 8755.0, 6623.0, 8233.0)


@dataclass(frozen=True)
class FlowComponent:
    """One recurring passenger flow: origin block -> destination block."""

    origin: int
    destination: int
    peak_slot: float
    spread: float        # slots; 0 pins every departure to the peak
    daily_volume: float  # Poisson mean per day


@dataclass(frozen=True)
class SynthCitySpec:
    grid: GridSpec
    components: tuple[FlowComponent, ...]
    seed: int
    start_epoch: int = DEFAULT_START_EPOCH


def generate_synthetic_orders(spec: SynthCitySpec, days: int) -> list[OrderRecord]:
    """Draw the full order stream for ``days`` consecutive days."""
    grid = spec.grid
    n = grid.slot_count
    slot_seconds = grid.slot_minutes * 60
    rng = np.random.default_rng(spec.seed)
    orders: list[OrderRecord] = []
    for day in range(days):
        day_start = spec.start_epoch + day * 86400
        for ci, comp in enumerate(spec.components):
            count = int(rng.poisson(comp.daily_volume))
            if count == 0:
                continue
            slots = np.rint(rng.normal(comp.peak_slot, comp.spread, count)).astype(int) % n
            offsets = rng.integers(0, slot_seconds, size=count)
            o_lat_lo, o_lat_hi, o_lng_lo, o_lng_hi = grid.block_bounds(comp.origin)
            d_lat_lo, d_lat_hi, d_lng_lo, d_lng_hi = grid.block_bounds(comp.destination)
            dep_lng = rng.uniform(o_lng_lo, o_lng_hi, count)
            dep_lat = rng.uniform(o_lat_lo, o_lat_hi, count)
            des_lng = rng.uniform(d_lng_lo, d_lng_hi, count)
            des_lat = rng.uniform(d_lat_lo, d_lat_hi, count)
            hops = max(manhattan_slots(grid, comp.origin, comp.destination), 1)
            rides = (hops * grid.slot_minutes * 60 * rng.uniform(0.7, 1.3, count)).astype(int)
            for i in range(count):
                dep_epoch = day_start + int(slots[i]) * slot_seconds + int(offsets[i])
                arr_epoch = dep_epoch + max(int(rides[i]), 60)
                orders.append(OrderRecord(
                    order_id=f"syn-{day}-{ci}-{i}",
                    dep_epoch=dep_epoch,
                    arr_epoch=arr_epoch,
                    dep_lng=float(dep_lng[i]),
                    dep_lat=float(dep_lat[i]),
                    dep_block=block_of(float(dep_lng[i]), float(dep_lat[i]), grid),
                    des_block=block_of(float(des_lng[i]), float(des_lat[i]), grid),
                    dep_slot=slot_of(dep_epoch, grid),
                    arr_slot=slot_of(arr_epoch, grid),
                ))
    return orders


def district_bands(grid: GridSpec, densities: Sequence[float] = BAND_DENSITIES
                   ) -> list[tuple[list[int], float]]:
    """Split the grid into horizontal bands and weight each by a density."""
    bands: list[tuple[list[int], float]] = []
    per_band = max(grid.rows // len(densities), 1)
    for d, density in enumerate(densities):
        row_lo = d * per_band
        row_hi = grid.rows if d == len(densities) - 1 else (d + 1) * per_band
        blocks = [grid.block_index(r, c)
                  for r in range(row_lo, min(row_hi, grid.rows))
                  for c in range(grid.cols)]
        if blocks:
            bands.append((blocks, density))
    return bands


DEMO_HUBS = (22, 27, 44, 45, 54, 55, 72, 77)


def rush_hour_city(seed: int = 11, volume_scale: float = 1.0,
                   morning: float = 1600.0, local: float = 2200.0,
                   mesh: float = 450.0, evening: float = 900.0,
                   noise_volume: float = 400.0, wander: float = 2200.0) -> SynthCitySpec:
    """A 10x10 demo city with commute structure.

    Morning flows drain residential blocks into nearby hub blocks, midday
    flows fan out of each hub to its neighborhood (radius four) while a
    hub-to-hub mesh carries long hauls, evening flows return home, and a
    flat all-day trickle of short neighbor trips keeps every block alive.
    Daily volume is about 5000 orders at scale 1; all volumes scale
    together.
    """
    grid = GridSpec(0.0, 0.1, 0.0, 0.1, rows=10, cols=10)
    hubs = list(DEMO_HUBS)
    bands = district_bands(grid)
    weight = np.zeros(grid.block_count)
    for blocks, density in bands:
        for b in blocks:
            weight[b] = density
    residential = [b for b in range(grid.block_count) if b not in hubs]
    res_weight = weight[residential] / weight[residential].sum()

    def home_hub(block: int) -> int:
        return min(hubs, key=lambda h: (manhattan_slots(grid, block, h), h))

    components: list[FlowComponent] = []
    for b, w in zip(residential, res_weight):
        components.append(FlowComponent(b, home_hub(b), 48.0, 6.0,
                                        morning * w * volume_scale))
        components.append(FlowComponent(home_hub(b), b, 108.0, 8.0,
                                        evening * w * volume_scale))
    neighborhoods = [(h, b) for h in hubs for b in range(grid.block_count)
                     if b != h and manhattan_slots(grid, h, b) <= 4]
    for h, b in neighborhoods:
        components.append(FlowComponent(h, b, 62.0, 16.0,
                                        local / len(neighborhoods) * volume_scale))
    mesh_pairs = [(a, b) for a in hubs for b in hubs if a != b]
    for a, b in mesh_pairs:
        components.append(FlowComponent(a, b, 66.0, 24.0,
                                        mesh / len(mesh_pairs) * volume_scale))
    noise = random.Random(seed)
    noise_pairs = []
    while len(noise_pairs) < 150:
        a = noise.randrange(grid.block_count)
        b = noise.randrange(grid.block_count)
        if a != b and manhattan_slots(grid, a, b) <= 3:
            noise_pairs.append((a, b, noise.uniform(30, 130)))
    for a, b, peak in noise_pairs:
        components.append(FlowComponent(a, b, peak, 25.0,
                                        noise_volume / 150.0 * volume_scale))
    # Short hub-ward drift trips: they keep every block liquid all day, but
    # only feed hub cores, so quiet blocks never gain an inbound channel and
    # geometric beelining cannot park next to a cold destination.
    wander_pairs = [(a, b) for a in range(grid.block_count)
                    for b in range(grid.block_count)
                    if a != b and manhattan_slots(grid, a, b) <= 2
                    and manhattan_slots(grid, b, home_hub(a)) <= 2
                    and manhattan_slots(grid, b, home_hub(a)) < manhattan_slots(grid, a, home_hub(a))]
    for a, b in wander_pairs:
        components.append(FlowComponent(a, b, 72.0, 40.0,
                                        wander / len(wander_pairs) * volume_scale))
    return SynthCitySpec(grid, tuple(components), seed)


def spec_to_json(spec: SynthCitySpec) -> str:
    g = spec.grid
    return json.dumps({
        "grid": {"lng_min": g.lng_min, "lng_max": g.lng_max,
                 "lat_min": g.lat_min, "lat_max": g.lat_max,
                 "rows": g.rows, "cols": g.cols,
                 "slot_count": g.slot_count, "slot_minutes": g.slot_minutes},
        "seed": spec.seed,
        "start_epoch": spec.start_epoch,
        "components": [[c.origin, c.destination, c.peak_slot, c.spread, c.daily_volume]
                       for c in spec.components],
    }, indent=1)


def spec_from_json(text: str) -> SynthCitySpec:
    data = json.loads(text)
    grid = GridSpec(**data["grid"])
    components = tuple(FlowComponent(int(o), int(d), float(p), float(s), float(v))
                       for o, d, p, s, v in data["components"])
    return SynthCitySpec(grid, components, int(data["seed"]),
                         int(data.get("start_epoch", DEFAULT_START_EPOCH)))
