"""Spatial and temporal discretization of the service area.

The city is an axis-aligned lng/lat rectangle cut into ``rows x cols``
blocks, and the day is cut into a fixed number of slots that wrap at
midnight. Blocks are indexed row-major from the south-west corner; all
travel times are measured in whole slots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable, Optional

import numpy as np

from .errors import EmptyDatasetError, OutOfBoundsError

if TYPE_CHECKING:  # pragma: no cover
    from .demand import OrderRecord

MINUTES_PER_DAY = 1440
SECONDS_PER_DAY = 86400

# Block and slot indices are plain ints; the aliases mark intent in signatures.
Block = int
Slot = int


@dataclass(frozen=True)
class GridSpec:
    """Geometry of the block grid plus the slot layout of one day."""

    lng_min: float
    lng_max: float
    lat_min: float
    lat_max: float
    rows: int
    cols: int
    slot_count: int = 144
    slot_minutes: int = 10

    def __post_init__(self):
        if not (self.lng_min < self.lng_max and self.lat_min < self.lat_max):
            raise ValueError("grid bounds must be non-degenerate")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must both be >= 1")
        if self.slot_count * self.slot_minutes != MINUTES_PER_DAY:
            raise ValueError("slot_count * slot_minutes must equal 1440")

    @property
    def block_count(self) -> int:
        return self.rows * self.cols

    @property
    def cell_width(self) -> float:
        return (self.lng_max - self.lng_min) / self.cols

    @property
    def cell_height(self) -> float:
        return (self.lat_max - self.lat_min) / self.rows

    def block_row_col(self, block: Block) -> tuple[int, int]:
        return divmod(block, self.cols)

    def block_index(self, row: int, col: int) -> Block:
        return row * self.cols + col

    def block_bounds(self, block: Block) -> tuple[float, float, float, float]:
        """Return (lat_lo, lat_hi, lng_lo, lng_hi) of a block's rectangle."""
        row, col = self.block_row_col(block)
        return (
            self.lat_min + row * self.cell_height,
            self.lat_min + (row + 1) * self.cell_height,
            self.lng_min + col * self.cell_width,
            self.lng_min + (col + 1) * self.cell_width,
        )

    def block_center(self, block: Block) -> tuple[float, float]:
        """Return (lng, lat) of the block midpoint."""
        lat_lo, lat_hi, lng_lo, lng_hi = self.block_bounds(block)
        return (lng_lo + lng_hi) / 2.0, (lat_lo + lat_hi) / 2.0

    def lat_edges(self) -> np.ndarray:
        return self.lat_min + np.arange(self.rows + 1) * self.cell_height

    def lng_edges(self) -> np.ndarray:
        return self.lng_min + np.arange(self.cols + 1) * self.cell_width


def block_of(lng: float, lat: float, grid: GridSpec) -> Block:
    """Map a point to the block containing it.

    Points on an interior cell boundary belong to the cell with the larger
    index along that axis; the outer north/east edges fold back into the
    last row/column so the mapping is total on the closed rectangle.
    """
    if not (grid.lng_min <= lng <= grid.lng_max and grid.lat_min <= lat <= grid.lat_max):
        raise OutOfBoundsError(f"point ({lng}, {lat}) outside grid rectangle")
    col = _axis_cell(lng, grid.lng_min, grid.cell_width, grid.cols)
    row = _axis_cell(lat, grid.lat_min, grid.cell_height, grid.rows)
    return grid.block_index(row, col)


def _axis_cell(value: float, origin: float, width: float, count: int) -> int:
    """Cell index along one axis; exact edge points go to the higher cell."""
    cell = min(int((value - origin) / width), count - 1)
    # Division can stray one cell off an exact edge; settle by edge comparison.
    if cell + 1 < count and value >= origin + (cell + 1) * width:
        cell += 1
    elif cell > 0 and value < origin + cell * width:
        cell -= 1
    return cell


def slot_of(epoch_seconds: int, grid: GridSpec, utc_offset_seconds: int = 0) -> Slot:
    """Map an epoch timestamp to its local-day slot index."""
    seconds_into_day = (int(epoch_seconds) + utc_offset_seconds) % SECONDS_PER_DAY
    return (seconds_into_day // 60) // grid.slot_minutes


def slot_add(slot: Slot, delta_slots: int, slot_count: int) -> Slot:
    """Advance a slot index by a non-negative number of slots, wrapping at midnight."""
    if delta_slots < 0:
        raise ValueError("delta_slots must be non-negative")
    return (slot + delta_slots) % slot_count


def manhattan_slots(grid: GridSpec, a: Block, b: Block) -> int:
    """Grid (Manhattan) distance between two blocks, in cells."""
    ra, ca = grid.block_row_col(a)
    rb, cb = grid.block_row_col(b)
    return abs(ra - rb) + abs(ca - cb)


def _synthetic_matrix(grid: GridSpec) -> np.ndarray:
    rows, cols = np.divmod(np.arange(grid.block_count), grid.cols)
    dist = np.abs(rows[:, None] - rows[None, :]) + np.abs(cols[:, None] - cols[None, :])
    delta = np.maximum(dist, 1)
    np.fill_diagonal(delta, 0)
    return np.minimum(delta, grid.slot_count).astype(np.int64)


def build_travel_matrix(grid: GridSpec, orders: Optional[Iterable["OrderRecord"]] = None) -> np.ndarray:
    """Build the block-to-block travel-time matrix, in slots.

    With ``orders`` the entry (i, j) is the median observed trip duration
    from i to j, rounded up to whole slots and clamped to at least one slot
    off the diagonal. Unobserved pairs fall back first to the reverse
    direction, then to Manhattan grid distance. Without ``orders`` the whole
    matrix is the Manhattan fallback.
    """
    fallback = _synthetic_matrix(grid)
    if orders is None:
        return fallback

    durations: dict[tuple[int, int], list[float]] = {}
    n = 0
    for order in orders:
        n += 1
        key = (order.dep_block, order.des_block)
        durations.setdefault(key, []).append((order.arr_epoch - order.dep_epoch) / 60.0)
    if n == 0:
        raise EmptyDatasetError("cannot estimate travel times from zero orders")

    m = grid.block_count
    observed = np.zeros((m, m), dtype=np.int64)
    seen = np.zeros((m, m), dtype=bool)
    for (i, j), mins in durations.items():
        slots = math.ceil(float(np.median(mins)) / grid.slot_minutes)
        observed[i, j] = min(max(slots, 1), grid.slot_count) if i != j else 0
        seen[i, j] = True

    delta = np.where(seen, observed, np.where(seen.T, observed.T, fallback))
    np.fill_diagonal(delta, 0)
    return delta.astype(np.int64)


def validate_travel_matrix(delta: np.ndarray, grid: GridSpec) -> None:
    """Raise ValueError if a travel matrix violates its invariants."""
    m = grid.block_count
    if delta.shape != (m, m):
        raise ValueError(f"travel matrix must be {m}x{m}")
    if np.any(np.diagonal(delta) != 0):
        raise ValueError("diagonal travel times must be zero")
    off = delta[~np.eye(m, dtype=bool)]
    if off.size and (off.min() < 1 or off.max() > grid.slot_count):
        raise ValueError("off-diagonal travel times must lie in [1, slot_count]")
