"""File formats: order CSV ingestion, the binary model bundle, results CSV.

The model bundle is a compact little-endian container: a 16-byte header
(magic, version, block count, slot count) followed by raw numpy buffers
and a trailing SHA-256 over everything before it. Floats round-trip
bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .demand import DemandTensor, DepartureTimeModel, DestinationModel, OrderRecord
from .errors import CorruptFileError, ParseError, SchemaError, VersionMismatchError
from .grid import SECONDS_PER_DAY, GridSpec, block_of, slot_of
from .errors import OutOfBoundsError

ORDER_HEADER = ["order_id", "dep_epoch_s", "dep_lng", "dep_lat",
                "des_lng", "des_lat", "arr_epoch_s"]
RESULTS_HEADER = "planner,maxT,depT,packages,seed,sr,ap,mr,step_ms"

MODEL_MAGIC = b"PGBM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class LoadedOrders:
    """Parsed orders plus ingestion diagnostics."""

    orders: list[OrderRecord]
    dropped_out_of_bounds: int
    total_rows: int


def _weekday(epoch: int, utc_offset_seconds: int) -> int:
    """0 = Monday; epoch day 0 (1970-01-01) was a Thursday."""
    return int(((epoch + utc_offset_seconds) // SECONDS_PER_DAY + 3) % 7)


def load_orders(path, grid: GridSpec, day_filter: str = "all",
                utc_offset_seconds: int = 0) -> LoadedOrders:
    """Read an order CSV, snapping rows to blocks and slots.

    Rows whose pickup or drop-off falls outside the grid are dropped and
    counted rather than failing the load; malformed rows raise ParseError
    with their 1-based line number.
    """
    if day_filter not in ("all", "weekday", "weekend"):
        raise ValueError(f"day_filter must be all/weekday/weekend, got {day_filter!r}")
    orders: list[OrderRecord] = []
    dropped = 0
    total = 0
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("order file is empty; expected a header row") from None
        if header != ORDER_HEADER:
            raise SchemaError(f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            total += 1
            if len(row) != len(ORDER_HEADER):
                raise ParseError(f"expected {len(ORDER_HEADER)} fields, got {len(row)}", line_no)
            try:
                order_id = row[0]
                dep_epoch = int(row[1])
                dep_lng, dep_lat = float(row[2]), float(row[3])
                des_lng, des_lat = float(row[4]), float(row[5])
                arr_epoch = int(row[6])
            except ValueError as exc:
                raise ParseError(str(exc), line_no) from None
            if not (math.isfinite(dep_lng) and math.isfinite(dep_lat)
                    and math.isfinite(des_lng) and math.isfinite(des_lat)):
                raise ParseError("non-finite coordinate", line_no)
            if arr_epoch < dep_epoch:
                raise ParseError("arrival precedes departure", line_no)
            dow = _weekday(dep_epoch, utc_offset_seconds)
            if day_filter == "weekday" and dow >= 5:
                continue
            if day_filter == "weekend" and dow < 5:
                continue
            try:
                dep_block = block_of(dep_lng, dep_lat, grid)
                des_block = block_of(des_lng, des_lat, grid)
            except OutOfBoundsError:
                dropped += 1
                continue
            orders.append(OrderRecord(
                order_id=order_id,
                dep_epoch=dep_epoch,
                arr_epoch=arr_epoch,
                dep_lng=dep_lng,
                dep_lat=dep_lat,
                dep_block=dep_block,
                des_block=des_block,
                dep_slot=slot_of(dep_epoch, grid, utc_offset_seconds),
                arr_slot=slot_of(arr_epoch, grid, utc_offset_seconds),
            ))
    return LoadedOrders(orders, dropped, total)


def write_orders_csv(orders: Sequence[OrderRecord], grid: GridSpec, path) -> None:
    """Write orders in the ingestion schema; destinations use block centers."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ORDER_HEADER)
        for o in orders:
            des_lng, des_lat = grid.block_center(o.des_block)
            writer.writerow([o.order_id, o.dep_epoch,
                             repr(o.dep_lng), repr(o.dep_lat),
                             repr(des_lng), repr(des_lat), o.arr_epoch])


@dataclass(frozen=True)
class TrainedBundle:
    """Everything a planner needs, as loaded from one model file."""

    grid: GridSpec
    delta: np.ndarray
    departure: DepartureTimeModel
    destination: DestinationModel
    tensor: Optional[DemandTensor]
    aveprob: Optional[DemandTensor]


def _tensor_blob(tensor: Optional[DemandTensor]) -> bytes:
    if tensor is None:
        return struct.pack("<B", 0)
    diag = {k: v for k, v in tensor.diagnostics.items() if not k.startswith("_")}
    meta = json.dumps(diag, sort_keys=True).encode()
    return (struct.pack("<B", 1)
            + np.ascontiguousarray(tensor.p, dtype=np.float64).tobytes()
            + np.ascontiguousarray(tensor.marginal_x, dtype=np.float64).tobytes()
            + struct.pack("<I", len(meta)) + meta)


def save_model(path, grid: GridSpec, delta: np.ndarray, departure: DepartureTimeModel,
               destination: DestinationModel, tensor: Optional[DemandTensor],
               aveprob: Optional[DemandTensor] = None) -> None:
    """Write the trained bundle; see module docstring for the layout."""
    m, n = grid.block_count, grid.slot_count
    parts = [
        struct.pack("<4sIII", MODEL_MAGIC, MODEL_VERSION, m, n),
        struct.pack("<4d4I", grid.lng_min, grid.lng_max, grid.lat_min, grid.lat_max,
                    grid.rows, grid.cols, grid.slot_count, grid.slot_minutes),
        np.ascontiguousarray(delta, dtype=np.int64).tobytes(),
        np.ascontiguousarray(departure.mu, dtype=np.float64).tobytes(),
        np.ascontiguousarray(departure.sigma2, dtype=np.float64).tobytes(),
        np.ascontiguousarray(departure.counts, dtype=np.int64).tobytes(),
        np.ascontiguousarray(destination.means, dtype=np.float64).tobytes(),
        np.ascontiguousarray(destination.covs, dtype=np.float64).tobytes(),
        np.ascontiguousarray(destination.counts, dtype=np.int64).tobytes(),
        _tensor_blob(tensor),
        _tensor_blob(aveprob),
    ]
    body = b"".join(parts)
    with open(path, "wb") as handle:
        handle.write(body)
        handle.write(hashlib.sha256(body).digest())


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int) -> bytes:
        if self.pos + count > len(self.buf):
            raise CorruptFileError("model file truncated")
        out = self.buf[self.pos:self.pos + count]
        self.pos += count
        return out

    def array(self, dtype, shape) -> np.ndarray:
        count = int(np.prod(shape))
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def _read_tensor(cur: _Cursor, m: int, n: int) -> Optional[DemandTensor]:
    present, = struct.unpack("<B", cur.take(1))
    if not present:
        return None
    p = cur.array(np.float64, (m, m, n))
    marginal = cur.array(np.float64, (m, n))
    meta_len, = struct.unpack("<I", cur.take(4))
    diagnostics = json.loads(cur.take(meta_len).decode())
    return DemandTensor(p=p, marginal_x=marginal, diagnostics=diagnostics)


def load_model(path) -> TrainedBundle:
    """Read a model bundle, verifying version and integrity."""
    with open(path, "rb") as handle:
        blob = handle.read()
    if len(blob) < 48 or blob[:4] != MODEL_MAGIC:
        raise CorruptFileError("not a model file")
    version, m, n = struct.unpack("<III", blob[4:16])
    if version != MODEL_VERSION:
        raise VersionMismatchError(f"model format v{version}, expected v{MODEL_VERSION}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CorruptFileError("model file checksum mismatch")
    cur = _Cursor(body)
    cur.take(16)
    lng_min, lng_max, lat_min, lat_max, rows, cols, slots, slot_minutes = \
        struct.unpack("<4d4I", cur.take(48))
    grid = GridSpec(lng_min, lng_max, lat_min, lat_max, rows, cols, slots, slot_minutes)
    delta = cur.array(np.int64, (m, m))
    departure = DepartureTimeModel(
        slot_count=n,
        mu=cur.array(np.float64, (m,)),
        sigma2=cur.array(np.float64, (m,)),
        counts=cur.array(np.int64, (m,)),
    )
    destination = DestinationModel(
        grid=grid,
        means=cur.array(np.float64, (m, 3)),
        covs=cur.array(np.float64, (m, 3, 3)),
        counts=cur.array(np.int64, (m,)),
    )
    tensor = _read_tensor(cur, m, n)
    aveprob = _read_tensor(cur, m, n)
    return TrainedBundle(grid, delta, departure, destination, tensor, aveprob)


@dataclass(frozen=True)
class ResultRow:
    planner: str
    max_slots: int
    dep_slot: int
    packages: int
    seed: int
    sr: float
    ap: float
    mr: float
    step_ms: float = math.nan


def _rate(value: float) -> str:
    return "" if math.isnan(value) else f"{value:.4f}"


def emit_results(rows: Sequence[ResultRow], path) -> None:
    """Write the fixed-schema results CSV; NaN cells are left empty."""
    with open(path, "w", newline="") as handle:
        handle.write(RESULTS_HEADER + "\n")
        for r in rows:
            handle.write(",".join([
                r.planner, str(r.max_slots), str(r.dep_slot), str(r.packages), str(r.seed),
                _rate(r.sr), _rate(r.ap), _rate(r.mr), _rate(r.step_ms),
            ]) + "\n")
