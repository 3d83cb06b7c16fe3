"""Passenger-flow probability model fitted from historical orders.

The joint flow tensor P(destination, origin | slot) factors into a
departure posterior P(origin | slot) and a destination posterior
P(destination | origin, slot). Departure times per origin block follow a
wrapped (circular) normal; departure (lat, lng, slot) triples per
destination block follow a 3-D normal whose box probabilities are
integrated over block rectangles and slot intervals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import EmptyDatasetError, EmptySamplesError, InsufficientSamplesError
from .gaussian import lattice_box_probs
from .grid import GridSpec

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 0.25                  # slots^2; keeps densities integrable
WRAP_IMAGES = 3                        # wrapped-normal truncation, +/- periods
MIN_DESTINATION_SAMPLES = 4            # minimum for a 3-D covariance


@dataclass(frozen=True)
class OrderRecord:
    """One historical passenger order, already snapped to blocks and slots."""

    order_id: str
    dep_epoch: int
    arr_epoch: int
    dep_lng: float
    dep_lat: float
    dep_block: int
    des_block: int
    dep_slot: int
    arr_slot: int

    def __post_init__(self):
        if self.arr_epoch < self.dep_epoch:
            raise ValueError(f"order {self.order_id}: arrival precedes departure")


def circular_distance(a, b, slot_count: int):
    """Shortest wrap-around distance between slot values (scalar or array)."""
    d = np.abs(np.asarray(a) - np.asarray(b))
    return np.minimum(d % slot_count, (-d) % slot_count)


def fit_circular_gaussian(samples: Sequence[int], slot_count: int,
                          variance_floor: float = VARIANCE_FLOOR) -> tuple[int, float]:
    """Fit (mu, sigma^2) to circular slot samples.

    The mean is the integer slot minimizing the sum of squared circular
    distances, searched exhaustively over all slots with ties broken toward
    the smallest slot. The variance is the sample variance of those
    circular distances (zero for a single sample), floored at
    ``variance_floor`` to avoid degenerate densities.
    """
    t = np.asarray(list(samples), dtype=np.float64)
    if t.size == 0:
        raise EmptySamplesError("cannot fit a departure-time model to zero samples")
    candidates = np.arange(slot_count, dtype=np.float64)
    d = circular_distance(t[:, None], candidates[None, :], slot_count)
    cost = np.sum(d * d, axis=0)
    mu = int(np.argmin(cost))
    if t.size == 1:
        sigma2 = 0.0
    else:
        sigma2 = float(cost[mu] / (t.size - 1))
    return mu, max(sigma2, variance_floor)


@dataclass(frozen=True)
class DepartureTimeModel:
    """Per-block circular normal over departure slots.

    Blocks with zero departures have ``counts == 0`` and NaN parameters.
    """

    slot_count: int
    mu: np.ndarray        # (M,) circular slot means
    sigma2: np.ndarray    # (M,) slot variances, floored
    counts: np.ndarray    # (M,) departure counts


def fit_departure_model(orders: Iterable[OrderRecord], grid: GridSpec,
                        variance_floor: float = VARIANCE_FLOOR) -> DepartureTimeModel:
    m = grid.block_count
    per_block: list[list[int]] = [[] for _ in range(m)]
    for order in orders:
        per_block[order.dep_block].append(order.dep_slot)
    mu = np.full(m, np.nan)
    sigma2 = np.full(m, np.nan)
    counts = np.zeros(m, dtype=np.int64)
    for i, samples in enumerate(per_block):
        counts[i] = len(samples)
        if samples:
            mu[i], sigma2[i] = fit_circular_gaussian(samples, grid.slot_count, variance_floor)
    return DepartureTimeModel(grid.slot_count, mu, sigma2, counts)


def _wrapped_slot_mass(model: DepartureTimeModel, k: int) -> np.ndarray:
    """P(T in [k, k+1)) per block under the wrapped normal, NaN-safe to zero."""
    n = model.slot_count
    sigma = np.sqrt(model.sigma2)
    mass = np.zeros(model.mu.shape[0])
    ok = model.counts > 0
    for image in range(-WRAP_IMAGES, WRAP_IMAGES + 1):
        lo = (k + image * n - model.mu[ok]) / sigma[ok]
        hi = (k + 1 + image * n - model.mu[ok]) / sigma[ok]
        mass[ok] += ndtr(hi) - ndtr(lo)
    return mass


def _departure_column(model: DepartureTimeModel, freq_x: np.ndarray, k: int) -> tuple[np.ndarray, bool]:
    """Posterior P(X = . | T = k); returns (column, used_uniform_fallback)."""
    freq = np.asarray(freq_x, dtype=np.float64)
    total = freq.sum()
    prior = freq / total if total > 0 else freq
    numer = _wrapped_slot_mass(model, k) * prior
    denom = numer.sum()
    if denom <= 0.0:
        nonzero = freq > 0
        column = np.zeros_like(freq)
        if nonzero.any():
            column[nonzero] = 1.0 / nonzero.sum()
        return column, True
    return numer / denom, False


def departure_prob(model: DepartureTimeModel, freq_x: np.ndarray, block: int, slot: int) -> float:
    """P(X = block | T = slot) via Bayes over the fitted wrapped normals."""
    column, fallback = _departure_column(model, freq_x, slot)
    if fallback:
        logger.warning("no departure mass at slot %d; using uniform fallback", slot)
    return float(column[block])


def unroll_circular(values: np.ndarray, anchor: float, slot_count: int) -> np.ndarray:
    """Map circular slot values to the real-line image in (anchor - N/2, anchor + N/2]."""
    w = np.mod(np.asarray(values, dtype=np.float64) - anchor, slot_count)
    w = np.where(w > slot_count / 2, w - slot_count, w)
    return anchor + w


def circular_mean_slot(values: np.ndarray, slot_count: int) -> float:
    """Vector circular mean of slot values, in [0, slot_count)."""
    angles = 2.0 * np.pi * np.asarray(values, dtype=np.float64) / slot_count
    angle = math.atan2(np.sin(angles).mean(), np.cos(angles).mean())
    return (angle / (2.0 * np.pi) * slot_count) % slot_count


def fit_destination_gaussian(orders: Sequence[OrderRecord], slot_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Fit a 3-D normal to the (lat, lng, slot) departure triples of one destination.

    The slot coordinate is unrolled about its circular mean before moments
    are taken, so flows straddling midnight fit a single mode. The
    covariance is regularized with a small ridge to stay positive definite.
    """
    if len(orders) < MIN_DESTINATION_SAMPLES:
        raise InsufficientSamplesError(
            f"need >= {MIN_DESTINATION_SAMPLES} arrivals to fit a destination, got {len(orders)}")
    slots = np.array([o.dep_slot for o in orders], dtype=np.float64)
    anchor = circular_mean_slot(slots, slot_count)
    unrolled = unroll_circular(slots, anchor, slot_count)
    x = np.column_stack([
        np.array([o.dep_lat for o in orders]),
        np.array([o.dep_lng for o in orders]),
        unrolled,
    ])
    mean = x.mean(axis=0)
    cov = np.cov(x, rowvar=False, ddof=1)
    eps = 1e-9 * np.trace(cov) / 3.0 + 1e-12
    cov = cov + eps * np.eye(3)
    mean[2] %= slot_count
    return mean, cov


@dataclass
class DestinationModel:
    """Per-destination-block 3-D normals over departure (lat, lng, slot).

    Blocks with fewer than four arrivals are unfitted (NaN parameters).
    """

    grid: GridSpec
    means: np.ndarray     # (M, 3) [lat, lng, slot]
    covs: np.ndarray      # (M, 3, 3)
    counts: np.ndarray    # (M,) arrival counts
    _lattices: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def fitted(self) -> np.ndarray:
        return self.counts >= MIN_DESTINATION_SAMPLES

    def box_probs(self, destination: int) -> np.ndarray:
        """P(X = i, T in slot k | Y = destination) over all (block, slot) cells."""
        cached = self._lattices.get(destination)
        if cached is None:
            cached = _destination_lattice(self, destination)
            self._lattices[destination] = cached
        return cached


def fit_destination_model(orders: Iterable[OrderRecord], grid: GridSpec) -> DestinationModel:
    m = grid.block_count
    per_block: list[list[OrderRecord]] = [[] for _ in range(m)]
    for order in orders:
        per_block[order.des_block].append(order)
    means = np.full((m, 3), np.nan)
    covs = np.full((m, 3, 3), np.nan)
    counts = np.zeros(m, dtype=np.int64)
    for j, group in enumerate(per_block):
        counts[j] = len(group)
        if len(group) >= MIN_DESTINATION_SAMPLES:
            means[j], covs[j] = fit_destination_gaussian(group, grid.slot_count)
    return DestinationModel(grid, means, covs, counts)


def _unrolled_slot_edges(mean_slot: float, slot_count: int) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous slot-box boundaries nearest ``mean_slot`` and the k-permutation.

    Each slot k integrates over the unrolled image [k + m*N, k + 1 + m*N]
    closest to the fitted time mean; across all k those boxes tile one full
    period, so they share a single sorted boundary array.
    """
    k = np.arange(slot_count, dtype=np.float64)
    images = np.rint((mean_slot - (k + 0.5)) / slot_count)
    lows = k + images * slot_count
    perm = np.argsort(lows, kind="stable")
    ordered = lows[perm]
    edges = np.append(ordered, ordered[-1] + 1.0)
    return edges, perm


def _destination_lattice(model: DestinationModel, destination: int) -> np.ndarray:
    """P(X = i, T = k | Y = destination) as an (M, N) array (zeros if unfitted)."""
    grid = model.grid
    n = grid.slot_count
    if not model.fitted[destination]:
        return np.zeros((grid.block_count, n))
    mean = model.means[destination]
    cov = model.covs[destination]
    edges_t, perm = _unrolled_slot_edges(mean[2], n)
    probs = lattice_box_probs(mean, cov, grid.lat_edges(), grid.lng_edges(), edges_t)
    flat = probs.reshape(grid.block_count, n)
    out = np.empty_like(flat)
    out[:, perm] = flat
    return out


def destination_prob(model: DestinationModel, freq_y: np.ndarray,
                     destination: int, origin: int, slot: int) -> float:
    """P(Y = destination | X = origin, T = slot) via Bayes over fitted normals."""
    freq = np.asarray(freq_y, dtype=np.float64)
    total = freq.sum()
    if total <= 0 or not model.fitted[destination]:
        return 0.0
    numer = 0.0
    denom = 0.0
    for j in np.flatnonzero(model.fitted):
        contrib = model.box_probs(int(j))[origin, slot] * freq[j] / total
        denom += contrib
        if j == destination:
            numer = contrib
    if denom <= 0.0:
        logger.warning("no destination mass at origin %d slot %d", origin, slot)
        return 0.0
    return float(numer / denom)


@dataclass(frozen=True)
class DemandTensor:
    """Joint flow probabilities P(Y = j, X = i | T = k), indexed [j, i, k].

    ``marginal_x[i, k]`` caches P(X = i | T = k), so summing the tensor
    over destinations recovers the marginal wherever it is positive.
    """

    p: np.ndarray            # (M, M, N)
    marginal_x: np.ndarray   # (M, N)
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def block_count(self) -> int:
        return self.p.shape[0]

    @property
    def slot_count(self) -> int:
        return self.p.shape[2]

    @property
    def neglog(self) -> np.ndarray:
        """-ln P with +inf at zero entries; computed once and cached."""
        cached = self.diagnostics.get("_neglog")
        if cached is None:
            with np.errstate(divide="ignore"):
                cached = -np.log(self.p)
            cached.setflags(write=False)
            self.diagnostics["_neglog"] = cached
        return cached


def build_demand_tensor(train: Sequence[OrderRecord], grid: GridSpec) -> DemandTensor:
    """Fit the full Bayesian flow tensor from training orders.

    Deterministic for identical input: every stage is closed-form or uses
    the fixed quasi-random point set of the box integrator.
    """
    train = list(train)
    if not train:
        raise EmptyDatasetError("cannot fit a demand model to zero orders")
    m, n = grid.block_count, grid.slot_count

    departure = fit_departure_model(train, grid)
    freq_x = departure.counts.astype(np.float64)
    marginal = np.empty((m, n))
    uniform_slots = 0
    for k in range(n):
        marginal[:, k], fallback = _departure_column(departure, freq_x, k)
        uniform_slots += int(fallback)

    dest_model = fit_destination_model(train, grid)
    freq_y = dest_model.counts.astype(np.float64)
    total_y = freq_y.sum()
    numer = np.zeros((m, m, n))
    for j in np.flatnonzero(dest_model.fitted):
        numer[j] = dest_model.box_probs(int(j)) * (freq_y[j] / total_y)
    denom = numer.sum(axis=0)                      # (M, N)
    zero_cells = int(np.count_nonzero(denom <= 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        posterior = np.where(denom > 0.0, numer / denom, 0.0)

    p = posterior * marginal[None, :, :]
    diagnostics = {
        "uniform_departure_slots": uniform_slots,
        "zero_destination_cells": zero_cells,
        "fitted_destinations": int(dest_model.fitted.sum()),
    }
    if uniform_slots or zero_cells:
        logger.warning("demand fit fallbacks: %d uniform slots, %d empty cells",
                       uniform_slots, zero_cells)
    return DemandTensor(p=p, marginal_x=marginal, diagnostics=diagnostics)


def aveprob_tensor(train: Sequence[OrderRecord], grid: GridSpec,
                   smoothing_alpha: float = 0.0) -> DemandTensor:
    """Per-slot empirical flow frequencies as a drop-in tensor.

    Each slot's counts are normalized over all origin-destination pairs;
    slots with no orders are all-zero unless additive smoothing is enabled.
    """
    train = list(train)
    if not train:
        raise EmptyDatasetError("cannot build frequency tensor from zero orders")
    m, n = grid.block_count, grid.slot_count
    counts = np.zeros((m, m, n))
    for order in train:
        counts[order.des_block, order.dep_block, order.dep_slot] += 1.0
    totals = counts.sum(axis=(0, 1))               # (N,)
    if smoothing_alpha > 0.0:
        p = (counts + smoothing_alpha) / (totals + smoothing_alpha * m * m)[None, None, :]
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            p = np.where(totals[None, None, :] > 0.0, counts / totals[None, None, :], 0.0)
    return DemandTensor(p=p, marginal_x=p.sum(axis=0),
                        diagnostics={"empty_slots": int(np.count_nonzero(totals == 0))})
