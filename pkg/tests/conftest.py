"""Shared fixtures: the demo city trained once per session.

Training the full 10x10x144 flow tensor costs a few minutes; every test
that needs city-scale artifacts shares this bundle.
"""

from types import SimpleNamespace

import pytest

from piggyback.demand import (
    aveprob_tensor,
    build_demand_tensor,
    fit_departure_model,
    fit_destination_model,
)
from piggyback.grid import build_travel_matrix
from piggyback.synth import generate_synthetic_orders, rush_hour_city

TRAIN_SEED = 11
TRAIN_SCALE = 2.62          # ~20k orders over one day
TEST_SCALE = 40.0           # heavier replay days, same flow structure


@pytest.fixture(scope="session")
def city_bundle():
    spec = rush_hour_city(seed=TRAIN_SEED, volume_scale=TRAIN_SCALE)
    train = generate_synthetic_orders(spec, days=1)
    grid = spec.grid
    delta = build_travel_matrix(grid, train)
    tensor = build_demand_tensor(train, grid)
    return SimpleNamespace(
        spec=spec,
        grid=grid,
        train=train,
        delta=delta,
        tensor=tensor,
        departure=fit_departure_model(train, grid),
        destination=fit_destination_model(train, grid),
        aveprob=aveprob_tensor(train, grid),
    )
