"""Passenger-flow prediction and non-stop package routing over a ridesharing fleet.

A package is handed to one taxi, which keeps serving passengers whose
trips chain toward the package destination. The library fits a
city-scale flow probability model from historical orders, plans
maximum-probability routes on a time-expanded graph, and replays online
planning policies against recorded or synthetic order streams.
"""

from .demand import (
    DemandTensor,
    DepartureTimeModel,
    DestinationModel,
    OrderRecord,
    aveprob_tensor,
    build_demand_tensor,
    departure_prob,
    destination_prob,
    fit_circular_gaussian,
    fit_departure_model,
    fit_destination_gaussian,
    fit_destination_model,
)
from .gaussian import gaussian_box_integral
from .grid import (
    GridSpec,
    block_of,
    build_travel_matrix,
    slot_add,
    slot_of,
)
from .planners import (
    DeliveryState,
    PassengerOrder,
    PlannerDecision,
    apply_decision,
    baseline_step,
    candidate_set,
    hsp_step,
    psp_step,
)
from .routing import (
    PackageRequest,
    Route,
    TimeExpandedGraph,
    build_graph,
    optimal_route,
    route_probability,
)
from .sim import (
    SimConfig,
    SimMetrics,
    TaxiState,
    compute_metrics,
    generate_packages,
    generate_taxi_roster,
    match_taxi,
    run_simulation,
    to_passenger_orders,
)
from .synth import SynthCitySpec, generate_synthetic_orders, rush_hour_city

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
