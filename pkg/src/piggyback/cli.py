"""Command-line pipeline: train, plan, simulate, synth, benchmark.

Exit codes: 0 on success, 1 on usage errors, 2 on data errors.
"""

from __future__ import annotations

import argparse
import math
import sys
from typing import Optional

from . import io as pio
from . import synth
from .demand import (
    aveprob_tensor,
    build_demand_tensor,
    fit_departure_model,
    fit_destination_model,
)
from .errors import ConfigError, PiggybackError
from .grid import GridSpec, build_travel_matrix
from .routing import PackageRequest, optimal_route
from .sim import (
    SimConfig,
    compute_metrics,
    generate_packages,
    generate_taxi_roster,
    run_simulation,
    to_passenger_orders,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _parse_grid(text: str) -> tuple[int, int]:
    rows, _, cols = text.partition("x")
    return int(rows), int(cols)


def _parse_bounds(text: str) -> tuple[float, float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("bounds must be lng_min,lng_max,lat_min,lat_max")
    return tuple(parts)  # type: ignore[return-value]


def _parse_sweep(text: str) -> list[int]:
    key, _, value = text.partition("=")
    if key.strip() != "maxT":
        raise ConfigError(f"only maxT sweeps are supported, got {key!r}")
    value = value.strip()
    if ".." in value:
        lo, hi = value.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(v) for v in value.split(",")]


def _grid_from_args(args) -> GridSpec:
    rows, cols = _parse_grid(args.grid)
    lng_min, lng_max, lat_min, lat_max = _parse_bounds(args.bounds)
    slot_minutes = 1440 // args.slots
    return GridSpec(lng_min, lng_max, lat_min, lat_max, rows, cols, args.slots, slot_minutes)


def cmd_train(args) -> int:
    grid = _grid_from_args(args)
    loaded = pio.load_orders(args.orders, grid, day_filter=args.day_filter,
                             utc_offset_seconds=args.utc_offset * 3600)
    print(f"loaded {len(loaded.orders)} orders "
          f"({loaded.dropped_out_of_bounds} outside grid, of {loaded.total_rows} rows)")
    delta = build_travel_matrix(grid, loaded.orders)
    tensor = build_demand_tensor(loaded.orders, grid)
    ave = aveprob_tensor(loaded.orders, grid,
                         smoothing_alpha=1.0 if args.smooth_aveprob else 0.0)
    departure = fit_departure_model(loaded.orders, grid)
    destination = fit_destination_model(loaded.orders, grid)
    pio.save_model(args.out, grid, delta, departure, destination, tensor, ave)
    print(f"model written to {args.out}")
    return 0


def _district_weights(grid: GridSpec, kind: str):
    if kind == "uniform":
        return [(list(range(grid.block_count)), 1.0)]
    return synth.district_bands(grid)


def _tensor_for(bundle: pio.TrainedBundle, planner: str):
    tensor = bundle.aveprob if planner == "aveprob" else bundle.tensor
    if tensor is None:
        raise ConfigError(f"model file lacks the tensor required by planner {planner!r}")
    return tensor


def _run_one(bundle: pio.TrainedBundle, passenger_orders, planner: str, max_slots: int,
             dep_slot: int, package_count: int, seed: int, taxi_count: Optional[int],
             wait_limit: int, districts: str):
    grid = bundle.grid
    weights = _district_weights(grid, districts)
    packages = generate_packages(grid, weights, package_count, seed, dep_slot, max_slots)
    taxis = generate_taxi_roster(grid, taxi_count or 3 * package_count, seed + 1, weights)
    cfg = SimConfig(max_slots=max_slots, planner=planner, seed=seed,
                    package_count=package_count, wait_limit_for_match=wait_limit)
    tensor = _tensor_for(bundle, planner)
    return run_simulation(cfg, tensor, bundle.delta, passenger_orders, packages, taxis)


def cmd_simulate(args) -> int:
    bundle = pio.load_model(args.model)
    loaded = pio.load_orders(args.test_orders, bundle.grid,
                             utc_offset_seconds=args.utc_offset * 3600)
    passenger_orders = to_passenger_orders(loaded.orders, bundle.delta, bundle.grid,
                                           utc_offset_seconds=args.utc_offset * 3600)
    dep_slot = args.dep_hour * 60 // bundle.grid.slot_minutes
    metrics = _run_one(bundle, passenger_orders, args.planner, args.max_slots, dep_slot,
                       args.packages, args.seed, args.taxis, args.wait_limit, args.districts)
    print(f"SR={metrics.success_rate:.4f} AP={metrics.average_neglogp:.4f} "
          f"MR={metrics.matching_rate:.4f} step_ms={metrics.mean_step_ms:.4f}")
    if args.out:
        row = pio.ResultRow(args.planner, args.max_slots, dep_slot, args.packages, args.seed,
                            metrics.success_rate, metrics.average_neglogp,
                            metrics.matching_rate, metrics.mean_step_ms)
        pio.emit_results([row], args.out)
        print(f"results written to {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    bundle = pio.load_model(args.model)
    loaded = pio.load_orders(args.test_orders, bundle.grid,
                             utc_offset_seconds=args.utc_offset * 3600)
    passenger_orders = to_passenger_orders(loaded.orders, bundle.delta, bundle.grid,
                                           utc_offset_seconds=args.utc_offset * 3600)
    dep_slot = args.dep_hour * 60 // bundle.grid.slot_minutes
    planners = [p.strip() for p in args.planners.split(",") if p.strip()]
    sweep = _parse_sweep(args.sweep)
    rows = []
    for planner in planners:
        for max_slots in sweep:
            metrics = _run_one(bundle, passenger_orders, planner, max_slots, dep_slot,
                               args.packages, args.seed, args.taxis, args.wait_limit,
                               args.districts)
            rows.append(pio.ResultRow(
                planner, max_slots, dep_slot, args.packages, args.seed,
                metrics.success_rate, metrics.average_neglogp, metrics.matching_rate,
                metrics.mean_step_ms if args.timing else math.nan))
            print(f"{planner} maxT={max_slots}: SR={metrics.success_rate:.4f}")
    pio.emit_results(rows, args.out)
    print(f"results written to {args.out}")
    return 0


def cmd_plan(args) -> int:
    bundle = pio.load_model(args.model)
    if bundle.tensor is None:
        raise ConfigError("model file lacks a flow tensor")
    pkg = PackageRequest(id="cli", dep=args.dep, des=args.des, dep_slot=args.dep_slot,
                         gen_slot=args.dep_slot, max_slots=args.max_slots)
    route = optimal_route(pkg, bundle.tensor, bundle.delta)
    if route is None:
        print("no feasible route within the deadline")
        return 0
    print(f"probability={route.probability:.6g} weight={route.weight:.6f} "
          f"hops={len(route.legs)}")
    for leg in route.legs:
        print(f"  block {leg.from_block} -> {leg.to_block} "
              f"(slots {leg.dep_slot} -> {leg.arr_slot})")
    return 0


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec) as handle:
            spec = synth.spec_from_json(handle.read())
    elif args.demo:
        spec = synth.rush_hour_city(seed=args.seed if args.seed is not None else 11)
    else:
        raise ConfigError("synth needs --spec FILE or --demo")
    if args.seed is not None and args.spec:
        spec = synth.SynthCitySpec(spec.grid, spec.components, args.seed, spec.start_epoch)
    orders = synth.generate_synthetic_orders(spec, args.days)
    pio.write_orders_csv(orders, spec.grid, args.out)
    print(f"wrote {len(orders)} orders to {args.out}")
    if args.emit_spec:
        with open(args.emit_spec, "w") as handle:
            handle.write(synth.spec_to_json(spec))
        print(f"wrote city spec to {args.emit_spec}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="piggyback",
                     description="Passenger-flow prediction and package-route planning")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit a flow model from an order CSV")
    train.add_argument("--orders", required=True)
    train.add_argument("--grid", required=True, help="RxC, e.g. 10x10")
    train.add_argument("--slots", type=int, default=144)
    train.add_argument("--bounds", required=True,
                       help="lng_min,lng_max,lat_min,lat_max")
    train.add_argument("--day-filter", choices=["all", "weekday", "weekend"], default="all")
    train.add_argument("--utc-offset", type=int, default=0, help="hours east of UTC")
    train.add_argument("--smooth-aveprob", action="store_true",
                       help="add-one smoothing on the frequency tensor")
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_train)

    plan = sub.add_parser("plan", help="best route for one package request")
    plan.add_argument("--model", required=True)
    plan.add_argument("--dep", type=int, required=True)
    plan.add_argument("--des", type=int, required=True)
    plan.add_argument("--dep-slot", type=int, required=True)
    plan.add_argument("--maxT", dest="max_slots", type=int, required=True)
    plan.set_defaults(func=cmd_plan)

    def sim_common(p):
        p.add_argument("--model", required=True)
        p.add_argument("--test-orders", required=True)
        p.add_argument("--packages", type=int, default=100)
        p.add_argument("--dep-hour", type=int, default=8)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--taxis", type=int, default=None)
        p.add_argument("--wait-limit", type=int, default=6)
        p.add_argument("--districts", choices=["bands", "uniform"], default="bands")
        p.add_argument("--utc-offset", type=int, default=0)

    simulate = sub.add_parser("simulate", help="replay one planner configuration")
    sim_common(simulate)
    simulate.add_argument("--planner", required=True)
    simulate.add_argument("--maxT", dest="max_slots", type=int, required=True)
    simulate.add_argument("--out", default=None)
    simulate.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("benchmark", help="sweep planners over deadlines")
    sim_common(bench)
    bench.add_argument("--sweep", required=True, help="maxT=LO..HI or maxT=a,b,c")
    bench.add_argument("--planners", default="hsp,psp,fcfs,descloser,aveprob")
    bench.add_argument("--timing", action="store_true",
                       help="record wall-clock per step (breaks byte-for-byte determinism)")
    bench.add_argument("--out", required=True)
    bench.set_defaults(func=cmd_benchmark)

    syn = sub.add_parser("synth", help="generate a synthetic order stream")
    syn.add_argument("--spec", default=None, help="city spec JSON")
    syn.add_argument("--demo", action="store_true", help="use the built-in demo city")
    syn.add_argument("--days", type=int, default=1)
    syn.add_argument("--seed", type=int, default=None)
    syn.add_argument("--emit-spec", default=None, help="also write the city spec JSON here")
    syn.add_argument("--out", required=True)
    syn.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PiggybackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
