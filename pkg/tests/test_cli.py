import json

import pytest

from piggyback.cli import main
from piggyback.io import load_model
from piggyback.synth import spec_to_json
from tests.test_io import tiny_spec


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One synth -> train pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    spec_path = root / "city.json"
    spec_path.write_text(spec_to_json(tiny_spec(seed=5)))
    train_csv = root / "train.csv"
    test_csv = root / "test.csv"
    model = root / "model.bin"
    assert main(["synth", "--spec", str(spec_path), "--days", "3",
                 "--out", str(train_csv)]) == 0
    assert main(["synth", "--spec", str(spec_path), "--seed", "99", "--days", "1",
                 "--out", str(test_csv)]) == 0
    assert main(["train", "--orders", str(train_csv), "--grid", "4x4", "--slots", "24",
                 "--bounds", "0,0.4,0,0.4", "--out", str(model)]) == 0
    return root, model, test_csv


def test_train_writes_loadable_model(workdir):
    _, model, _ = workdir
    bundle = load_model(model)
    assert bundle.grid.rows == 4
    assert bundle.tensor is not None
    assert bundle.aveprob is not None


def test_plan_prints_a_route(workdir, capsys):
    _, model, _ = workdir
    assert main(["plan", "--model", str(model), "--dep", "0", "--des", "15",
                 "--dep-slot", "8", "--maxT", "8"]) == 0
    out = capsys.readouterr().out
    assert "probability=" in out


def test_simulate_reports_metrics(workdir, capsys):
    root, model, test_csv = workdir
    out_csv = root / "sim.csv"
    assert main(["simulate", "--model", str(model), "--test-orders", str(test_csv),
                 "--planner", "hsp", "--maxT", "6", "--packages", "20",
                 "--dep-hour", "8", "--seed", "1", "--districts", "uniform",
                 "--out", str(out_csv)]) == 0
    assert "SR=" in capsys.readouterr().out
    lines = out_csv.read_text().splitlines()
    assert lines[0].startswith("planner,")
    assert lines[1].startswith("hsp,6,8,20,1,")


def test_benchmark_runs_are_byte_identical(workdir):
    root, model, test_csv = workdir
    out_a = root / "bench_a.csv"
    out_b = root / "bench_b.csv"
    flags = ["benchmark", "--model", str(model), "--test-orders", str(test_csv),
             "--sweep", "maxT=2,4", "--planners", "hsp,psp,fcfs,descloser,aveprob",
             "--packages", "15", "--dep-hour", "8", "--seed", "3",
             "--districts", "uniform"]
    assert main(flags + ["--out", str(out_a)]) == 0
    assert main(flags + ["--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()
    lines = out_a.read_text().splitlines()
    assert len(lines) == 1 + 5 * 2
    # step_ms stays empty without --timing so timing noise cannot leak in.
    assert all(line.endswith(",") for line in lines[1:])


def test_benchmark_timing_flag_fills_step_ms(workdir):
    root, model, test_csv = workdir
    out = root / "bench_t.csv"
    assert main(["benchmark", "--model", str(model), "--test-orders", str(test_csv),
                 "--sweep", "maxT=2", "--planners", "hsp", "--packages", "5",
                 "--districts", "uniform", "--timing", "--out", str(out)]) == 0
    last = out.read_text().splitlines()[1]
    assert not last.endswith(",")


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as err:
        main(["train", "--orders", "x.csv"])  # missing required flags
    assert err.value.code == 1


def test_data_errors_exit_two(workdir, tmp_path):
    root, model, _ = workdir
    missing = tmp_path / "missing.csv"
    assert main(["simulate", "--model", str(model), "--test-orders", str(missing),
                 "--planner", "hsp", "--maxT", "4"]) == 2
    bogus = tmp_path / "bogus.bin"
    bogus.write_bytes(b"nope")
    assert main(["plan", "--model", str(bogus), "--dep", "0", "--des", "1",
                 "--dep-slot", "0", "--maxT", "2"]) == 2


def test_unknown_planner_exits_two(workdir):
    root, model, test_csv = workdir
    assert main(["simulate", "--model", str(model), "--test-orders", str(test_csv),
                 "--planner", "teleport", "--maxT", "4"]) == 2


def test_synth_demo_city(tmp_path, capsys):
    out = tmp_path / "demo.csv"
    spec_out = tmp_path / "demo.json"
    assert main(["synth", "--demo", "--days", "1", "--out", str(out),
                 "--emit-spec", str(spec_out)]) == 0
    assert out.exists()
    spec = json.loads(spec_out.read_text())
    assert spec["grid"]["rows"] == 10
