import math
import os
from pathlib import Path

import pytest

import cvrsim

SOURCE_DIR = Path(os.environ.get("CVRSIM_SOURCE_DIR", Path(__file__).resolve().parents[2]))


def test_zip_load_exact_at_rated_voltage():
    load = cvrsim.ZipLoad()
    load.p0, load.q0 = 100.0, 40.0
    assert load.evaluate(1.0) == (100.0, 40.0)
    p, _ = load.evaluate(0.95)
    assert p == pytest.approx(100.0 * (0.5 * 0.95**2 + 0.3 * 0.95 + 0.2))
    assert load.sensitivity(1.0) == pytest.approx(130.0)
    with pytest.raises(cvrsim.Error):
        load.evaluate(0.0)


def test_volt_var_corners_and_capability():
    for v, q in [(0.92, 0.44), (0.98, 0.0), (1.02, 0.0), (1.08, -0.44)]:
        assert cvrsim.volt_var_q(v) == q
    q_min, q_max = cvrsim.reactive_capability(10.0, 9.0)
    assert q_max == pytest.approx(math.sqrt(19.0))
    assert q_min == pytest.approx(-math.sqrt(19.0))


def test_synthetic_feeder_scale_and_round_trip(tmp_path):
    net = cvrsim.synthesize_feeder()
    assert len(net.buses) == 240
    assert net.total_length_miles == pytest.approx(23.0, rel=0.01)
    assert net.validate() == []
    path = tmp_path / "feeder.txt"
    cvrsim.save_feeder(net, path)
    assert cvrsim.load_feeder(path) == net


def test_snapshot_matches_oracle_and_balances():
    text = "\n".join([
        "cvrsim-feeder 1",
        "network source=S mva_base=1",
        "bus id=S phases=ABC base_v=7200",
        "bus id=N1 phases=ABC base_v=7200 feeder=1 distance=1",
        "bus id=N2 phases=A base_v=7200 feeder=1 distance=2",
        "line id=L1 from=S to=N1 length=1 z=0.3,0.6,0.1,0.3,0.1,0.3,0.3,0.6,0.1,0.3,0.3,0.6",
        "line id=L2 from=N1 to=N2 length=1 z=0.4,0.8,0,0,0,0,0,0,0,0,0,0",
        "load bus=N1 phase=B p0=200 q0=60",
        "load bus=N2 phase=A p0=150 q0=50 zip_p=0.2,0.3,0.5",
        "",
    ])
    net = cvrsim.feeder_from_text(text)
    sweep = cvrsim.solve_snapshot(net, taps=(1, 0, -1), tolerance=1e-12)
    oracle = cvrsim.oracle_solve(net, taps=(1, 0, -1))
    assert sweep["converged"] and oracle["converged"]
    for bus, phases in sweep["voltages"].items():
        for phase, v in phases.items():
            assert abs(v - oracle["voltages"][bus][phase]) < 1e-8
    assert abs(sweep["balance_residual_pu"][3]) < 1e-6
    with pytest.raises(cvrsim.ParseError):
        cvrsim.feeder_from_text(text + "load bus=N1 phase=C p0=1 zip_p=0.5,0.3,0.1\n")


def test_minimal_taps_on_unloaded_network():
    net = cvrsim.synthesize_feeder(buses_per_feeder=(1, 1, 1))
    sel = cvrsim.select_minimal_taps(net, load_multiplier=0.0)
    assert sel["feasible"]
    assert tuple(sel["taps"]) == (-8, -8, -8)


def test_scenario_run_and_metrics(tmp_path):
    base = cvrsim.ScenarioConfig()
    base.feeder = cvrsim.synthesize_feeder(buses_per_feeder=(8, 6, 5), total_length_miles=4.0, total_load_kw=3000.0)
    base.penetration_pct = 60.0
    off = cvrsim.ScenarioConfig()
    off.feeder = base.feeder
    off.penetration_pct = 60.0
    off.cvr_enabled = False
    results = cvrsim.run_matrix([base, off], parallel=2)
    on_result, off_result = results
    assert len(on_result.hours) == 24
    assert cvrsim.total_energy(on_result) < cvrsim.total_energy(off_result)
    assert cvrsim.mean_substation_voltage(off_result) == 1.0
    factor = cvrsim.cvr_factor(off_result, on_result)
    assert 0.5 < factor < 2.0
    summary = cvrsim.summarize(on_result, off_result)
    assert summary.cvr_factor == pytest.approx(factor)
    assert cvrsim.voltage_distribution(off_result, 13).spread >= 0.0
    with pytest.raises(cvrsim.UndefinedCvrFactor):
        cvrsim.cvr_factor(off_result, off_result)

    assert on_result.config.name == "scenario"
    files = cvrsim.emit_results([on_result], tmp_path / "run")
    assert sorted(files) == ["scenario_hourly.csv", "scenario_summary.csv", "scenario_voltages.csv"]
    assert "scenario," in cvrsim.recompute_summaries(tmp_path / "run")


def test_bundled_config_and_grid():
    config, penetrations = cvrsim.load_run_config(SOURCE_DIR / "configs" / "default.json")
    assert config.allocation == cvrsim.AllocationKind.Dispersed
    assert config.mode == cvrsim.ControlMode.VoltVar
    assert penetrations == [60.0]
    assert len(cvrsim.scenario_grid(config)) == 12
    with pytest.raises(cvrsim.Error):
        cvrsim.ScenarioConfig().load_profile = [1.0] * 23
