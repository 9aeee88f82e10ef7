import json
import subprocess
import sys

import numpy as np
import pytest

from coopcache import ContentCatalog
from coopcache.cli import run
from coopcache.experiments import rows_from_csv
from coopcache.optimizer import StrategyResult
from coopcache.simulator import RequestTrace, SimStats


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"num_contents": 12, "num_cells": 2, "cache_ratio": 0.3,
                                "simulation": {"measured_requests": 3000}}))
    return path


def test_generate_place_analyze_simulate(tmp_path, small_config, capsys):
    out = tmp_path / "out"
    assert run(["generate", "--config", str(small_config), "--out", str(out)]) == 0
    catalog = ContentCatalog.loads((out / "catalog.json").read_text())
    assert catalog.num_contents == 12 and catalog.num_cells == 2

    assert run(["place", "--config", str(small_config), "--catalog", str(out / "catalog.json"),
                "--strategy", "cgc", "--out", str(out)]) == 0
    placement = StrategyResult.loads((out / "placement.json").read_text(), catalog)
    assert placement.strategy == "cgc"

    assert run(["analyze", "--config", str(small_config), "--catalog", str(out / "catalog.json"),
                "--placement", str(out / "placement.json"), "--out", str(out)]) == 0
    report = json.loads((out / "delay_report.json").read_text())
    assert report["stable"] is True
    assert report["system_delay_s"] == pytest.approx(placement.system_delay, rel=1e-12)
    assert set(report["per_cell"][0]) == {"rho", "t_cell_s", "r1", "r2", "r3"}

    assert run(["simulate", "--config", str(small_config), "--catalog",
                str(out / "catalog.json"), "--placement", str(out / "placement.json"),
                "--trace", "--out", str(out)]) == 0
    stats = SimStats.loads((out / "sim_stats.json").read_text())
    trace = RequestTrace.from_csv((out / "trace.csv").read_text())
    assert stats.requests_served == len(trace) == 3000


def test_analyze_default_is_empty_cache(capsys):
    assert run(["analyze"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["system_delay_s"] == pytest.approx(2.0, abs=1e-9)


def test_seed_override_changes_catalog(capsys):
    run(["generate", "--seed", "1"])
    a = json.loads(capsys.readouterr().out)
    run(["generate", "--seed", "2"])
    b = json.loads(capsys.readouterr().out)
    assert a["sizes"] != b["sizes"]


def test_brute_force_too_large(capsys):
    assert run(["place", "--strategy", "brute"]) == 1
    assert "instance too large" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "num_cells": 2,\n  "k2": "four"\n}')
    assert run(["analyze", "--config", str(path)]) == 2
    assert f"{path}:3: k2" in capsys.readouterr().err


def test_unstable_analyze_reports_and_fails(tmp_path, capsys):
    path = tmp_path / "hot.json"
    path.write_text('{"num_contents": 10, "arrival_rate_per_s": 2.0}')
    assert run(["analyze", "--config", str(path), "--out", str(tmp_path)]) == 1
    assert "stability condition violated, rho_0 = " in capsys.readouterr().err
    report = json.loads((tmp_path / "delay_report.json").read_text())
    assert report["stable"] is False and report["system_delay_s"] is None


def test_unstable_simulate(tmp_path, capsys):
    path = tmp_path / "hot.json"
    path.write_text('{"num_contents": 10, "arrival_rate_per_s": 2.0}')
    assert run(["simulate", "--config", str(path)]) == 1
    assert "stability condition violated" in capsys.readouterr().err


def test_experiment_deterministic(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"num_contents": 20,
                                "experiment": {"values": [0.1, 0.5], "strategies": ["mpc", "hgc"]}}))
    for name in ("a", "b"):
        assert run(["experiment", "--preset", "fig4", "--config", str(path),
                    "--out", str(tmp_path / name)]) == 0
    a = (tmp_path / "a" / "fig4.csv").read_text()
    assert a == (tmp_path / "b" / "fig4.csv").read_text()
    rows = rows_from_csv(a)
    assert len(rows) == 4
    hgc = [r["analytic_delay_s"] for r in rows if r["strategy"] == "hgc"]
    mpc = [r["analytic_delay_s"] for r in rows if r["strategy"] == "mpc"]
    assert np.all(np.array(hgc) <= np.array(mpc))


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coopcache", "--help"], capture_output=True,
                          text=True, check=True)
    for cmd in ("generate", "place", "analyze", "simulate", "experiment"):
        assert cmd in proc.stdout
