import json
from pathlib import Path

import numpy as np
import pytest

from cavityed.cli import main, resolve_config
from cavityed.errors import ConfigError


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def ground_config(**overrides):
    payload = {
        "model": "full",
        "geometry": "square",
        "n_sites": 8,
        "g_over_omega_c": 0.5,
        "J_over_omega_d": 0.5,
        "cutoff": {"mode": "fixed", "n_ph_max": 4},
        "histograms": ["polarization", "photon"],
    }
    payload.update(overrides)
    return payload


def sweep_config(**overrides):
    payload = {
        "model": "full",
        "geometry": "square",
        "n_sites": 8,
        "cutoff": {"mode": "fixed", "n_ph_max": 0},
        "axis": "J_over_omega_d",
        "grid": {"min": 0.4, "max": 1.1, "count": 6},
        "extract": ["fluctuation_peak"],
    }
    payload.update(overrides)
    return payload


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    out = capsys.readouterr().out
    assert "triangular" in out and "48" in out and "((5, 1), (-1, 5))" in out


def test_unknown_config_key_is_hard_error(tmp_path):
    config = write_config(tmp_path, ground_config(omega_x=2.0))
    code = main(["ground", "--config", config, "--out", str(tmp_path / "out")])
    assert code == 2
    error = json.loads((tmp_path / "out" / "error.json").read_text())
    assert error["error"] == "ConfigError"
    assert "omega_x" in error["message"]


def test_schema_requires_geometry():
    with pytest.raises(ConfigError):
        resolve_config("ground", {"n_sites": 8})


def test_ground_outputs(tmp_path):
    out = tmp_path / "run"
    config = write_config(tmp_path, ground_config())
    assert main(["ground", "--config", config, "--out", str(out)]) == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["config"]["tol"] == 1e-10  # defaults materialized
    observables = json.loads((out / "observables.json").read_text())
    assert observables["observables"]["corr_stag"] is not None
    assert "hash" in observables["provenance"]
    assert (out / "hist_polarization.csv").exists()
    assert (out / "hist_polarization.png").exists()
    report = json.loads((out / "solve_report.json").read_text())
    assert report["ground_sector"] in ("even", "odd")


def test_paraelectric_ground_correlation_floor(tmp_path):
    out = tmp_path / "para"
    config = write_config(tmp_path, ground_config(
        g_over_omega_c=0.0, J_over_omega_d=0.0,
        cutoff={"mode": "fixed", "n_ph_max": 0}, histograms=[]))
    assert main(["ground", "--config", config, "--out", str(out),
                 "--no-figures"]) == 0
    observables = json.loads((out / "observables.json").read_text())
    assert abs(observables["observables"]["corr_ferro"] - 1.0 / 8.0) < 1e-10


def test_sweep_csv_and_extraction(tmp_path):
    out = tmp_path / "sweep"
    config = write_config(tmp_path, sweep_config())
    assert main(["sweep", "--config", config, "--out", str(out)]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    header = lines[0].split(",")
    assert header[0] == "J_over_omega_d"
    assert "corr_stag" in header and "energy" in header
    assert len(lines) == 7  # header + 6 points
    extract = json.loads((out / "extract_fluctuation_peak.json").read_text())
    assert 0.4 < extract["axis_value"] < 1.1
    assert (out / "sweep.png").exists()


def test_sweep_resume_reproduces_identical_csv(tmp_path):
    config = write_config(tmp_path, sweep_config())
    out_full = tmp_path / "full"
    assert main(["sweep", "--config", config, "--out", str(out_full),
                 "--no-figures"]) == 0
    reference_csv = (out_full / "sweep.csv").read_text()

    # simulate an interrupted run: keep only the first three finished points
    out_resume = tmp_path / "resumed"
    out_resume.mkdir()
    lines = (out_full / "points.jsonl").read_text().splitlines()
    kept = [line for line in lines if json.loads(line)["index"] < 3]
    (out_resume / "points.jsonl").write_text("\n".join(kept) + "\n")
    assert main(["sweep", "--config", config, "--out", str(out_resume),
                 "--resume", "--no-figures"]) == 0
    assert (out_resume / "sweep.csv").read_text() == reference_csv


def test_sweep_rerun_is_bit_identical(tmp_path):
    config = write_config(tmp_path, sweep_config())
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["sweep", "--config", config, "--out", str(out),
                     "--no-figures"]) == 0
        outs.append((out / "sweep.csv").read_text())
    assert outs[0] == outs[1]


def test_resume_ignores_stale_hash(tmp_path):
    config = write_config(tmp_path, sweep_config())
    out = tmp_path / "stale"
    out.mkdir()
    bogus = {"hash": "deadbeef", "index": 0,
             "row": {"axis_value": 0.4, "observables": None,
                     "n_ph_used": None, "solver_meta": {}, "error": "stale"}}
    (out / "points.jsonl").write_text(json.dumps(bogus) + "\n")
    assert main(["sweep", "--config", config, "--out", str(out),
                 "--resume", "--no-figures"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert all("stale" not in line for line in lines)


def test_cutoff_scan_outputs(tmp_path):
    out = tmp_path / "scan"
    config = write_config(tmp_path, {
        "model": "polaron",
        "geometry": "square",
        "n_sites": 8,
        "g_over_omega_c": 2.0,
        "J_over_omega_d": -0.5,
        "cutoff": {"mode": "auto", "n_start": 8, "n_max": 512},
        "track": ["energy"],
    })
    assert main(["cutoff-scan", "--config", config, "--out", str(out)]) == 0
    trace = json.loads((out / "cutoff_trace.json").read_text())
    assert trace["accepted_n_ph_max"] >= 8
    lines = (out / "cutoff_trace.csv").read_text().splitlines()
    assert lines[0].startswith("n_ph_max,energy")
    assert (out / "cutoff_trace.png").exists()


def test_obd_command_with_cascade(tmp_path):
    out = tmp_path / "obd"
    config = write_config(tmp_path, {
        "geometry": "triangular",
        "n_list": [9, 12],
        "cascade_grid": {"min": 0.01, "max": 1.0, "count": 5, "spacing": "log"},
    })
    assert main(["obd", "--config", config, "--out", str(out)]) == 0
    rows = (out / "obd_sectors.csv").read_text().splitlines()
    assert rows[0].startswith("n_sites,manifold_dim")
    assert len(rows) == 3
    payload = json.loads((out / "obd_sectors.json").read_text())
    dims = {r["n_sites"]: r["manifold_dim"] for r in payload["results"]}
    assert dims == {9: 42, 12: 120}
    assert (out / "cascade.csv").exists()
    assert (out / "cascade.png").exists()


def test_hist_command_reports_3sl_peaks(tmp_path):
    out = tmp_path / "hist"
    config = write_config(tmp_path, {
        "model": "effective_spin",
        "geometry": "triangular",
        "n_sites": 12,
        "J_over_omega_d": 2.0,
        "override_hz": 0.6,
        "override_jc": 0.01,
        "which": ["polarization", "complex_3sl"],
        "bins": 61,
    })
    assert main(["hist", "--config", config, "--out", str(out)]) == 0
    meta = json.loads((out / "hist_meta.json").read_text())
    assert meta["peaks"]["complex_3sl"], "expected at least one histogram peak"
    assert (out / "hist_complex_3sl.csv").exists()
    header = (out / "hist_complex_3sl.csv").read_text().splitlines()[0]
    assert header == "re_center,im_center,weight"


def test_missing_config_file_reports_error(tmp_path):
    code = main(["ground", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "out")])
    assert code == 1
    assert (tmp_path / "out" / "error.json").exists()
