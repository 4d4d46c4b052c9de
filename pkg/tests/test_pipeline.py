"""
End-to-end tests of the sme-corrfit command line on small scenarios.

Each test writes a scenario into a temporary directory, runs the commands
through main(argv) and checks the exit code and the artefacts written.
"""
import json
import os

import numpy as np
import pandas as pd
import pytest

from sme_corrfit.pipeline.commands import EXIT_CONFIG, EXIT_ERROR, EXIT_FIT, EXIT_OK, main
from sme_corrfit.simulation.batch_io import load_batch


def _qubit_doc(out_dir):
    return {
        "name": "small_qubit",
        "family": "qubit_photodetection",
        "parameters": {
            "Delta": {"value": 5.0, "unit": "kHz"},
            "Omega": {"value": 3.0, "unit": "kHz"},
            "gamma": {"value": 2.0, "unit": "kHz", "free": True, "guess": 1.5},
            "theta": {"value": 300.0, "unit": "Hz"},
            "eta": {"value": 0.5, "free": True, "guess": 0.6},
        },
        "acquisition": {"bin_width_us": 15.915494309189533, "n_bins": 8},
        "requests": [{"detector": "photodetector", "order": 1}],
        "simulation": {"n_exp": 2000, "substeps_per_bin": 20, "seed": 3, "chunk_size": 500},
        "fit": {"mode": "binned_expm", "n_subset": 4},
        "sweep": {"parameters": ["gamma"], "fractions": [-0.1, 0.1]},
        "symmetry": {"orders": [1], "n_probe": 2},
        "output": {"directory": str(out_dir)},
    }


def _vacuum_doc(out_dir):
    return {
        "name": "small_vacuum",
        "family": "lossy_oscillator",
        "parameters": {
            "omega": {"value": 0.0, "unit": "kHz"},
            "kappa": {"value": 100.0, "unit": "kHz"},
            "eta": {"value": 0.5, "free": True, "guess": 0.5},
            "alpha0": {"value": 0.0},
        },
        "acquisition": {"bin_width_us": 1.0, "n_bins": 10, "gain": 2.5, "n_trunc": 4},
        "requests": [{"detector": "X", "order": 1}],
        "simulation": {"n_exp": 1000, "substeps_per_bin": 5, "seed": 5, "chunk_size": 500},
        "output": {"directory": str(out_dir)},
    }


def _write(tmp_path, doc, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture
def qubit_scenario(tmp_path):
    out_dir = tmp_path / "out"
    return _write(tmp_path, _qubit_doc(out_dir)), out_dir


def test_simulate_correlate_fit(qubit_scenario):
    """Test 1: simulate -> correlate --batch -> fit writes every artefact"""
    config, out_dir = qubit_scenario
    assert main(["simulate", "--config", config]) == EXIT_OK
    batch_file = out_dir / "batch_a.pt"
    assert batch_file.exists()
    assert load_batch(str(batch_file)).values.shape == (2000, 1, 8)

    assert main(["correlate", "--config", config, "--batch", str(batch_file)]) == EXIT_OK
    table = pd.read_csv(out_dir / "correlations.csv")
    assert list(table.columns) == ["variant", "request", "order", "last_bin", "time", "exact", "empirical", "sem"]
    assert len(table) == 8
    assert (np.abs(table["empirical"] - table["exact"]) < 5 * table["sem"]).sum() >= 7

    assert main(["fit", "--config", config]) == EXIT_OK
    with open(out_dir / "fit_report.json") as f:
        report = json.load(f)
    assert report["fit"]["free"] == ["gamma", "eta"]
    assert set(report["fit"]["std"]) == {"gamma", "eta"}
    fit_table = pd.read_csv(out_dir / "fit_table.csv")
    assert list(fit_table["parameter"]) == ["gamma", "eta"]
    assert "relative_error" in fit_table.columns
    plot = pd.read_csv(out_dir / "plot_data.csv")
    assert len(plot) == 8 and {"empirical", "sem", "fitted"} <= set(plot.columns)
    sweep = pd.read_csv(out_dir / "sweep_data.csv")
    assert len(sweep) == 2 * 8


def test_correlate_without_batches(qubit_scenario):
    """Test 2: without batches only exact values are tabulated"""
    config, out_dir = qubit_scenario
    assert main(["correlate", "--config", config]) == EXIT_OK
    table = pd.read_csv(out_dir / "correlations.csv")
    assert "empirical" not in table.columns
    assert table["exact"].gt(0).all()


def test_symmetry_check_strict(qubit_scenario):
    """Test 3: a driven qubit breaks parity; --strict turns that into exit code 3"""
    config, out_dir = qubit_scenario
    assert main(["symmetry-check", "--config", config]) == EXIT_OK
    with open(out_dir / "symmetry_report.json") as f:
        report = json.load(f)
    assert report["a"]["odd_orders_vanish"] is False
    assert main(["symmetry-check", "--config", config, "--strict"]) == EXIT_FIT


def test_gain_calibration(tmp_path):
    """Test 4: a simulated vacuum record gives back the configured gain"""
    config = _write(tmp_path, _vacuum_doc(tmp_path / "vac"))
    assert main(["simulate", "--config", config]) == EXIT_OK
    assert main(["gain", "--config", config]) == EXIT_OK
    with open(tmp_path / "vac" / "gain.json") as f:
        gain = json.load(f)["a/X"]
    assert abs(gain["gain"] - 2.5) < 5 * gain["std"]
    assert gain["n_exp"] == 1000


def test_full_pipeline(qubit_scenario):
    """Test 5: the pipeline command chains simulate, correlate and fit"""
    config, out_dir = qubit_scenario
    assert main(["pipeline", "--config", config, "--n-exp", "1600"]) == EXIT_OK
    for name in ("batch_a.pt", "correlations.csv", "fit_report.json", "fit_table.csv", "plot_data.csv"):
        assert (out_dir / name).exists(), name
    assert load_batch(str(out_dir / "batch_a.pt")).n_exp == 1600


def test_simulate_is_deterministic(tmp_path):
    """Test 6: the same seed writes the same batch"""
    doc = _qubit_doc(tmp_path / "first")
    doc["simulation"]["n_exp"] = 50
    config = _write(tmp_path, doc)
    assert main(["simulate", "--config", config]) == EXIT_OK
    assert main(["simulate", "--config", config, "--output-dir", str(tmp_path / "second")]) == EXIT_OK
    first = load_batch(str(tmp_path / "first" / "batch_a.pt"))
    second = load_batch(str(tmp_path / "second" / "batch_a.pt"))
    np.testing.assert_array_equal(first.values, second.values)
    assert main(["simulate", "--config", config, "--seed", "4", "--output-dir", str(tmp_path / "third")]) == EXIT_OK
    third = load_batch(str(tmp_path / "third" / "batch_a.pt"))
    assert not np.array_equal(first.values, third.values)


def test_configuration_errors(tmp_path):
    """Test 7: invalid and missing documents exit with code 2"""
    doc = _qubit_doc(tmp_path / "out")
    doc["parameters"]["eta"]["guess"] = 1.5
    assert main(["simulate", "--config", _write(tmp_path, doc)]) == EXIT_CONFIG
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["fit", "--config", str(tmp_path / "broken.json")]) == EXIT_CONFIG


def test_batch_errors(qubit_scenario, tmp_path):
    """Test 8: wrong batch counts, unreadable and foreign batches exit with code 1"""
    config, out_dir = qubit_scenario
    garbage = tmp_path / "garbage.pt"
    garbage.write_text("not a batch")
    assert main(["fit", "--config", config, "--batch", str(garbage), str(garbage)]) == EXIT_ERROR
    assert main(["fit", "--config", config, "--batch", str(garbage)]) == EXIT_ERROR
    assert main(["fit", "--config", config]) == EXIT_ERROR

    # a batch simulated with another model is refused by its fingerprint
    other = _qubit_doc(tmp_path / "other")
    other["parameters"]["gamma"]["value"] = 2.5
    other["simulation"]["n_exp"] = 20
    other_config = _write(tmp_path, other, "other.json")
    assert main(["simulate", "--config", other_config]) == EXIT_OK
    foreign = os.path.join(str(tmp_path / "other"), "batch_a.pt")
    assert main(["correlate", "--config", config, "--batch", foreign]) == EXIT_ERROR
