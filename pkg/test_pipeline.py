"""
End-to-end tests: band renormalization, the verify suite, configuration and the CLI.
"""
import copy
import csv
import json
import os
from dataclasses import replace

import numpy as np
import pytest

from unimodal_response.core.config import RunConfig, lambda_grid, load_config
from unimodal_response.core.errors import ConfigError, EXIT_NUMERICAL, EXIT_USAGE, OrbitNotFinite
from unimodal_response.core.pipeline import Verification, _verify_susceptibility, analyze_map, verify
from unimodal_response.core.report_writer import ReportWriter, to_plain
from unimodal_response.main import run

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def test_band_merging_is_renormalized(band_merging_run):
    stage = band_merging_run.map_stage
    assert stage.renormalization["period"] == 2
    assert len(stage.renormalization["original_partition"]["intervals"]) == 3
    assert stage.fmap.family == "band_return"
    assert band_merging_run.assumption["margin"] > 0
    assert all(band_merging_run.spectrum["converged"])


def test_band_merging_two_path_agreement(band_merging_run):
    grid = lambda_grid({"disk": {"radius": 0.4, "n_radial": 2, "n_angular": 4}})
    for result in band_merging_run.perturbations:
        for lam in grid:
            direct = result.direct(lam)
            assert abs(result.psi.value(lam) - direct) <= 1e-7 * max(abs(direct), 1e-10)


def test_ulam_verify_passes(ulam_config):
    bundle = verify(ulam_config)
    failed = [c["check"] for c in bundle.verification["checks"] if not c["passed"]]
    assert failed == []
    assert bundle.verification["n_checks"] > 20
    compared = [c["value"] for c in bundle.verification["checks"]
                if c["check"].endswith("_two_path_compared")]
    assert compared == [9, 9, 9]


def test_band_merging_verify_passes(band_merging_config):
    bundle = verify(band_merging_config)
    failed = [c["check"] for c in bundle.verification["checks"] if not c["passed"]]
    assert failed == []
    names = {c["check"] for c in bundle.verification["checks"]}
    assert {"cycle_expansion_truncation", "cycle_expansion_leading"} <= names


def test_empty_direct_series_disk_fails_verification(ulam_run):
    results = []
    for result in ulam_run.perturbations:
        direct = copy.copy(result.direct)
        if result.name == "constant":
            direct.max_modulus = 0.0
        results.append(replace(result, direct=direct))
    bundle = copy.copy(ulam_run)
    bundle.perturbations = results
    checks = Verification()
    _verify_susceptibility(bundle, checks)
    failed = {c["check"] for c in checks.checks if not c["passed"]}
    assert failed == {"psi_constant_direct_series_radius"}


def test_non_postcritically_finite_map_rejected():
    config = RunConfig(map={"family": "logistic", "lambda": 3.7}, max_iter=2000)
    with pytest.raises(OrbitNotFinite):
        analyze_map(config)


def test_load_config_precedence(tmp_path, monkeypatch):
    path = write_config(tmp_path, {"map": {"family": "logistic", "lambda": 4.0}, "degree": 16})
    monkeypatch.setenv("UNIMODAL_RESPONSE_DEGREE", "20")
    monkeypatch.setenv("UNIMODAL_RESPONSE_SEED", "7")
    config = load_config(path, {"degree": 28}, env_file=str(tmp_path / "missing.env"))
    assert config.degree == 28
    assert config.seed == 7


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {}))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"map": {"family": "logistic", "lambda": 4.0},
                                            "nodes": 3}))
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"map": {"family": "logistic", "lambda": 4.0},
                                            "degree": 4}))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


def test_lambda_grids():
    assert len(lambda_grid({"circle": {"radius": 1.0, "n": 64}})) == 64
    annulus = lambda_grid({"annulus": {"inner": 0.5, "outer": 1.0, "n_radial": 3, "n_angular": 8}})
    np.testing.assert_allclose(sorted(set(np.round(np.abs(annulus), 12))), [0.5, 0.75, 1.0])
    np.testing.assert_allclose(lambda_grid([[0.1, 0.2]]), [0.1 + 0.2j])
    with pytest.raises(ConfigError):
        lambda_grid({"square": {}})


def test_report_writer(results_dir):
    writer = ReportWriter(results_dir)
    path = writer.write_json("sample.json", {"z": 1 + 2j, "bad": float("nan"), "v": np.arange(2)})
    with open(path, encoding="utf-8") as handle:
        document = json.load(handle)
    assert document["schema_version"] == "1.0"
    assert document["z"] == {"re": 1.0, "im": 2.0}
    assert document["bad"] == "nan"
    assert document["v"] == [0, 1]
    assert to_plain((1, np.float64(0.5))) == [1, 0.5]


def test_cli_psi_writes_artifacts(tmp_path, results_dir):
    assert run(["psi", "--config", os.path.join(CONFIG_DIR, "chebyshev.json"),
                "--output-dir", results_dir]) == 0
    for name in ("partition.json", "atlas.json", "spectrum.json", "density.csv", "poles.json",
                 "psi_endpoint_vanishing.csv", "psi_constant.csv"):
        assert os.path.exists(os.path.join(results_dir, name))
    with open(os.path.join(results_dir, "psi_constant.csv"), encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["re_lambda", "im_lambda", "re_psi", "im_psi", "flag"]
    assert len(rows) == 65
    assert {row[4] for row in rows[1:]} == {"ok"}


def test_cli_outputs_are_deterministic(tmp_path):
    outputs = []
    for name in ("first", "second"):
        target = str(tmp_path / name)
        assert run(["spectrum", "--config", os.path.join(CONFIG_DIR, "chebyshev.json"),
                    "--output-dir", target]) == 0
        with open(os.path.join(target, "spectrum.json"), encoding="utf-8") as handle:
            outputs.append(handle.read())
    assert outputs[0] == outputs[1]


def test_cli_coarse_degree_fails_verification(results_dir):
    code = run(["verify", "--config", os.path.join(CONFIG_DIR, "coarse_ulam.json"),
                "--output-dir", results_dir])
    assert code == 1
    with open(os.path.join(results_dir, "verification.json"), encoding="utf-8") as handle:
        summary = json.load(handle)
    failed = {c["check"] for c in summary["checks"] if not c["passed"]}
    assert "eigenvalue_degree_convergence" in failed


def test_cli_usage_and_numerical_exit_codes(tmp_path, results_dir):
    assert run(["verify", "--config", write_config(tmp_path, {}), "--output-dir", results_dir]) == EXIT_USAGE
    path = write_config(tmp_path, {"map": {"family": "logistic", "lambda": 3.7}, "max_iter": 2000},
                        name="aperiodic.json")
    assert run(["partition", "--config", path, "--output-dir", results_dir]) == EXIT_NUMERICAL


def test_cli_linear_algebra_error_is_numerical(monkeypatch, results_dir):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr("unimodal_response.main.run_pipeline", singular)
    assert run(["spectrum", "--config", os.path.join(CONFIG_DIR, "chebyshev.json"),
                "--output-dir", results_dir]) == EXIT_NUMERICAL
