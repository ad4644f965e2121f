import json

import numpy as np
import pandas as pd
import pytest

from ohsize.cli import main
from ohsize.core.cost_model import k2_power_law, total_cost
from ohsize.types.cost import CostParameters, PowerLawTheta

THETA = PowerLawTheta(a=10_000, b=1.2, c=0.2)
PARAMS = {"N": 100_000, "k1": 0.4, "a": 10_000, "b": 1.2, "c": 0.2}


def _write_json(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _k2_csv(path, count=40, seed=0):
    rng = np.random.default_rng(seed)
    sizes = np.unique(rng.integers(100, 99_000, count))
    values = np.asarray(k2_power_law(sizes.astype(float), THETA)) + 1e-3 * rng.standard_normal(sizes.size)
    pd.DataFrame({"n": sizes, "value": values, "variance": 1e-6}).to_csv(path, index=False)
    return str(path)


def _stderr_kind(capsys):
    return capsys.readouterr().err.splitlines()[0]


def test_ohs_writes_result_and_curve(tmp_path):
    out = tmp_path / "run"
    code = main(["--out", str(out), "--grid", "100", "ohs", _write_json(tmp_path / "p.json", PARAMS)])
    assert code == 0
    result = json.loads((out / "ohs.json").read_text())
    assert 25_000 <= result["n_star"] <= 30_000
    assert result["method"] == "root"
    curve = pd.read_csv(out / "cost_curve.csv")
    assert list(curve.columns) == ["n", "cost"]
    assert len(curve) == 100
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "ohs"
    assert set(manifest["artifacts"]) == {"ohs.json", "cost_curve.csv"}


def test_ohs_with_bump_uses_grid(tmp_path):
    payload = {**PARAMS, "bump": {"height_scale": 1e4, "center": 4e4, "width": 8e3, "density": True}}
    out = tmp_path / "run"
    assert main(["--out", str(out), "--grid", "1000", "ohs", _write_json(tmp_path / "p.json", payload)]) == 0
    result = json.loads((out / "ohs.json").read_text())
    assert result["method"] == "grid"
    assert 15_000 <= result["n_star"] <= 25_000


def test_ohs_without_interior_optimum(tmp_path, capsys):
    payload = {**PARAMS, "k1": 0.1}
    code = main(["--out", str(tmp_path / "run"), "ohs", _write_json(tmp_path / "p.json", payload)])
    assert code == 2
    assert _stderr_kind(capsys) == "error_kind=no_interior_ohs"


def test_malformed_observations(tmp_path, capsys):
    path = tmp_path / "k2.csv"
    path.write_text("n,value\n100,0.5\n", encoding="utf-8")
    code = main(["--out", str(tmp_path / "run"), "fit-parametric", str(path), "--k1", "0.4", "--N", "100000"])
    assert code == 2
    assert _stderr_kind(capsys) == "error_kind=input_format"


def test_fit_parametric_report(tmp_path):
    out = tmp_path / "run"
    csv = _k2_csv(tmp_path / "k2.csv")
    assert main(["--out", str(out), "fit-parametric", csv, "--k1", "0.4", "--N", "100000"]) == 0
    report = json.loads((out / "fit.json").read_text())
    assert set(report) == {"fit", "ohs"}
    assert report["fit"]["b"] == pytest.approx(1.2, rel=0.1)
    assert report["ohs"]["uncertainty"]["kind"] == "asymptotic"
    assert "degenerate_fraction" not in report["ohs"]["uncertainty"]


def test_fit_parametric_bootstrap_reports_degenerate_share(tmp_path):
    out = tmp_path / "run"
    csv = _k2_csv(tmp_path / "k2.csv")
    args = ["--out", str(out), "fit-parametric", csv, "--k1", "0.4", "--N", "100000", "--bootstrap", "20"]
    assert main(args) == 0
    bootstrap = json.loads((out / "fit.json").read_text())["bootstrap"]
    assert bootstrap["kind"] == "bootstrap"
    assert 0.0 <= bootstrap["degenerate_fraction"] <= 0.5


def test_next_points_need_an_oracle(tmp_path, capsys):
    csv = _k2_csv(tmp_path / "k2.csv")
    code = main(
        ["--out", str(tmp_path / "run"), "fit-parametric", csv, "--k1", "0.4", "--N", "100000", "--next-points", "2"]
    )
    assert code == 2
    assert _stderr_kind(capsys) == "error_kind=domain"


def test_emulate_without_oracle_only_conditions(tmp_path):
    sizes = np.array([2_000, 20_000, 60_000])
    costs = np.asarray(total_cost(sizes, CostParameters.from_json_dict(PARAMS)))
    obs = tmp_path / "cost.csv"
    pd.DataFrame({"n": sizes, "value": costs, "variance": 100.0}).to_csv(obs, index=False)
    gp = _write_json(tmp_path / "gp.json", {**PARAMS, "sigma_u2": 1e4, "zeta": 5_000})
    out = tmp_path / "run"
    assert main(["--out", str(out), "--grid", "200", "emulate", str(obs), gp, "--tau", "1e12"]) == 0
    assert pd.read_csv(out / "trace.csv").empty
    mu_curve = pd.read_csv(out / "mu_curve.csv")
    assert list(mu_curve.columns) == ["n", "mu", "psi"]
    assert len(mu_curve) == 200
    assert (mu_curve["psi"] >= 0).all()


def test_reruns_are_byte_identical(tmp_path):
    csv = _k2_csv(tmp_path / "k2.csv", count=25)
    manifests = []
    for name in ("first", "second"):
        out = tmp_path / name
        args = ["--seed", "4", "--out", str(out), "fit-parametric", csv, "--k1", "0.4", "--N", "100000"]
        assert main([*args, "--bootstrap", "20"]) == 0
        manifests.append(json.loads((out / "manifest.json").read_text()))
    assert manifests[0]["artifacts"] == manifests[1]["artifacts"]
    assert manifests[0]["seed"] == 4


def test_assumptions_on_curve(tmp_path):
    sizes = np.unique(np.rint(np.geomspace(10, 90_000, 30)).astype(int))
    curve = tmp_path / "curve.csv"
    pd.DataFrame({"n": sizes, "k2": np.asarray(k2_power_law(sizes.astype(float), THETA))}).to_csv(curve, index=False)
    out = tmp_path / "run"
    assert main(["--out", str(out), "assumptions", "--curve", str(curve), "--k1", "0.4", "--N", "100000"]) == 0
    report = json.loads((out / "assumptions.json").read_text())
    assert report["theorem_applicable"] == "unique_minimum"


def test_assumptions_need_input(tmp_path, capsys):
    assert main(["--out", str(tmp_path / "run"), "assumptions", "--k1", "0.4", "--N", "100"]) == 2
    assert _stderr_kind(capsys) == "error_kind=domain"


def test_simulate_dominance(tmp_path):
    config = _write_json(
        tmp_path / "dom.json",
        {"population_size": 400, "n_visible": 3, "timepoints_per_epoch": 2, "epochs": 2, "holdout_sizes": [50]},
    )
    out = tmp_path / "run"
    assert main(["--seed", "2", "--out", str(out), "simulate", config, "--scenario", "dominance"]) == 0
    trace = pd.read_csv(out / "trace.csv")
    assert len(trace) == 4 * 3
    audit = pd.read_csv(out / "audit.csv")
    assert (audit["holdout_treated"] == 0).all()
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["holdout_spike_fraction"]) == {"HoldoutUpdate(50)"}


def test_simulate_cost_structure(tmp_path):
    config = _write_json(
        tmp_path / "cs.json",
        {"population_size": 600, "n_covariates": 3, "holdout_grid": [50, 200], "replicates": 2},
    )
    out = tmp_path / "run"
    assert main(["--out", str(out), "simulate", config, "--scenario", "cost-structure"]) == 0
    curve = pd.read_csv(out / "curve.csv")
    assert list(curve.columns) == ["n", "k2_mean", "k2_sd", "replicates"]
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"k1", "flattening_point"}


def test_invalid_scenario_config(tmp_path, capsys):
    config = _write_json(tmp_path / "dom.json", {"population_size": 100, "holdout_sizes": [500]})
    assert main(["--out", str(tmp_path / "run"), "simulate", config, "--scenario", "dominance"]) == 2
    assert _stderr_kind(capsys) == "error_kind=input_format"
