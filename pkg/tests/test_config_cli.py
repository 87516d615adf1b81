import json

import numpy as np
import pytest

from fishyvar.chains import FiniteChainModel
from fishyvar.cli import main, run_experiment
from fishyvar.config import (
    ConfigError,
    ExperimentConfig,
    build_bundle,
    build_model,
    finite_chain_from_csv,
    load_config,
)


@pytest.fixture
def finite_csv(tmp_path):
    path = tmp_path / "chain.csv"
    path.write_text("to_0,to_1,to_2\n0.2,0.5,0.3\n0.4,0.4,0.2\n0.3,0.3,0.4\n")
    return path


# ---------------------------------------------------------------------------
# Config loading
# ---------------------------------------------------------------------------


def test_yaml_roundtrip_with_flag_overrides(tmp_path):
    cfg_file = tmp_path / "experiment.yaml"
    cfg_file.write_text(
        """
model:
  name: ar1
  phi: 0.9
coupling:
  kind: reflection-maximal
test_function: identity
estimator:
  k: 50
  L: 25
  ell: 250
  R: 5
reps: 20
seed: 42
output:
  format: csv
  dir: out
"""
    )
    cfg = load_config(cfg_file)
    assert cfg.model == "ar1"
    assert cfg.model_params["phi"] == 0.9
    assert (cfg.k, cfg.lag, cfg.ell, cfg.R) == (50, 25, 250, 5)
    assert cfg.seed == 42
    cfg = load_config(cfg_file, {"R": 7, "seed": 1})
    assert cfg.R == 7 and cfg.seed == 1
    # flag-level model parameters merge with, not replace, the file's section
    cfg = load_config(cfg_file, {"model_params": {"sigma": 2.0}})
    assert cfg.model_params == {"phi": 0.9, "sigma": 2.0}


def test_config_validation_names_keys():
    with pytest.raises(ConfigError, match="estimator.R"):
        load_config(None, {"R": 0})
    with pytest.raises(ConfigError, match="estimator.ell"):
        load_config(None, {"k": 10, "ell": 5})
    with pytest.raises(ConfigError, match="model"):
        load_config(None, {"model": "unknown"})
    with pytest.raises(ConfigError, match="test_function"):
        load_config(None, {"test_function": "missing"})


def test_config_rejects_bad_yaml(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n")
    with pytest.raises(ConfigError, match="bad.yaml"):
        load_config(bad)


def test_env_var_provides_default_seed(monkeypatch):
    monkeypatch.setenv("FISHYVAR_SEED", "987")
    cfg = load_config(None)
    assert cfg.seed == 987
    cfg = load_config(None, {"seed": 3})
    assert cfg.seed == 3


def test_build_model_validates_parameters():
    with pytest.raises(ConfigError):
        build_model(ExperimentConfig(model="ar1", model_params={"phi": 1.5}))
    with pytest.raises(ConfigError):
        build_model(ExperimentConfig(model="ar1", model_params={"bogus": 1}))
    with pytest.raises(ConfigError):
        build_model(ExperimentConfig(model="finite"))


def test_coupling_kind_flows_through():
    cfg = ExperimentConfig(model="ar1", coupling_kind="common-random-numbers")
    bundle, h = build_bundle(cfg)
    assert bundle.label == "ar1"
    with pytest.raises(ConfigError):
        build_bundle(ExperimentConfig(model="ar1", coupling_kind="maximal-rejection"))


# ---------------------------------------------------------------------------
# Finite chains from CSV
# ---------------------------------------------------------------------------


def test_finite_chain_from_csv(finite_csv):
    model = finite_chain_from_csv(finite_csv, np.arange(3.0))
    assert isinstance(model, FiniteChainModel)
    assert model.n_states == 3
    assert model.transition_matrix[1, 0] == 0.4


def test_finite_csv_header_and_shape_errors(tmp_path):
    bad_header = tmp_path / "bad1.csv"
    bad_header.write_text("a,b\n0.5,0.5\n0.5,0.5\n")
    with pytest.raises(ConfigError, match="header"):
        finite_chain_from_csv(bad_header, [0.0, 1.0])
    ragged = tmp_path / "bad2.csv"
    ragged.write_text("to_0,to_1\n0.5,0.5\n")
    with pytest.raises(ConfigError, match="matrix"):
        finite_chain_from_csv(ragged, [0.0, 1.0])
    not_stochastic = tmp_path / "bad3.csv"
    not_stochastic.write_text("to_0,to_1\n0.6,0.6\n0.5,0.5\n")
    with pytest.raises(ConfigError, match="sum"):
        finite_chain_from_csv(not_stochastic, [0.0, 1.0])


def test_finite_model_via_config(finite_csv):
    cfg = ExperimentConfig(
        model="finite", model_params={"transition_csv": str(finite_csv)}, test_function="identity"
    )
    bundle, h = build_bundle(cfg)
    assert h.eval_scalar(2) == 2.0


# ---------------------------------------------------------------------------
# CLI behaviour
# ---------------------------------------------------------------------------


def test_cli_missing_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_cli_bad_flag_value_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["suave", "--R", "not-a-number"])
    assert exc.value.code == 2


def test_cli_config_error_returns_2(tmp_path):
    code = main(["suave", "--model", "ar1", "--R", "0", "--out", str(tmp_path)])
    assert code == 2


def test_meetings_csv_golden_header(tmp_path):
    code = main(
        [
            "meetings",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--lag",
            "1",
            "--reps",
            "10",
            "--seed",
            "3",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    lines = (tmp_path / "meetings.csv").read_text().splitlines()
    assert lines[0] == "rep,tau,lag,cost"
    assert len(lines) == 11


def test_rerun_is_byte_identical_and_worker_independent(tmp_path):
    args = [
        "suave",
        "--model",
        "ar1",
        "--phi",
        "0.9",
        "--k",
        "20",
        "--L",
        "10",
        "--ell",
        "100",
        "--R",
        "3",
        "--reps",
        "16",
        "--seed",
        "11",
    ]
    out1, out2, out3 = (tmp_path / n for n in ("a", "b", "c"))
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert main(args + ["--out", str(out3), "--workers", "4"]) == 0
    for name in ("suave.csv", "suave_summary.json"):
        ref = (out1 / name).read_bytes()
        assert (out2 / name).read_bytes() == ref
        assert (out3 / name).read_bytes() == ref


def test_suave_summary_fields(tmp_path):
    code = main(
        [
            "suave",
            "--model",
            "ar1",
            "--phi",
            "0.9",
            "--k",
            "20",
            "--L",
            "10",
            "--ell",
            "100",
            "--R",
            "2",
            "--reps",
            "40",
            "--seed",
            "5",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    summary = json.loads((tmp_path / "suave_summary.json").read_text())
    for field in (
        "estimate",
        "total_cost",
        "fishy_cost",
        "variance_of_estimator",
        "inefficiency",
        "ci_estimate",
        "ci_inefficiency",
    ):
        assert field in summary
    lines = (tmp_path / "suave.csv").read_text().splitlines()
    assert lines[0] == "rep,estimate,cost_total,cost_fishy"


def test_umcmc_loss_factor_report(tmp_path):
    code = main(
        [
            "umcmc",
            "--model",
            "ar1",
            "--phi",
            "0.9",
            "--k",
            "20",
            "--L",
            "10",
            "--ell",
            "100",
            "--reps",
            "50",
            "--seed",
            "6",
            "--reference-avar",
            "100.0",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    summary = json.loads((tmp_path / "umcmc_summary.json").read_text())
    assert summary["loss_factor_vs_avar"] == pytest.approx(summary["inefficiency"] / 100.0)
    lines = (tmp_path / "umcmc.csv").read_text().splitlines()
    assert lines[0] == "rep,value,cost"


def test_pilot_and_tailfit_json(tmp_path):
    code = main(
        [
            "pilot",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--lag",
            "1",
            "--reps",
            "200",
            "--seed",
            "7",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    pilot = json.loads((tmp_path / "pilot.json").read_text())
    assert pilot["ell"] == 5 * pilot["k"]
    assert pilot["k"] == pilot["L"]

    code = main(
        [
            "tailfit",
            "--model",
            "ar1",
            "--phi",
            "0.9",
            "--lag",
            "1",
            "--reps",
            "2000",
            "--seed",
            "8",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    fit = json.loads((tmp_path / "tailfit.json").read_text())
    for field in ("slope", "intercept", "r2", "tmin", "tmax"):
        assert field in fit


def test_tvbound_csv_properties(tmp_path):
    code = main(
        [
            "tvbound",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--lag",
            "2",
            "--t-max",
            "30",
            "--reps",
            "500",
            "--seed",
            "9",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    rows = (tmp_path / "tvbound.csv").read_text().splitlines()
    assert rows[0] == "t,bound"
    bounds = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(b >= 0 for b in bounds)
    assert all(b1 <= b0 + 1e-12 for b0, b1 in zip(bounds, bounds[1:]))


def test_theory_check_reports_domination(tmp_path):
    code = main(
        [
            "theory-check",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--n-max",
            "40",
            "--reps",
            "2000",
            "--seed",
            "10",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    summary = json.loads((tmp_path / "theory_check_summary.json").read_text())
    assert summary["dominates"] is True
    assert 0.0 < summary["beta_bar"] < 1.0
    rows = (tmp_path / "theory_check.csv").read_text().splitlines()
    assert rows[0] == "n,bound,empirical"


def test_oracle_subcommand(finite_csv, tmp_path):
    code = main(
        [
            "oracle",
            "--model",
            "finite",
            "--transition-csv",
            str(finite_csv),
            "--test-function",
            "identity",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    payload = json.loads((tmp_path / "oracle.json").read_text())
    assert payload["n_states"] == 3
    assert len(payload["pi"]) == 3
    assert abs(sum(payload["pi"]) - 1.0) < 1e-9


def test_epave_subcommand(tmp_path):
    code = main(
        [
            "epave",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--t-steps",
            "2000",
            "--thin",
            "10",
            "--y",
            "0",
            "--reps",
            "4",
            "--seed",
            "12",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    summary = json.loads((tmp_path / "epave_summary.json").read_text())
    assert summary["burn_in"] >= 1  # chosen by the pilot when not given
    lines = (tmp_path / "epave.csv").read_text().splitlines()
    assert lines[0] == "rep,estimate,cost"


def test_fishy_subcommand_json_format(tmp_path):
    code = main(
        [
            "fishy",
            "--model",
            "ar1",
            "--phi",
            "0.5",
            "--grid",
            "-1",
            "0",
            "1",
            "--y",
            "0",
            "--reps",
            "50",
            "--seed",
            "13",
            "--format",
            "json",
            "--out",
            str(tmp_path),
        ]
    )
    assert code == 0
    rows = json.loads((tmp_path / "fishy.json").read_text())
    assert [r["x"] for r in rows] == [-1.0, 0.0, 1.0]
    assert set(rows[0]) == {"x", "mean", "se", "second_moment", "mean_cost"}


def test_run_experiment_unknown_command():
    cfg = ExperimentConfig()
    cfg.command = "nope"
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_suave_and_fishy_on_finite_chain(finite_csv, tmp_path):
    base = [
        "--model",
        "finite",
        "--transition-csv",
        str(finite_csv),
        "--test-function",
        "identity",
        "--seed",
        "14",
        "--out",
        str(tmp_path),
    ]
    assert main(["fishy", "--reps", "200", "--y", "0"] + base) == 0
    rows = (tmp_path / "fishy.csv").read_text().splitlines()
    assert rows[0] == "x,mean,se,second_moment,mean_cost"
    assert len(rows) == 4  # header + one row per state
    args = ["suave", "--k", "3", "--L", "2", "--ell", "12", "--R", "2", "--reps", "30", "--y", "0"]
    assert main(args + base) == 0
    assert main(args + ["--xi", "optimal"] + base) == 0
    summary = json.loads((tmp_path / "suave_summary.json").read_text())
    assert summary["xi"] == "optimal"
    assert np.isfinite(summary["estimate"])


def test_runtime_abort_exits_1(monkeypatch, tmp_path):
    from fishyvar import cli
    from fishyvar.simulate import TransitionBudgetError

    def explode(*args, **kwargs):
        raise TransitionBudgetError(1, 1000)

    monkeypatch.setattr(cli, "sample_meetings", explode)
    code = main(
        ["meetings", "--model", "ar1", "--reps", "5", "--lag", "1", "--out", str(tmp_path)]
    )
    assert code == 1
