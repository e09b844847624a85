import json

import pandas as pd
import pytest

from cli import main


SMALL = ["--n-products", "3", "--n-days", "20", "--n-consumers", "200"]

SMALL_CONFIG = "\n".join([
    "DEMANDBENCH_MARKET_N_PRODUCTS=3",
    "DEMANDBENCH_MARKET_N_SIG_FEATURES=2",
    "DEMANDBENCH_MARKET_N_IMA_FEATURES=1",
    "DEMANDBENCH_MARKET_N_CONSUMERS=300",
    "DEMANDBENCH_MARKET_N_DAYS=30",
    "DEMANDBENCH_TRAIN_EPOCHS=1",
    "DEMANDBENCH_TRAIN_BATCH_SIZE=32",
    "DEMANDBENCH_TRAIN_EMB_WIDTHS=[16,16,64]",
    "DEMANDBENCH_TRAIN_FC_WIDTHS=[16,16,16,8,2]",
    "DEMANDBENCH_TRAIN_EMBEDDING_DIM=4",
    "DEMANDBENCH_FEATURE_WINDOW=7",
    "DEMANDBENCH_OLS_DEGREE=1",
    "DEMANDBENCH_OLS_K=3",
    "",
])


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "bench.env"
    path.write_text(SMALL_CONFIG)
    return path


@pytest.fixture
def simulated_run(tmp_path, config_file):
    out = tmp_path / "sim"
    assert main(["--config", str(config_file), "simulate", "--epsilon", "0.2", "--seed", "3", "--out", str(out)]) == 0
    return out


def test_simulate_writes_run_files(capsys, simulated_run):
    for name in ("panel.csv", "catalog.csv", "ground_truth.json", "stats.csv", "manifest.json"):
        assert (simulated_run / name).is_file()
    panel = pd.read_csv(simulated_run / "panel.csv")
    assert len(panel) == 90
    assert "rows=90" in capsys.readouterr().out


def test_simulate_is_reproducible(tmp_path):
    assert main(["simulate", *SMALL, "--seed", "1", "--out", str(tmp_path / "a")]) == 0
    assert main(["--seed", "1", "--out", str(tmp_path / "b"), "simulate", *SMALL]) == 0
    assert (tmp_path / "a" / "panel.csv").read_bytes() == (tmp_path / "b" / "panel.csv").read_bytes()


def test_featurize_and_fit_both_estimators(simulated_run, config_file):
    common = ["--config", str(config_file), "--out", str(simulated_run)]
    panel, catalog = str(simulated_run / "panel.csv"), str(simulated_run / "catalog.csv")
    assert main(["featurize", "--panel", panel, "--catalog", catalog, *common]) == 0
    features = pd.read_csv(simulated_run / "features.csv")
    assert "price_ewma" in features.columns
    assert "beta_true" not in features.columns

    assert main(["fit-ml", "--panel", panel, "--features", str(simulated_run / "features.csv"), *common]) == 0
    for name in ("model.json", "loss_history.csv", "ml_elasticities.csv"):
        assert (simulated_run / name).is_file()
    assert list(pd.read_csv(simulated_run / "loss_history.csv").columns) == ["step", "epoch", "train_loss", "val_loss"]

    assert main(["fit-ols", "--panel", panel, "--catalog", catalog, *common]) == 0
    estimates = pd.read_csv(simulated_run / "ols_estimates.csv")
    assert estimates["product_id"].tolist() == [0, 1, 2]


def test_stats_command(simulated_run, tmp_path):
    out = tmp_path / "stats"
    assert main(["stats", "--panel", str(simulated_run / "panel.csv"), "--out", str(out)]) == 0
    stats = pd.read_csv(out / "stats.csv")
    assert stats["statistic"].tolist() == ["log_price", "price_cv", "log_sales"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "stats"
    assert manifest["config"]["args"]["panel"].endswith("panel.csv")


def test_compare_writes_report(tmp_path, config_file):
    out = tmp_path / "compare"
    assert main(["--config", str(config_file), "compare", "--epsilons", "0.2", "--seeds", "0", "--out", str(out)]) == 0
    comparison = pd.read_csv(out / "comparison.csv")
    assert set(comparison["method"]) == {"ml", "ols"}
    assert (out / "mse.csv").is_file()
    assert (out / "loss_eps0.2_seed0.csv").is_file()


def test_optimize_writes_solution(tmp_path):
    problem = tmp_path / "problem.csv"
    problem.write_text("product_id,alpha,beta,cost,margin_lb,margin_ub\n0,10,-1,2,0,0.99\n1,20,-2,3,0,0.99\n")
    out = tmp_path / "pricing"
    assert main(["optimize", "--problem", str(problem), "--n-starts", "4", "--out", str(out)]) == 0
    solution = pd.read_csv(out / "solution.csv")
    assert solution["price"].tolist() == pytest.approx([5.0, 5.0], rel=1e-6)
    assert (out / "solution.json").is_file()


def test_optimize_infeasible_exits_with_error_line(tmp_path, capsys):
    problem = tmp_path / "problem.csv"
    problem.write_text("product_id,alpha,beta,cost,margin_lb,margin_ub,price_cap\n4,30,-1,5,0.5,0.99,8\n")
    assert main(["optimize", "--problem", str(problem), "--out", str(tmp_path / "pricing")]) == 1
    err = capsys.readouterr().err
    assert "error=InfeasibleProblemError code=infeasible" in err
    assert "price_cap:4" in err


def test_missing_input_file(tmp_path, capsys):
    assert main(["stats", "--panel", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 1
    assert "error=InputError code=input_error" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "absent.env"), "stats", "--panel", "x.csv"]) == 1
    assert "code=input_error" in capsys.readouterr().err


def test_invalid_configuration(tmp_path, capsys):
    path = tmp_path / "bad.env"
    path.write_text("DEMANDBENCH_MARKET_BETA_HIGH=0.5\n")
    assert main(["--config", str(path), "simulate", "--out", str(tmp_path / "sim")]) == 1
    assert "error=ConfigurationError code=configuration_error" in capsys.readouterr().err


def test_bad_panel_reports_row(tmp_path, capsys):
    panel = tmp_path / "panel.csv"
    panel.write_text("product_id,day,price,sales,availability,competitor_price\n0,0,1.0,5,1,\n0,1,-2.0,5,1,\n")
    assert main(["stats", "--panel", str(panel), "--out", str(tmp_path)]) == 1
    assert "row 1" in capsys.readouterr().err


def test_unexpected_failure_reports_internal_error(simulated_run, tmp_path, monkeypatch, capsys):
    def broken(panel):
        raise RuntimeError("stats backend exploded")

    monkeypatch.setattr("cli.descriptive_stats", broken)
    code = main(["stats", "--panel", str(simulated_run / "panel.csv"), "--out", str(tmp_path / "stats")])
    assert code == 1
    lines = capsys.readouterr().err.strip().splitlines()
    assert lines[-1] == "error=RuntimeError code=internal_error message=stats backend exploded"
