import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest

from demandbench.models import DemandTheta, FeatureConfig, MarketConfig, TrainConfig
from demandbench.services.errors import InputError, UndefinedElasticityError
from demandbench.services.features import ColumnStats, build_feature_table
from demandbench.services.market_sim import simulate_panel, true_point_elasticity
from demandbench.services.ml_estimator import (
    PRICE_KEY,
    SALES_KEY,
    build_architecture,
    item_embeddings,
    level_theta,
    load_model,
    model_from_dict,
    model_to_dict,
    point_elasticity,
    predict_demand,
    predict_theta,
    product_elasticities,
    row_theta,
    save_model,
    train,
)
from tests.conftest import make_panel


@pytest.fixture
def features(simulated, feature_config):
    catalog, panel = simulated
    return build_feature_table(panel, catalog.estimator_view(), feature_config)


@pytest.fixture
def model(simulated, features, tiny_train_config):
    _, panel = simulated
    return train(panel, features, tiny_train_config)


def test_build_architecture_layout(tiny_train_config):
    arch = build_architecture([7, 2], n_numeric=10, config=tiny_train_config)
    assert arch.lookup_width == 8
    assert [spec.n_out for spec in arch.emb_layers] == [16, 16, 64]
    assert not arch.emb_layers[-1].activation
    assert all(spec.dropout == tiny_train_config.dropout for spec in arch.emb_layers)
    assert arch.fc_layers[0].n_in == 74
    assert all(spec.batch_norm and spec.activation for spec in arch.fc_layers[:4])
    head = arch.fc_layers[-1]
    assert (head.n_out, head.activation, head.batch_norm, head.dropout) == (2, False, False, 0.0)


def test_train_config_rejects_bad_widths():
    with pytest.raises(ValueError):
        TrainConfig(emb_widths=[16, 32])
    with pytest.raises(ValueError):
        TrainConfig(fc_widths=[16, 16, 16, 8, 3])


def test_train_history_shapes(model, tiny_train_config):
    # 60 days, last 6 held out: 270 training rows in batches of 32
    assert len(model.history.step_loss) == 2 * 9
    assert len(model.history.epoch_train_loss) == tiny_train_config.epochs
    assert all(math.isfinite(v) for v in model.history.epoch_val_loss)
    frame = model.history.to_frame()
    assert list(frame.columns) == ["step", "epoch", "train_loss", "val_loss"]
    assert frame["step"].tolist() == list(range(1, 19))
    assert frame["val_loss"].notna().sum() == 2
    assert frame.loc[8, "val_loss"] == model.history.epoch_val_loss[0]


def test_train_is_seed_deterministic(simulated, features, tiny_train_config):
    _, panel = simulated
    a = train(panel, features, tiny_train_config)
    b = train(panel, features, tiny_train_config)
    assert a.history.step_loss == b.history.step_loss
    assert np.array_equal(predict_theta(a, features), predict_theta(b, features))


def test_train_rejects_empty_and_misaligned_inputs(simulated, features, tiny_train_config):
    _, panel = simulated
    with pytest.raises(InputError):
        train(panel.iloc[0:0], features, tiny_train_config)
    with pytest.raises(InputError):
        train(panel, features.iloc[1:], tiny_train_config)


def test_train_rejects_infinite_features(simulated, features, tiny_train_config):
    _, panel = simulated
    broken = features.copy()
    broken.loc[5, "f0"] = np.inf
    with pytest.raises(InputError, match="f0"):
        train(panel, broken, tiny_train_config)


def test_missing_aggregates_get_presence_indicators(model):
    assert "category_price_mean" in model.indicator_columns
    assert "f0" not in model.indicator_columns


def test_own_history_inputs_are_opt_in(simulated, features, model, tiny_train_config):
    _, panel = simulated
    assert not any(c.startswith(("price_", "sales_", "competitor_")) for c in model.numeric_columns)
    assert model.calendar_columns == ["day_of_week", "week_number"]
    with_history = train(panel, features, tiny_train_config.model_copy(update={"own_history_inputs": True}))
    assert "price_median" in with_history.numeric_columns
    assert "price_median" in with_history.indicator_columns
    assert with_history.arch.n_numeric > model.arch.n_numeric


def test_predict_theta_shape_and_price_independence(model, features):
    theta = predict_theta(model, features)
    assert theta.shape == (len(features), 2)
    assert np.all(np.isfinite(theta))
    shifted = features.assign(price=features["price"] * 3.0)
    assert np.array_equal(theta, predict_theta(model, shifted))


def test_predict_theta_maps_unseen_items_to_unknown(model, features):
    unseen = features.head(10).assign(product_id=999)
    theta = predict_theta(model, unseen)
    assert theta.shape == (10, 2)
    assert np.all(np.isfinite(theta))


def test_predict_theta_requires_schema_columns(model, features):
    with pytest.raises(InputError):
        predict_theta(model, features.drop(columns=["category_price_mean"]))
    with pytest.raises(InputError):
        predict_theta(model, features.drop(columns=["week_number"]))


def test_predict_demand_returns_sales_units(model, features):
    demand = predict_demand(model, features.head(5), features["price"].head(5).to_numpy())
    assert demand.shape == (5,)
    assert np.all(np.isfinite(demand))
    with pytest.raises(InputError):
        predict_demand(model, features.head(5), np.ones(3))


def test_point_elasticity_hand_examples():
    assert point_elasticity(DemandTheta(alpha=10.0, beta=-1.0), 5.0) == pytest.approx(-1.0)
    assert point_elasticity(DemandTheta(alpha=20.0, beta=-2.0), 2.0) == pytest.approx(-0.25)
    with pytest.raises(UndefinedElasticityError):
        point_elasticity(DemandTheta(alpha=10.0, beta=-1.0), 10.0)
    with pytest.raises(UndefinedElasticityError):
        point_elasticity(DemandTheta(alpha=10.0, beta=-1.0), 12.0)


def test_level_theta_back_transform():
    stats = {
        PRICE_KEY: ColumnStats(offset=0.0, mean=3.0, std=2.0, log=False, degenerate=False),
        SALES_KEY: ColumnStats(offset=0.0, mean=10.0, std=4.0, log=False, degenerate=False),
    }
    theta = level_theta(SimpleNamespace(normalization=stats), np.array([0.0, 1.0]))
    assert theta.beta == pytest.approx(2.0)
    assert theta.alpha == pytest.approx(4.0)


def test_level_theta_uses_item_centers():
    stats = {
        PRICE_KEY: ColumnStats(offset=0.0, mean=3.0, std=2.0, log=False, degenerate=False),
        SALES_KEY: ColumnStats(offset=0.0, mean=10.0, std=4.0, log=False, degenerate=False),
        f"{PRICE_KEY}@7": ColumnStats(offset=0.0, mean=5.0, std=2.0, log=False, degenerate=False),
        f"{SALES_KEY}@7": ColumnStats(offset=0.0, mean=20.0, std=4.0, log=False, degenerate=False),
    }
    model = SimpleNamespace(normalization=stats)
    theta = level_theta(model, np.array([0.0, 1.0]), item=7)
    assert theta.beta == pytest.approx(2.0)
    assert theta.alpha == pytest.approx(10.0)
    assert level_theta(model, np.array([0.0, 1.0]), item=8).alpha == pytest.approx(4.0)


def test_batch_and_row_predictions_agree(model, features):
    batch = predict_theta(model, features)
    for position in (0, 7, 100, len(features) - 1):
        single = predict_theta(model, features.iloc[[position]])
        np.testing.assert_allclose(single[0], batch[position], rtol=1e-12, atol=1e-12)
        theta = row_theta(model, features, position)
        assert (theta.alpha, theta.beta) == pytest.approx(tuple(batch[position]), rel=1e-12, abs=1e-12)
    with pytest.raises(InputError):
        row_theta(model, features, len(features))


def test_row_theta_level_scale_is_in_sales_units(simulated, features, tiny_train_config):
    _, panel = simulated
    model = train(panel, features, tiny_train_config.model_copy(update={"transform": "level"}))
    batch = predict_theta(model, features)
    position = 42
    item = features["product_id"].iloc[position]
    expected = level_theta(model, batch[position], item=item)
    theta = row_theta(model, features, position)
    assert theta.alpha == pytest.approx(expected.alpha, rel=1e-12)
    assert theta.beta == pytest.approx(expected.beta, rel=1e-12)


def test_unseen_weeks_share_the_unknown_embedding(model, features):
    far = predict_theta(model, features.head(10).assign(week_number=1000))
    farther = predict_theta(model, features.head(10).assign(week_number=5000))
    assert np.all(np.isfinite(far))
    assert np.array_equal(far, farther)


def test_warm_start_begins_at_pooled_within_item_slope(simulated, features, tiny_train_config):
    _, panel = simulated
    config = tiny_train_config.model_copy(update={"base_lr": 1e-12, "epochs": 1})
    model = train(panel, features, config)

    # 60 days with the last 6 held out
    rows = panel[panel["day"] < 54]
    offset = model.normalization[SALES_KEY].offset
    logs = pd.DataFrame({
        "product_id": rows["product_id"],
        "x": np.log(rows["price"]),
        "y": np.log(rows["sales"] + offset),
    })
    within = logs[["x", "y"]] - logs.groupby("product_id")[["x", "y"]].transform("mean")
    slope = float((within["x"] * within["y"]).sum() / (within["x"] ** 2).sum())

    frame = product_elasticities(model, features, panel)
    np.testing.assert_allclose(frame["elasticity"], slope, rtol=1e-6)


def test_product_elasticities_log_scale(model, features, simulated):
    _, panel = simulated
    frame = product_elasticities(model, features, panel)
    assert list(frame.columns) == ["product_id", "alpha", "beta", "mean_price", "elasticity", "status"]
    assert frame["product_id"].tolist() == [0, 1, 2, 3, 4]
    assert (frame["status"] == "ok").all()
    assert np.all(np.isfinite(frame["elasticity"]))
    mean_price = panel.groupby("product_id")["price"].mean().to_numpy()
    np.testing.assert_allclose(frame["mean_price"], mean_price)


def test_product_elasticities_level_scale(simulated, features, tiny_train_config):
    _, panel = simulated
    model = train(panel, features, tiny_train_config.model_copy(update={"transform": "level"}))
    frame = product_elasticities(model, features, panel)
    assert set(frame["status"]) <= {"ok", "undefined_elasticity"}
    ok = frame[frame["status"] == "ok"]
    assert np.all(np.isfinite(ok["elasticity"]))


def test_item_embeddings(model):
    vectors = item_embeddings(model)
    assert vectors.shape == (5, 64)
    assert vectors.index.tolist() == [0, 1, 2, 3, 4]


def test_saved_model_predicts_identically(model, features, tmp_path):
    path = save_model(model, tmp_path / "model.json")
    restored = load_model(path)
    assert np.array_equal(predict_theta(model, features), predict_theta(restored, features))
    assert restored.history.step_loss == model.history.step_loss
    assert restored.config == model.config


def test_model_from_dict_rejects_unknown_schema(model):
    payload = model_to_dict(model)
    payload["schema_version"] = 99
    with pytest.raises(InputError):
        model_from_dict(payload)


@pytest.mark.slow
def test_training_loss_plateaus_on_a_desk_scale_market():
    catalog, panel = simulate_panel(MarketConfig(epsilon=0.1, seed=0))
    features = build_feature_table(panel, catalog.estimator_view())
    model = train(panel, features, TrainConfig(seed=0))

    e = model.history.epoch_train_loss
    assert len(e) == 5
    assert e[4] < e[0]
    assert abs(e[4] - e[3]) <= 0.1 * (e[0] - e[1])
    assert all(math.isfinite(v) for v in model.history.epoch_val_loss)

    estimates = product_elasticities(model, features, panel)["elasticity"].to_numpy()
    truth = true_point_elasticity(catalog, panel.groupby("product_id")["price"].mean().to_numpy())
    assert np.all(truth < 0)
    assert np.mean(estimates < 0) >= 0.95


@pytest.mark.slow
def test_single_item_linear_demand_matches_least_squares():
    rng = np.random.default_rng(11)
    n_days = 500
    prices = rng.uniform(1.0, 3.0, n_days)
    sales = 50.0 - 10.0 * prices + rng.normal(0.0, 5.0, n_days)
    panel = make_panel({0: prices.tolist()}, {0: sales.tolist()})
    features = build_feature_table(panel, None, FeatureConfig(window=7))
    config = TrainConfig(transform="level", dropout=0.0, validation_fraction=0.0, unknown_fraction=0.0, seed=0)
    model = train(panel, features, config)
    fitted = level_theta(model, predict_theta(model, features).mean(axis=0), item=0)

    X = np.column_stack([np.ones(n_days), prices])
    coef, *_ = np.linalg.lstsq(X, sales, rcond=None)
    resid = sales - X @ coef
    cov = resid @ resid / (n_days - 2) * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    assert abs(fitted.alpha - coef[0]) <= 3 * se[0]
    assert abs(fitted.beta - coef[1]) <= 3 * se[1]
