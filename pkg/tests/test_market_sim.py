import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from demandbench.models import MarketConfig
from demandbench.services.errors import ConfigurationError, DimensionError, InputError
from demandbench.services.market_sim import (
    PANEL_COLUMNS,
    choice_probabilities,
    generate_catalog,
    price_matrix,
    simulate_day,
    simulate_panel,
    step_prices,
    true_point_elasticity,
    utilities,
    utility,
    validate_panel,
)


def test_catalog_shapes_and_ranges(small_market):
    catalog = generate_catalog(small_market)
    assert catalog.features.shape == (5, 3)
    assert catalog.beta.shape == (5,)
    assert np.all(catalog.beta < 0)
    assert np.all((catalog.beta >= -4.5) & (catalog.beta <= -1.0))
    assert catalog.delta.shape == (2,)
    assert np.all(catalog.initial_prices > 0)


def test_catalog_is_seed_deterministic(small_market):
    a = generate_catalog(small_market)
    b = generate_catalog(small_market)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.beta, b.beta)
    c = generate_catalog(small_market.model_copy(update={"seed": 2}))
    assert not np.array_equal(a.beta, c.beta)


def test_imaginary_features_have_zero_coefficient(small_market):
    catalog = generate_catalog(small_market)
    coefficients = catalog.feature_coefficients
    assert coefficients.shape == (3,)
    assert coefficients[-1] == 0.0
    assert catalog.significant_mask.tolist() == [True, True, False]


def test_estimator_view_hides_truth(small_market):
    view = generate_catalog(small_market).estimator_view()
    assert list(view.columns) == ["product_id", "f0", "f1", "f2"]


def test_config_validation_rejects_bad_ranges():
    with pytest.raises(ValidationError):
        MarketConfig(beta_range=(-1.0, 0.5))
    with pytest.raises(ValidationError):
        MarketConfig(n_products=0)


def test_check_config_raises_configuration_error():
    config = MarketConfig.model_construct(**{**MarketConfig().model_dump(), "n_days": 0})
    with pytest.raises(ConfigurationError):
        generate_catalog(config)


def test_utility_hand_computation():
    assert utility(-2.0, 1.5, np.array([1.0, -1.0]), np.array([0.5, 0.25])) == pytest.approx(-3.0 + 0.25)
    assert utility(-1.0, 0.0, np.array([]), np.array([])) == 0.0


def test_utility_dimension_mismatch():
    with pytest.raises(DimensionError):
        utility(-1.0, 1.0, np.array([1.0, 2.0]), np.array([1.0]))


def test_utilities_vector_matches_scalar(small_market):
    catalog = generate_catalog(small_market)
    prices = catalog.initial_prices
    vector = utilities(catalog, prices)
    for j in range(catalog.n_products):
        expected = utility(catalog.beta[j], prices[j], catalog.delta, catalog.features[j, :catalog.n_sig])
        assert vector[j] == pytest.approx(expected, abs=1e-12)


def test_choice_probabilities_sum_to_one_and_are_shift_invariant():
    u = np.array([0.3, -1.2, 2.0, 0.0])
    p = choice_probabilities(u)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert_allclose(choice_probabilities(u + 500.0), p, atol=1e-12)
    assert_allclose(choice_probabilities(np.zeros(4)), np.full(4, 0.25))


def test_choice_probabilities_survive_large_utilities():
    p = choice_probabilities(np.array([1000.0, 999.0]))
    assert np.all(np.isfinite(p))
    assert abs(p.sum() - 1.0) <= 1e-12


def test_choice_probabilities_reject_bad_input():
    with pytest.raises(InputError):
        choice_probabilities(np.array([]))
    with pytest.raises(InputError):
        choice_probabilities(np.array([0.0, np.nan]))


def test_simulate_day_conserves_consumers():
    rng = np.random.default_rng(0)
    sales = simulate_day(np.array([0.2, 0.3, 0.5]), 1000, rng)
    assert sales.sum() == 1000
    assert simulate_day(np.array([0.5, 0.5]), 0, rng).tolist() == [0, 0]


def test_step_prices_epsilon_extremes():
    prices = np.array([1.0, 2.0, 3.0])
    unchanged = step_prices(prices, 0.0, 0.05, np.random.default_rng(0))
    assert np.array_equal(unchanged, prices)
    moved = step_prices(prices, 1.0, 0.05, np.random.default_rng(0))
    assert np.all(moved != prices)
    assert np.all(moved > 0)


def test_panel_shape_and_conservation(simulated, small_market):
    catalog, panel = simulated
    assert list(panel.columns) == PANEL_COLUMNS
    assert len(panel) == small_market.n_products * small_market.n_days
    daily = panel.groupby("day")["sales"].sum()
    assert (daily == small_market.n_consumers).all()
    assert (panel["price"] > 0).all()


def test_panel_is_byte_deterministic(small_market):
    _, a = simulate_panel(small_market)
    _, b = simulate_panel(small_market)
    assert a.to_csv(index=False) == b.to_csv(index=False)


def test_epsilon_zero_keeps_prices_constant(small_market):
    _, panel = simulate_panel(small_market.model_copy(update={"epsilon": 0.0}))
    prices = price_matrix(panel)
    assert np.all(prices == prices[0])


def test_price_change_frequency_tracks_epsilon():
    config = MarketConfig(n_products=20, n_sig_features=2, n_ima_features=0, n_consumers=10, n_days=400, epsilon=0.1, seed=4)
    _, panel = simulate_panel(config)
    changes = (np.diff(price_matrix(panel), axis=0) != 0).mean()
    assert 0.07 < changes < 0.13


def test_true_point_elasticity_matches_finite_difference(small_market):
    catalog = generate_catalog(small_market.model_copy(update={"n_products": 6, "seed": 9}))
    prices = catalog.initial_prices
    h = 1e-5
    for j in range(catalog.n_products):
        up, down = prices.copy(), prices.copy()
        up[j] *= np.exp(h)
        down[j] *= np.exp(-h)
        log_up = np.log(choice_probabilities(utilities(catalog, up))[j])
        log_down = np.log(choice_probabilities(utilities(catalog, down))[j])
        numeric = (log_up - log_down) / (2 * h)
        assert true_point_elasticity(catalog, prices)[j] == pytest.approx(numeric, rel=1e-6)
    assert np.all(true_point_elasticity(catalog, prices) < 0)


def test_raising_a_price_never_raises_its_share(small_market):
    catalog = generate_catalog(small_market)
    prices = catalog.initial_prices
    base = choice_probabilities(utilities(catalog, prices))
    for j in range(catalog.n_products):
        for step in (1e-3, 0.1, 2.0):
            raised = prices.copy()
            raised[j] += step
            assert choice_probabilities(utilities(catalog, raised))[j] <= base[j]


def test_single_product_market_has_zero_elasticity(small_market):
    catalog = generate_catalog(small_market.model_copy(update={"n_products": 1}))
    assert_allclose(choice_probabilities(utilities(catalog, catalog.initial_prices)), [1.0])
    assert true_point_elasticity(catalog, catalog.initial_prices * 1.7) == pytest.approx([0.0], abs=1e-15)


def test_validate_panel_rejects_duplicates_and_negative_sales(simulated):
    _, panel = simulated
    with pytest.raises(InputError):
        validate_panel(pd.concat([panel, panel.head(1)]))
    broken = panel.copy()
    broken.loc[3, "sales"] = -1
    with pytest.raises(InputError, match="row 3"):
        validate_panel(broken)
    with pytest.raises(InputError):
        validate_panel(panel.drop(columns=["availability"]))
