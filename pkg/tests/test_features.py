import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from demandbench.models import FeatureConfig
from demandbench.services.errors import InputError
from demandbench.services.features import (
    PAD_ID,
    TreeEncoder,
    UNKNOWN_ID,
    Vocabulary,
    build_feature_table,
    calendar_features,
    category_price_aggregate,
    competitor_aggregate,
    denormalize,
    encode_tree,
    feature_columns,
    filter_price_deviation,
    fit_normalization,
    normalize_log,
    window_aggregate,
)
from tests.conftest import make_panel


def test_window_aggregate_hand_example():
    stats = window_aggregate([1.0, 2.0, 2.0, 3.0], ewma_lambda=0.5)
    assert stats["mode"] == 2.0
    assert stats["median"] == 2.0
    assert stats["wmean"] == pytest.approx(2.3)
    assert stats["std"] == pytest.approx(math.sqrt(2 / 3))
    assert stats["cv"] == pytest.approx(math.sqrt(2 / 3) / 2)
    assert stats["ewma"] == pytest.approx(4.625 / 1.875)


def test_window_aggregate_mode_ties_go_to_most_recent():
    assert window_aggregate([1.0, 2.0])["mode"] == 2.0
    assert window_aggregate([2.0, 1.0])["mode"] == 1.0
    assert window_aggregate([5.0, 7.0, 7.0, 5.0])["mode"] == 5.0


def test_window_aggregate_mode_uses_rounding_grid():
    assert window_aggregate([1.01, 0.99, 2.0], increment=1.0)["mode"] == 1.0


def test_window_aggregate_empty_and_single_windows():
    empty = window_aggregate([])
    assert all(math.isnan(v) for v in empty.values())
    single = window_aggregate([4.0])
    assert single["mode"] == single["median"] == single["wmean"] == single["ewma"] == 4.0
    assert math.isnan(single["std"])
    assert math.isnan(single["cv"])


def test_window_aggregate_constant_series_has_zero_cv():
    stats = window_aggregate([3.0, 3.0, 3.0])
    assert stats["std"] == 0.0
    assert stats["cv"] == 0.0


def test_competitor_aggregate():
    assert competitor_aggregate(np.array([[1.0, np.nan], [3.0, np.nan]])) == pytest.approx(2.0)
    # each competitor is averaged over its own observed days first
    assert competitor_aggregate(np.array([[1.0, 4.0], [3.0, np.nan]])) == pytest.approx(3.0)
    assert math.isnan(competitor_aggregate(np.full((3, 2), np.nan)))
    assert math.isnan(competitor_aggregate(np.empty((0, 2))))


@pytest.mark.parametrize("day, origin, expected", [(0, 0, (0, 0)), (8, 0, (1, 1)), (3, 5, (1, 1)), (6, 0, (6, 0))])
def test_calendar_features(day, origin, expected):
    assert calendar_features(day, origin) == expected


def test_vocabulary_reserves_unknown_and_padding():
    vocab = Vocabulary(["a", "b", "a"])
    assert vocab.lookup("a") == 2
    assert vocab.lookup("b") == 3
    assert vocab.lookup("zzz") == UNKNOWN_ID
    assert vocab.size == 4
    assert vocab.to_list() == ["a", "b"]


def test_tree_encoder_pads_and_truncates():
    encoder = TreeEncoder()
    assert encoder.encode(["food", "dairy"]) == [2, 2, PAD_ID, PAD_ID]
    assert encoder.encode(["food", "bakery", "bread", "rye", "dark"]) == [2, 3, 2, 2]
    assert encoder.encode(["toys", "dairy"], grow=False) == [UNKNOWN_ID, 2, PAD_ID, PAD_ID]
    assert encode_tree(["x"]) == [2, PAD_ID, PAD_ID, PAD_ID]


def test_tree_encoder_rejects_empty_path():
    with pytest.raises(InputError):
        TreeEncoder().encode([])


def test_filter_price_deviation_keeps_only_large_deviations():
    panel = make_panel({0: [1.0, 1.0, 1.0, 1.1]})
    kept = filter_price_deviation(panel, threshold=0.05)
    assert kept["day"].tolist() == [3]


def test_filter_price_deviation_constant_prices_keep_nothing():
    panel = make_panel({0: [2.0] * 5})
    assert filter_price_deviation(panel, threshold=0.0).empty


def test_filter_price_deviation_trailing_mode_skips_first_day():
    panel = make_panel({0: [1.0, 2.0, 2.0]})
    kept = filter_price_deviation(panel, threshold=0.05, mode="trailing_mean", window=1)
    assert kept["day"].tolist() == [1]


def test_filter_price_deviation_rejects_bad_arguments():
    panel = make_panel({0: [1.0, 2.0]})
    with pytest.raises(InputError):
        filter_price_deviation(panel, threshold=-0.1)
    with pytest.raises(InputError):
        filter_price_deviation(panel, mode="median")


def test_normalize_log_hand_example():
    table = pd.DataFrame({"x": [1.0, math.e, math.e ** 2]})
    normalized, stats = normalize_log(table, ["x"])
    assert stats["x"].mean == pytest.approx(1.0)
    assert stats["x"].std == pytest.approx(math.sqrt(2 / 3))
    assert_allclose(normalized["x"], [-math.sqrt(1.5), 0.0, math.sqrt(1.5)])
    assert_allclose(denormalize(normalized, stats)["x"], table["x"])


def test_normalize_log_offsets_non_positive_columns():
    table = pd.DataFrame({"x": [-1.0, 0.0, 1.0]})
    stats = fit_normalization(table, ["x"])
    assert stats["x"].offset == 2.0
    assert_allclose(denormalize(normalize_log(table, ["x"])[0], stats)["x"], table["x"])


def test_normalize_log_degenerate_column_is_centered_only():
    table = pd.DataFrame({"x": [5.0, 5.0, 5.0], "y": [1.0, 2.0, np.nan]})
    normalized, stats = normalize_log(table, ["x", "y"], log_columns=[])
    assert stats["x"].degenerate
    assert stats["x"].std == 1.0
    assert normalized["x"].tolist() == [0.0, 0.0, 0.0]
    assert math.isnan(normalized["y"].iloc[2])


def test_column_stats_serialization_is_exact():
    stats = fit_normalization(pd.DataFrame({"x": [0.1, 0.7, 3.3]}), ["x"])["x"]
    assert type(stats).from_dict(stats.to_dict()) == stats


def test_category_price_aggregate_uses_other_products():
    panel = make_panel({0: [1.0] * 4, 1: [3.0] * 4})
    series = category_price_aggregate(panel, window=2)
    frame = panel.sort_values(["product_id", "day"]).reset_index(drop=True).assign(category=series)
    assert frame["category"].iloc[[0, 4]].isna().all()
    assert frame.loc[frame["product_id"] == 0, "category"].iloc[1:].tolist() == [3.0, 3.0, 3.0]
    assert frame.loc[frame["product_id"] == 1, "category"].iloc[1:].tolist() == [1.0, 1.0, 1.0]


def test_category_price_aggregate_single_product_is_nan():
    assert category_price_aggregate(make_panel({0: [1.0, 2.0, 3.0]})).isna().all()


def test_category_price_aggregate_averages_trailing_windows():
    panel = make_panel({0: [1.0, 2.0, 3.0], 1: [4.0, 5.0, 6.0], 2: [7.0, 8.0, 9.0]})
    series = category_price_aggregate(panel, window=2)
    frame = panel.sort_values(["product_id", "day"]).reset_index(drop=True).assign(category=series)
    by_key = frame.set_index(["product_id", "day"])["category"]
    assert by_key.loc[(0, 1)] == pytest.approx(5.5)
    assert by_key.loc[(0, 2)] == pytest.approx(6.0)
    assert by_key.loc[(2, 2)] == pytest.approx(3.0)


def test_category_price_aggregate_late_entry():
    panel = make_panel({0: [1.0, 2.0, 3.0], 1: [4.0, 5.0, 6.0]})
    panel = panel[~((panel["product_id"] == 1) & (panel["day"] == 0))]
    series = category_price_aggregate(panel, window=2)
    frame = panel.sort_values(["product_id", "day"]).reset_index(drop=True).assign(category=series)
    by_key = frame.set_index(["product_id", "day"])["category"]
    assert np.isnan(by_key.loc[(0, 1)])
    assert by_key.loc[(0, 2)] == pytest.approx(5.0)
    assert by_key.loc[(1, 2)] == pytest.approx(1.5)


def test_feature_table_first_day_has_no_history(simulated, feature_config):
    catalog, panel = simulated
    table = build_feature_table(panel, catalog.estimator_view(), feature_config)
    assert len(table) == len(panel)
    first = table[table["day"] == 0]
    assert first["price_median"].isna().all()
    assert first["sales_ewma"].isna().all()
    assert first["competitor_price_mean"].isna().all()
    assert table.loc[table["day"] == 1, "price_median"].notna().all()


def test_feature_table_has_no_look_ahead(simulated, feature_config):
    catalog, panel = simulated
    table = build_feature_table(panel, catalog.estimator_view(), feature_config)
    altered = panel.copy()
    future = altered["day"] >= 30
    altered.loc[future, "price"] *= 1.7
    altered.loc[future, "sales"] += 11
    altered.loc[future, "competitor_price"] *= 0.5
    changed = build_feature_table(altered, catalog.estimator_view(), feature_config)

    columns = [c for c in table.columns if c not in ("price", "sales")]
    past = table["day"] <= 30
    pd.testing.assert_frame_equal(table.loc[past, columns], changed.loc[past, columns])


def test_feature_table_columns(simulated, feature_config):
    catalog, panel = simulated
    table = build_feature_table(panel, catalog.estimator_view(), feature_config)
    for source in ("price", "sales"):
        for name in ("mode", "median", "wmean", "std", "cv", "ewma"):
            assert f"{source}_{name}" in table.columns
    for column in ("availability_mean", "category_price_mean", "day_of_week", "week_number", "f0", "f2"):
        assert column in table.columns
    assert (table["category_id"] == PAD_ID).all()
    groups = feature_columns(table)
    assert groups["categorical"] == ["category_id"]
    assert groups["calendar"] == ["day_of_week", "week_number"]
    assert "f0" in groups["numeric"]
    assert "category_price_mean" in groups["numeric"]
    assert "price" not in groups["numeric"]
    assert "price_median" in groups["own_history"]
    assert "competitor_price_mean" in groups["own_history"]
    assert not set(groups["numeric"]) & set(groups["own_history"])


def test_feature_table_encodes_hierarchy_paths():
    panel = make_panel({0: [1.0, 1.1], 1: [2.0, 2.1], 2: [3.0, 3.1]})
    view = pd.DataFrame({
        "product_id": [0, 1, 2],
        "f0": [0.1, 0.2, 0.3],
        "path": ["food/dairy/milk", "food/dairy/cheese", "toys"],
    })
    table = build_feature_table(panel, view, FeatureConfig(window=2))
    by_product = table.groupby("product_id").first()
    assert by_product.loc[0, ["tree_l1", "tree_l2", "tree_l3", "tree_l4"]].tolist() == [2, 2, 2, PAD_ID]
    assert by_product.loc[1, ["tree_l1", "tree_l2", "tree_l3", "tree_l4"]].tolist() == [2, 2, 3, PAD_ID]
    assert by_product.loc[2, "tree_l1"] == 3
    assert by_product["category_id"].tolist() == [2, 3, 4]
    assert feature_columns(table)["categorical"] == ["category_id", "tree_l1", "tree_l2", "tree_l3", "tree_l4"]


def test_feature_table_filter_drops_rows():
    panel = make_panel({0: [1.0, 1.0, 1.0, 1.1], 1: [2.0, 2.0, 2.0, 2.0]})
    table = build_feature_table(panel, None, FeatureConfig(window=2, apply_filter=True))
    assert list(zip(table["product_id"], table["day"])) == [(0, 3)]


def test_feature_table_calendar_origin(feature_config):
    panel = make_panel({0: [1.0] * 9})
    table = build_feature_table(panel, None, feature_config.model_copy(update={"origin_weekday": 5}))
    assert table["day_of_week"].tolist() == [5, 6, 0, 1, 2, 3, 4, 5, 6]
    assert table["week_number"].tolist() == [0, 0, 1, 1, 1, 1, 1, 1, 1]
