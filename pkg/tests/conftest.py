"""
Shared fixtures: a small simulated market and a compact network configuration.
"""
import numpy as np
import pandas as pd
import pytest

from demandbench.models import FeatureConfig, MarketConfig, TrainConfig
from demandbench.services.market_sim import simulate_panel


@pytest.fixture
def small_market() -> MarketConfig:
    return MarketConfig(
        n_products=5,
        n_sig_features=2,
        n_ima_features=1,
        n_consumers=2000,
        n_days=60,
        epsilon=0.2,
        seed=1,
    )


@pytest.fixture
def simulated(small_market):
    return simulate_panel(small_market)


@pytest.fixture
def feature_config() -> FeatureConfig:
    return FeatureConfig(window=7)


@pytest.fixture
def tiny_train_config() -> TrainConfig:
    return TrainConfig(
        batch_size=32,
        epochs=2,
        base_lr=1e-2,
        dropout=0.0,
        validation_fraction=0.1,
        unknown_fraction=0.05,
        emb_widths=[16, 16, 64],
        fc_widths=[16, 16, 16, 8, 2],
        embedding_dim=4,
        seed=0,
    )


def make_panel(prices: dict[int, list[float]], sales: dict[int, list[float]] | None = None) -> pd.DataFrame:
    """Panel from per-product price series; sales default to 10 per day."""
    rows = []
    for product_id, series in prices.items():
        for day, price in enumerate(series):
            q = 10.0 if sales is None else sales[product_id][day]
            rows.append({
                "product_id": product_id,
                "day": day,
                "price": price,
                "sales": q,
                "availability": 1.0,
                "competitor_price": np.nan,
            })
    return pd.DataFrame(rows)
