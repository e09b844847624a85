"""
Synthetic logit market: product catalog, consumer choices and the Bernoulli price walk.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import softmax

from demandbench.models import MarketConfig
from demandbench.services.errors import ConfigurationError, DimensionError, InputError


logger = logging.getLogger(__name__)

PANEL_COLUMNS = ["product_id", "day", "price", "sales", "availability", "competitor_price"]
PRICE_FLOOR = 1e-8


@dataclass(frozen=True)
class ProductCatalog:
    """Products of the simulated category with their ground truth."""
    features: np.ndarray        # (N, K), significant columns first
    beta: np.ndarray            # (N,), strictly negative
    delta: np.ndarray           # (n_sig,)
    initial_prices: np.ndarray  # (N,)
    n_sig: int

    @property
    def n_products(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def feature_coefficients(self) -> np.ndarray:
        """True coefficient per observed feature; imaginary ones are exactly 0."""
        return np.concatenate([self.delta, np.zeros(self.n_features - self.n_sig)])

    @property
    def significant_mask(self) -> np.ndarray:
        return np.arange(self.n_features) < self.n_sig

    def estimator_view(self) -> pd.DataFrame:
        """Catalog as the estimators see it: ids and features, no labels, no truth."""
        view = pd.DataFrame(
            self.features,
            columns=[f"f{i}" for i in range(self.n_features)],
        )
        view.insert(0, "product_id", np.arange(self.n_products))
        return view


def _check_config(config: MarketConfig) -> None:
    counts = {
        "n_products": config.n_products,
        "n_sig_features": config.n_sig_features,
        "n_consumers": config.n_consumers,
        "n_days": config.n_days,
    }
    for name, value in counts.items():
        if value < 1:
            raise ConfigurationError(f"{name} must be >= 1, got {value}")
    if config.n_ima_features < 0:
        raise ConfigurationError(f"n_ima_features must be >= 0, got {config.n_ima_features}")
    if not 0.0 <= config.epsilon <= 1.0:
        raise ConfigurationError(f"epsilon must lie in [0, 1], got {config.epsilon}")
    low, high = config.beta_range
    if not low <= high < 0:
        raise ConfigurationError(f"beta_range must be a negative interval, got {config.beta_range}")


def generate_catalog(config: MarketConfig) -> ProductCatalog:
    """
    Draw product features, true price coefficients and day-0 prices.

    Args:
        config: Market configuration

    Returns:
        ProductCatalog, bit-identical for the same seed

    Raises:
        ConfigurationError: If counts or ranges are invalid
    """
    _check_config(config)
    rng = np.random.default_rng(config.seed)

    features = rng.standard_normal((config.n_products, config.n_features))
    beta = rng.uniform(*config.beta_range, size=config.n_products)
    delta = rng.uniform(*config.delta_range, size=config.n_sig_features)
    initial_prices = rng.uniform(*config.initial_price_range, size=config.n_products)

    return ProductCatalog(
        features=features,
        beta=beta,
        delta=delta,
        initial_prices=initial_prices,
        n_sig=config.n_sig_features,
    )


def utility(beta_j: float, price_j: float, delta: np.ndarray, c_sig_j: np.ndarray) -> float:
    """
    Utility of one product: beta_j * p_j + delta . c_sig_j.

    Raises:
        DimensionError: If delta and c_sig_j differ in length
    """
    delta = np.asarray(delta, dtype=float)
    c_sig_j = np.asarray(c_sig_j, dtype=float)
    if delta.shape != c_sig_j.shape:
        raise DimensionError(f"delta has shape {delta.shape}, features have shape {c_sig_j.shape}")
    return float(beta_j * price_j + delta @ c_sig_j)


def utilities(catalog: ProductCatalog, prices: np.ndarray) -> np.ndarray:
    """Vector of utilities for every product at the given prices."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (catalog.n_products,):
        raise DimensionError(f"expected {catalog.n_products} prices, got shape {prices.shape}")
    return catalog.beta * prices + catalog.features[:, :catalog.n_sig] @ catalog.delta


def choice_probabilities(utilities: np.ndarray) -> np.ndarray:
    """
    Logit choice probabilities over the products (no outside option).

    Raises:
        InputError: If the vector is empty or not finite
    """
    u = np.asarray(utilities, dtype=float)
    if u.size == 0:
        raise InputError("utilities must not be empty")
    if not np.all(np.isfinite(u)):
        raise InputError("utilities must be finite")
    # softmax subtracts the max before exponentiating
    return softmax(u)


def simulate_day(probabilities: np.ndarray, n_consumers: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial draw of one day's sales."""
    pvals = np.asarray(probabilities, dtype=float)
    pvals = pvals / pvals.sum()
    if n_consumers == 0:
        return np.zeros(pvals.size, dtype=np.int64)
    return rng.multinomial(n_consumers, pvals).astype(np.int64)


def step_prices(
    prices: np.ndarray,
    epsilon: float,
    shock_sd: float,
    rng: np.random.Generator
) -> np.ndarray:
    """
    One day of the price walk.

    Each product independently, with probability epsilon, moves to p * (1 + z)
    with z ~ Normal(0, shock_sd^2). Both draws are always taken so the RNG
    stream does not depend on epsilon.
    """
    prices = np.asarray(prices, dtype=float)
    changes = rng.random(prices.size) < epsilon
    shocks = rng.normal(0.0, shock_sd, prices.size)
    stepped = np.where(changes, prices * (1.0 + shocks), prices)
    return np.maximum(stepped, PRICE_FLOOR)


def simulate_panel(config: MarketConfig) -> tuple[ProductCatalog, pd.DataFrame]:
    """
    Generate the catalog and T days of sales.

    Args:
        config: Market configuration

    Returns:
        (catalog, panel) where panel has PANEL_COLUMNS, one row per (product, day)
    """
    catalog = generate_catalog(config)
    rng = np.random.default_rng([config.seed, 1])

    n, t_days = catalog.n_products, config.n_days
    price_log = np.empty((t_days, n))
    sales_log = np.empty((t_days, n), dtype=np.int64)
    competitor_log = np.full((t_days, n), np.nan)

    prices = catalog.initial_prices.copy()
    for t in range(t_days):
        probabilities = choice_probabilities(utilities(catalog, prices))
        price_log[t] = prices
        sales_log[t] = simulate_day(probabilities, config.n_consumers, rng)
        if config.competitor_enabled:
            competitor_log[t] = prices * np.exp(rng.normal(0.0, config.competitor_noise_sd, n))
        prices = step_prices(prices, config.epsilon, config.price_shock_sd, rng)

    panel = pd.DataFrame({
        "product_id": np.tile(np.arange(n), t_days),
        "day": np.repeat(np.arange(t_days), n),
        "price": price_log.ravel(),
        "sales": sales_log.ravel(),
        "availability": 1.0,
        "competitor_price": competitor_log.ravel(),
    })
    panel = panel.sort_values(["product_id", "day"], kind="stable").reset_index(drop=True)

    changes = int((np.diff(price_log, axis=0) != 0).sum())
    logger.info(
        f"[SIM] {n} products x {t_days} days, epsilon={config.epsilon}, "
        f"seed={config.seed}, price changes={changes}"
    )
    return catalog, panel


def true_point_elasticity(catalog: ProductCatalog, prices: np.ndarray) -> np.ndarray:
    """Own-price elasticity of the logit share: beta_j * p_j * (1 - pi_j)."""
    prices = np.asarray(prices, dtype=float)
    probabilities = choice_probabilities(utilities(catalog, prices))
    return catalog.beta * prices * (1.0 - probabilities)


def validate_panel(panel: pd.DataFrame) -> pd.DataFrame:
    """
    Check the SalesPanel invariants and return the panel sorted by (product, day).

    Raises:
        InputError: On missing columns, duplicates, negative sales or non-positive prices
    """
    missing = [c for c in PANEL_COLUMNS if c not in panel.columns]
    if missing:
        raise InputError(f"panel is missing columns {missing}")
    if panel.empty:
        raise InputError("panel is empty")
    if panel.duplicated(["product_id", "day"]).any():
        raise InputError("panel has more than one row per (product, day)")
    if (panel["sales"] < 0).any():
        raise InputError("sales must be non-negative", row=int(np.flatnonzero(panel["sales"] < 0)[0]))
    if not (panel["price"] > 0).all():
        raise InputError("prices must be positive", row=int(np.flatnonzero(~(panel["price"] > 0))[0]))
    availability = panel["availability"]
    if ((availability < 0) | (availability > 1)).any():
        raise InputError("availability must lie in [0, 1]")
    return panel.sort_values(["product_id", "day"], kind="stable").reset_index(drop=True)


def price_matrix(panel: pd.DataFrame) -> np.ndarray:
    """Prices as a (days, products) matrix."""
    return panel.pivot(index="day", columns="product_id", values="price").to_numpy()
