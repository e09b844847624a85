"""
Feature pipeline: trailing-window aggregates, competitor and category prices,
calendar and hierarchy encodings, the price-deviation filter and log/normalization.

Every aggregate for day t is computed from days strictly before t.
"""
import logging
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd

from demandbench.models import FeatureConfig
from demandbench.services.errors import InputError
from demandbench.services.market_sim import validate_panel


logger = logging.getLogger(__name__)

AGGREGATES = ("mode", "median", "wmean", "std", "cv", "ewma")
TREE_DEPTH = 4
UNKNOWN_ID = 0
PAD_ID = 1
FIRST_ID = 2
CALENDAR_COLUMNS = ("day_of_week", "week_number")
OWN_HISTORY_PREFIXES = ("price_", "sales_", "competitor_")


def window_aggregate(series: Sequence[float], ewma_lambda: float = 0.9, increment: float | None = None) -> dict[str, float]:
    """
    Six statistics of one trailing window, oldest value first.

    Args:
        series: Window values in time order
        ewma_lambda: Decay of the exponentially weighted mean (newest weight 1)
        increment: Rounding grid for the mode; None uses the raw values

    Returns:
        mode, median, wmean (linear recency weights), std (sample), cv, ewma.
        Undefined statistics are NaN, never zero.
    """
    values = np.asarray(series, dtype=float)
    values = values[np.isfinite(values)]
    n = values.size
    if n == 0:
        return {name: np.nan for name in AGGREGATES}

    rounded = values if not increment else np.round(values / increment) * increment
    uniques, inverse, counts = np.unique(rounded, return_inverse=True, return_counts=True)
    last_seen = np.full(uniques.size, -1)
    np.maximum.at(last_seen, inverse, np.arange(n))
    # most frequent value, ties broken toward the most recent one
    winner = np.lexsort((last_seen, counts))[-1]

    recency = np.arange(1, n + 1, dtype=float)
    decay = ewma_lambda ** np.arange(n - 1, -1, -1, dtype=float)
    mean = values.mean()
    std = values.std(ddof=1) if n > 1 else np.nan

    return {
        "mode": float(uniques[winner]),
        "median": float(np.median(values)),
        "wmean": float(recency @ values / recency.sum()),
        "std": float(std),
        "cv": float(std / mean) if mean > 0 and np.isfinite(std) else np.nan,
        "ewma": float(decay @ values / decay.sum()),
    }


def competitor_aggregate(competitor_prices: np.ndarray) -> float:
    """
    Average competitor price over a window.

    Args:
        competitor_prices: (window days, competitors) matrix, NaN where a competitor is absent

    Returns:
        Unweighted mean across competitors of each competitor's own window mean; NaN if none observed
    """
    prices = np.asarray(competitor_prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    observed = np.isfinite(prices).any(axis=0)
    if prices.size == 0 or not observed.any():
        return np.nan
    per_competitor = np.nanmean(prices[:, observed], axis=0)
    return float(per_competitor.mean())


def calendar_features(day_index: int, origin_weekday: int = 0) -> tuple[int, int]:
    """(day_of_week, week_number) for a day counted from an origin weekday (0 = Monday)."""
    offset = origin_weekday + day_index
    return offset % 7, offset // 7


class Vocabulary:
    """Value-to-id map with reserved unknown and padding ids."""

    def __init__(self, values: Iterable[Any] = ()):
        self._ids: dict[Any, int] = {}
        for value in values:
            self.add(value)

    def add(self, value: Any) -> int:
        if value not in self._ids:
            self._ids[value] = FIRST_ID + len(self._ids)
        return self._ids[value]

    def lookup(self, value: Any) -> int:
        return self._ids.get(value, UNKNOWN_ID)

    @property
    def size(self) -> int:
        return FIRST_ID + len(self._ids)

    def to_list(self) -> list[Any]:
        return list(self._ids)


class TreeEncoder:
    """Per-level vocabularies for hierarchy paths truncated to TREE_DEPTH levels."""

    def __init__(self, depth: int = TREE_DEPTH):
        self.depth = depth
        self.levels = [Vocabulary() for _ in range(depth)]

    def encode(self, path: Sequence[str], grow: bool = True) -> list[int]:
        """
        Ids for levels 1..depth of a path.

        Args:
            path: Level values from the root down
            grow: Add unseen values to the vocabularies; otherwise map them to the unknown id
        """
        if len(path) == 0:
            raise InputError("hierarchy path must not be empty")
        ids = []
        for level in range(self.depth):
            if level >= len(path):
                ids.append(PAD_ID)
                continue
            vocab = self.levels[level]
            ids.append(vocab.add(path[level]) if grow else vocab.lookup(path[level]))
        return ids


def encode_tree(path: Sequence[str], encoder: TreeEncoder | None = None) -> list[int]:
    """Encode one path, truncating past level 4 and padding missing levels."""
    encoder = encoder or TreeEncoder()
    return encoder.encode(path)


def filter_price_deviation(
    panel: pd.DataFrame,
    threshold: float = 0.05,
    mode: str = "panel_mean",
    window: int = 28,
) -> pd.DataFrame:
    """
    Keep rows whose price deviates from the product's average by more than threshold.

    Args:
        panel: SalesPanel
        threshold: Relative deviation, >= 0
        mode: 'panel_mean' compares with the full-panel mean; 'trailing_mean' with the prior window
        window: Window length for 'trailing_mean'
    """
    if threshold < 0:
        raise InputError(f"threshold must be >= 0, got {threshold}")
    panel = panel.sort_values(["product_id", "day"], kind="stable")
    grouped = panel.groupby("product_id")["price"]
    if mode == "panel_mean":
        reference = grouped.transform("mean")
    elif mode == "trailing_mean":
        reference = grouped.transform(lambda s: s.rolling(window, min_periods=1).mean().shift(1))
    else:
        raise InputError(f"unknown deviation mode {mode!r}")
    deviation = (panel["price"] - reference).abs() / reference
    keep = deviation > threshold
    return panel.loc[keep.fillna(False)].reset_index(drop=True)


@dataclass
class ColumnStats:
    """Normalization of one column: ln(x + offset) if log, then (x - mean) / std."""
    offset: float
    mean: float
    std: float
    log: bool
    degenerate: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "offset": float(self.offset).hex(),
            "mean": float(self.mean).hex(),
            "std": float(self.std).hex(),
            "log": self.log,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ColumnStats":
        return cls(
            offset=float.fromhex(data["offset"]),
            mean=float.fromhex(data["mean"]),
            std=float.fromhex(data["std"]),
            log=data["log"],
            degenerate=data["degenerate"],
        )


def _log_offset(values: np.ndarray) -> float:
    finite = values[np.isfinite(values)]
    if finite.size == 0 or finite.min() > 0:
        return 0.0
    # shift so the smallest value maps to ln(1) = 0
    return 1.0 - float(finite.min())


def fit_normalization(
    table: pd.DataFrame,
    columns: Sequence[str],
    log_columns: Sequence[str] | None = None,
) -> dict[str, ColumnStats]:
    """Statistics for normalize_log; NaN entries are ignored."""
    log_columns = set(columns if log_columns is None else log_columns)
    stats = {}
    for column in columns:
        values = table[column].to_numpy(dtype=float)
        is_log = column in log_columns
        offset = _log_offset(values) if is_log else 0.0
        transformed = np.log(values + offset) if is_log else values
        finite = transformed[np.isfinite(transformed)]
        mean = float(finite.mean()) if finite.size else 0.0
        std = float(finite.std()) if finite.size else 0.0
        degenerate = not std > 1e-12
        if degenerate:
            logger.warning(f"[FEATURES] column {column!r} has zero variance; centered only")
        stats[column] = ColumnStats(offset=offset, mean=mean, std=1.0 if degenerate else std, log=is_log, degenerate=degenerate)
    return stats


def apply_normalization(table: pd.DataFrame, stats: dict[str, ColumnStats]) -> pd.DataFrame:
    """Apply stored statistics; used identically at training and inference time."""
    out = table.copy()
    for column, s in stats.items():
        values = out[column].to_numpy(dtype=float)
        if s.log:
            values = np.log(values + s.offset)
        out[column] = (values - s.mean) / s.std
    return out


def denormalize(table: pd.DataFrame, stats: dict[str, ColumnStats]) -> pd.DataFrame:
    """Inverse of apply_normalization."""
    out = table.copy()
    for column, s in stats.items():
        values = out[column].to_numpy(dtype=float) * s.std + s.mean
        if s.log:
            values = np.exp(values) - s.offset
        out[column] = values
    return out


def normalize_log(
    table: pd.DataFrame,
    columns: Sequence[str],
    log_columns: Sequence[str] | None = None,
) -> tuple[pd.DataFrame, dict[str, ColumnStats]]:
    """
    Log-transform (with an offset for non-positive columns) then z-score each column.

    Returns:
        (normalized table, statistics to persist for inference)
    """
    stats = fit_normalization(table, columns, log_columns)
    return apply_normalization(table, stats), stats


def _rolling_aggregates(values: np.ndarray, window: int, ewma_lambda: float, round_mode: bool) -> dict[str, np.ndarray]:
    n = values.size
    out = {name: np.full(n, np.nan) for name in AGGREGATES}
    for t in range(n):
        # the rounding grid comes from the history before t as well
        increment = _price_increment(values[:t]) if round_mode else None
        stats = window_aggregate(values[max(0, t - window):t], ewma_lambda, increment)
        for name, value in stats.items():
            out[name][t] = value
    return out


def _price_increment(prices: np.ndarray) -> float | None:
    """Smallest positive gap between distinct observed prices."""
    distinct = np.unique(prices[np.isfinite(prices)])
    if distinct.size < 2:
        return None
    return float(np.diff(distinct).min())


def category_price_aggregate(panel: pd.DataFrame, window: int = 28) -> pd.Series:
    """
    Trailing-window mean price of the other products in the category, per (product, day).

    Returns:
        Series aligned with panel sorted by (product_id, day); NaN with fewer than two products
    """
    panel = panel.sort_values(["product_id", "day"], kind="stable").reset_index(drop=True)
    prices = panel.pivot(index="day", columns="product_id", values="price")
    trailing = prices.rolling(window, min_periods=1).mean().shift(1)
    n_products = trailing.notna().sum(axis=1)
    others = (trailing.sum(axis=1).to_numpy()[:, None] - trailing.to_numpy()) / (n_products.to_numpy()[:, None] - 1)
    others = pd.DataFrame(others, index=trailing.index, columns=trailing.columns)
    shared = np.broadcast_to((n_products.to_numpy() > 1)[:, None], others.shape)
    others = others.where(shared)
    stacked = others.stack(future_stack=True).rename("category_price_mean")
    keys = pd.MultiIndex.from_frame(panel[["day", "product_id"]])
    return pd.Series(stacked.reindex(keys).to_numpy(), index=panel.index, name="category_price_mean")


def build_feature_table(
    panel: pd.DataFrame,
    catalog_view: pd.DataFrame | None = None,
    config: FeatureConfig | None = None,
) -> pd.DataFrame:
    """
    Assemble the estimator-facing feature table, one row per (product, day).

    Args:
        panel: SalesPanel
        catalog_view: product_id, characteristic columns f*, optional 'path' ('/'-separated hierarchy)
        config: Feature pipeline config

    Returns:
        FeatureTable sorted by (product_id, day); price and sales are carried for the loss
    """
    config = config or FeatureConfig()
    panel = validate_panel(panel)

    frames = []
    for product_id, group in panel.groupby("product_id", sort=True):
        group = group.sort_values("day")
        frame = {
            "product_id": group["product_id"].to_numpy(),
            "day": group["day"].to_numpy(),
            "price": group["price"].to_numpy(dtype=float),
            "sales": group["sales"].to_numpy(dtype=float),
        }
        for source in ("price", "sales"):
            aggregates = _rolling_aggregates(
                group[source].to_numpy(dtype=float),
                config.window,
                config.ewma_lambda,
                source == "price",
            )
            for name, values in aggregates.items():
                frame[f"{source}_{name}"] = values

        availability = group["availability"].astype(float)
        frame["availability_mean"] = availability.rolling(config.window, min_periods=1).mean().shift(1).to_numpy()

        competitor = group["competitor_price"].to_numpy(dtype=float)
        frame["competitor_price_mean"] = np.array([
            competitor_aggregate(competitor[max(0, t - config.window):t])
            for t in range(competitor.size)
        ])
        frames.append(pd.DataFrame(frame))

    table = pd.concat(frames, ignore_index=True)
    table["category_price_mean"] = category_price_aggregate(panel, config.window).to_numpy()

    calendar = np.array([calendar_features(int(d), config.origin_weekday) for d in table["day"]])
    table["day_of_week"] = calendar[:, 0]
    table["week_number"] = calendar[:, 1]

    table = _attach_catalog(table, catalog_view)

    if config.apply_filter:
        kept = filter_price_deviation(panel, config.deviation_threshold, config.deviation_mode, config.window)
        keys = set(zip(kept["product_id"], kept["day"]))
        mask = [(p, d) in keys for p, d in zip(table["product_id"], table["day"])]
        table = table.loc[mask].reset_index(drop=True)

    logger.info(f"[FEATURES] {len(table)} rows x {table.shape[1]} columns, window={config.window}")
    return table


def _attach_catalog(table: pd.DataFrame, catalog_view: pd.DataFrame | None) -> pd.DataFrame:
    if catalog_view is None:
        table["category_id"] = PAD_ID
        return table

    characteristic_columns = [c for c in catalog_view.columns if c.startswith("f")]
    table = table.merge(catalog_view[["product_id", *characteristic_columns]], on="product_id", how="left")

    if "path" in catalog_view.columns:
        encoder = TreeEncoder()
        category_vocab = Vocabulary()
        codes = {}
        for product_id, path in zip(catalog_view["product_id"], catalog_view["path"]):
            levels = [level for level in str(path).split("/") if level]
            codes[product_id] = [category_vocab.add(levels[-1]), *encoder.encode(levels)]
        columns = ["category_id", *[f"tree_l{i + 1}" for i in range(TREE_DEPTH)]]
        coded = pd.DataFrame.from_dict(codes, orient="index", columns=columns)
        coded.index.name = "product_id"
        table = table.merge(coded.reset_index(), on="product_id", how="left")
    else:
        # no hierarchy: the category collapses to a single padding id
        table["category_id"] = PAD_ID
    return table


def feature_columns(table: pd.DataFrame) -> dict[str, list[str]]:
    """
    Split a FeatureTable into column groups.

    "own_history" holds the product's trailing price, sales and competitor aggregates,
    which track its current price; "numeric" is every other non-categorical input.
    """
    categorical = [c for c in ("category_id", *[f"tree_l{i + 1}" for i in range(TREE_DEPTH)]) if c in table.columns]
    calendar = [c for c in CALENDAR_COLUMNS if c in table.columns]
    carried = ["product_id", "day", "price", "sales"]
    rest = [c for c in table.columns if c not in carried and c not in categorical and c not in calendar]
    own_history = [c for c in rest if c.startswith(OWN_HISTORY_PREFIXES)]
    numeric = [c for c in rest if c not in own_history]
    return {
        "categorical": categorical,
        "calendar": calendar,
        "numeric": numeric,
        "own_history": own_history,
        "carried": carried,
    }
