"""
Structural demand estimator: a two-stage network predicts linear demand
parameters per row, trained on the mean squared error of the demand head.
"""
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from demandbench.models import DemandTheta, TrainConfig
from demandbench.services.errors import InputError, UndefinedElasticityError
from demandbench.services.features import (
    FIRST_ID,
    UNKNOWN_ID,
    ColumnStats,
    Vocabulary,
    apply_normalization,
    feature_columns,
    fit_normalization,
)
from demandbench.services.market_sim import validate_panel
from demandbench.services.nn_core import (
    Batch,
    DenseSpec,
    NetworkArch,
    NetworkParams,
    OptimizerState,
    adam_step,
    backward,
    embed,
    forward,
    init_optimizer,
    init_params,
    network_from_dict,
    network_to_dict,
    structural_loss,
)


logger = logging.getLogger(__name__)

MODEL_SCHEMA_VERSION = 2
PRICE_KEY = "__price__"
SALES_KEY = "__sales__"
ITEM_COLUMN = "product_id"


@dataclass
class TrainingHistory:
    """Per-step and per-epoch losses."""
    step_loss: list[float] = field(default_factory=list)
    step_epoch: list[int] = field(default_factory=list)
    epoch_train_loss: list[float] = field(default_factory=list)
    epoch_val_loss: list[float] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        """Loss history rows `step,epoch,train_loss,val_loss`; val_loss is set on each epoch's last step."""
        frame = pd.DataFrame({
            "step": np.arange(1, len(self.step_loss) + 1),
            "epoch": np.asarray(self.step_epoch, dtype=int) + 1,
            "train_loss": self.step_loss,
            "val_loss": np.nan,
        })
        for epoch, val_loss in enumerate(self.epoch_val_loss):
            last = np.flatnonzero(frame["epoch"].to_numpy() == epoch + 1)
            if last.size:
                frame.loc[last[-1], "val_loss"] = val_loss
        return frame


@dataclass
class TrainedModel:
    """Final network, its optimizer state, loss history and the input schema."""
    params: NetworkParams
    optimizer: OptimizerState
    history: TrainingHistory
    normalization: dict[str, ColumnStats]
    config: TrainConfig
    item_vocab: list[Any]
    categorical_columns: list[str]
    numeric_columns: list[str]
    indicator_columns: list[str]
    item_context: dict[Any, list[int]]
    calendar_columns: list[str] = field(default_factory=list)

    @property
    def arch(self) -> NetworkArch:
        return self.params.arch


def build_architecture(vocab_sizes: list[int], n_numeric: int, config: TrainConfig | None = None) -> NetworkArch:
    """
    F_emb: lookups -> 3 dense layers with dropout ending at width 64.
    F_FC: [embedding, numeric] -> 4 batch-normalized dense layers with dropout -> linear width-2 head.

    Args:
        vocab_sizes: Vocabulary size of every categorical field
        n_numeric: Number of numeric input columns
        config: Training config with widths, dropout and batch-norm momentum

    Returns:
        Validated NetworkArch
    """
    config = config or TrainConfig()
    vocab_sizes = tuple(int(v) for v in vocab_sizes)
    lookup_width = len(vocab_sizes) * config.embedding_dim

    emb_layers = []
    n_in = lookup_width
    for i, width in enumerate(config.emb_widths):
        last = i == len(config.emb_widths) - 1
        emb_layers.append(DenseSpec(n_in, width, activation=not last, dropout=config.dropout))
        n_in = width

    fc_layers = []
    n_in = config.emb_widths[-1] + n_numeric
    for i, width in enumerate(config.fc_widths):
        last = i == len(config.fc_widths) - 1
        if last:
            fc_layers.append(DenseSpec(n_in, width, activation=False))
        else:
            fc_layers.append(DenseSpec(n_in, width, activation=True, dropout=config.dropout, batch_norm=True))
        n_in = width

    arch = NetworkArch(
        vocab_sizes=vocab_sizes,
        embedding_dim=config.embedding_dim,
        n_numeric=n_numeric,
        emb_layers=tuple(emb_layers),
        fc_layers=tuple(fc_layers),
        bn_momentum=config.bn_momentum,
    )
    arch.validate()
    return arch


def _check_finite(table: pd.DataFrame, columns: list[str]) -> None:
    values = table[columns].to_numpy(dtype=float)
    bad = np.isinf(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        raise InputError(f"feature {columns[col]!r} is not finite", row=int(row))


def _categorical_matrix(model_like: dict[str, Any], table: pd.DataFrame) -> np.ndarray:
    """
    Map item ids through the vocabulary, clamp other categorical ids to the unknown id
    and shift calendar values past the reserved ids.
    """
    item_vocab: Vocabulary = model_like["vocab"]
    vocab_sizes = model_like["vocab_sizes"]
    columns = [item_vocab.lookup(v) for v in table[ITEM_COLUMN].tolist()]
    matrix = [np.asarray(columns, dtype=np.int64)]
    for f, column in enumerate(model_like["categorical_columns"], start=1):
        ids = table[column].to_numpy(dtype=np.int64)
        ids = np.where((ids >= 0) & (ids < vocab_sizes[f]), ids, UNKNOWN_ID)
        matrix.append(ids)
    first_calendar = 1 + len(model_like["categorical_columns"])
    for f, column in enumerate(model_like.get("calendar_columns", []), start=first_calendar):
        ids = table[column].to_numpy(dtype=np.int64) + FIRST_ID
        ids = np.where((ids >= FIRST_ID) & (ids < vocab_sizes[f]), ids, UNKNOWN_ID)
        matrix.append(ids)
    return np.column_stack(matrix)


def _numeric_matrix(
    table: pd.DataFrame,
    numeric_columns: list[str],
    indicator_columns: list[str],
    normalization: dict[str, ColumnStats],
) -> np.ndarray:
    source = table[numeric_columns].astype(float)
    normalized = apply_normalization(source, {c: normalization[c] for c in numeric_columns})
    present = [source[c].notna().astype(float).to_numpy() for c in indicator_columns]
    # absent aggregates sit at the column mean, i.e. zero after standardization
    values = normalized.to_numpy(dtype=float)
    values = np.where(np.isfinite(values), values, 0.0)
    if present:
        values = np.column_stack([values, *present])
    return values


def _transform_target(values: np.ndarray, stats: ColumnStats) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if stats.log:
        values = np.log(values + stats.offset)
    return (values - stats.mean) / stats.std


def _align(panel: pd.DataFrame, features: pd.DataFrame) -> pd.DataFrame:
    """Features sorted like the panel; every panel row needs exactly one feature row."""
    panel = validate_panel(panel)
    features = features.sort_values(["product_id", "day"], kind="stable").reset_index(drop=True)
    keys_panel = panel[["product_id", "day"]].to_numpy()
    keys_features = features[["product_id", "day"]].to_numpy()
    if keys_panel.shape != keys_features.shape or not np.array_equal(keys_panel, keys_features):
        raise InputError("feature table is not aligned with the panel rows")
    features = features.copy()
    features["price"] = panel["price"].to_numpy(dtype=float)
    features["sales"] = panel["sales"].to_numpy(dtype=float)
    return features


def _item_key(key: str, item: Any) -> str:
    return f"{key}@{item}"


def _target_stats(normalization: dict[str, ColumnStats], key: str, item: Any = None) -> ColumnStats:
    """Statistics of the item's price or sales; items never seen in training use the pooled entry."""
    if item is not None:
        stats = normalization.get(_item_key(key, item))
        if stats is not None:
            return stats
    return normalization[key]


def _fit_target_stats(table: pd.DataFrame, train_rows: np.ndarray, log_scale: bool) -> dict[str, ColumnStats]:
    """
    Center price and sales within each item on the training rows and scale both
    by the pooled within-item standard deviation.

    Returns:
        Pooled entries under PRICE_KEY and SALES_KEY plus one entry per item and key
    """
    items = table[ITEM_COLUMN].to_numpy()[train_rows]
    stats = {}
    for key, column in ((PRICE_KEY, "price"), (SALES_KEY, "sales")):
        offset = fit_normalization(table, [column], log_columns=[column] if log_scale else [])[column].offset
        values = table[column].to_numpy(dtype=float)[train_rows]
        transformed = np.log(values + offset) if log_scale else values
        centers = pd.Series(transformed).groupby(items).mean()
        within = transformed - centers.reindex(items).to_numpy()
        std = float(within.std())
        degenerate = not std > 1e-12
        if degenerate:
            logger.warning(f"[TRAIN] {column} never varies within an item; centered only")
            std = 1.0
        stats[key] = ColumnStats(offset=offset, mean=float(transformed.mean()), std=std, log=log_scale, degenerate=degenerate)
        for item, center in centers.items():
            stats[_item_key(key, item)] = ColumnStats(
                offset=offset, mean=float(center), std=std, log=log_scale, degenerate=degenerate
            )
    return stats


def _transform_by_item(values: np.ndarray, items: np.ndarray, normalization: dict[str, ColumnStats], key: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    out = np.empty(len(values))
    for item in pd.unique(items):
        rows = items == item
        out[rows] = _transform_target(values[rows], _target_stats(normalization, key, item))
    return out


def _restore_by_item(values: np.ndarray, items: np.ndarray, normalization: dict[str, ColumnStats], key: str) -> np.ndarray:
    out = np.empty(len(values))
    for item in pd.unique(items):
        rows = items == item
        stats = _target_stats(normalization, key, item)
        restored = values[rows] * stats.std + stats.mean
        out[rows] = np.exp(restored) - stats.offset if stats.log else restored
    return out


def _validation_split(table: pd.DataFrame, fraction: float) -> tuple[np.ndarray, np.ndarray]:
    """Training and validation row indices; the last floor(days * fraction) days are held out."""
    days = np.sort(table["day"].unique())
    n_val_days = min(int(math.floor(len(days) * fraction)), len(days) - 1)
    if n_val_days > 0:
        val_mask = table["day"].to_numpy() >= days[len(days) - n_val_days]
    else:
        val_mask = np.zeros(len(table), dtype=bool)
    return np.flatnonzero(~val_mask), np.flatnonzero(val_mask)


def _warm_start(params: NetworkParams, prices: np.ndarray, quantities: np.ndarray) -> None:
    """Start the linear head at the pooled within-item regression of quantity on price."""
    head = f"fc.dense{len(params.arch.fc_layers) - 1}"
    denominator = float(prices @ prices)
    slope = float(prices @ quantities) / denominator if denominator > 0 else 0.0
    params.tensors[f"{head}.W"][...] = 0.0
    params.tensors[f"{head}.b"][...] = [0.0, slope]


def train(panel: pd.DataFrame, features: pd.DataFrame, config: TrainConfig | None = None) -> TrainedModel:
    """
    Fit the structural network on a sales panel.

    Price and sales enter the loss centered within each product. Day of week and
    week number are embedded like any other categorical field, so effects shared by
    all products on a day are learned once. The product's own trailing price, sales
    and competitor aggregates are inputs only when config.own_history_inputs is set.

    Args:
        panel: SalesPanel providing prices and quantities
        features: FeatureTable aligned to the panel rows; its price column is never a network input
        config: Training configuration

    Returns:
        TrainedModel with final parameters, history and normalization statistics

    Raises:
        InputError: On an empty panel, misaligned features or non-finite features
    """
    config = config or TrainConfig()
    if panel is None or len(panel) == 0:
        raise InputError("cannot train on an empty panel")
    table = _align(panel, features)

    columns = feature_columns(table)
    categorical_columns = columns["categorical"]
    calendar_columns = columns["calendar"]
    numeric_columns = columns["numeric"] + (columns["own_history"] if config.own_history_inputs else [])
    _check_finite(table, numeric_columns)

    train_rows, val_rows = _validation_split(table, config.validation_fraction)
    train_table = table.iloc[train_rows]

    normalization = fit_normalization(table, numeric_columns)
    normalization.update(_fit_target_stats(table, train_rows, config.transform == "log"))
    indicator_columns = [c for c in numeric_columns if table[c].isna().any()]

    # vocabularies come from training rows; weeks first seen in validation map to the unknown id
    vocab = Vocabulary(sorted(train_table[ITEM_COLUMN].unique().tolist()))
    vocab_sizes = [vocab.size]
    for column in categorical_columns:
        vocab_sizes.append(max(int(train_table[column].max()) + 1, FIRST_ID))
    for column in calendar_columns:
        vocab_sizes.append(int(train_table[column].max()) + 1 + FIRST_ID)
    schema = {
        "vocab": vocab,
        "vocab_sizes": vocab_sizes,
        "categorical_columns": categorical_columns,
        "calendar_columns": calendar_columns,
    }

    items = table[ITEM_COLUMN].to_numpy()
    categorical = _categorical_matrix(schema, table)
    numeric = _numeric_matrix(table, numeric_columns, indicator_columns, normalization)
    prices = _transform_by_item(table["price"].to_numpy(), items, normalization, PRICE_KEY)
    quantities = _transform_by_item(table["sales"].to_numpy(), items, normalization, SALES_KEY)
    data = Batch(categorical=categorical, numeric=numeric, prices=prices, quantities=quantities)

    holdout_rng = np.random.default_rng([config.seed, 1])
    train_data = data.take(train_rows)
    # a small holdout trains the unknown row of every embedding table
    relabel = holdout_rng.random(train_data.categorical.shape) < config.unknown_fraction
    train_data.categorical[relabel] = UNKNOWN_ID
    val_data = data.take(val_rows) if val_rows.size else None

    arch = build_architecture(vocab_sizes, numeric.shape[1], config)
    params = init_params(arch, config.seed)
    if config.warm_start:
        _warm_start(params, train_data.prices, train_data.quantities)
    steps_per_epoch = math.ceil(len(train_data) / config.batch_size)
    state = init_optimizer(params, config.base_lr, steps_per_epoch)
    shuffle_rng = np.random.default_rng([config.seed, 2])
    dropout_rng = np.random.default_rng([config.seed, 3])
    history = TrainingHistory()

    logger.info(
        f"[TRAIN] {len(train_data)} train rows, {len(val_rows)} validation rows, "
        f"{steps_per_epoch} steps/epoch, {config.epochs} epochs"
    )
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(len(train_data))
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = train_data.take(order[start:start + config.batch_size])
            theta, tape = forward(params, batch, mode="train", rng=dropout_rng)
            loss, grad = structural_loss(theta, batch.prices, batch.quantities)
            grads = backward(tape, grad, params)
            params, state = adam_step(params, grads, state)
            epoch_losses.append(loss)
            history.step_loss.append(loss)
            history.step_epoch.append(epoch)
            logger.debug(f"[TRAIN] step {state.step} loss={loss:.6f}")

        history.epoch_train_loss.append(float(np.mean(epoch_losses)))
        val_loss = np.nan
        if val_data is not None:
            theta, _ = forward(params, val_data, mode="eval")
            val_loss, _ = structural_loss(theta, val_data.prices, val_data.quantities)
        history.epoch_val_loss.append(float(val_loss))
        logger.info(
            f"[TRAIN] epoch {epoch + 1}/{config.epochs} "
            f"train_loss={history.epoch_train_loss[-1]:.6f} val_loss={val_loss:.6f}"
        )

    item_context = {}
    first_rows = train_table.drop_duplicates(ITEM_COLUMN)
    static = _categorical_matrix(schema, first_rows)[:, 1:1 + len(categorical_columns)]
    for item, ids in zip(first_rows[ITEM_COLUMN].tolist(), static.tolist()):
        item_context[item] = ids

    return TrainedModel(
        params=params,
        optimizer=state,
        history=history,
        normalization=normalization,
        config=config,
        item_vocab=vocab.to_list(),
        categorical_columns=categorical_columns,
        numeric_columns=numeric_columns,
        indicator_columns=indicator_columns,
        item_context=item_context,
        calendar_columns=calendar_columns,
    )


def _schema(model: TrainedModel) -> dict[str, Any]:
    return {
        "vocab": Vocabulary(model.item_vocab),
        "vocab_sizes": list(model.arch.vocab_sizes),
        "categorical_columns": model.categorical_columns,
        "calendar_columns": model.calendar_columns,
    }


def _inputs(model: TrainedModel, table: pd.DataFrame) -> Batch:
    required = [ITEM_COLUMN, *model.categorical_columns, *model.calendar_columns, *model.numeric_columns]
    missing = [c for c in required if c not in table.columns]
    if missing:
        raise InputError(f"feature table is missing columns {missing}")
    _check_finite(table, model.numeric_columns)
    categorical = _categorical_matrix(_schema(model), table)
    numeric = _numeric_matrix(table, model.numeric_columns, model.indicator_columns, model.normalization)
    n = len(table)
    return Batch(categorical=categorical, numeric=numeric, prices=np.zeros(n), quantities=np.zeros(n))


def predict_theta(model: TrainedModel, table: pd.DataFrame) -> np.ndarray:
    """
    Eval-mode demand parameters for every row of a feature table.

    This is the batch form; row_theta wraps one row as a DemandTheta.
    Item ids never seen in training map to the reserved unknown id.
    The table's price column, if any, is ignored.

    Returns:
        Array of shape (N, 2) holding (alpha, beta) in the model's transformed units
    """
    theta, _ = forward(model.params, _inputs(model, table), mode="eval")
    return theta


def row_theta(model: TrainedModel, table: pd.DataFrame, position: int) -> DemandTheta:
    """
    DemandTheta for the feature row at an integer position.

    Level-scale models return quantity per currency units for the row's product;
    log-scale models return the standardized log-log intercept and slope.
    """
    if not 0 <= position < len(table):
        raise InputError(f"row position {position} is outside a table of {len(table)} rows")
    frame = table.iloc[[position]]
    theta = predict_theta(model, frame)[0]
    if model.config.transform == "level":
        return level_theta(model, theta, item=frame[ITEM_COLUMN].iloc[0])
    return DemandTheta(alpha=float(theta[0]), beta=float(theta[1]))


def predict_demand(model: TrainedModel, table: pd.DataFrame, prices: np.ndarray) -> np.ndarray:
    """Demand D_theta(p) per row, back-transformed to sales units."""
    prices = np.asarray(prices, dtype=float)
    if prices.shape != (len(table),):
        raise InputError(f"expected {len(table)} prices, got shape {prices.shape}")
    theta = predict_theta(model, table)
    items = table[ITEM_COLUMN].to_numpy()
    x = _transform_by_item(prices, items, model.normalization, PRICE_KEY)
    y = theta[:, 0] + theta[:, 1] * x
    return _restore_by_item(y, items, model.normalization, SALES_KEY)


def point_elasticity(theta: DemandTheta, price: float) -> float:
    """
    Elasticity of linear demand alpha + beta * p at a price.

    Raises:
        UndefinedElasticityError: If predicted demand is not positive
    """
    quantity = theta.alpha + theta.beta * price
    if not quantity > 0:
        raise UndefinedElasticityError(f"predicted quantity {quantity} at price {price} is not positive")
    return theta.beta * price / quantity


def level_theta(model: TrainedModel, theta: np.ndarray, item: Any = None) -> DemandTheta:
    """Back-transform a level-scale theta to quantity per currency units, around the item's centers."""
    price = _target_stats(model.normalization, PRICE_KEY, item)
    sales = _target_stats(model.normalization, SALES_KEY, item)
    beta = sales.std * float(theta[1]) / price.std
    alpha = sales.mean + sales.std * float(theta[0]) - beta * price.mean
    return DemandTheta(alpha=alpha, beta=beta)


def product_elasticities(model: TrainedModel, table: pd.DataFrame, panel: pd.DataFrame | None = None) -> pd.DataFrame:
    """
    One elasticity per product from the mean eval-mode theta over its rows, at its mean price.

    In log scale the slope is converted with beta * sd(ln q) / sd(ln p), both within-item
    deviations; in level scale theta is back-transformed and passed to point_elasticity.

    Returns:
        Frame with product_id, alpha, beta, mean_price, elasticity, status
    """
    prices_source = panel if panel is not None else table
    mean_price = prices_source.groupby("product_id")["price"].mean()
    theta = predict_theta(model, table)
    frame = pd.DataFrame({"product_id": table["product_id"].to_numpy(), "alpha": theta[:, 0], "beta": theta[:, 1]})
    per_product = frame.groupby("product_id", sort=True)[["alpha", "beta"]].mean()

    rows = []
    for product_id, (alpha, beta) in per_product.iterrows():
        p = float(mean_price.loc[product_id])
        status = "ok"
        if model.config.transform == "log":
            price_stats = _target_stats(model.normalization, PRICE_KEY, product_id)
            sales_stats = _target_stats(model.normalization, SALES_KEY, product_id)
            elasticity = beta * sales_stats.std / price_stats.std
        else:
            try:
                elasticity = point_elasticity(level_theta(model, np.array([alpha, beta]), item=product_id), p)
            except UndefinedElasticityError as e:
                elasticity, status = np.nan, e.code
        rows.append({
            "product_id": product_id,
            "alpha": float(alpha),
            "beta": float(beta),
            "mean_price": p,
            "elasticity": float(elasticity),
            "status": status,
        })
    return pd.DataFrame(rows)


def item_embeddings(model: TrainedModel) -> pd.DataFrame:
    """Eval-mode F_emb output for every known item at an unknown week, indexed by product_id."""
    vocab = Vocabulary(model.item_vocab)
    calendar = [UNKNOWN_ID] * len(model.calendar_columns)
    categorical = np.array(
        [[vocab.lookup(item), *model.item_context[item], *calendar] for item in model.item_vocab],
        dtype=np.int64,
    ).reshape(len(model.item_vocab), len(model.arch.vocab_sizes))
    vectors = embed(model.params, categorical)
    frame = pd.DataFrame(vectors, columns=[f"e{i}" for i in range(vectors.shape[1])])
    frame.index = pd.Index(model.item_vocab, name="product_id")
    return frame


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def model_to_dict(model: TrainedModel) -> dict[str, Any]:
    """Versioned structured form; floats are hex strings so a round trip is exact."""
    hex_list = lambda values: [float(v).hex() for v in values]  # noqa: E731
    return {
        "schema_version": MODEL_SCHEMA_VERSION,
        "network": network_to_dict(model.params, model.optimizer),
        "normalization": {k: v.to_dict() for k, v in sorted(model.normalization.items())},
        "config": model.config.model_dump(mode="json"),
        "item_vocab": [_jsonable(v) for v in model.item_vocab],
        "item_context": [[_jsonable(k), list(v)] for k, v in model.item_context.items()],
        "categorical_columns": model.categorical_columns,
        "numeric_columns": model.numeric_columns,
        "indicator_columns": model.indicator_columns,
        "calendar_columns": model.calendar_columns,
        "history": {
            "step_loss": hex_list(model.history.step_loss),
            "step_epoch": list(model.history.step_epoch),
            "epoch_train_loss": hex_list(model.history.epoch_train_loss),
            "epoch_val_loss": hex_list(model.history.epoch_val_loss),
        },
    }


def model_from_dict(payload: dict[str, Any]) -> TrainedModel:
    """
    Inverse of model_to_dict.

    Raises:
        InputError: If the schema version is unknown
    """
    if payload.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise InputError(f"unsupported model schema version {payload.get('schema_version')}")
    params, state = network_from_dict(payload["network"])
    from_hex = lambda values: [float.fromhex(v) for v in values]  # noqa: E731
    history = payload["history"]
    return TrainedModel(
        params=params,
        optimizer=state,
        history=TrainingHistory(
            step_loss=from_hex(history["step_loss"]),
            step_epoch=list(history["step_epoch"]),
            epoch_train_loss=from_hex(history["epoch_train_loss"]),
            epoch_val_loss=from_hex(history["epoch_val_loss"]),
        ),
        normalization={k: ColumnStats.from_dict(v) for k, v in payload["normalization"].items()},
        config=TrainConfig(**payload["config"]),
        item_vocab=list(payload["item_vocab"]),
        categorical_columns=list(payload["categorical_columns"]),
        numeric_columns=list(payload["numeric_columns"]),
        indicator_columns=list(payload["indicator_columns"]),
        item_context={k: list(v) for k, v in payload["item_context"]},
        calendar_columns=list(payload["calendar_columns"]),
    )


def save_model(model: TrainedModel, path: str | Path) -> Path:
    """Write the model as JSON with sorted keys."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model_to_dict(model), sort_keys=True))
    return path


def load_model(path: str | Path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
