"""
Spatial-competition log-log regression.

Products are placed in a low-dimensional characteristics space; the prices of
the other products enter each product's regression weighted by a polynomial
in their distance. The own-price coefficient of the log-log model is the
elasticity.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.spatial.distance import cdist

from demandbench.models import DemandTheta
from demandbench.services.errors import (
    DegenerateVarianceError,
    DemandBenchError,
    DimensionError,
    InputError,
    RankDeficiencyError,
)
from demandbench.services.market_sim import validate_panel


logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
DEGENERATE_TOLERANCE = 1e-12
PRICE_COLUMN = 1
ESTIMATE_COLUMNS = ["product_id", "beta_hat", "se", "r2_price", "var_lemma", "n_obs", "status", "error"]


@dataclass
class ProductSpace:
    """Encoded catalog and its rank-k factorization."""
    encoded: np.ndarray           # (products, encoded features)
    coordinates: np.ndarray       # (products, k) = U_k * s_k
    components: np.ndarray        # (k, encoded features)
    singular_values: np.ndarray   # (k,)
    discarded_energy: float       # sum of squared discarded singular values

    @property
    def k(self) -> int:
        return self.coordinates.shape[1]

    def reconstruction(self) -> np.ndarray:
        return self.coordinates @ self.components

    def reconstruction_error(self) -> float:
        return float(np.sum((self.encoded - self.reconstruction()) ** 2))


@dataclass
class OlsFit:
    """Coefficients, residual variance and covariance of one regression."""
    coefficients: np.ndarray
    sigma2: float
    covariance: np.ndarray
    rss: float
    n_obs: int
    r_squared: float
    r2_price: float | None = None
    var_lemma: float | None = None

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


@dataclass
class RegressionDesign:
    """Design matrix and response of one product's regression."""
    product_id: int
    X: np.ndarray
    y: np.ndarray
    days: np.ndarray
    columns: list[str]
    log1p: bool


def encode_product_space(
    features: np.ndarray | pd.DataFrame,
    paths: list[list[str]] | None = None,
) -> tuple[np.ndarray, list[str]]:
    """
    One-hot hierarchy levels followed by standardized numeric characteristics.

    Args:
        features: (products, numeric features)
        paths: Optional hierarchy path per product, root first

    Returns:
        (encoded matrix, column names) with a deterministic column order
    """
    numeric = np.asarray(features, dtype=float)
    if numeric.ndim == 1:
        numeric = numeric[:, None]
    n = numeric.shape[0]
    blocks, names = [], []

    if paths is not None:
        if len(paths) != n:
            raise DimensionError(f"{len(paths)} hierarchy paths for {n} products")
        depth = max((len(p) for p in paths), default=0)
        for level in range(depth):
            values = sorted({p[level] for p in paths if len(p) > level})
            onehot = np.zeros((n, len(values)))
            for row, path in enumerate(paths):
                if len(path) > level:
                    onehot[row, values.index(path[level])] = 1.0
            blocks.append(onehot)
            names.extend(f"l{level + 1}={value}" for value in values)

    if numeric.shape[1]:
        mean = numeric.mean(axis=0)
        std = numeric.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        blocks.append((numeric - mean) / std)
        names.extend(f"x{i}" for i in range(numeric.shape[1]))

    if not blocks:
        raise DimensionError("product space needs at least one characteristic")
    return np.column_stack(blocks), names


def factorize(matrix: np.ndarray, k: int) -> ProductSpace:
    """
    Rank-k truncated SVD via eigen-decomposition of the smaller Gram matrix.

    Args:
        matrix: (rows, cols) encoded matrix
        k: Number of dimensions to keep

    Returns:
        ProductSpace whose coordinates are the left singular vectors scaled by the singular values

    Raises:
        DimensionError: If k is not within 1..min(rows, cols)
    """
    A = np.asarray(matrix, dtype=float)
    rows, cols = A.shape
    if not 1 <= k <= min(rows, cols):
        raise DimensionError(f"k={k} must lie in 1..{min(rows, cols)} for a {rows}x{cols} matrix")

    if rows <= cols:
        eigenvalues, vectors = linalg.eigh(A @ A.T)
    else:
        eigenvalues, vectors = linalg.eigh(A.T @ A)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    vectors = vectors[:, order]

    kept = eigenvalues[:k]
    singular_values = np.sqrt(kept)
    scale = np.where(singular_values > 0, singular_values, 1.0)
    if rows <= cols:
        left = vectors[:, :k]
        coordinates = left * singular_values
        components = (A.T @ left / scale).T
        components[singular_values == 0] = 0.0
    else:
        components = vectors[:, :k].T
        coordinates = A @ components.T

    return ProductSpace(
        encoded=A,
        coordinates=coordinates,
        components=components,
        singular_values=singular_values,
        discarded_energy=float(eigenvalues[k:].sum()),
    )


def pairwise_distances(coordinates: np.ndarray) -> np.ndarray:
    """Euclidean distance between every pair of rows."""
    coordinates = np.asarray(coordinates, dtype=float)
    if coordinates.ndim == 1:
        coordinates = coordinates[:, None]
    return cdist(coordinates, coordinates, metric="euclidean")


def product_distances(catalog_view: pd.DataFrame, k: int = 12) -> np.ndarray:
    """
    Distances between catalog products, ordered by product_id.

    k is clamped to the rank limit of the encoded catalog.
    """
    catalog_view = catalog_view.sort_values("product_id").reset_index(drop=True)
    numeric = catalog_view[[c for c in catalog_view.columns if c.startswith("f")]]
    paths = None
    if "path" in catalog_view.columns:
        paths = [[level for level in str(p).split("/") if level] for p in catalog_view["path"]]
    encoded, _ = encode_product_space(numeric, paths)
    limit = min(encoded.shape)
    if k > limit:
        logger.warning(f"[OLS] k={k} exceeds the encoded catalog shape {encoded.shape}; using k={limit}")
        k = limit
    return pairwise_distances(factorize(encoded, k).coordinates)


@dataclass
class _PanelMatrices:
    prices: pd.DataFrame
    sales: pd.DataFrame
    distances: np.ndarray
    powers: np.ndarray


def _panel_matrices(panel: pd.DataFrame, distances: np.ndarray, degree: int) -> _PanelMatrices:
    if degree < 0:
        raise InputError(f"degree must be >= 0, got {degree}")
    panel = validate_panel(panel)
    # only days on which every product has a price
    prices = panel.pivot(index="day", columns="product_id", values="price").dropna(axis=0, how="any")
    sales = panel.pivot(index="day", columns="product_id", values="sales").loc[prices.index]
    distances = np.asarray(distances, dtype=float)
    n = prices.shape[1]
    if distances.shape != (n, n):
        raise DimensionError(f"distance matrix has shape {distances.shape}, panel has {n} products")
    return _PanelMatrices(prices=prices, sales=sales, distances=distances, powers=np.arange(degree + 1))


def _product_design(m: _PanelMatrices, j: int, log1p_zero_sales: bool) -> RegressionDesign:
    product_id = m.prices.columns[j]
    q = m.sales[product_id].to_numpy(dtype=float)
    if not (q > 0).any():
        raise InputError(f"product {product_id} has no positive sales")

    P = m.prices.to_numpy()
    weights = m.distances[j][None, :] ** m.powers[:, None]
    weights[:, j] = 0.0
    z = P @ weights.T
    X = np.column_stack([np.ones(len(P)), np.log(P[:, j]), z])

    if (q <= 0).any() and log1p_zero_sales:
        keep, y, log1p = np.ones(len(q), dtype=bool), np.log1p(q), True
    else:
        keep = q > 0
        y, log1p = np.log(q[keep]), False
        X = X[keep]
    return RegressionDesign(
        product_id=int(product_id),
        X=X,
        y=y,
        days=m.prices.index.to_numpy()[keep],
        columns=["const", "log_price", *[f"z{k}" for k in m.powers]],
        log1p=log1p,
    )


def build_regressors(
    panel: pd.DataFrame,
    distances: np.ndarray,
    degree: int = 3,
    log1p_zero_sales: bool = True,
) -> dict[int, RegressionDesign]:
    """
    Per-product design matrices with columns [1, ln p_j, z_0, ..., z_degree].

    z_k(j, t) = sum over i != j of d_ji ** k * p_it. Only days on which every
    product has a price are used.

    Args:
        panel: SalesPanel
        distances: (products, products) distance matrix ordered by product_id
        degree: Polynomial degree of the distance weighting
        log1p_zero_sales: Use ln(q + 1) when a product has zero-sale days; otherwise drop those days

    Returns:
        Mapping product_id -> RegressionDesign

    Raises:
        InputError: If a product never sells
    """
    m = _panel_matrices(panel, distances, degree)
    return {
        int(product_id): _product_design(m, j, log1p_zero_sales)
        for j, product_id in enumerate(m.prices.columns)
    }


def _dependent_columns(X: np.ndarray) -> list[int]:
    norms = np.linalg.norm(X, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        return zero.tolist()
    _, R, pivots = linalg.qr(X / norms, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int((diag > RANK_TOLERANCE * diag[0]).sum())
    return sorted(int(c) for c in pivots[rank:])


def ols_fit(X: np.ndarray, y: np.ndarray, price_column: int | None = None) -> OlsFit:
    """
    Least squares through a QR decomposition.

    Args:
        X: (n, p) design matrix, n > p
        y: (n,) response
        price_column: Column whose lemma variance and R^2 should be attached

    Returns:
        OlsFit with sigma2 = RSS / (n - p) and covariance sigma2 * (X'X)^-1

    Raises:
        DimensionError: If shapes do not conform or n <= p
        RankDeficiencyError: If X is not of full column rank
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise DimensionError(f"design {X.shape} and response {y.shape} do not conform")
    n, p = X.shape
    if n <= p:
        raise DimensionError(f"need more rows than columns, got {n}x{p}")

    norms = np.linalg.norm(X, axis=0)
    scaled = X / np.where(norms > 0, norms, 1.0)
    s = linalg.svdvals(scaled)
    if norms.min() == 0 or s[-1] / s[0] < RANK_TOLERANCE:
        raise RankDeficiencyError("design matrix is rank deficient", _dependent_columns(X))

    Q, R = linalg.qr(X, mode="economic")
    coefficients = linalg.solve_triangular(R, Q.T @ y)
    residual = y - X @ coefficients
    rss = float(residual @ residual)
    sigma2 = rss / (n - p)
    R_inv = linalg.solve_triangular(R, np.eye(p))
    covariance = sigma2 * (R_inv @ R_inv.T)

    ss_tot = float(np.sum((y - y.mean()) ** 2))
    fit = OlsFit(
        coefficients=coefficients,
        sigma2=sigma2,
        covariance=covariance,
        rss=rss,
        n_obs=n,
        r_squared=1.0 - rss / ss_tot if ss_tot > 0 else 1.0,
    )
    if price_column is not None:
        price_resid, r2_price = _residualize_price(X, price_column)
        fit.r2_price = r2_price
        fit.var_lemma = sigma2 / float(price_resid @ price_resid)
    return fit


def _residualize(target: np.ndarray, others: np.ndarray) -> np.ndarray:
    if others.shape[1] == 0:
        return target.copy()
    coef, *_ = linalg.lstsq(others, target)
    return target - others @ coef


def _residualize_price(X: np.ndarray, price_column: int) -> tuple[np.ndarray, float]:
    """Residual of the price column on every other column, and that regression's R^2."""
    X = np.asarray(X, dtype=float)
    if not 0 <= price_column < X.shape[1]:
        raise DimensionError(f"price column {price_column} outside design with {X.shape[1]} columns")
    price = X[:, price_column]
    others = np.delete(X, price_column, axis=1)
    resid = _residualize(price, others)
    ss_res = float(resid @ resid)
    ss_tot = float(np.sum((price - price.mean()) ** 2))
    if ss_tot <= 0 or ss_res <= DEGENERATE_TOLERANCE * max(float(price @ price), 1.0):
        raise DegenerateVarianceError("price has no variation left after partialling out the other regressors")
    r_squared = 1.0 - ss_res / ss_tot if others.shape[1] else 0.0
    return resid, r_squared


def lemma_variance(X: np.ndarray, y: np.ndarray, price_column: int = PRICE_COLUMN) -> tuple[float, float]:
    """
    Variance of the price coefficient as sigma2 / (SS_tot(p) * (1 - R^2_p)).

    R^2_p comes from regressing the price column on the other columns; with an
    intercept among them SS_tot * (1 - R^2) equals the residual sum of squares,
    which is what is computed.

    Returns:
        (var_beta, r_squared_price)

    Raises:
        DegenerateVarianceError: If price is perfectly explained by the other columns
    """
    resid, r2_price = _residualize_price(X, price_column)
    fit = ols_fit(X, y)
    return fit.sigma2 / float(resid @ resid), r2_price


def fwl_fit(X: np.ndarray, y: np.ndarray, price_column: int = PRICE_COLUMN) -> float:
    """Price coefficient from regressing residualized y on residualized price."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    price_resid, _ = _residualize_price(X, price_column)
    others = np.delete(X, price_column, axis=1)
    y_resid = _residualize(y, others)
    return float(price_resid @ y_resid / (price_resid @ price_resid))


def _estimate_row(product_id: int, design: RegressionDesign | None, error: Exception | None = None) -> dict:
    row = {column: None for column in ESTIMATE_COLUMNS}
    row.update(product_id=int(product_id), n_obs=0 if design is None else len(design.y), status="ok")
    if error is not None:
        row.update(status=getattr(error, "code", "error"), error=str(error))
    return row


def estimate_all(
    panel: pd.DataFrame,
    distances: np.ndarray,
    degree: int = 3,
    log1p_zero_sales: bool = True,
) -> pd.DataFrame:
    """
    Fit every product's regression; failures become rows with a status, never a crash.

    Args:
        panel: SalesPanel
        distances: Distance matrix ordered by product_id
        degree: Polynomial degree of the distance weighting
        log1p_zero_sales: See build_regressors

    Returns:
        Frame with ESTIMATE_COLUMNS, one row per product in product_id order
    """
    m = _panel_matrices(panel, distances, degree)
    rows = []
    for j, product_id in enumerate(m.prices.columns):
        design = None
        try:
            design = _product_design(m, j, log1p_zero_sales)
            if len(design.y) < degree + 4:
                raise InputError(f"product {product_id} has {len(design.y)} usable days, needs {degree + 4}")
            if np.ptp(design.X[:, PRICE_COLUMN]) == 0:
                raise DegenerateVarianceError(f"product {product_id} never changes price")
            fit = ols_fit(design.X, design.y, price_column=PRICE_COLUMN)
        except DemandBenchError as e:
            logger.warning(f"[OLS] product {product_id} skipped: {e}")
            rows.append(_estimate_row(product_id, design, e))
            continue
        row = _estimate_row(product_id, design)
        row.update(
            beta_hat=float(fit.coefficients[PRICE_COLUMN]),
            se=float(fit.stderr[PRICE_COLUMN]),
            r2_price=fit.r2_price,
            var_lemma=fit.var_lemma,
        )
        rows.append(row)

    report = pd.DataFrame(rows, columns=ESTIMATE_COLUMNS)
    ok = int((report["status"] == "ok").sum())
    logger.info(f"[OLS] {ok} of {len(report)} products estimated, {len(report) - ok} failed, degree={degree}")
    return report


def linearize_loglog(elasticity: float, price: float, quantity: float) -> DemandTheta:
    """
    Tangent linear demand of a log-log fit at (price, quantity).

    beta = e * q0 / p0 and alpha = q0 - beta * p0, so the optimizer can consume regression estimates.
    """
    if not price > 0 or not quantity > 0:
        raise InputError(f"linearization point needs positive price and quantity, got ({price}, {quantity})")
    beta = elasticity * quantity / price
    return DemandTheta(alpha=quantity - beta * price, beta=beta)
