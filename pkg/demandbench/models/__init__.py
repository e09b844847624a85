"""
Pydantic models for configuration, request/response validation and reports.
"""
import math
from pathlib import Path
from typing import List, Literal

from pydantic import BaseModel, Field, field_validator, model_validator


# Simulation Models
class MarketConfig(BaseModel):
    """Synthetic logit market configuration."""
    n_products: int = Field(25, ge=1, description="Number of products in the category")
    n_sig_features: int = Field(6, ge=1, description="Features that enter consumer utility")
    n_ima_features: int = Field(4, ge=0, description="Observed features with zero true coefficient")
    n_consumers: int = Field(10_000, ge=1, description="Consumers per day")
    n_days: int = Field(500, ge=1, description="Simulated days")
    epsilon: float = Field(0.01, ge=0.0, le=1.0, description="Daily chance that a product changes price")
    price_shock_sd: float = Field(0.05, ge=0.0, description="Relative std of a price change")
    seed: int = Field(0, ge=0, description="RNG seed")
    beta_range: tuple[float, float] = Field((-4.5, -1.0), description="Interval for true price coefficients")
    delta_range: tuple[float, float] = Field((-1.0, 1.0), description="Interval for true feature coefficients")
    initial_price_range: tuple[float, float] = Field((0.5, 1.5), description="Interval for day-0 prices")
    competitor_enabled: bool = Field(True, description="Simulate a competitor price column")
    competitor_noise_sd: float = Field(0.05, ge=0.0, description="Lognormal sd of competitor price around own price")

    @model_validator(mode="after")
    def _check_ranges(self) -> "MarketConfig":
        low, high = self.beta_range
        if not low <= high < 0:
            raise ValueError("beta_range must satisfy low <= high < 0")
        if self.delta_range[0] > self.delta_range[1]:
            raise ValueError("delta_range must satisfy low <= high")
        p_low, p_high = self.initial_price_range
        if not 0 < p_low <= p_high:
            raise ValueError("initial_price_range must satisfy 0 < low <= high")
        return self

    @property
    def n_features(self) -> int:
        return self.n_sig_features + self.n_ima_features


class FeatureConfig(BaseModel):
    """Feature pipeline configuration."""
    window: int = Field(28, ge=1, description="Trailing window length in days")
    ewma_lambda: float = Field(0.9, gt=0.0, lt=1.0, description="EWMA decay")
    deviation_threshold: float = Field(0.05, ge=0.0, description="Relative price deviation filter")
    deviation_mode: Literal["panel_mean", "trailing_mean"] = "panel_mean"
    origin_weekday: int = Field(0, ge=0, le=6, description="Weekday of day 0 (0 = Monday)")
    apply_filter: bool = Field(False, description="Drop rows failing the deviation filter")


class TrainConfig(BaseModel):
    """Structural network training configuration."""
    batch_size: int = Field(128, ge=1)
    epochs: int = Field(5, ge=1)
    base_lr: float = Field(1e-3, gt=0.0)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    validation_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    bn_momentum: float = Field(0.1, gt=0.0, le=1.0)
    unknown_fraction: float = Field(0.02, ge=0.0, lt=1.0, description="Share of rows relabelled to the unknown id")
    seed: int = Field(0, ge=0)
    emb_widths: List[int] = Field(default_factory=lambda: [256, 128, 64])
    fc_widths: List[int] = Field(default_factory=lambda: [256, 128, 64, 32, 2])
    embedding_dim: int = Field(16, ge=1, description="Width of each categorical lookup table")
    transform: Literal["log", "level"] = Field("log", description="Scale of price and sales fed to the demand head")
    own_history_inputs: bool = Field(
        False, description="Feed the product's own trailing price, sales and competitor aggregates to the network"
    )
    warm_start: bool = Field(True, description="Start the demand head at the pooled within-product regression")

    @field_validator("emb_widths")
    @classmethod
    def _emb_shape(cls, value: List[int]) -> List[int]:
        if len(value) != 3 or value[-1] != 64:
            raise ValueError("F_emb needs three dense layers ending at width 64")
        return value

    @field_validator("fc_widths")
    @classmethod
    def _fc_shape(cls, value: List[int]) -> List[int]:
        if len(value) != 5 or value[-1] != 2:
            raise ValueError("F_FC needs five dense layers ending at width 2")
        return value


class EconometricConfig(BaseModel):
    """Spatial-competition regression configuration."""
    degree: int = Field(3, ge=0, description="Polynomial degree of the distance weighting")
    k: int = Field(12, ge=1, description="Product-space dimensions kept by the factorization")
    log1p_zero_sales: bool = Field(True, description="Use ln(q+1) when a product has zero-sale days")


class OptimizerConfig(BaseModel):
    """Multi-start pricing solver configuration."""
    n_starts: int = Field(32, ge=1)
    max_iter: int = Field(500, ge=1)
    penalty_rounds: int = Field(10, ge=1)
    tolerance: float = Field(1e-10, gt=0.0)


class ExperimentSpec(BaseModel):
    """Estimator comparison experiment."""
    epsilons: List[float] = Field(default_factory=lambda: [0.01, 0.025, 0.1], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    market: MarketConfig = Field(default_factory=MarketConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    features: FeatureConfig = Field(default_factory=FeatureConfig)
    econometric: EconometricConfig = Field(default_factory=EconometricConfig)
    bins: int = Field(30, ge=1)
    out_dir: Path = Path("runs")


# Demand Models
class DemandTheta(BaseModel):
    """Linear demand parameters D(P) = alpha + beta * P."""
    alpha: float = Field(..., description="Intercept in quantity units")
    beta: float = Field(..., description="Slope in quantity per currency unit")

    @field_validator("alpha", "beta")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("demand parameters must be finite")
        return value


# Pricing Models
class ProductPricing(BaseModel):
    """One product of a pricing problem."""
    product_id: int
    alpha: float
    beta: float
    cost: float = Field(..., ge=0.0)
    margin_lb: float = Field(0.0, ge=0.0, lt=1.0)
    margin_ub: float = Field(0.99, ge=0.0, lt=1.0)
    price_cap: float | None = Field(None, gt=0.0)

    @model_validator(mode="after")
    def _check_box(self) -> "ProductPricing":
        if self.margin_lb > self.margin_ub:
            raise ValueError("margin_lb must not exceed margin_ub")
        return self

    @property
    def theta(self) -> DemandTheta:
        return DemandTheta(alpha=self.alpha, beta=self.beta)


class PricingProblem(BaseModel):
    """Revenue maximization under overall and per-product margin constraints."""
    products: List[ProductPricing] = Field(..., min_length=1)
    margin_target: float | None = Field(None, lt=1.0, description="Overall margin floor; None disables it")
    price_floor: float = Field(1e-6, gt=0.0)


class PricingSolution(BaseModel):
    """Best solution found across starts."""
    prices: List[float]
    revenue: float
    overall_margin: float | None
    product_margins: List[float]
    feasible: bool
    winning_start: int | None = None
    binding_constraint: str | None = None


# Report Models
class ComparisonRow(BaseModel):
    """One per (epsilon, seed, method, product) estimate."""
    epsilon: float
    seed: int
    method: Literal["ml", "ols"]
    product_id: int
    estimate: float | None
    truth: float
    squared_error: float | None
    status: str = "ok"
    error: str | None = None


class MethodSummary(BaseModel):
    """Per (epsilon, method) aggregate."""
    epsilon: float
    method: Literal["ml", "ols"]
    mse: float | None
    median_mse: float | None
    negative_share: float | None
    n_estimates: int


class DescriptiveStatRow(BaseModel):
    """Mean / std / 10th / 90th percentile of one product-level statistic."""
    statistic: str
    mean: float
    std: float
    p10: float
    p90: float


class DescriptiveStatsResponse(BaseModel):
    """Descriptive statistics table."""
    n_products: int
    rows: List[DescriptiveStatRow]


class SimulateResponse(BaseModel):
    """Summary of a simulated panel."""
    n_rows: int
    n_products: int
    n_days: int
    total_sales: int
    mean_beta_true: float
    price_changes: int
    stats: List[DescriptiveStatRow]


class OlsEstimateRow(BaseModel):
    """Per-product spatial-competition regression result."""
    product_id: int
    beta_hat: float | None
    se: float | None
    r2_price: float | None
    var_lemma: float | None
    n_obs: int
    status: str = "ok"
    error: str | None = None


class OlsEstimateResponse(BaseModel):
    """Regression results for every product."""
    count: int
    negative_share: float | None
    estimates: List[OlsEstimateRow]


class EstimatesRequest(BaseModel):
    """A list of elasticity estimates."""
    estimates: List[float] = Field(..., min_length=1)


class SignShareResponse(BaseModel):
    """Fraction of strictly negative estimates."""
    count: int
    negative_share: float


class DensityRequest(BaseModel):
    """Elasticity estimates grouped by method."""
    estimates: dict[str, List[float]]
    bins: int = Field(30, ge=1)


class DensityBin(BaseModel):
    """One histogram bin of one method."""
    method: str
    bin_left: float
    bin_right: float
    mass: float


class DensityResponse(BaseModel):
    """Histogram with bin edges shared by all methods."""
    bins: List[DensityBin]


# Common Models
class ErrorResponse(BaseModel):
    """Error response model."""
    detail: str
    code: str | None = None


class HealthResponse(BaseModel):
    """Health check response model."""
    status: str
    app_name: str
    version: str
    environment: str
