"""
Configuration module for simulation, estimation, pricing and application settings.
"""
import logging
from pathlib import Path

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from demandbench.models import (
    EconometricConfig,
    ExperimentSpec,
    FeatureConfig,
    MarketConfig,
    OptimizerConfig,
    TrainConfig,
)


LOG_FORMAT = "%(asctime)s %(levelname)s [%(name)s] %(message)s"


class Settings(BaseSettings):
    """Application settings loaded from environment variables or a key=value file."""

    model_config = SettingsConfigDict(
        env_prefix="DEMANDBENCH_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Application Configuration
    app_name: str = "Demand Bench"
    app_version: str = "0.1.0"
    environment: str = "development"
    log_level: str = "INFO"

    # Market simulation (desk scale; the full benchmark runs 100000 consumers x 1000 days)
    market_n_products: int = 25
    market_n_sig_features: int = 6
    market_n_ima_features: int = 4
    market_n_consumers: int = 10_000
    market_n_days: int = 500
    market_epsilon: float = 0.01
    market_price_shock_sd: float = 0.05
    market_seed: int = 0
    market_beta_low: float = -4.5
    market_beta_high: float = -1.0
    market_delta_low: float = -1.0
    market_delta_high: float = 1.0
    market_initial_price_low: float = 0.5
    market_initial_price_high: float = 1.5
    market_competitor_enabled: bool = True
    market_competitor_noise_sd: float = 0.05

    # Structural network training
    train_batch_size: int = 128
    train_epochs: int = 5
    train_base_lr: float = 1e-3
    train_dropout: float = 0.1
    train_validation_fraction: float = 0.1
    train_bn_momentum: float = 0.1
    train_unknown_fraction: float = 0.02
    train_seed: int = 0
    train_emb_widths: list[int] = [256, 128, 64]
    train_fc_widths: list[int] = [256, 128, 64, 32, 2]
    train_embedding_dim: int = 16
    train_transform: str = "log"
    train_own_history_inputs: bool = False
    train_warm_start: bool = True

    # Feature pipeline
    feature_window: int = 28
    feature_ewma_lambda: float = 0.9
    feature_deviation_threshold: float = 0.05
    feature_deviation_mode: str = "panel_mean"
    feature_origin_weekday: int = 0
    feature_apply_filter: bool = False

    # Spatial-competition regression
    ols_degree: int = 3
    ols_k: int = 12
    ols_log1p_zero_sales: bool = True

    # Revenue optimizer
    optimizer_n_starts: int = 32
    optimizer_max_iter: int = 500
    optimizer_penalty_rounds: int = 10

    # Comparison experiment
    experiment_epsilons: list[float] = [0.01, 0.025, 0.1]
    experiment_seeds: list[int] = [0, 1, 2, 3, 4]
    experiment_bins: int = 30
    experiment_out_dir: Path = Path("runs")

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()

    def market_config(self, **overrides) -> MarketConfig:
        """Build the simulator config from the flat market_* settings."""
        values = dict(
            n_products=self.market_n_products,
            n_sig_features=self.market_n_sig_features,
            n_ima_features=self.market_n_ima_features,
            n_consumers=self.market_n_consumers,
            n_days=self.market_n_days,
            epsilon=self.market_epsilon,
            price_shock_sd=self.market_price_shock_sd,
            seed=self.market_seed,
            beta_range=(self.market_beta_low, self.market_beta_high),
            delta_range=(self.market_delta_low, self.market_delta_high),
            initial_price_range=(self.market_initial_price_low, self.market_initial_price_high),
            competitor_enabled=self.market_competitor_enabled,
            competitor_noise_sd=self.market_competitor_noise_sd,
        )
        values.update(overrides)
        return MarketConfig(**values)

    def train_config(self, **overrides) -> TrainConfig:
        """Build the trainer config from the flat train_* settings."""
        values = dict(
            batch_size=self.train_batch_size,
            epochs=self.train_epochs,
            base_lr=self.train_base_lr,
            dropout=self.train_dropout,
            validation_fraction=self.train_validation_fraction,
            bn_momentum=self.train_bn_momentum,
            unknown_fraction=self.train_unknown_fraction,
            seed=self.train_seed,
            emb_widths=self.train_emb_widths,
            fc_widths=self.train_fc_widths,
            embedding_dim=self.train_embedding_dim,
            transform=self.train_transform,
            own_history_inputs=self.train_own_history_inputs,
            warm_start=self.train_warm_start,
        )
        values.update(overrides)
        return TrainConfig(**values)

    def feature_config(self, **overrides) -> FeatureConfig:
        """Build the feature pipeline config from the flat feature_* settings."""
        values = dict(
            window=self.feature_window,
            ewma_lambda=self.feature_ewma_lambda,
            deviation_threshold=self.feature_deviation_threshold,
            deviation_mode=self.feature_deviation_mode,
            origin_weekday=self.feature_origin_weekday,
            apply_filter=self.feature_apply_filter,
        )
        values.update(overrides)
        return FeatureConfig(**values)

    def econometric_config(self, **overrides) -> EconometricConfig:
        """Build the regression config from the flat ols_* settings."""
        values = dict(
            degree=self.ols_degree,
            k=self.ols_k,
            log1p_zero_sales=self.ols_log1p_zero_sales,
        )
        values.update(overrides)
        return EconometricConfig(**values)

    def optimizer_config(self, **overrides) -> OptimizerConfig:
        """Build the pricing solver config from the flat optimizer_* settings."""
        values = dict(
            n_starts=self.optimizer_n_starts,
            max_iter=self.optimizer_max_iter,
            penalty_rounds=self.optimizer_penalty_rounds,
        )
        values.update(overrides)
        return OptimizerConfig(**values)

    def experiment_spec(self, **overrides) -> ExperimentSpec:
        """Build the comparison experiment from every settings group."""
        values = dict(
            epsilons=self.experiment_epsilons,
            seeds=self.experiment_seeds,
            market=self.market_config(),
            train=self.train_config(),
            features=self.feature_config(),
            econometric=self.econometric_config(),
            bins=self.experiment_bins,
            out_dir=self.experiment_out_dir,
        )
        values.update(overrides)
        return ExperimentSpec(**values)


def load_settings(path: str | Path | None = None) -> Settings:
    """
    Load settings, optionally from a flat key=value file.

    Args:
        path: Config file path; None falls back to `.env` and the environment

    Returns:
        Settings instance

    Raises:
        FileNotFoundError: If path is given but does not exist
    """
    if path is None:
        return Settings()
    if not Path(path).is_file():
        raise FileNotFoundError(f"config file {path} not found")
    return Settings(_env_file=str(path))


def configure_logging(level: str = "INFO") -> None:
    """Install a single stream handler on the root logger."""
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


# Global settings instance
settings = Settings()
