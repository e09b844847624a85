"""
Services for simulation, estimation, pricing and reporting.
"""
from demandbench.services.econometric import (
    build_regressors,
    encode_product_space,
    estimate_all,
    factorize,
    fwl_fit,
    lemma_variance,
    linearize_loglog,
    ols_fit,
    pairwise_distances,
    product_distances,
)
from demandbench.services.errors import (
    ConfigurationError,
    DegenerateVarianceError,
    DemandBenchError,
    DimensionError,
    InfeasibleProblemError,
    InputError,
    RankDeficiencyError,
    TapeMismatchError,
    UndefinedElasticityError,
)
from demandbench.services.features import build_feature_table, normalize_log
from demandbench.services.harness import (
    density_export,
    descriptive_stats,
    run_comparison,
    sign_share,
    summarize,
    write_report,
)
from demandbench.services.market_sim import simulate_panel, true_point_elasticity
from demandbench.services.ml_estimator import (
    load_model,
    predict_theta,
    product_elasticities,
    row_theta,
    save_model,
    train,
)
from demandbench.services.pricing import grid_oracle, optimize, problem_from_estimates

__all__ = [
    'build_regressors',
    'encode_product_space',
    'estimate_all',
    'factorize',
    'fwl_fit',
    'lemma_variance',
    'linearize_loglog',
    'ols_fit',
    'pairwise_distances',
    'product_distances',
    'ConfigurationError',
    'DegenerateVarianceError',
    'DemandBenchError',
    'DimensionError',
    'InfeasibleProblemError',
    'InputError',
    'RankDeficiencyError',
    'TapeMismatchError',
    'UndefinedElasticityError',
    'build_feature_table',
    'normalize_log',
    'density_export',
    'descriptive_stats',
    'run_comparison',
    'sign_share',
    'summarize',
    'write_report',
    'simulate_panel',
    'true_point_elasticity',
    'load_model',
    'predict_theta',
    'product_elasticities',
    'row_theta',
    'save_model',
    'train',
    'grid_oracle',
    'optimize',
    'problem_from_estimates',
]
