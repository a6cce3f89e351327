"""Hybrid convolution-attention forecasting with GP-driven hyperparameter
search and SHAP-attention influence maps."""

from .series import (
    ScalerParams,
    SynthSpec,
    TimeSeries,
    WindowedDataset,
    apply_scaler,
    fit_scaler,
    invert_scaler,
    load_csv,
    make_windows,
    save_csv,
    split,
    synthesize,
)
from .nn import (
    ForwardTrace,
    Gradients,
    ModelConfig,
    ModelParams,
    backward,
    causal_conv1d,
    forward,
    fuse_pool,
    init_params,
    load_checkpoint,
    mha,
    relu,
    save_checkpoint,
)
from .train import (
    MetricsReport,
    RunStats,
    TrainConfig,
    adam_step,
    forecast_recursive,
    horizon_eval,
    metrics,
    mse_loss,
    persistence_forecast,
    run_stats,
    train,
)
from .bayesopt import (
    GPHyper,
    GPState,
    Observation,
    SearchSpace,
    TuneResult,
    expected_improvement,
    gp_fit,
    gp_posterior,
    propose,
    sq_exp_kernel,
    tune,
)
from .explain import (
    ExplainConfig,
    InfluenceMap,
    ShapResult,
    combine,
    explain,
    gaussian_smooth,
    mean_attention,
    sample_background,
    shap_exact,
    shap_sampled,
)

__version__ = "0.1.0"
