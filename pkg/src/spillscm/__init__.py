"""Synthetic control with spatial spillovers.

Estimates treatment and spillover effects from panel data with a single
treated unit by combining synthetic-control weights (horseshoe-regularized
Bayesian regression) with a spatial-autoregressive model of the control
outcomes, plus reference estimators and a Monte Carlo harness.
"""

from .baselines import ScmFit, fit_bscm, fit_standard_scm, scm_effects
from .effects import EffectDraws, EffectSummary, effect_draws, summarize
from .errors import (
    ConfigError,
    DataValidationError,
    SamplerDivergenceError,
    SingularSystemError,
    SpillScmError,
)
from .horseshoe import HorseshoeState
from .identify import (
    InvertibilityReport,
    StructuralParams,
    check_invertibility,
    counterfactual_controls,
    spillover_effects,
    standard_scm_gap,
    treatment_effect,
)
from .panel import (
    PanelData,
    PanelSchema,
    SpatialWeights,
    build_adjacency_weights,
    build_trade_weights,
    load_panel,
    row_normalize,
    save_panel,
)
from .sar_sampler import SarConfig, SarPosterior, SarState
from .simulate import MetricsReport, SimScenario, dgp_draw, planted_alpha, rook_matrix, run_monte_carlo
from .weights_sampler import ChainConfig, WeightsPosterior

__version__ = "0.1.0"
