"""vimlab: global variable-importance measures under one pipeline —
theoretical index, estimator, statistical guarantee — with exact
small-instance oracles for checking which measures vanish on
conditionally independent features.
"""

from ._backend import NUMBA_ENABLED, backend_name
from .data import (
    CROSS_ENTROPY,
    QUADRATIC,
    Dataset,
    GaussianLinearSpec,
    Loss,
    gen_linear_pair,
    gen_poly_response,
    gen_toeplitz_gaussian,
    load_csv,
    split,
    standardize,
)
from .estimators import (
    METHODS,
    ImportanceReport,
    estimate_cfi,
    estimate_dtsi,
    estimate_glm,
    estimate_loci,
    estimate_loco,
    estimate_loco_w,
    estimate_pfi,
    estimate_sage,
    estimate_sage_vf,
    estimate_sc_sage,
    estimate_sobol_cpi,
    method_style,
    method_target,
    normalize_scores,
)
from .inference import (
    SelectionResult,
    TestResult,
    classify_features,
    sign_test,
    wilcoxon_signed_rank,
    z_test,
)
from .oracle import (
    DiscreteJoint,
    correlated_coins,
    exact_cond_mean,
    exact_pfi,
    exact_shapley,
    exact_tsi,
    exact_value_function,
    gaussian_linear_index,
)
from .predictors import (
    FittedPredictor,
    LinearFit,
    PredictorSpec,
    exact_linear,
    fit,
    glm_index,
    per_sample_loss,
    predict,
)
from .samplers import ConditionalSampler, draw, draw_complement, fit_sampler

__version__ = "0.1.0"
