"""Global and simultaneous hypothesis testing for high-dimensional
logistic regression via generalized low-dimensional-projection debiasing."""

from .debias import (
    DebiasedFit,
    PipelineResult,
    ScorePack,
    debias,
    fit_and_debias,
    identity_score_pack,
    select_score_vector,
    weighted_inner,
    weighted_norm,
)
from .errors import (
    ComputeError,
    DegenerateCoordinateError,
    GenerationError,
    InvalidInputError,
    UnsupportedDimensionError,
)
from .harness import (
    ProcedureSpec,
    ScenarioConfig,
    SimulationReport,
    run_scenario,
    sweep,
)
from .model import Dataset, LinkFunction, LossState, eval_link, logistic_loss_grad
from .simgen import (
    CoefficientSpec,
    CovarianceSpec,
    DesignSpec,
    build_covariance,
    gen_coefficients,
    gen_design,
    gen_two_sample,
    substream,
)
from .solvers import (
    LassoFit,
    NodewiseFit,
    fit_logistic_lasso,
    fit_nodewise_lasso,
    lambda_path,
)
from .testing import (
    GlobalTestResult,
    MultipleTestResult,
    global_test,
    group_global_test,
    gumbel_pvalue,
    gumbel_quantile,
    lmt_fdr,
    lmt_fdv,
    normal_tail,
    normal_tail_inv,
    separation_radius,
    two_sample_global,
    two_sample_lmt,
    two_sample_stats,
)

__version__ = "0.1.0"

__all__ = [
    "CoefficientSpec",
    "ComputeError",
    "CovarianceSpec",
    "Dataset",
    "DebiasedFit",
    "DegenerateCoordinateError",
    "DesignSpec",
    "GenerationError",
    "GlobalTestResult",
    "InvalidInputError",
    "LassoFit",
    "LinkFunction",
    "LossState",
    "MultipleTestResult",
    "NodewiseFit",
    "PipelineResult",
    "ProcedureSpec",
    "ScenarioConfig",
    "ScorePack",
    "SimulationReport",
    "UnsupportedDimensionError",
    "build_covariance",
    "debias",
    "eval_link",
    "fit_and_debias",
    "fit_logistic_lasso",
    "fit_nodewise_lasso",
    "gen_coefficients",
    "gen_design",
    "gen_two_sample",
    "global_test",
    "group_global_test",
    "gumbel_pvalue",
    "gumbel_quantile",
    "identity_score_pack",
    "lambda_path",
    "lmt_fdr",
    "lmt_fdv",
    "logistic_loss_grad",
    "normal_tail",
    "normal_tail_inv",
    "run_scenario",
    "select_score_vector",
    "separation_radius",
    "substream",
    "sweep",
    "two_sample_global",
    "two_sample_lmt",
    "two_sample_stats",
    "weighted_inner",
    "weighted_norm",
]
