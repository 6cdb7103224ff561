"""Causal mediation analysis with shape-restricted regression splines."""

from shapemed.cone_projection import (
    ConeProblem,
    ConeSolution,
    RankDeficiencyError,
    project_onto_cone,
    refit_active,
)
from shapemed.effects import (
    EffectEstimate,
    EffectQuery,
    QuadratureSpec,
    cde,
    confidence_interval,
    delta_variance,
    eval_f,
    expected_f,
    linear_baseline,
    nde,
    nie,
)
from shapemed.mediation_models import (
    Dataset,
    MediatorFit,
    OutcomeFit,
    Shape,
    ShapeSpec,
    encode_confounder_frame,
    fit_mediator,
    fit_outcome,
)
from shapemed.simulation import (
    GeneratorCoefficients,
    StudyConfig,
    StudyResult,
    gen_confounders,
    gen_dataset,
    run_study,
    true_effects,
)
from shapemed.spline_basis import (
    BasisKind,
    BasisMatrix,
    KnotSequence,
    SplineFamily,
    basis_matrix,
    cspline_eval,
    ispline_eval,
    make_knots,
    mspline_eval,
)

__all__ = [
    "BasisKind",
    "BasisMatrix",
    "ConeProblem",
    "ConeSolution",
    "Dataset",
    "EffectEstimate",
    "EffectQuery",
    "GeneratorCoefficients",
    "KnotSequence",
    "MediatorFit",
    "OutcomeFit",
    "QuadratureSpec",
    "RankDeficiencyError",
    "Shape",
    "ShapeSpec",
    "SplineFamily",
    "StudyConfig",
    "StudyResult",
    "basis_matrix",
    "cde",
    "confidence_interval",
    "cspline_eval",
    "delta_variance",
    "encode_confounder_frame",
    "eval_f",
    "expected_f",
    "fit_mediator",
    "fit_outcome",
    "gen_confounders",
    "gen_dataset",
    "ispline_eval",
    "linear_baseline",
    "make_knots",
    "mspline_eval",
    "nde",
    "nie",
    "project_onto_cone",
    "refit_active",
    "run_study",
    "true_effects",
]

__version__ = "0.1.0"
