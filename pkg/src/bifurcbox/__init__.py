"""Branch counting, Morse classification and PDE verification of local
bifurcation at multiple Dirichlet eigenvalues of rectangles and boxes."""

from .critpoints import (
    BranchPrediction,
    CriticalPoint,
    GammaFamily,
    SearchConfig,
    SearchDiagnostics,
    brute_force_oracle,
    canonicalize,
    find_critical_points,
    find_critical_points_with_diagnostics,
    gamma_family_from_functional,
    gamma_family_solutions,
    predict_branches,
)
from .pdeverify import (
    BranchVerdict,
    ContinuationRecord,
    DiscreteProblem,
    VerifyConfig,
    build_laplacian,
    continuation_run,
    discrete_morse_index,
    geometric_schedule,
    solve_branch,
)
from .reduced import (
    QuarticTensor,
    RectCoefficients,
    ReducedFunctional,
    build_quartic_tensor,
    extract_rect_coefficients,
    sine_product_integral,
)
from .spectrum import (
    DomainSpec,
    EigenGroup,
    EigenMode,
    eigenfunction_eval,
    enumerate_groups,
    enumerate_modes,
    find_group,
    group_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "BranchPrediction",
    "BranchVerdict",
    "ContinuationRecord",
    "CriticalPoint",
    "DiscreteProblem",
    "DomainSpec",
    "EigenGroup",
    "EigenMode",
    "GammaFamily",
    "QuarticTensor",
    "RectCoefficients",
    "ReducedFunctional",
    "SearchConfig",
    "SearchDiagnostics",
    "VerifyConfig",
    "__version__",
    "brute_force_oracle",
    "build_laplacian",
    "build_quartic_tensor",
    "canonicalize",
    "continuation_run",
    "discrete_morse_index",
    "eigenfunction_eval",
    "enumerate_groups",
    "enumerate_modes",
    "extract_rect_coefficients",
    "find_critical_points",
    "find_critical_points_with_diagnostics",
    "find_group",
    "gamma_family_from_functional",
    "gamma_family_solutions",
    "geometric_schedule",
    "group_spectrum",
    "predict_branches",
    "sine_product_integral",
    "solve_branch",
]
