"""Reduced collocation models for affinely parametrized elliptic problems.

Two estimators share one greedy offline loop and an sklearn-style interface:
:class:`LeastSquaresRCM` solves the normal equations of the fine-grid
residual over the reduced space, :class:`EmpiricalRCM` collocates the
residual at greedily selected points. Rows of ``X`` are parameter points.
"""

__version__ = "0.1.0"

from types import ModuleType as _ModuleType

from .artifact import FORMAT_VERSION, load_model, save_model
from .config import StudyConfig, make_config, read_config_file
from .ercm import EmpiricalRCM, coarse_chebyshev_points, ercm_online_solve
from .estimator import (
    EstimatorCache,
    cache_build,
    cache_extend,
    error_bound,
    residual_norm_decomposed,
    residual_norm_direct,
)
from .exceptions import (
    ArtifactError,
    DegenerateBasisError,
    DomainError,
    IllConditionedModelError,
    InvalidOrderError,
    InvalidStabilityError,
    NumericalInconsistencyError,
    RedCollocError,
    ShapeError,
    SingularSystemError,
    SolverError,
)
from .lsrcm import LeastSquaresRCM, ls_online_matrix, ls_online_solve, weighted_gram_schmidt
from .problem import (
    AffineProblem,
    ParameterDomain,
    TruthSolution,
    build_anisotropic,
    build_diffusion,
    build_problem,
    operator_at,
    rhs_at,
    stability_constant,
    stability_table,
    truth_solve,
)
from .spectral import (
    ChebGrid1D,
    SpectralInterpolant,
    TensorGrid2D,
    cheb_coeffs_2d,
    cheb_diff,
    cheb_nodes,
    interpolate_at,
)

__all__ = [
    name
    for name, value in dict(globals()).items()
    if not name.startswith("_") and not isinstance(value, _ModuleType)
]
