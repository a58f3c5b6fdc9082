"""Finite-element discretisation of SPDEs and their stationary measures.

The package covers the spectral check of Robin/Dirichlet/Neumann boundary
conditions, exact sampling of the continuum Gaussian law, finite-element
assembly, Langevin-type SDE samplers, and Monte Carlo comparison of the
discrete and continuum stationary measures in total variation.
"""

from .compare import (
    InnerBiasWarning,
    NormalizationEstimate,
    SlopeFit,
    TvEstimate,
    TvEstimator,
    estimate_logZ,
    estimate_tv_conditional,
    estimate_tv_upper,
    fit_loglog_slope,
    hat_embed,
    project,
)
from .dynamics import IntegratorConfig, SampleSet, Scheme, SdeForm, Stepper, em_step, simulate_stationary
from .errors import (
    AlignmentError,
    DegenerateWeightsError,
    DivergenceError,
    NotNegativeDefiniteError,
    SingularOperatorError,
    SpdeFemError,
    ValidationError,
)
from .exact import (
    CovarianceParams,
    PathSample,
    boundary_moments,
    brownian_bridge,
    covariance,
    log_density_mu_vs_nu,
    sample_stationary_linear,
)
from .fem import (
    FiniteElementModel,
    F_n_functional,
    GridSpec,
    check_exactness,
    discretized_drift,
    index_set,
    mass_matrix,
    sample_nu_n,
    stiffness_matrix,
)
from .potentials import Potential, potential_from_name, sin_drift, tanh_drift
from .spectrum import (
    BoundaryCase,
    BoundaryConditions,
    SpectrumReport,
    eigen_determinant,
    is_negative_definite,
    scan_nonnegative_spectrum,
)
from .tridiag import TridiagonalCholesky, TridiagonalMatrix

__version__ = "0.1.0"
