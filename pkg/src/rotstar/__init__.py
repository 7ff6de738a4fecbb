"""rotstar: axisymmetric rotating-star equilibria of the Euler-Poisson
equations with prescribed entropy, plus the inverse pressure/rotation
construction and oracle-backed verification tools."""

from .errors import (
    ConvergenceError,
    DegenerateConstraintError,
    DegenerateSolutionError,
    DomainError,
    GridMismatchError,
    HypothesisViolationError,
    NoZeroCrossingError,
    NotSphericalError,
    RadiusNotFoundError,
    RotstarError,
    ShiftTooSmallError,
    SupportViolationError,
)
from .fields import (
    GridSpec,
    ScalarField,
    StarDomain,
    curl_theta_residual,
    div_weighted_grad,
    div_weighted_grad_wide,
    gradient_rz,
    integrate_axisym,
    read_axifield,
    write_axifield,
)
from .eos import (
    EosParams,
    RotationProfile,
    bernoulli_residual,
    derived_constants,
    pressure_from_state,
    rho_to_w,
    w_to_rho,
)
from .gravity import (
    PotentialResult,
    complete_elliptic_k,
    poisson_residual,
    potential_axisym,
)
from .lane_emden import PolytropeSolution, compare_with_field, lane_emden_solve

__version__ = "0.1.0"
