"""volterra_lab: Monte Carlo simulation and numerical certification of
one-dimensional stochastic Volterra equations

    X_t = x0(t) + int_0^t K_mu(s,t) mu(s, X_s) ds
                + int_0^t K_sigma(s,t) sigma(s, X_s) dB_s

with singular kernels and non-Lipschitz, time-inhomogeneous coefficients.

Subpackages
-----------
kernels        two-time kernels, singular quadrature, assumption certificates
coefficients   coefficients, linear-growth checks, Lipschitz mollification
engine         path simulation, coupled mollified sequences, reconstruction
martingale     generator process tests and quadratic-variation certificates
diagnostics    moment/scaling estimates and the two identity residuals
cli            configuration files, run orchestration, reproducible archives
"""

from .errors import (
    ArchiveCorrupt,
    ConfigError,
    DivergentIntegral,
    DomainError,
    GridMismatch,
    GridTooCoarse,
    GrowthViolation,
    InsufficientPaths,
    MissingDerivative,
    NonFiniteState,
    NotConvolution,
    QuadratureError,
    ReplayMismatch,
    SeedMismatch,
    SingularityError,
    VolterraError,
)
from .kernels import KernelSpec, RegularityParams, make_kernel
from .coefficients import Coefficient, make_coefficient, mollify
from .engine import (
    Ensemble,
    PathBundle,
    SimConfig,
    make_initial_curve,
    reconstruct,
    simulate,
    simulate_mollified_sequence,
)
from .martingale import TestFunction, bump_test_function, qv_test, run_battery
from .diagnostics import (
    convergence_report,
    fubini_identity_residual,
    holder_estimate,
    ibp_identity_residual,
    moment_sup,
)

__version__ = "0.1.0"
