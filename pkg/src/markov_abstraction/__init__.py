"""Finite-state abstraction of continuous-state Markov processes with certified error bounds."""
from .geometry import BandMap, Box, Partition, partition_uniform, support_recursion, truncated_domain
from .kernels import (DerivativeBounds, InitialDensity, Kernel, additive_noise_kernel, gaussian_noise,
                      linear_gaussian_1d, linear_system_kernel, uniform_initial)
from .quadrature import QuadratureError, QuadratureSpec, integrate_boxes, integrate_cell
from .truncation import TruncationSchedule, kappa, truncated_propagate, truncation_error
from .projection import (DensityApprox, InterpScheme, algorithm1, algorithm2, estimate_mfh, interp_error_1d,
                         interp_error_2d, interp_error_3d, project, projection_error_recursion)
from .abstraction import (ErrorBudget, FiniteAbstraction, Pmf, build_chain_averaged, build_chain_representative,
                          density_estimate, error_bound, error_budget, initial_pmf, initial_pmf_relaxed, propagate,
                          propagate_all)
from .invariance import (InvarianceProblem, InvarianceResult, backward_invariance, compare_methods,
                         convergence_certificate, forward_invariance)
from .oracle import AnalyticLinGauss, analytic_density, mc_invariance

__version__ = "0.1.0"
