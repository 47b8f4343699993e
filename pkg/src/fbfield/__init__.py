"""Fractional Brownian fields indexed by (0, 1/2] x L2(T, m).

Simulation and numerical verification toolkit for Gaussian fields whose
time-like index is an element of an L2 space and whose regularity index is
a Hurst parameter h <= 1/2: covariance kernels, Volterra representations,
exact samplers, regularity/entropy diagnostics and a fractional-noise
Poisson application.
"""

__version__ = "0.1.0"

from .errors import (AllZeroHits, CannotReachRank, DimensionMismatch,
                     EmptyBall, FbfieldError, HurstRangeError, NegativeWeight,
                     NotPSD, QuadratureError, RangeViolation, SpaceMismatch,
                     TooFewScales, TriangleViolation, UnderResolved)
from .measure import (IndexFunction, MeasureSpace, ProductDensity, RectPoint,
                      dist_sq, indicator_of_rect, inner, lebesgue_grid,
                      make_discrete_space, norm_sq, rect_measure, rect_symdiff)
from .quadrature import QuadratureSpec
from .kernels import (HurstParam, calibrate_ch, cov_fbm, cov_l2, cov_l2_pair,
                      kernel_cross_inner, log_factor, volterra_kernel,
                      volterra_kernel_grid)
from .gram import (CholeskyBasis, FieldModel, assemble_cov_matrix,
                   coeff_vector, cross_basis_matrix, default_basis,
                   dyadic_points, field_cov, orthonormalize, truncation_error)
from .sampling import (FieldSample, RegularityFunction, SeededStream,
                       factor_psd, sample_gaussian, simulate_fbf_1d,
                       simulate_fbm_exact, simulate_fbm_volterra,
                       simulate_field, simulate_mbm_1d, simulate_mbm_field)
from .regularity import (ExponentEstimate, ScalingFit, conditional_variance,
                         empirical_increment_variance,
                         estimate_local_exponent, estimate_pointwise_exponent,
                         lnd_scaling_probe, verify_h_increment_scaling)
from .entropy import (EntropyProfile, SmallBallReport, covering_number,
                      dudley_integral, entropy_profile, product_entropy_check,
                      small_ball_mc)
from .spde import (SpectralGreen, TestFunction, green_convolve,
                   mild_solution_var, mixed_second_difference,
                   noise_integrand, sample_mild_solution,
                   verify_spde_h_continuity)
