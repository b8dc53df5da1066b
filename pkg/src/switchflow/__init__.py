"""Randomly switched flows on the 2-torus.

The package simulates the two-mode switching process driven by a pair of
transversal vector fields, estimates its invariant densities by Monte Carlo
(occupation measures and the two-switch embedded chain) and by fixed-point
iteration of the two-switch transfer operator, and verifies the
integration-by-parts representation of the operator's spatial gradient at
desk scale.
"""

from .errors import (ConfigError, DiffeoInversionError, EmptyInputError,
                     IntegrationFailure, SingularMatrixError)
from .fields import (ALPHA, BETA, ConjugatedField, ConstantField, TorusDiffeo,
                     TrigField, TrigSum, check_transversality,
                     eval_drive_matrix, field_from_json, field_to_json,
                     make_conjugated_field)
from .flows import (ComposedInverse, FlowResult, composed_inverse,
                    determinant_bracket, flow, inverse_flow,
                    jacobian_bounds_scan)
from .grid import DensityGrid
from .ibp import (IbpGradient, IbpKernels, build_kernels,
                  check_transfer_identity, ibp_gradient, ibp_gradient_many,
                  l1_gradient_bound, tau)
from .pairs import (conjugated_pair, constant_pair, same_sigma_pair,
                    sigma_density_grid)
from .quadrature import QuadratureRule
from .sampler import (ExponentialLaw, SwitchingConfig, TabulatedLaw,
                      Trajectory, chain_density, embedded_chain,
                      occupation_density, sample_trajectories,
                      sample_trajectory)
from .special import (GrowthReport, Roof, SpecialFlowSpec, SpecialPoint,
                      growth_report, shear_jacobian, special_step)
from .transfer import (FixedPointResult, TransferOperator, apply_Q,
                       apply_single_switch, fixed_point, smoothing_profile)

__version__ = "0.1.0"
