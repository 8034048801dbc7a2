"""Numerical certification and empirical checking of local convexity of smooth maps."""

from .errors import (BudgetError, ContractViolation, ConvexLabError, DomainError, HypothesisMissing,
                     HypothesisViolation, InternalError, MuNonpositive, NoPreimageFound, NormNotPowerType,
                     NotCoercive, UnsupportedDimension)
from .maps import SmoothMap, directional_derivative, from_ref, inverse_eval, map_eval
from .norms import (ModulusEstimate, NormSpec, SectionBudget, modulus_convexity_ball_form,
                    modulus_convexity_estimate, modulus_convexity_hilbert, norm_eval, power_type_constant)
from .regions import Ball, Box, region_from_json

__version__ = "0.1.0"
