"""Numerical toolkit for expected utilities built from a state-level vNM utility.

Assemble ``U(x) = sum_s a_s u(x0, x_s)``, exploit the block-arrow shape of its
Hessian, check smoothness, monotonicity, negative definiteness and boundary
divergence on both u and U, and compare the verdicts.
"""
__version__ = "0.1.0"

from .assembly import ExpectedUtility, RestrictedUtility, diagonal_embedding
from .blockarrow import BlockArrowHessian, NDResult, densify, is_negative_definite, quadratic_form
from .core import (
    BUILTIN_FAMILIES, Dimensions, ProbabilityWeights, VnmOracle, builtin_family, fd_oracle, make_weights,
    pack_point, unpack_point,
)
from .errors import ConfigError, DimensionError, DomainError, EUKitError, NormalizationError
from .properties import (
    CheckConfig, PropertyReport, check_all, check_boundary_divergence, check_monotonicity,
    check_negative_definiteness, check_smoothness_proxy,
)
from .quasiconcavity import (
    check_diff_strict_quasiconcavity, decompose_tangency, search_counterexample, verify_transfer_U_to_u,
)
from .theorem import brute_force_oracle, lift_witness_u_to_U, project_witness_U_to_u, verify_equivalence

__all__ = [
    "BUILTIN_FAMILIES", "BlockArrowHessian", "CheckConfig", "ConfigError", "DimensionError", "Dimensions",
    "DomainError", "EUKitError", "ExpectedUtility", "NDResult", "NormalizationError", "ProbabilityWeights",
    "PropertyReport", "RestrictedUtility", "VnmOracle", "brute_force_oracle", "builtin_family", "check_all",
    "check_boundary_divergence", "check_diff_strict_quasiconcavity", "check_monotonicity",
    "check_negative_definiteness", "check_smoothness_proxy", "decompose_tangency", "densify",
    "diagonal_embedding", "fd_oracle", "is_negative_definite", "lift_witness_u_to_U", "make_weights",
    "pack_point", "project_witness_U_to_u", "quadratic_form", "search_counterexample", "unpack_point",
    "verify_equivalence", "verify_transfer_U_to_u",
]
