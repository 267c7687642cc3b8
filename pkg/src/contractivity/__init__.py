"""Contraction analysis of vector fields in l1, l2 and l-infinity norms.

Matrix measures, weak pairings, contraction certificates, fixed-point
solvers with predicted factors, flow checks and a unit-sphere instance.
"""
from .errors import (AntipodalPoints, ArityMismatch, ContractivityError, DimensionMismatch,
                     ExpressionSyntaxError, InconsistentEvidence, NotContractive,
                     PreconditionViolated, SingularWeight, UnknownIdentifier, WrongNormFamily)
from .fields import (Box, ContractionCertificate, VectorField, affine_field, certificate, certify,
                     parse_field, tanh_network)
from .linalg import NormSpec, mat_norm, matrix_measure, matrix_measure_oracle, operator_condition_number
from .pairings import WeakPairing, lumer_sup, wp_axiom_check
from .solvers import (SolverConfig, SolveTrace, Status, empirical_contraction_factor,
                      extragradient_solve, forward_solve, implicit_solve, solve)

__version__ = "0.1.0"
