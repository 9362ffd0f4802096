"""Stability margins of switched linear systems ``x' = (A + Δ(t) A0) x``.

Certified lower bounds come from homogeneous polynomial Lyapunov functions
found on Kronecker-lifted systems; upper bounds come from worst-case
switching signals that drive the state onto a periodic orbit.
"""

__version__ = "0.1.0"

from .exceptions import (
    DimensionCapError,
    IntegrationError,
    InvariantSubspaceError,
    NotHurwitzError,
    SweepExhaustedError,
    SwitchMarginError,
)
from .hierarchy import (
    HierarchyLevel,
    SwitchedLinearSystem,
    SymmetricBasis,
    build_level,
    lift_operator_full,
    lift_operator_recursive,
    lift_state,
    reduce,
    reduced_lift,
    symmetric_basis,
)
from .lyapunov import (
    AlgorithmConfig,
    LMISolution,
    LowerBoundReport,
    LyapunovCertificate,
    certificate_level,
    certify_level,
    find_common_lyapunov,
    max_delta_fixed_p,
    under_approximate_margin,
    verify_certificate,
)
from .periodic import (
    MarginReport,
    PeriodicityWitness,
    find_periodic_segment,
    transition_matrix,
    upper_bound_margin,
)
from .switching import (
    ImpulseSetup,
    Indicator,
    IntegratorConfig,
    SwitchingSignal,
    Trajectory,
    find_switching_sequence,
    indicator,
    nominal_impulse,
    simulate_fixed_signal,
    worst_case_delta,
    worst_case_impulse,
)

__all__ = [
    "DimensionCapError",
    "IntegrationError",
    "InvariantSubspaceError",
    "NotHurwitzError",
    "SweepExhaustedError",
    "SwitchMarginError",
    "HierarchyLevel",
    "SwitchedLinearSystem",
    "SymmetricBasis",
    "build_level",
    "lift_operator_full",
    "lift_operator_recursive",
    "lift_state",
    "reduce",
    "reduced_lift",
    "symmetric_basis",
    "AlgorithmConfig",
    "LMISolution",
    "LowerBoundReport",
    "LyapunovCertificate",
    "certificate_level",
    "certify_level",
    "find_common_lyapunov",
    "max_delta_fixed_p",
    "under_approximate_margin",
    "verify_certificate",
    "MarginReport",
    "PeriodicityWitness",
    "find_periodic_segment",
    "transition_matrix",
    "upper_bound_margin",
    "ImpulseSetup",
    "Indicator",
    "IntegratorConfig",
    "SwitchingSignal",
    "Trajectory",
    "find_switching_sequence",
    "indicator",
    "nominal_impulse",
    "simulate_fixed_signal",
    "worst_case_delta",
    "worst_case_impulse",
]
