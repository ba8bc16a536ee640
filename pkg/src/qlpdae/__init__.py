"""Quasi-linear PDAEs with convection on the unit interval.

Finite differences in space, a linearly implicit Euler step in time and its
fractional-step split, plus index and stability diagnostics and the
ion-acoustic plasma model.
"""

from .blocktri import BlockTridiagonal, SingularSystemError
from .core import (
    ARBITRARY,
    CONSISTENT,
    BoundarySpec,
    ConfigurationError,
    Dirichlet,
    Free,
    InitialSpec,
    InputError,
    PDAESystem,
    Problem,
    SourceTerm,
    SpaceGrid,
    StateField,
    TimeGrid,
    check_compatibility,
    eval_C,
    eval_C1_dir,
)
from .discretization import (
    BACKWARD,
    CENTRAL,
    FORWARD,
    UPWIND,
    DiffScheme,
    assemble_G,
    assemble_Qh,
    build_Ctilde,
    build_P,
    build_Ptilde,
    laplacian_spectrum,
)
from .index import (
    DerivativeArraySpec,
    IndexCertificate,
    lemma2_determinant,
    normalize_B,
    plasma_P_apply,
    time_index,
)
from .plasma import (
    PlasmaParams,
    build_plasma_system,
    consistent_initial_values,
    plasma_boundary_spec,
    plasma_model,
    plasma_scheme,
)
from .splitting import Trajectory, factorization_residual, integrate, partition_L, step_full, step_split
from .stability import (
    RefinementRow,
    StabilityReport,
    discrete_l2_norm,
    monitor_error_recursion,
    refinement_study,
    stability_report,
    truncation_error,
)

__version__ = "0.1.0"
