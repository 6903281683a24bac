"""Geometric phases of open quantum systems under cyclic adiabatic evolution."""

__version__ = "0.1.0"

from .adiabatic import (
    CrossoverReport,
    EvolutionResult,
    adiabatic_evolve,
    crossover_time,
    exact_evolve,
    ladder_integrate,
    max_ratio_curve,
)
from .errors import *  # noqa: F401,F403
from .geophase import (
    AbelianPhase,
    HolonomyMatrix,
    abelian_phase,
    closed_limit_phase,
    connection_matrix,
    gauge_transform,
    wilson_loop,
)
from .models import (
    DegenerateModel,
    JordanChainModel,
    SpinHalfModel,
    field_path,
    lindblad_ops,
)
from .path import ParameterPath, SmoothBlockTrack, sample_family, track_blocks
from .spectral import JordanBlockBasis, JordanDecomposition, decompose, reconstruct, verify
from .superop import (
    CoherenceVector,
    OperatorBasis,
    Superoperator,
    devectorize,
    dissipator_superop,
    hamiltonian_superop,
    make_basis,
    total_superop,
    vectorize,
)
