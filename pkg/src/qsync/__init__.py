"""Lindblad simulation and quantumness-of-synchronization analysis."""

from .opalg import (
    DensityMatrix,
    Operator,
    SpaceLayout,
    commutator,
    destroy,
    embed,
    expectation,
    hs_inner,
    identity,
    make_elementary,
    momentum,
    partial_trace,
    pauli,
    position,
    purity,
    tensor,
    trace_distance,
    von_neumann_entropy,
)
from .lindblad import (
    Dissipator,
    ModelSpec,
    StepSizeUnderflowError,
    Tolerances,
    Trajectory,
    TruncationError,
    dense_liouvillian,
    evolve,
    propagate_dense,
    rhs,
)
from .models import (
    AnalysisDefaults,
    CavityQubitParams,
    PRESET_NAMES,
    ReducedQubitParams,
    VdpParams,
    build_cavity_qubit,
    build_reduced_qubit,
    build_vdp,
    cavity_mode_matrix,
    moment_catalog,
    pauli_catalog,
    preset,
    preset_analysis,
)
from .syncmeter import (
    AnalysisThresholds,
    OscillationFit,
    PairVerdict,
    SyncReport,
    build_sync_report,
    classify_pair,
    degree_of_quantumness,
    fit_oscillation,
    mari_measure,
    mutual_information,
    synchronized_set,
)

__version__ = "0.1.0"
