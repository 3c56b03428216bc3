"""Simulator and closed-form toolkit for pulsed electron-nuclear polarisation transfer."""

from .analytic import (
    BlockadePair,
    BlockadeShift,
    DarkBrightDecomposition,
    EffectiveSpinParams,
    SideDip,
    ThreeLevelSystem,
    blockade_pair,
    blockade_rabi,
    blockade_shift,
    dark_bright,
    effective_params,
    optimal_pulse_count,
    polarisation_ceiling,
    shifted_crossing_frequency,
    side_dips,
    single_spin_polarisation,
    three_level_eigensystem,
)
from .engine import (
    DensityState,
    PolarisationTrace,
    ProtocolRun,
    ScheduleResult,
    ScheduleStage,
    asymptotic_envelope,
    initial_state,
    run_protocol,
    run_schedule,
    sweep_trace,
    write_schedule_csv,
    write_trace_csv,
)
from .errors import (
    ConvergenceCap,
    DegenerateSpins,
    DimensionMismatch,
    DimensionOverflow,
    DnpsimError,
    InvalidTau,
    NoConvergence,
    NotHermitian,
    NotIdealPulses,
    NotUnitary,
    ParseError,
    ValidationError,
    ValidityWarning,
    ZeroCoupling,
)
from .floquet import (
    AvoidedCrossing,
    FloquetSpectrum,
    compute_spectrum,
    find_crossings,
    write_spectrum_csv,
)
from .linalg import (
    EigenDecomposition,
    hermitian_eigensolve,
    is_hermitian,
    is_unitary,
    kron,
    matrix_exponential_hermitian,
    partial_trace,
    unitary_eigensolve,
)
from .protocols import (
    IDEAL,
    EventKind,
    Finite,
    FourierCoefficients,
    Ideal,
    ModulationFunctions,
    PulseEvent,
    PulseSequence,
    average_hamiltonian_numeric,
    cpmg_for_period,
    cpmg_sequence,
    free_sequence,
    modulation_functions,
    period_unitary,
    pulsepol_for_period,
    pulsepol_sequence,
    resonant_period,
    sequence_table,
)
from .spins import (
    KHZ_TO_RAD_PER_US,
    NuclearSpin,
    SpinRegister,
    build_operators,
    larmor_from_field,
    load_register,
    load_register_file,
    precession_frequency,
    static_hamiltonian,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
