"""Spin-j systems probed by restricted (three-observable) tomography.

A large spin prepared in a coherent state and measured only through three
unsharp sign observables produces Stokes data that a qubit model can fit
well. This package simulates that situation end to end: spin operators and
model Hamiltonians, quantum and classical dynamics, unsharp measurements,
control-pulse synthesis for the measurement gates, qubit reconstruction and
a scenario-driven command line front end (:mod:`macroqubit.experiments`).
"""

__version__ = "0.1.0"

from .spin import (
    SpinOperators,
    WindowProjection,
    as_density,
    basis_state,
    build_spin_operators,
    coherent_state,
    coherent_state_along,
    direction,
    expectation,
    fluctuation_report,
    maximally_mixed,
    mean_spin,
    project_window,
    validate_j,
    window_weight,
)
from .hamiltonians import (
    BECPreset,
    ControlPulse,
    CooperPairBoxPreset,
    PulseSegment,
    RydbergPreset,
    StaticModelParams,
    bec_hamiltonian,
    build_static_hamiltonian,
    control_hamiltonian,
    cpb_spin_hamiltonian,
    rydberg_params,
    schwinger_map,
)
from .dynamics import (
    PropagationPlan,
    Trajectory,
    classical_trajectory,
    dephasing_ensemble,
    propagate_unitary,
    quantum_mean_spin_trajectory,
    quantum_states,
    stokes_flow,
)
from .measurement import (
    MeasurementRecord,
    SensitivityFunction,
    StokesVector,
    UnsharpObservable,
    build_S3,
    default_sensitivity,
    exact_gates,
    exact_stokes,
    measure_stokes,
    rotate_observable,
    stokes_linearized,
    stokes_observables,
)
from .gates import (
    PulseAnsatz,
    RotationTarget,
    SynthesisResult,
    analytic_seed,
    classical_map,
    synthesize_gate,
    synthesize_measurement_gates,
    validate_gate_quantum,
)
from .tomography import (
    BlochModel,
    DelusionReport,
    QubitReconstruction,
    QubitReconstructor,
    StokesNormalizer,
    check_stokes_bound,
    delusion_report,
    normalize_stokes,
    reconstruct_qubit,
)
