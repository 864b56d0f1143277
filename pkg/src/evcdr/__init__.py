"""Python module initialization to configure external entry points to the module."""
from evcdr.pauli import (
    PauliString,
    SystemAncillaSplit,
    multiply,
    commutes,
    split,
    is_z_type,
)
from evcdr.circuit import (
    GateOp,
    Circuit,
    lower_rzz,
)
from evcdr.statevector import (
    Statevector,
    DensityMatrix,
    PauliChannel,
    NoiseModel,
    ShotRecord,
    ShotTable,
    pauli_channel,
    depolarizing_channel,
    scale_channel,
    evolve_channel_exact,
    run_density_matrix,
    sample_shots,
    sample_trajectory,
)
from evcdr.stabilizer import (
    StabilizerTableau,
    NearCliffordState,
    apply_clifford,
    stabilizer_expectation,
    expand_non_clifford,
    near_clifford_expectation,
)
from evcdr.echo_verification import (
    EvCircuit,
    AncillaTomogram,
    EstimatorContext,
    EstimatorResult,
    PostselectionRule,
    build_ev_circuit,
    lightcone_reduce,
    postselect,
    tomograph,
    exact_tomogram,
    sampled_tomogram,
    estimate,
    estimate_depolarization_rate,
)
from evcdr.channel_analysis import (
    ChannelFactors,
    ConditionalPostselection,
    channel_factors,
    conditioned_channel_factors,
    conditional_p0,
    predicted_ancilla_state,
    predict_expectations,
)
from evcdr.cdr import (
    TrainingCircuitSpec,
    TrainingDatum,
    RegressionFit,
    round_to_clifford,
    sample_training_set,
    evaluate_training,
    bootstrap_variance,
    fit,
    evcdr_estimate,
)
from evcdr.ising import (
    SpinLattice,
    IsingModel,
    TrotterPlan,
    build_lattice,
    trotter_step,
    trotter_circuit,
    exact_magnetization,
    trotter_error,
)
from evcdr.multi_ancilla import (
    MultiAncillaPlan,
    build_circuit,
    recover_tensor,
    recover_multicontrol,
)
from evcdr.experiment import (
    ExperimentConfig,
    ResultRow,
    run_experiment,
    emit_results,
    read_results,
)
