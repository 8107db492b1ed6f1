"""Quantum-decision change detection: an open-system decision model, the
two-layer filtering protocol built on it, the resulting optimal stopping
problem, and Blackwell-style robustness comparisons."""

from .errors import (
    CacheMiss,
    ConfigError,
    ImpossibleAction,
    ImpossibleObservation,
    InvalidModel,
    NonConvergence,
    NumericalFailure,
    QDetectError,
    RunawayEpisode,
    UnsupportedParameter,
)
from .quantum import (
    ActionMap,
    DecisionFrame,
    PsychParams,
    SolverConfig,
    assemble_lindbladian,
    belief_matrix,
    cognitive_matrix,
    evolve,
    hamiltonian,
    maximally_mixed,
    steady_state_distribution,
    subjective_choice_matrix,
)
from .protocol import (
    ActionKernel,
    BeliefGrid,
    ChangeModel,
    DetectionCosts,
    EpisodeTrace,
    ObservationModel,
    ParameterMixture,
    build_action_kernel,
    build_mismatched_kernel,
    estimate_cost,
    private_belief_update,
    public_belief_update,
    simulate_episode,
)
from .stopping import (
    Policy,
    ValueTable,
    always_stop_policy,
    classical_value_iteration,
    evaluate_policy,
    extract_threshold,
    value_iteration,
)
from .dominance import (
    BetweennessReport,
    DominanceCertificate,
    KLBoundReport,
    ParameterRegion,
    best_transform,
    box_grid,
    convex_mixture_matrix,
    find_dominance_matrix,
    interpolation_betweenness_check,
    inverse_stochasticity_report,
    model_distance,
    region_scan,
    sensitivity_bound_check,
    stochasticity_defect,
)
from .config import ExperimentConfig, config_hash, load_config, load_config_file

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
