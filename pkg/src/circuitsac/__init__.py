"""Learned quantum-circuit construction over parameterized Hamiltonian families."""

from .env import (
    ActionTable,
    CircuitEnv,
    GaussianFeaturizer,
    HybridAction,
    RewardEngine,
    Transition,
    build_action_table,
)
from .nn import Adam, Mlp
from .pauli import (
    HamiltonianFamily,
    JSPInstance,
    PauliString,
    PauliSum,
    build_jsp_hamiltonian,
    exact_diagonalize,
    jsp_objective,
    load_family,
    parse_hamiltonian_file,
)
from .sac import (
    Actor,
    CriticPair,
    ReplayBuffer,
    SacAgent,
    TargetEntropySchedule,
    Temperatures,
    deterministic_action,
    entropies,
    polyak_update,
    sample_action,
)
from .sim import (
    Circuit,
    Gate,
    StateVector,
    apply_gate,
    circuit_depth,
    circuit_from_text,
    circuit_to_text,
    expectation,
    fidelity,
    init_state,
    preprocess_circuit,
    run_circuit,
)

__version__ = "0.1.0"
