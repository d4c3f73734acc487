"""Pulse-level simulator and benchmark toolkit for Rydberg-interacting
qubit arrays.

Layers, bottom up:

- :mod:`rydsim.register`     atom positions, level schemes, blockade graphs
- :mod:`rydsim.interactions` pair-interaction channels and power laws
- :mod:`rydsim.operators`    product-space operator embedding, integrators
- :mod:`rydsim.hamiltonian`  drive schedules and many-body Hamiltonians
- :mod:`rydsim.dynamics`     states, noise models, unitary/open propagation
- :mod:`rydsim.gates`        gate protocols and process extraction
- :mod:`rydsim.metrology`    fidelity estimators and depth benchmarks
- :mod:`rydsim.sweeps`       adiabatic preparation, phases, quenches
- :mod:`rydsim.optimize`     bounded derivative-free pulse tuning
- :mod:`rydsim.config`       declarative experiment configs
- :mod:`rydsim.cli`          experiment runner (``rydsim`` command)

Conventions: hbar = 1; frequencies, rates, and energies in rad/us;
times in us; distances in um.  The drive term on an (a, b) transition
is (Omega/2) e^{i phi} |a><b| + h.c. - Delta |b><b| (detuning on the
second listed level).
"""

__version__ = "0.1.0"

from .register import (GG_R, GG_RR, GR, BlockadeGraph, LevelScheme,
                       Register, blockade_graph, build_lattice,
                       pair_geometry)
from .interactions import (PairCoupling, PairStateParams, blockade_radius,
                           coupling_table, exchange_coefficient,
                           pair_interaction, pair_state_hamiltonian,
                           vdw_coefficient)
from .operators import independent_set_basis, rng_stream
from .hamiltonian import (DriveSegment, ManyBodyModel, PulseSchedule,
                          ScheduleStep, effective_two_photon,
                          ising_hamiltonian, phase_boundaries,
                          pxp_hamiltonian)
from .dynamics import NoiseModel, QuantumState, propagate, sample_measurements
from .gates import (GateProtocol, GateReport, build_protocol, coupling_for,
                    equivalent_up_to_phases, extract_process, ideal_gate,
                    population_trace)
from .metrology import (DepthEstimate, bell_fidelity_estimate, bell_overlap,
                        dsquare, echo_contrast, ghz_fidelity_bound,
                        parity_scan, rabi_damping_time,
                        truth_table_fidelity)
from .sweeps import (CorrelationMap, GroundState, QuenchResult, RampSchedule,
                     SweepResult, adiabatic_sweep, classical_minimum,
                     correlation_map, detuning_scan, ground_state,
                     order_parameter, pattern_probability, perfect_patterns,
                     quench_dynamics)
from .optimize import (OptimizationProblem, OptimizationResult,
                       gate_objective, minimize, scan, sweep_objective)
from .config import (ConfigError, ExperimentConfig, config_hash,
                     load_config, parse_config, serialize_config)

__all__ = [
    "__version__",
    # register
    "Register", "LevelScheme", "BlockadeGraph", "GR", "GG_R", "GG_RR",
    "build_lattice", "blockade_graph", "pair_geometry",
    # interactions
    "PairCoupling", "PairStateParams", "pair_state_hamiltonian",
    "vdw_coefficient", "exchange_coefficient", "pair_interaction",
    "coupling_table", "blockade_radius",
    # operators
    "independent_set_basis", "rng_stream",
    # hamiltonian
    "DriveSegment", "ScheduleStep", "PulseSchedule", "ManyBodyModel",
    "ising_hamiltonian", "pxp_hamiltonian", "phase_boundaries",
    "effective_two_photon",
    # dynamics
    "QuantumState", "NoiseModel", "propagate", "sample_measurements",
    # gates
    "GateProtocol", "GateReport", "build_protocol", "extract_process",
    "ideal_gate", "coupling_for", "equivalent_up_to_phases",
    "population_trace",
    # metrology
    "parity_scan", "bell_fidelity_estimate", "bell_overlap",
    "truth_table_fidelity", "ghz_fidelity_bound", "dsquare",
    "DepthEstimate", "rabi_damping_time", "echo_contrast",
    # sweeps
    "RampSchedule", "CorrelationMap", "GroundState", "SweepResult",
    "QuenchResult", "adiabatic_sweep", "ground_state", "classical_minimum",
    "correlation_map", "detuning_scan", "order_parameter",
    "pattern_probability", "perfect_patterns", "phase_boundaries",
    "quench_dynamics",
    # optimize
    "OptimizationProblem", "OptimizationResult", "minimize", "scan",
    "gate_objective", "sweep_objective",
    # config
    "ExperimentConfig", "ConfigError", "parse_config", "load_config",
    "serialize_config", "config_hash",
]
