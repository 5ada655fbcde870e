"""
Application constants module.

This module contains the default device, timing and readout values used
throughout the simulator (the measured sample parameters of the three-qubit
device), together with experiment preset names and the fixed output layout.
"""

# Application identity and config directory name
APP_NAME = "ParityStabilizer"
CONFIG_FILENAME = "config.json"

# Per-qubit coherence (µs) and multiplexed readout assignment probabilities
QUBIT_DEFAULTS = {
    "d1": {"t1_us": 19.7, "t2_echo_us": 22.4, "t2_ramsey_us": 12.5, "assignment_prob": 0.987},
    "a": {"t1_us": 13.7, "t2_echo_us": 14.5, "t2_ramsey_us": 11.7, "assignment_prob": 0.989},
    "d2": {"t1_us": 23.4, "t2_echo_us": 15.0, "t2_ramsey_us": 11.2, "assignment_prob": 0.991},
}

# Residual ZZ couplings between data qubits and the ancilla (kHz; used as kHz·1e-3 rad/µs, no 2π factor)
J_D1A_KHZ = 110.0
J_D2A_KHZ = 370.0

# Raw ancilla single-shot probabilities P(measured | prepared); the |1⟩ column sums to 100.05%
READOUT_DEFAULTS = {
    "p0_given_0": 0.994,
    "p1_given_0": 0.0054,
    "p0_given_1": 0.021,
    "p1_given_1": 0.9795,
}

# Measurement-induced Stark phases on the data qubits during ancilla readout (degrees)
STARK_D1_DEG = 33.4
STARK_D2_DEG = 33.2

# Probability of a readout-induced phase flip per data qubit (measured below 0.3%; off by default)
READOUT_DEPHASING_PROB = 0.0

# Pulse timing (ns)
SINGLE_QUBIT_GATE_NS = 50
FLUX_D1A_NS = 96
FLUX_AD2_NS = 105
BUFFER_NS = 40
READOUT_PULSE_NS = 200
# 400 ns integration + 600 ns electronic latency
FEEDBACK_DELAY_NS = 1000
CPMG_COUNT = 4

# Experiment presets
EXPERIMENTS = (
    "fig3a", "fig3bc", "fig3d", "fig3e",
    "fig4_zz", "fig4_alt", "fig9_zz", "fig9_alt", "custom",
)
MODES = ("feedback", "pfu")
BASES = ("ZZ", "XX")
TARGETS = ("phi_plus", "psi_plus")
INITIAL_STATES = ("prepared", "mixed")
T2_SOURCES = ("echo", "ramsey")
OUTPUT_FORMATS = ("csv", "json")

DEFAULT_SEED = 1234

# Fixed CSV column order
CSV_COLUMNS = (
    "N", "basis", "mode", "fidelity", "exp_zz", "exp_xx", "exp_yy", "p_plus", "ancilla_excited",
)
