"""
Independent reference solutions for cross-checking the engine.

- statevector_run: noiseless closed-form circuit simulation with forced
  measurement outcomes
- analytic_decay: closed-form single-qubit relaxation and dephasing
- fixed_step_integrate: classical 4th-order Runge-Kutta integration of the
  master equation in matrix form, independent of the superoperator path
"""

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from backend.src.simulation.errors import InvalidInputError
from backend.src.simulation.noise import NoiseModel
from backend.src.simulation.qops import (
    PROJECTOR_0,
    PROJECTOR_1,
    Site,
    basis_state,
    embed_single,
    pair_projector_11,
)
from backend.src.simulation.schedule import CompiledExperiment, Segment, SegmentKind
from backend.src.simulation.engine import segment_collapse_ops, segment_hamiltonian

logger = logging.getLogger("oracle")

TRACE_DRIFT_TOL = 1e-6
MAX_STEP_NS = 1.0
FORCED_OUTCOME_TOL = 1e-12


class Provenance(enum.Enum):
    ANALYTIC = "analytic"
    STATEVECTOR = "statevector"
    FIXED_STEP = "fixed-step"


@dataclass
class OracleResult:
    """
    Reference value with the method that produced it.

    Attributes:
        value: State vector, density matrix or scalar
        provenance: Which oracle computed the value
        flagged: Set when the computation detected instability
        detail: Free-form diagnostic for flagged results
    """

    value: Union[np.ndarray, float]
    provenance: Provenance
    flagged: bool = False
    detail: str = ""


def _segment_unitary(segment: Segment) -> np.ndarray:
    if segment.kind == SegmentKind.ROTATION or segment.kind == SegmentKind.INSTANTANEOUS_UNITARY:
        u = np.eye(8, dtype=complex)
        for drive in segment.drives:
            u = drive.unitary() @ u
        return u
    if segment.kind == SegmentKind.CZ:
        return np.eye(8, dtype=complex) - 2 * pair_projector_11(segment.cz_pair)
    if segment.kind in (SegmentKind.IDLE, SegmentKind.TOMOGRAPHY):
        return np.eye(8, dtype=complex)
    raise InvalidInputError(f"no closed-form unitary for {segment.kind.value} segment")


def _project_ancilla(psi: np.ndarray, outcome: int) -> np.ndarray:
    projector = embed_single(PROJECTOR_0 if outcome == 1 else PROJECTOR_1, Site.A)
    projected = projector @ psi
    norm = np.linalg.norm(projected)
    if norm ** 2 < FORCED_OUTCOME_TOL:
        raise InvalidInputError(f"forced outcome {outcome:+d} has zero probability")
    return projected / norm


def run_statevector_segments(psi: np.ndarray, segments: Sequence[Segment],
                             outcome: Optional[int] = None) -> np.ndarray:
    """Apply ``segments`` to a pure state; ``outcome`` resolves measurement and conditional pulses."""
    for segment in segments:
        if segment.kind == SegmentKind.MEASURE_ANCILLA:
            if outcome is None:
                raise InvalidInputError("measurement segment needs a forced outcome")
            psi = _project_ancilla(psi, outcome)
        elif segment.kind == SegmentKind.CONDITIONAL_PULSE:
            if outcome is None:
                raise InvalidInputError("conditional segment needs a forced outcome")
            psi = _segment_unitary(segment.resolve(outcome)) @ psi
        else:
            psi = _segment_unitary(segment) @ psi
    return psi


def statevector_run(experiment: CompiledExperiment, outcomes: Sequence[int],
                    initial: Optional[np.ndarray] = None) -> OracleResult:
    """
    Noiseless pure-state run of a compiled experiment with forced outcomes.

    Args:
        experiment: Compiled schedule (preparation and rounds)
        outcomes: One forced parity outcome (+1 or −1) per round
        initial: Initial 8-dim state vector, |000⟩ by default

    Returns:
        OracleResult: Final state vector with provenance ``statevector``

    Raises:
        InvalidInputError: Wrong number of outcomes or a zero-probability outcome
    """
    if len(outcomes) != len(experiment.rounds):
        raise InvalidInputError(f"expected {len(experiment.rounds)} forced outcomes, got {len(outcomes)}")
    if any(o not in (1, -1) for o in outcomes):
        raise InvalidInputError("forced outcomes must be +1 or -1")
    psi = basis_state("000") if initial is None else np.asarray(initial, dtype=complex)
    psi = run_statevector_segments(psi, experiment.preparation)
    for rnd, outcome in zip(experiment.rounds, outcomes):
        psi = run_statevector_segments(psi, rnd.segments, outcome)
    return OracleResult(value=psi, provenance=Provenance.STATEVECTOR)


def ideal_pre_measurement_state(experiment: CompiledExperiment) -> OracleResult:
    """Noiseless state at the first ancilla measurement."""
    psi = run_statevector_segments(basis_state("000"), experiment.preparation)
    psi = run_statevector_segments(psi, experiment.rounds[0].pre_measurement)
    return OracleResult(value=psi, provenance=Provenance.STATEVECTOR)


def analytic_decay(t1_us: float, t2_us: float, t_us: float, rho0: np.ndarray) -> OracleResult:
    """
    Closed-form single-qubit amplitude damping plus dephasing.

    The excited population decays as e^{−t/T1} toward the ground state and
    coherences decay as e^{−t/T2}.

    Raises:
        InvalidInputError: If T2 > 2·T1 or ``rho0`` is not 2×2
    """
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (2, 2):
        raise InvalidInputError("analytic_decay works on single-qubit states")
    if t2_us > 2 * t1_us:
        raise InvalidInputError(f"T2 = {t2_us} µs exceeds 2·T1 = {2 * t1_us} µs")
    if t_us < 0:
        raise InvalidInputError("decay time must be non-negative")
    excited = rho0[1, 1].real * np.exp(-t_us / t1_us)
    coherence = rho0[0, 1] * np.exp(-t_us / t2_us)
    rho = np.array([[1 - excited, coherence], [np.conj(coherence), excited]], dtype=complex)
    return OracleResult(value=rho, provenance=Provenance.ANALYTIC)


def _lindblad_rhs(rho: np.ndarray, h: np.ndarray, c_ops: Sequence[np.ndarray]) -> np.ndarray:
    drho = -1j * (h @ rho - rho @ h)
    for c in c_ops:
        cdc = c.conj().T @ c
        drho += c @ rho @ c.conj().T - 0.5 * (cdc @ rho + rho @ cdc)
    return drho


def fixed_step_integrate(rho: np.ndarray, segment: Segment, model: NoiseModel,
                         dt_ns: float = MAX_STEP_NS) -> OracleResult:
    """
    Integrate one timed segment with classical RK4 steps of at most ``dt_ns``.

    Instantaneous segments are applied as their unitary.

    Returns:
        OracleResult: Final density matrix; ``flagged`` when the trace drifts by more than 1e-6

    Raises:
        InvalidInputError: If ``dt_ns`` is not in (0, 1] ns
    """
    if not 0 < dt_ns <= MAX_STEP_NS:
        raise InvalidInputError(f"step size must be in (0, {MAX_STEP_NS}] ns, got {dt_ns}")
    rho = np.asarray(rho, dtype=complex)
    if segment.kind == SegmentKind.INSTANTANEOUS_UNITARY:
        u = segment.unitary()
        return OracleResult(value=u @ rho @ u.conj().T, provenance=Provenance.FIXED_STEP)
    if segment.duration_ns <= 0:
        raise InvalidInputError(f"segment '{segment.label}' has nothing to integrate")

    h = segment_hamiltonian(segment, model)
    c_ops = segment_collapse_ops(segment, model)
    steps = max(1, int(np.ceil(segment.duration_ns / dt_ns - 1e-9)))
    step_us = segment.duration_us / steps
    start_trace = np.trace(rho).real
    state = rho.copy()
    for _ in range(steps):
        k1 = _lindblad_rhs(state, h, c_ops)
        k2 = _lindblad_rhs(state + 0.5 * step_us * k1, h, c_ops)
        k3 = _lindblad_rhs(state + 0.5 * step_us * k2, h, c_ops)
        k4 = _lindblad_rhs(state + step_us * k3, h, c_ops)
        state = state + (step_us / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    drift = abs(np.trace(state).real - start_trace)
    flagged = drift > TRACE_DRIFT_TOL or not np.all(np.isfinite(state))
    if flagged:
        logger.warning(f"[Oracle] Fixed-step integration of '{segment.label}' drifted by {drift:.3e}")
    return OracleResult(
        value=state,
        provenance=Provenance.FIXED_STEP,
        flagged=flagged,
        detail=f"trace drift {drift:.3e}" if flagged else "",
    )
