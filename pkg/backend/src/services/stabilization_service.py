# src/services/stabilization_service.py
import enum
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from backend.src.simulation.engine import Branch, Engine, recombine
from backend.src.simulation.errors import InvalidInputError, PropagationError
from backend.src.simulation.noise import DeviceParams, NoiseModel, stark_angles
from backend.src.simulation.qops import (
    DATA_SITES,
    IDENTITY2,
    PROJECTOR_0,
    PROJECTOR_1,
    SIGMA_X,
    SIGMA_Z,
    Site,
    basis_state,
    bell_state,
    density,
    embed_single,
    expectation,
    fidelity,
    partial_trace,
    pauli_operator,
    tensor,
)
from backend.src.simulation.schedule import (
    Basis,
    CompiledExperiment,
    Mode,
    Round,
    ScheduleOptions,
    SegmentKind,
    Timing,
    compile_experiment,
    expand_sequence,
)

logger = logging.getLogger("protocol")

FRAME_MERGE_TOL = 1e-15


class PauliFrame(enum.Enum):
    """Classical Pauli correction pending on D2."""

    I = "I"
    X = "X"
    Z = "Z"
    XZ = "XZ"

    @classmethod
    def from_bits(cls, x: bool, z: bool) -> "PauliFrame":
        return {(False, False): cls.I, (True, False): cls.X,
                (False, True): cls.Z, (True, True): cls.XZ}[(bool(x), bool(z))]

    @property
    def x(self) -> bool:
        return "X" in self.value

    @property
    def z(self) -> bool:
        return "Z" in self.value

    def compose(self, other: "PauliFrame") -> "PauliFrame":
        """Group product modulo phase."""
        return PauliFrame.from_bits(self.x ^ other.x, self.z ^ other.z)

    def with_component(self, basis: Basis, flipped: bool) -> "PauliFrame":
        """Frame after a round of ``basis`` whose outcome did (not) call for a flip."""
        if basis == Basis.ZZ:
            return PauliFrame.from_bits(flipped, self.z)
        return PauliFrame.from_bits(self.x, flipped)

    def operator(self) -> np.ndarray:
        """8×8 correction unitary acting on D2."""
        op = IDENTITY2
        if self.z:
            op = SIGMA_Z @ op
        if self.x:
            op = SIGMA_X @ op
        return embed_single(op, Site.D2)


@dataclass
class FrameEnsemble:
    """
    Probability-weighted states keyed by their pending Pauli frame.

    At most four entries exist; branches landing on the same frame are merged.
    """

    entries: Dict[PauliFrame, Branch] = field(default_factory=dict)

    @classmethod
    def single(cls, state: np.ndarray) -> "FrameEnsemble":
        return cls({PauliFrame.I: Branch(weight=1.0, state=state, frame=PauliFrame.I)})

    def add(self, branch: Branch):
        frame = branch.frame
        existing = self.entries.get(frame)
        if existing is None:
            self.entries[frame] = branch
            return
        weight = existing.weight + branch.weight
        if weight < FRAME_MERGE_TOL:
            return
        state = (existing.weight * existing.state + branch.weight * branch.state) / weight
        self.entries[frame] = Branch(weight=weight, state=state, record=existing.record, frame=frame)

    @property
    def total_weight(self) -> float:
        return sum(b.weight for b in self.entries.values())

    def corrected_state(self) -> np.ndarray:
        """Σ_f w_f · F ρ_f F†: the state the frame bookkeeping stands for."""
        corrected = []
        for frame, branch in self.entries.items():
            u = frame.operator()
            corrected.append(Branch(weight=branch.weight, state=u @ branch.state @ u.conj().T))
        return recombine(corrected)

    def frame_weights(self) -> Dict[str, float]:
        return {frame.value: self.entries[frame].weight
                for frame in PauliFrame if frame in self.entries}


@dataclass
class RoundResult:
    """
    Observables after one completed stabilization round.

    Attributes:
        index: Round number N, starting at 1
        basis: Parity measured in this round
        mode: feedback or pfu
        state: Frame-corrected unconditional 3-qubit state
        fidelity: Fidelity of the data qubits to the target Bell state
        exp_zz, exp_xx, exp_yy: Data-qubit two-body correlators
        p_plus, p_minus: Outcome probabilities of the round
        ancilla_excited: Ancilla excited population right before the reset pulse
        ensemble: Frame ensemble (pfu mode only)
    """

    index: int
    basis: Basis
    mode: Mode
    state: np.ndarray = field(repr=False)
    fidelity: float
    exp_zz: float
    exp_xx: float
    exp_yy: float
    p_plus: float
    p_minus: float
    ancilla_excited: float
    ensemble: Optional[FrameEnsemble] = field(default=None, repr=False)

    @property
    def data_state(self) -> np.ndarray:
        return partial_trace(self.state, DATA_SITES)

    def as_row(self) -> Dict[str, object]:
        return {
            "N": self.index,
            "basis": self.basis.value,
            "mode": self.mode.value,
            "fidelity": self.fidelity,
            "exp_zz": self.exp_zz,
            "exp_xx": self.exp_xx,
            "exp_yy": self.exp_yy,
            "p_plus": self.p_plus,
            "ancilla_excited": self.ancilla_excited,
        }


@dataclass
class ConditionedStates:
    """Data-qubit states conditioned on the ancilla outcome at the measurement."""

    p_even: float
    rho_even: Optional[np.ndarray]
    p_odd: float
    rho_odd: Optional[np.ndarray]


def data_observables(data_state: np.ndarray, target: str) -> Dict[str, float]:
    """Fidelity to ``target`` and the ZZ, XX, YY correlators of a two-qubit state."""
    return {
        "fidelity": fidelity(data_state, bell_state(target)),
        "exp_zz": expectation(data_state, pauli_operator("ZZ")),
        "exp_xx": expectation(data_state, pauli_operator("XX")),
        "exp_yy": expectation(data_state, pauli_operator("YY")),
    }


def mixed_data_state() -> np.ndarray:
    """I/4 on the data qubits with the ancilla in |0⟩."""
    return tensor(IDENTITY2 / 2, PROJECTOR_0, IDENTITY2 / 2)


class ParityStabilizationService:
    """
    Runs repeated ZZ/XX parity stabilization of the two data qubits.

    Feedback mode applies the conditional data correction in hardware and
    recombines both measurement branches after every round. Pauli frame
    update mode only resets the ancilla and tracks the pending D2 correction
    classically in a FrameEnsemble.
    """

    def __init__(self, params: Optional[DeviceParams] = None, timing: Optional[Timing] = None,
                 target: str = "phi_plus", noiseless: bool = False,
                 model: Optional[NoiseModel] = None):
        """
        Initialize the stabilization service.

        Args:
            params: Device parameters; the measured device defaults when omitted
            timing: Pulse durations of one cycle
            target: Bell state to stabilize ("phi_plus" or "psi_plus")
            noiseless: Drop decoherence, residual ZZ and readout errors
            model: Explicit noise model, overriding the one built from ``params``
        """
        self.params = (params or DeviceParams.default()).validate()
        self.timing = (timing or Timing()).validate()
        self.target = target
        self.noiseless = noiseless
        if model is not None:
            self.model = model
        elif noiseless:
            self.model = NoiseModel.noiseless()
        else:
            self.model = NoiseModel.from_params(self.params)
        if noiseless:
            self.options = ScheduleOptions(target=target)
        else:
            stark, virtual_z = stark_angles(self.params)
            self.options = ScheduleOptions(
                target=target,
                stark_rad=tuple(float(a) for a in stark),
                virtual_z_rad=tuple(float(a) for a in virtual_z),
            )
        self.engine = Engine(self.model)

    def compile(self, sequence: Sequence, mode) -> CompiledExperiment:
        return compile_experiment(sequence, mode, self.timing, self.options)

    def prepare(self, experiment: CompiledExperiment, initial_state: str = "prepared") -> np.ndarray:
        """
        Initial 3-qubit state before the first round.

        "prepared" propagates |000⟩ through the preparation pulses; "mixed"
        starts from fully mixed data qubits without preparation.
        """
        if initial_state == "mixed":
            return mixed_data_state()
        if initial_state != "prepared":
            raise InvalidInputError(f"unknown initial state '{initial_state}'")
        rho = density(basis_state("000"))
        try:
            return self.engine.run_segments(rho, experiment.preparation)
        except PropagationError as e:
            raise e.with_context(round_index=0)

    def pre_measurement_state(self, basis=Basis.ZZ, initial_state: str = "prepared") -> np.ndarray:
        """3-qubit state at the first ancilla measurement of a ``basis`` round."""
        experiment = self.compile([Basis.parse(basis)], Mode.FEEDBACK)
        rho = self.prepare(experiment, initial_state)
        try:
            return self.engine.run_segments(rho, experiment.rounds[0].pre_measurement)
        except PropagationError as e:
            raise e.with_context(round_index=1)

    def project_conditioned_states(self, state_3q: np.ndarray) -> ConditionedStates:
        """
        Data-qubit states conditioned on the ancilla POVM outcome.

        Even parity corresponds to outcome +1 (ancilla reported in |0⟩).
        """
        branches = self.engine.measure_ancilla(state_3q)
        return ConditionedStates(
            p_even=branches.p_plus,
            rho_even=None if branches.rho_plus is None else partial_trace(branches.rho_plus, DATA_SITES),
            p_odd=branches.p_minus,
            rho_odd=None if branches.rho_minus is None else partial_trace(branches.rho_minus, DATA_SITES),
        )

    @staticmethod
    def subspace_fidelities(state_3q: np.ndarray) -> Dict[str, float]:
        """
        Fidelities of the ideally projected ancilla subspaces.

        The A=|0⟩ block is compared with |Φ+⟩ and the A=|1⟩ block with |Ψ+⟩.
        """
        result = {}
        for name, projector, target in (("even", PROJECTOR_0, "phi_plus"),
                                        ("odd", PROJECTOR_1, "psi_plus")):
            p = embed_single(projector, Site.A)
            block = p @ state_3q @ p
            weight = float(np.real(np.trace(block)))
            if weight < 1e-12:
                result[name] = 0.0
                continue
            data = partial_trace(block / weight, DATA_SITES)
            result[name] = fidelity(data, bell_state(target))
        return result

    def _ancilla_excited(self, rho: np.ndarray) -> float:
        return float(np.real(np.trace(embed_single(PROJECTOR_1, Site.A) @ rho)))

    def _run_branch(self, rho: np.ndarray, rnd: Round, outcome: int) -> Tuple[np.ndarray, float]:
        """Post-measurement segments of one branch; returns state and pre-reset ancilla population."""
        excited = 0.0
        for segment in rnd.post_measurement:
            if segment.kind == SegmentKind.CONDITIONAL_PULSE:
                excited = self._ancilla_excited(rho)
                segment = segment.resolve(outcome)
            rho = self.engine.apply(rho, segment)
        return rho, excited

    def _execute_round(self, rho: np.ndarray, rnd: Round):
        rho = self.engine.run_segments(rho, rnd.pre_measurement)
        measured = self.engine.measure_ancilla(rho)
        results = []
        for outcome, weight, state in measured.outcomes():
            state, excited = self._run_branch(state, rnd, outcome)
            results.append((outcome, weight, state, excited))
        return measured, results

    def _round_result(self, index: int, rnd: Round, state: np.ndarray, p_plus: float,
                      p_minus: float, excited: float,
                      ensemble: Optional[FrameEnsemble] = None) -> RoundResult:
        observables = data_observables(partial_trace(state, DATA_SITES), self.target)
        result = RoundResult(
            index=index, basis=rnd.basis, mode=rnd.mode, state=state,
            p_plus=p_plus, p_minus=p_minus, ancilla_excited=excited,
            ensemble=ensemble, **observables,
        )
        logger.info(
            f"[Protocol] Round {index} {rnd.basis.value}/{rnd.mode.value}: "
            f"F={result.fidelity:.4f} ZZ={result.exp_zz:+.4f} XX={result.exp_xx:+.4f} "
            f"p+={p_plus:.4f}"
        )
        return result

    def run_feedback(self, sequence: Sequence, rounds: Optional[int] = None,
                     initial_state: str = "prepared") -> List[RoundResult]:
        """
        Repeated parity measurement with real-time conditional correction.

        Args:
            sequence: Basis pattern (e.g. [ZZ] or [ZZ, XX]) repeated cyclically
            rounds: Number of rounds N; defaults to the length of ``sequence``
            initial_state: "prepared" or "mixed"

        Returns:
            List[RoundResult]: One result per completed round
        """
        experiment = self.compile(expand_sequence(sequence, rounds or len(sequence)), Mode.FEEDBACK)
        rho = self.prepare(experiment, initial_state)
        results = []
        for index, rnd in enumerate(experiment.rounds, start=1):
            try:
                measured, branches = self._execute_round(rho, rnd)
            except PropagationError as e:
                raise e.with_context(round_index=index)
            rho = recombine([Branch(weight=w, state=s, record=(o,)) for o, w, s, _ in branches])
            excited = sum(w * x for _, w, _, x in branches)
            results.append(self._round_result(index, rnd, rho, measured.p_plus,
                                              measured.p_minus, excited))
        return results

    def run_pfu(self, sequence: Sequence, rounds: Optional[int] = None,
                initial_state: str = "prepared") -> List[RoundResult]:
        """
        Repeated parity measurement with Pauli frame updates.

        The ancilla is still reset on outcome −1. The D2 frame's X component
        follows the last ZZ outcome and its Z component the last XX outcome.
        """
        experiment = self.compile(expand_sequence(sequence, rounds or len(sequence)), Mode.PFU)
        ensemble = FrameEnsemble.single(self.prepare(experiment, initial_state))
        results = []
        for index, rnd in enumerate(experiment.rounds, start=1):
            next_ensemble = FrameEnsemble()
            p_plus = p_minus = excited = 0.0
            for frame, branch in ensemble.entries.items():
                try:
                    measured, branches = self._execute_round(branch.state, rnd)
                except PropagationError as e:
                    raise e.with_context(round_index=index)
                p_plus += branch.weight * measured.p_plus
                p_minus += branch.weight * measured.p_minus
                for outcome, weight, state, x in branches:
                    new_frame = frame.with_component(rnd.basis, self._flip_requested(rnd.basis, outcome))
                    next_ensemble.add(Branch(weight=branch.weight * weight, state=state,
                                             record=branch.record + (outcome,), frame=new_frame))
                    excited += branch.weight * weight * x
            ensemble = next_ensemble
            logger.debug(f"[Protocol] Frame weights after round {index}: {ensemble.frame_weights()}")
            results.append(self._round_result(index, rnd, ensemble.corrected_state(),
                                              p_plus, p_minus, excited, ensemble))
        return results

    def _flip_requested(self, basis: Basis, outcome: int) -> bool:
        if basis == Basis.ZZ and self.target == "psi_plus":
            return outcome == 1
        return outcome == -1

    def run(self, sequence: Sequence, mode, rounds: Optional[int] = None,
            initial_state: str = "prepared") -> List[RoundResult]:
        mode = Mode.parse(mode)
        if rounds is not None and rounds < 1:
            raise InvalidInputError(f"number of rounds must be >= 1, got {rounds}")
        if mode == Mode.FEEDBACK:
            return self.run_feedback(sequence, rounds, initial_state)
        return self.run_pfu(sequence, rounds, initial_state)


def run_feedback(sequence: Sequence, params: Optional[DeviceParams] = None,
                 rounds: Optional[int] = None, **kwargs) -> List[RoundResult]:
    """Feedback-mode run with a fresh service; ``kwargs`` go to the service constructor."""
    return ParityStabilizationService(params, **kwargs).run_feedback(sequence, rounds)


def run_pfu(sequence: Sequence, params: Optional[DeviceParams] = None,
            rounds: Optional[int] = None, **kwargs) -> List[RoundResult]:
    """Pauli-frame-update run with a fresh service; ``kwargs`` go to the service constructor."""
    return ParityStabilizationService(params, **kwargs).run_pfu(sequence, rounds)
