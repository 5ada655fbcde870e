# src/services/experiment_service.py
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from backend.src.config.settings import ExperimentConfig
from backend.src.services.stabilization_service import ParityStabilizationService, data_observables
from backend.src.simulation.errors import InvalidInputError
from backend.src.simulation.oracle import ideal_pre_measurement_state
from backend.src.simulation.qops import bell_state, density, fidelity, pauli_operator, expectation
from backend.src.simulation.schedule import Basis, Mode, expand_sequence, format_schedule
from backend.src.simulation.tomography import (
    assigned_pauli_set,
    exact_pauli_set,
    reconstruct_from_samples,
)

logger = logging.getLogger("experiment")

FIG3A = "pre_measurement"
FIG3BC = "conditioned"
ROUNDS = "rounds"


@dataclass(frozen=True)
class Preset:
    """
    Frozen experiment definition.

    Attributes:
        name: Preset key used on the command line
        kind: pre_measurement, conditioned or rounds
        sequence: Basis pattern repeated over the rounds
        rounds: Default number of rounds
        mode: Default operation mode
        description: What the preset reproduces
    """

    name: str
    kind: str
    sequence: Tuple[str, ...] = ("ZZ",)
    rounds: int = 1
    mode: str = "feedback"
    description: str = ""


PRESETS: Dict[str, Preset] = {
    preset.name: preset for preset in (
        Preset("fig3a", FIG3A,
               description="Three-qubit state prior to the first ancilla readout"),
        Preset("fig3bc", FIG3BC,
               description="Data-qubit states conditioned on the ancilla outcome"),
        Preset("fig3d", ROUNDS, ("ZZ",), 1,
               description="One ZZ parity measurement with conditional feedback"),
        Preset("fig3e", ROUNDS, ("ZZ", "XX"), 2,
               description="One round of consecutive ZZ and XX stabilization"),
        Preset("fig4_zz", ROUNDS, ("ZZ",), 12,
               description="Repeated ZZ-only stabilization with feedback"),
        Preset("fig4_alt", ROUNDS, ("ZZ", "XX"), 12,
               description="Repeated alternating ZZ/XX stabilization with feedback"),
        Preset("fig9_zz", ROUNDS, ("ZZ",), 12, "pfu",
               description="Repeated ZZ-only stabilization with Pauli frame updates"),
        Preset("fig9_alt", ROUNDS, ("ZZ", "XX"), 12, "pfu",
               description="Repeated alternating stabilization with Pauli frame updates"),
        Preset("custom", ROUNDS, ("ZZ", "XX"), 12,
               description="Sequence, rounds and mode taken from the configuration"),
    )
}


@dataclass
class ResultRow:
    N: int
    basis: str
    mode: str
    fidelity: float
    exp_zz: float
    exp_xx: float
    exp_yy: float
    p_plus: float
    ancilla_excited: float
    pauli_set: Optional[Dict[str, float]] = None

    def values(self) -> Dict[str, Any]:
        return {
            "N": self.N, "basis": self.basis, "mode": self.mode,
            "fidelity": self.fidelity, "exp_zz": self.exp_zz, "exp_xx": self.exp_xx,
            "exp_yy": self.exp_yy, "p_plus": self.p_plus, "ancilla_excited": self.ancilla_excited,
        }


@dataclass
class ResultTable:
    """
    Output of one experiment run.

    Attributes:
        rows: One row per completed round
        extras: Preset-specific results (state characterizations, ideal references)
        config_echo: The merged configuration tree the run used
    """

    rows: List[ResultRow] = field(default_factory=list)
    extras: Dict[str, Any] = field(default_factory=dict)
    config_echo: Dict[str, Any] = field(default_factory=dict)

    def column(self, name: str) -> List[Any]:
        return [row.values()[name] for row in self.rows]


def resolve_preset(config: ExperimentConfig) -> Preset:
    """Preset with the configuration's sequence, rounds and mode overrides applied."""
    exp = config.experiment
    if exp.name not in PRESETS:
        raise InvalidInputError(f"unknown experiment '{exp.name}'")
    preset = PRESETS[exp.name]
    return Preset(
        name=preset.name,
        kind=preset.kind,
        sequence=tuple(exp.sequence) if exp.sequence else preset.sequence,
        rounds=exp.rounds if exp.rounds is not None else preset.rounds,
        mode=exp.mode or preset.mode,
        description=preset.description,
    )


class ExperimentService:
    """
    Runs one configured experiment and collects its result table.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.preset = resolve_preset(config)
        self.stabilizer = ParityStabilizationService(
            params=config.device,
            timing=config.timing,
            target=config.experiment.target,
            noiseless=config.experiment.noiseless,
        )
        self.rng = np.random.default_rng(config.analysis.seed)

    @property
    def sampled(self) -> bool:
        return self.config.analysis.shots > 0

    def schedule_listing(self) -> List[str]:
        """Segment listing with start and end times of the configured experiment."""
        if self.preset.kind == ROUNDS:
            sequence = expand_sequence(self.preset.sequence, self.preset.rounds)
        else:
            sequence = [Basis.ZZ]
        return format_schedule(self.stabilizer.compile(sequence, self.preset.mode))

    def run(self) -> ResultTable:
        logger.info(f"[Experiment] Running {self.preset.name} ({self.preset.description})")
        table = ResultTable(config_echo=self.config.to_dict())
        if self.preset.kind == FIG3A:
            table.extras = self._pre_measurement()
        elif self.preset.kind == FIG3BC:
            table.extras = self._conditioned()
        else:
            table.rows, table.extras = self._rounds()
        logger.info(f"[Experiment] {self.preset.name} finished with {len(table.rows)} rows")
        return table

    def _reconstruct(self, rho: np.ndarray, assignment: np.ndarray) -> np.ndarray:
        return reconstruct_from_samples(rho, self.config.analysis.shots, assignment, self.rng)

    def _pre_measurement(self) -> Dict[str, Any]:
        state = self.stabilizer.pre_measurement_state(Basis.ZZ, self.config.experiment.initial_state)
        ideal = ideal_pre_measurement_state(self.stabilizer.compile([Basis.ZZ], Mode.FEEDBACK)).value
        extras = {
            "fidelity_to_ideal": fidelity(state, ideal),
            "subspace_fidelities": self.stabilizer.subspace_fidelities(state),
            "pauli_set": exact_pauli_set(state).to_dict(),
            "ideal_pauli_set": exact_pauli_set(density(ideal)).to_dict(),
        }
        if self.sampled:
            measured = self._reconstruct(state, self.stabilizer.model.measurement.assignment3)
            extras["reconstructed_fidelity_to_ideal"] = fidelity(measured, ideal)
        return extras

    def _conditioned(self) -> Dict[str, Any]:
        state = self.stabilizer.pre_measurement_state(Basis.ZZ, self.config.experiment.initial_state)
        conditioned = self.stabilizer.project_conditioned_states(state)
        assignment = self.stabilizer.model.measurement.data_assignment()
        extras: Dict[str, Any] = {"subspace_fidelities": self.stabilizer.subspace_fidelities(state)}
        for name, weight, rho, target in (("even", conditioned.p_even, conditioned.rho_even, "phi_plus"),
                                          ("odd", conditioned.p_odd, conditioned.rho_odd, "psi_plus")):
            if rho is None:
                extras[name] = {"probability": 0.0}
                continue
            readout_limited = assigned_pauli_set(rho, assignment)
            branch = {
                "probability": weight,
                "fidelity": fidelity(rho, bell_state(target)),
                "exp_zz": expectation(rho, pauli_operator("ZZ")),
                "exp_xx": expectation(rho, pauli_operator("XX")),
                "readout_limited_exp_zz": readout_limited["ZZ"],
                "readout_limited_exp_xx": readout_limited["XX"],
                "pauli_set": exact_pauli_set(rho).to_dict(),
                "ideal_pauli_set": exact_pauli_set(density(bell_state(target))).to_dict(),
            }
            if self.sampled:
                branch["reconstructed_fidelity"] = fidelity(self._reconstruct(rho, assignment),
                                                            bell_state(target))
            extras[name] = branch
        return extras

    def _rounds(self) -> Tuple[List[ResultRow], Dict[str, Any]]:
        results = self.stabilizer.run(
            list(self.preset.sequence), self.preset.mode, self.preset.rounds,
            self.config.experiment.initial_state,
        )
        assignment = self.stabilizer.model.measurement.data_assignment()
        target = self.config.experiment.target
        rows = []
        exact_fidelities = []
        for result in results:
            data = result.data_state
            observables = {"fidelity": result.fidelity, "exp_zz": result.exp_zz,
                           "exp_xx": result.exp_xx, "exp_yy": result.exp_yy}
            if self.sampled:
                data = self._reconstruct(data, assignment)
                observables = data_observables(data, target)
                exact_fidelities.append(result.fidelity)
            rows.append(ResultRow(
                N=result.index,
                basis=result.basis.value,
                mode=result.mode.value,
                p_plus=result.p_plus,
                ancilla_excited=result.ancilla_excited,
                pauli_set=exact_pauli_set(data).to_dict() if self.config.analysis.pauli_sets else None,
                **observables,
            ))
        extras: Dict[str, Any] = {}
        if self.config.analysis.pauli_sets:
            extras["ideal_pauli_set"] = exact_pauli_set(density(bell_state(target))).to_dict()
        if self.sampled:
            extras["exact_fidelity"] = exact_fidelities
        if results and results[-1].ensemble is not None:
            extras["final_frame_weights"] = results[-1].ensemble.frame_weights()
        return rows, extras


def run_experiment(config: ExperimentConfig) -> ResultTable:
    """
    Run the configured preset.

    Exact mode (shots = 0) is fully deterministic; finite-shot mode draws
    from a generator seeded with ``analysis.seed``.
    """
    return ExperimentService(config).run()
