"""
State tomography: Pauli sets, finite-shot readout and physical reconstruction.

The default analysis path evaluates exact expectation values of the
simulated state. The opt-in finite-shot path mimics the experimental
pipeline: rotate into each of the 3^n measurement settings, draw counts
through the readout assignment matrix, invert the assignment, average the
compatible settings into a Pauli set and reconstruct the closest physical
density matrix.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Union

import numpy as np

from backend.src.simulation.errors import InvalidInputError
from backend.src.simulation.qops import all_pauli_labels, n_qubits, pauli_operator, tensor

logger = logging.getLogger("tomography")

STOCHASTIC_TOL = 1e-9

_HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S_DAG = np.diag([1, -1j])
# Z-basis readout after these rotations measures the named Pauli
SETTING_ROTATIONS = {
    "Z": np.eye(2, dtype=complex),
    "X": _HADAMARD,
    "Y": _HADAMARD @ _S_DAG,
}


@dataclass
class PauliSet:
    """
    Expectation values of all non-identity Pauli operators of n qubits.

    Attributes:
        values: Mapping from label (e.g. "XIZ") to expectation value
    """

    values: Dict[str, float]

    def __post_init__(self):
        if not self.values:
            raise InvalidInputError("empty Pauli set")
        lengths = {len(label) for label in self.values}
        if len(lengths) != 1:
            raise InvalidInputError("Pauli set mixes labels of different lengths")

    @property
    def n_qubits(self) -> int:
        return len(next(iter(self.values)))

    def __getitem__(self, label: str) -> float:
        return self.values[label.upper()]

    def is_complete(self) -> bool:
        return set(all_pauli_labels(self.n_qubits)).issubset(self.values)

    def to_dict(self, digits: int = 12) -> Dict[str, float]:
        """Label-ordered mapping with values rounded for stable serialization."""
        return {label: round(float(self.values[label]), digits)
                for label in all_pauli_labels(self.n_qubits) if label in self.values}


@dataclass
class ShotRecord:
    """
    Finite-shot readout counts.

    Attributes:
        counts: Per measurement setting (e.g. "XZ"), counts over the 2^n outcomes
        shots: Shots per setting
    """

    counts: Dict[str, np.ndarray] = field(default_factory=dict)
    shots: int = 0

    def frequencies(self, setting: str) -> np.ndarray:
        return self.counts[setting] / self.shots

    def merge(self, other: "ShotRecord") -> "ShotRecord":
        if self.counts and other.shots != self.shots:
            raise InvalidInputError("cannot merge shot records with different shot numbers")
        return ShotRecord(counts={**self.counts, **other.counts}, shots=other.shots)


def _check_state(rho: np.ndarray) -> int:
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidInputError(f"state must be a square matrix, got shape {rho.shape}")
    return n_qubits(rho.shape[0])


def _parity_signs(support: Iterable[int], n: int) -> np.ndarray:
    """(−1)^{Σ_{i∈support} s_i} for every outcome bit string s of n qubits."""
    support = list(support)
    signs = np.ones(2 ** n)
    for index, bits in enumerate(itertools.product((0, 1), repeat=n)):
        if sum(bits[i] for i in support) % 2:
            signs[index] = -1.0
    return signs


def _check_setting(setting: str, n: int) -> str:
    setting = setting.upper()
    if len(setting) != n or any(c not in SETTING_ROTATIONS for c in setting):
        raise InvalidInputError(f"invalid measurement setting '{setting}' for {n} qubits")
    return setting


def _check_assignment(assignment: np.ndarray, dim: int) -> np.ndarray:
    assignment = np.asarray(assignment, dtype=float)
    if assignment.shape != (dim, dim):
        raise InvalidInputError(f"assignment matrix must be {dim}x{dim}, got {assignment.shape}")
    if np.any(assignment < -STOCHASTIC_TOL) or not np.allclose(assignment.sum(axis=1), 1.0,
                                                                atol=STOCHASTIC_TOL):
        raise InvalidInputError("assignment matrix must be row-stochastic")
    return assignment


def outcome_distribution(rho: np.ndarray, setting: str) -> np.ndarray:
    """Ideal outcome probabilities of a computational-basis readout after ``setting`` rotations."""
    n = _check_state(rho)
    setting = _check_setting(setting, n)
    u = tensor(*(SETTING_ROTATIONS[c] for c in setting))
    probs = np.real(np.diag(u @ rho @ u.conj().T))
    return np.clip(probs, 0.0, None)


def exact_pauli_set(rho: np.ndarray) -> PauliSet:
    """Tr(Pρ) for every non-identity Pauli label of the state's qubit count."""
    n = _check_state(rho)
    values = {}
    for label in all_pauli_labels(n):
        value = np.trace(pauli_operator(label) @ rho)
        values[label] = float(np.clip(value.real, -1.0, 1.0))
    return PauliSet(values)


def pauli_set_from_frequencies(frequencies: Mapping[str, np.ndarray]) -> PauliSet:
    """
    Average the expectation values of every label over all compatible settings.

    Args:
        frequencies: Outcome distribution per measurement setting

    Raises:
        InvalidInputError: If some label has no compatible setting
    """
    if not frequencies:
        raise InvalidInputError("no measurement settings given")
    n = len(next(iter(frequencies)))
    sums: Dict[str, float] = {}
    hits: Dict[str, int] = {}
    for setting, freq in frequencies.items():
        setting = _check_setting(setting, n)
        freq = np.asarray(freq, dtype=float)
        for mask in itertools.product((False, True), repeat=n):
            if not any(mask):
                continue
            label = "".join(c if keep else "I" for c, keep in zip(setting, mask))
            support = [i for i, keep in enumerate(mask) if keep]
            sums[label] = sums.get(label, 0.0) + float(freq @ _parity_signs(support, n))
            hits[label] = hits.get(label, 0) + 1
    missing = [label for label in all_pauli_labels(n) if label not in hits]
    if missing:
        raise InvalidInputError(f"incomplete measurement settings: no data for {', '.join(missing[:5])}")
    return PauliSet({label: sums[label] / hits[label] for label in all_pauli_labels(n)})


def assigned_pauli_set(rho: np.ndarray, assignment: np.ndarray) -> PauliSet:
    """
    Readout-limited Pauli set: exact infinite-shot statistics seen through
    the assignment matrix, without correction.
    """
    n = _check_state(rho)
    assignment = _check_assignment(assignment, 2 ** n)
    frequencies = {
        "".join(setting): assignment.T @ outcome_distribution(rho, "".join(setting))
        for setting in itertools.product("XYZ", repeat=n)
    }
    return pauli_set_from_frequencies(frequencies)


def sample_counts(rho: np.ndarray, setting: str, shots: int, assignment: np.ndarray,
                  rng_seed: Union[int, np.random.Generator, None] = None) -> ShotRecord:
    """
    Draw readout counts for one measurement setting.

    Outcomes follow a multinomial distribution over assignmentᵀ·p, where p is
    the ideal outcome distribution in the rotated basis.

    Args:
        rho: n-qubit density matrix
        setting: One of X, Y, Z per qubit
        shots: Number of repetitions (≥ 1)
        assignment: Row-stochastic matrix P(assigned s | prepared ζ)
        rng_seed: Seed or generator; identical seeds reproduce identical counts

    Raises:
        InvalidInputError: On an invalid setting, shot number or assignment matrix
    """
    n = _check_state(rho)
    setting = _check_setting(setting, n)
    if isinstance(shots, bool) or int(shots) != shots or shots < 1:
        raise InvalidInputError(f"shots must be a positive integer, got {shots}")
    assignment = _check_assignment(assignment, 2 ** n)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    probs = assignment.T @ outcome_distribution(rho, setting)
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    counts = rng.multinomial(int(shots), probs)
    return ShotRecord(counts={setting: counts}, shots=int(shots))


def sample_tomography(rho: np.ndarray, shots: int, assignment: np.ndarray,
                      rng_seed: Union[int, np.random.Generator, None] = None) -> ShotRecord:
    """Sample all 3^n measurement settings with one seeded generator."""
    n = _check_state(rho)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    record = ShotRecord(shots=int(shots))
    for setting in itertools.product("XYZ", repeat=n):
        record = record.merge(sample_counts(rho, "".join(setting), shots, assignment, rng))
    logger.debug(f"[Tomography] Sampled {3 ** n} settings with {shots} shots each")
    return record


def correct_frequencies(frequencies: np.ndarray, assignment: np.ndarray) -> np.ndarray:
    """
    Undo readout assignment errors: solve assignmentᵀ·q = f for q.

    Raises:
        InvalidInputError: If the assignment matrix is singular
    """
    f = np.asarray(frequencies, dtype=float)
    assignment = _check_assignment(assignment, f.size)
    try:
        return np.linalg.solve(assignment.T, f)
    except np.linalg.LinAlgError:
        raise InvalidInputError("assignment matrix is singular; cannot correct readout")


def pauli_set_from_counts(record: ShotRecord, assignment: Optional[np.ndarray] = None) -> PauliSet:
    """Pauli set from sampled counts, readout-corrected when ``assignment`` is given."""
    frequencies = {}
    for setting in record.counts:
        freq = record.frequencies(setting)
        frequencies[setting] = freq if assignment is None else correct_frequencies(freq, assignment)
    return pauli_set_from_frequencies(frequencies)


def linear_inversion(pauli_set: PauliSet) -> np.ndarray:
    """ρ = (I + Σ_P ⟨P⟩·P) / 2^n; Hermitian and unit-trace but possibly not positive."""
    if not pauli_set.is_complete():
        raise InvalidInputError("linear inversion needs a complete Pauli set")
    n = pauli_set.n_qubits
    dim = 2 ** n
    rho = np.eye(dim, dtype=complex)
    for label in all_pauli_labels(n):
        rho = rho + pauli_set[label] * pauli_operator(label)
    return rho / dim


def _project_simplex(values: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {w ≥ 0, Σw = 1}."""
    u = np.sort(values)[::-1]
    css = np.cumsum(u)
    ranks = np.arange(1, len(u) + 1)
    active = np.nonzero(u - (css - 1.0) / ranks > 0)[0][-1]
    theta = (css[active] - 1.0) / (active + 1)
    return np.maximum(values - theta, 0.0)


def project_to_physical(rho: np.ndarray) -> np.ndarray:
    """Closest unit-trace positive semidefinite matrix in Frobenius norm."""
    hermitian = 0.5 * (rho + rho.conj().T)
    eigvals, eigvecs = np.linalg.eigh(hermitian)
    weights = _project_simplex(eigvals)
    return (eigvecs * weights) @ eigvecs.conj().T


def mle_reconstruct(data: Union[PauliSet, Mapping[str, np.ndarray]]) -> np.ndarray:
    """
    Most likely physical density matrix for a Pauli set or corrected frequencies.

    Linear inversion followed by projection onto the physical states.

    Args:
        data: Complete Pauli set, or outcome frequencies per measurement setting

    Raises:
        InvalidInputError: If the measurement set is incomplete
    """
    pauli_set = data if isinstance(data, PauliSet) else pauli_set_from_frequencies(data)
    if not pauli_set.is_complete():
        raise InvalidInputError("reconstruction needs a complete Pauli set")
    return project_to_physical(linear_inversion(pauli_set))


def frobenius_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b))


def reconstruct_from_samples(rho: np.ndarray, shots: int, assignment: np.ndarray,
                             rng_seed: Union[int, np.random.Generator, None] = None) -> np.ndarray:
    """Full experimental pipeline: sample, correct readout, reconstruct."""
    record = sample_tomography(rho, shots, assignment, rng_seed)
    return mle_reconstruct(pauli_set_from_counts(record, assignment))


def pauli_table(sets: Mapping[str, PauliSet]) -> List[dict]:
    """Rows of ``{"label": ..., <name>: value}`` for side-by-side Pauli sets."""
    names = list(sets)
    if not names:
        return []
    labels = all_pauli_labels(sets[names[0]].n_qubits)
    return [{"label": label, **{name: round(sets[name].values[label], 12) for name in names}}
            for label in labels]
