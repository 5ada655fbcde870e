"""
Density-matrix propagation engine.

Segments are propagated with the exact exponential of their constant
Lindblad generator. Superoperators act on column-stacked density matrices,
vec(AρB) = (Bᵀ ⊗ A)·vec(ρ), and are cached per segment identity for the
lifetime of one engine (one experiment run).

Usage:
    engine = Engine(NoiseModel.from_params(DeviceParams.default()))
    rho = engine.run_segments(rho, compile_preparation())
    branches = engine.measure_ancilla(rho)
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from backend.src.simulation.errors import InvalidInputError, PropagationError
from backend.src.simulation.noise import MeasurementModel, NoiseModel
from backend.src.simulation.qops import is_unitary
from backend.src.simulation.schedule import Segment, SegmentKind

logger = logging.getLogger("engine")

TRACE_TOL = 1e-9
POSITIVITY_TOL = 1e-8
WEIGHT_TOL = 1e-9
DEGENERATE_BRANCH = 1e-12


def vec(rho: np.ndarray) -> np.ndarray:
    """Column-stack a matrix into a vector."""
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape((dim, dim), order="F")


def build_liouvillian(hamiltonian: np.ndarray, c_ops: Sequence[np.ndarray] = ()) -> np.ndarray:
    """
    Lindblad generator in the column-stacking convention.

    L = −i(I⊗H − Hᵀ⊗I) + Σ_k [c̄_k⊗c_k − ½(I⊗c_k†c_k + (c_k†c_k)ᵀ⊗I)]

    Args:
        hamiltonian: d×d Hermitian generator (rad/µs)
        c_ops: Collapse operators (√rate included, rate in 1/µs)

    Returns:
        np.ndarray: d²×d² generator
    """
    h = np.asarray(hamiltonian, dtype=complex)
    dim = h.shape[0]
    eye = np.eye(dim, dtype=complex)
    liouvillian = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for c in c_ops:
        c = np.asarray(c, dtype=complex)
        if c.shape != h.shape:
            raise InvalidInputError(f"collapse operator of shape {c.shape} does not match {h.shape}")
        cdc = c.conj().T @ c
        liouvillian += np.kron(c.conj(), c) - 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye))
    return liouvillian


def evolve(rho: np.ndarray, liouvillian: np.ndarray, t_us: float) -> np.ndarray:
    """Apply exp(L·t) to ``rho`` without caching."""
    dim = rho.shape[0]
    return unvec(expm(liouvillian * t_us) @ vec(rho), dim)


def segment_hamiltonian(segment: Segment, model: NoiseModel) -> np.ndarray:
    """Control generator of ``segment`` plus the residual ZZ term when noise is active."""
    h = segment.hamiltonian()
    if segment.noise_active:
        h = h + model.h_zz
    return h


def segment_collapse_ops(segment: Segment, model: NoiseModel) -> Tuple[np.ndarray, ...]:
    return model.collapse_ops if segment.noise_active else ()


def _symmetrize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def apply_unitary(rho: np.ndarray, unitary: np.ndarray) -> np.ndarray:
    """
    Conjugate ``rho`` by a unitary.

    Raises:
        InvalidInputError: If ``unitary`` is not unitary to 1e-10 or dimensions differ
    """
    unitary = np.asarray(unitary, dtype=complex)
    if unitary.shape != rho.shape:
        raise InvalidInputError(f"unitary of shape {unitary.shape} does not match state {rho.shape}")
    if not is_unitary(unitary):
        raise InvalidInputError("apply_unitary received a non-unitary operator")
    return unitary @ rho @ unitary.conj().T


def apply_kraus(rho: np.ndarray, kraus: Iterable[np.ndarray]) -> np.ndarray:
    return sum(k @ rho @ k.conj().T for k in kraus)


@dataclass
class MeasurementBranches:
    """
    Result of an ancilla POVM.

    Dropped branches (probability below 1e-12) carry ``None`` as their state
    and zero weight; the surviving weights sum to one.
    """

    p_plus: float
    rho_plus: Optional[np.ndarray]
    p_minus: float
    rho_minus: Optional[np.ndarray]

    def outcomes(self) -> List[Tuple[int, float, np.ndarray]]:
        """Surviving ``(outcome, probability, state)`` triples, +1 first."""
        result = []
        if self.rho_plus is not None:
            result.append((1, self.p_plus, self.rho_plus))
        if self.rho_minus is not None:
            result.append((-1, self.p_minus, self.rho_minus))
        return result


def measure_ancilla(rho: np.ndarray, measurement: MeasurementModel,
                    readout_kraus: Sequence[Sequence[np.ndarray]] = ()) -> MeasurementBranches:
    """
    Apply the ancilla POVM and return both renormalized branches.

    p± = Tr(M± ρ M±†), ρ± = M± ρ M±† / p±. Readout-induced data dephasing
    channels, if any, act on both branches.

    Raises:
        PropagationError: If neither outcome has non-negligible probability
    """
    raw = []
    for m in (measurement.m_plus, measurement.m_minus):
        branch = m @ rho @ m.conj().T
        for channel in readout_kraus:
            branch = apply_kraus(branch, channel)
        raw.append((float(np.real(np.trace(branch))), branch))

    total = raw[0][0] + raw[1][0]
    if abs(total - 1.0) > WEIGHT_TOL:
        logger.warning(f"[Engine] Measurement probabilities sum to {total:.12f}")

    kept = [(p, branch) if p >= DEGENERATE_BRANCH else (0.0, None) for p, branch in raw]
    norm = kept[0][0] + kept[1][0]
    if norm < DEGENERATE_BRANCH:
        raise PropagationError("both ancilla outcomes have vanishing probability", segment="measure")

    (p_plus, b_plus), (p_minus, b_minus) = kept
    return MeasurementBranches(
        p_plus=p_plus / norm,
        rho_plus=None if b_plus is None else _symmetrize(b_plus / p_plus),
        p_minus=p_minus / norm,
        rho_minus=None if b_minus is None else _symmetrize(b_minus / p_minus),
    )


@dataclass
class Branch:
    """
    One measurement-conditioned state with its probability.

    Attributes:
        weight: Probability of the branch
        state: Unit-trace density matrix
        record: Measurement outcomes that led to the branch
        frame: Classical Pauli frame tag (Pauli-frame-update mode only)
    """

    weight: float
    state: np.ndarray = field(repr=False)
    record: Tuple[int, ...] = ()
    frame: Optional[Hashable] = None


def recombine(branches: Sequence[Branch]) -> np.ndarray:
    """
    Unconditional state Σ_i w_i ρ_i of coexisting branches.

    Raises:
        InvalidInputError: If branches are missing, weights do not sum to one,
            or branches with different frames are merged
    """
    if not branches:
        raise InvalidInputError("recombine needs at least one branch")
    frames = {b.frame for b in branches}
    if len(frames) > 1:
        raise InvalidInputError(f"cannot recombine branches with different frames {sorted(map(str, frames))}")
    total = sum(b.weight for b in branches)
    if abs(total - 1.0) > WEIGHT_TOL:
        raise InvalidInputError(f"branch weights sum to {total:.12f}, expected 1")
    return _symmetrize(sum(b.weight * b.state for b in branches))


class Engine:
    """
    Propagates density matrices through compiled schedule segments.

    One engine serves one experiment run: it owns the noise model and the
    cache of segment superoperators.
    """

    def __init__(self, model: NoiseModel):
        self.model = model
        self._cache: Dict[tuple, np.ndarray] = {}
        self.cache_hits = 0

    def liouvillian(self, segment: Segment) -> np.ndarray:
        return build_liouvillian(segment_hamiltonian(segment, self.model),
                                 segment_collapse_ops(segment, self.model))

    def superoperator(self, segment: Segment) -> np.ndarray:
        """exp(L·t) for ``segment``, computed once per distinct segment."""
        key = segment.key
        cached = self._cache.get(key)
        if cached is not None:
            self.cache_hits += 1
            return cached
        propagator = expm(self.liouvillian(segment) * segment.duration_us)
        if not np.all(np.isfinite(propagator)):
            raise PropagationError("propagator has non-finite entries", segment=segment.label)
        self._cache[key] = propagator
        logger.debug(f"[Engine] Cached propagator for {segment.kind.value} '{segment.label}' "
                     f"({segment.duration_ns} ns), {len(self._cache)} cached")
        return propagator

    def propagate(self, rho: np.ndarray, segment: Segment) -> np.ndarray:
        """
        Evolve ``rho`` through one timed segment.

        Raises:
            InvalidInputError: For zero-duration or conditional segments
            PropagationError: If the result has non-finite entries
        """
        if segment.duration_ns <= 0:
            raise InvalidInputError(f"cannot propagate zero-duration segment '{segment.label}'")
        if segment.kind == SegmentKind.CONDITIONAL_PULSE:
            raise InvalidInputError("conditional segments must be resolved before propagation")
        dim = rho.shape[0]
        result = unvec(self.superoperator(segment) @ vec(rho), dim)
        if not np.all(np.isfinite(result)):
            raise PropagationError("state has non-finite entries", segment=segment.label)
        result = _symmetrize(result)
        drift = abs(np.real(np.trace(result) - np.trace(rho)))
        if drift > TRACE_TOL:
            logger.warning(f"[Engine] Trace drift {drift:.3e} in segment '{segment.label}'")
        return result

    def apply(self, rho: np.ndarray, segment: Segment) -> np.ndarray:
        """Apply a timed or instantaneous segment; tomography markers are no-ops."""
        if segment.kind == SegmentKind.INSTANTANEOUS_UNITARY:
            return apply_unitary(rho, segment.unitary())
        if segment.kind == SegmentKind.TOMOGRAPHY:
            return rho
        if segment.kind == SegmentKind.MEASURE_ANCILLA:
            raise InvalidInputError("measurement markers must be handled with measure_ancilla")
        return self.propagate(rho, segment)

    def run_segments(self, rho: np.ndarray, segments: Iterable[Segment]) -> np.ndarray:
        for segment in segments:
            rho = self.apply(rho, segment)
        return rho

    def measure_ancilla(self, rho: np.ndarray) -> MeasurementBranches:
        return measure_ancilla(rho, self.model.measurement, self.model.readout_kraus)

    def min_eigenvalue(self, rho: np.ndarray) -> float:
        value = float(np.linalg.eigvalsh(rho).min())
        if value < -POSITIVITY_TOL:
            logger.warning(f"[Engine] Negative eigenvalue {value:.3e}")
        return value


def propagate(rho: np.ndarray, segment: Segment, model: NoiseModel) -> np.ndarray:
    """One-off propagation through ``segment`` without a shared cache."""
    return Engine(model).propagate(rho, segment)
