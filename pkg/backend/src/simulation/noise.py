"""
Device noise and measurement model.

Builds, from the measured device parameters, everything the propagation
engine needs besides the control pulses:

- Lindblad collapse operators for relaxation (T1) and pure dephasing
  (from T1 and T2) on each of D1, A and D2
- the always-on residual ZZ Hamiltonian between the ancilla and each data qubit
- the ancilla POVM (minimal-disturbance measurement operators) and the
  three-qubit readout assignment matrix
- the measurement-induced Stark rotation on the data qubits and its
  virtual-Z compensation

Time is measured in µs and generators in rad/µs throughout.

Usage:
    params = DeviceParams.default()
    model = NoiseModel.from_params(params)
    c_ops = model.collapse_ops
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from backend.src.config import constants
from backend.src.simulation.errors import ConfigError, InvalidInputError
from backend.src.simulation.qops import (
    FULL_ORDER,
    SIGMA_MINUS,
    SIGMA_Z,
    Site,
    embed_single,
    pair_projector_11,
    rotation,
    tensor,
)

logger = logging.getLogger("noise")

COMPLETENESS_TOL = 1e-9


@dataclass(frozen=True)
class QubitParams:
    """Coherence and readout figures of one transmon."""

    t1_us: float
    t2_echo_us: float
    t2_ramsey_us: float
    assignment_prob: float


@dataclass(frozen=True)
class DeviceParams:
    """
    Measured sample parameters of the three-qubit device.

    Attributes:
        d1, a, d2: Per-qubit coherence and readout figures
        t2_source: "echo" or "ramsey"; selects which T2 enters the dephasing rate
        j_d1a_khz, j_d2a_khz: Residual ZZ couplings (ordinary frequency, kHz)
        p0_given_0, p1_given_0, p0_given_1, p1_given_1: Raw ancilla readout probabilities
        stark_d1_deg, stark_d2_deg: Readout-induced phase on the data qubits
        stark_compensation: Whether virtual-Z gates undo the Stark phase
        stark_overcorrection_deg: Extra virtual-Z angle beyond exact compensation
        readout_dephasing_prob: Phase-flip probability per data qubit per ancilla readout
    """

    d1: QubitParams
    a: QubitParams
    d2: QubitParams
    t2_source: str = "echo"
    j_d1a_khz: float = constants.J_D1A_KHZ
    j_d2a_khz: float = constants.J_D2A_KHZ
    p0_given_0: float = constants.READOUT_DEFAULTS["p0_given_0"]
    p1_given_0: float = constants.READOUT_DEFAULTS["p1_given_0"]
    p0_given_1: float = constants.READOUT_DEFAULTS["p0_given_1"]
    p1_given_1: float = constants.READOUT_DEFAULTS["p1_given_1"]
    stark_d1_deg: float = constants.STARK_D1_DEG
    stark_d2_deg: float = constants.STARK_D2_DEG
    stark_compensation: bool = True
    stark_overcorrection_deg: float = 0.0
    readout_dephasing_prob: float = constants.READOUT_DEPHASING_PROB

    @classmethod
    def default(cls) -> "DeviceParams":
        """Parameters of the measured device with echo T2 values."""
        qubits = {
            name: QubitParams(**values) for name, values in constants.QUBIT_DEFAULTS.items()
        }
        return cls(d1=qubits["d1"], a=qubits["a"], d2=qubits["d2"])

    def qubit(self, site) -> QubitParams:
        site = Site.parse(site)
        return {Site.D1: self.d1, Site.A: self.a, Site.D2: self.d2}[site]

    def t2_us(self, site) -> float:
        q = self.qubit(site)
        return q.t2_echo_us if self.t2_source == "echo" else q.t2_ramsey_us

    def with_overrides(self, **changes) -> "DeviceParams":
        return replace(self, **changes)

    def validate(self) -> "DeviceParams":
        """
        Check every invariant of the parameter block.

        Returns:
            DeviceParams: ``self``, for chaining

        Raises:
            ConfigError: Naming the offending dotted field
        """
        if self.t2_source not in constants.T2_SOURCES:
            raise ConfigError(
                f"device.t2_source must be one of {', '.join(constants.T2_SOURCES)}, "
                f"got '{self.t2_source}'"
            )
        for site in FULL_ORDER:
            name = site.value.lower()
            q = self.qubit(site)
            for key in ("t1_us", "t2_echo_us", "t2_ramsey_us"):
                value = getattr(q, key)
                if not value > 0:
                    raise ConfigError(f"device.{name}.{key} must be > 0, got {value}")
            if not 0.0 <= q.assignment_prob <= 1.0:
                raise ConfigError(
                    f"device.{name}.assignment_prob must be in [0, 1], got {q.assignment_prob}"
                )
            t2_key = "t2_echo_us" if self.t2_source == "echo" else "t2_ramsey_us"
            if self.t2_us(site) > 2 * q.t1_us:
                raise ConfigError(
                    f"device.{name}.{t2_key} = {self.t2_us(site)} exceeds 2*t1_us = {2 * q.t1_us}"
                )
        for key in ("p0_given_0", "p1_given_0", "p0_given_1", "p1_given_1",
                    "readout_dephasing_prob"):
            value = getattr(self, key)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"device.{key} must be in [0, 1], got {value}")
        if self.p0_given_0 + self.p1_given_0 <= 0 or self.p0_given_1 + self.p1_given_1 <= 0:
            raise ConfigError("device readout probabilities of a prepared state cannot all be 0")
        for key in ("j_d1a_khz", "j_d2a_khz"):
            if not np.isfinite(getattr(self, key)):
                raise ConfigError(f"device.{key} must be finite")
        return self


def dephasing_rate(t1_us: float, t2_us: float) -> float:
    """
    Pure-dephasing collapse rate ½(1/T2 − 1/(2T1)) in 1/µs.

    Raises:
        InvalidInputError: If T2 > 2·T1 (the rate would be negative)
    """
    rate = 0.5 * (1.0 / t2_us - 1.0 / (2.0 * t1_us))
    if rate < -1e-15:
        raise InvalidInputError(f"T2 = {t2_us} µs exceeds 2·T1 = {2 * t1_us} µs")
    return max(rate, 0.0)


def collapse_ops(params: DeviceParams) -> List[np.ndarray]:
    """
    Relaxation and dephasing collapse operators for D1, A and D2.

    Returns:
        List[np.ndarray]: Six 8×8 operators ordered (relax D1, dephase D1,
        relax A, dephase A, relax D2, dephase D2)
    """
    ops = []
    for site in FULL_ORDER:
        t1 = params.qubit(site).t1_us
        t2 = params.t2_us(site)
        ops.append(np.sqrt(1.0 / t1) * embed_single(SIGMA_MINUS, site))
        ops.append(np.sqrt(dephasing_rate(t1, t2)) * embed_single(SIGMA_Z, site))
    return ops


def residual_zz_hamiltonian(params: DeviceParams) -> np.ndarray:
    """
    Always-on ZZ generator j_D1A·|11⟩⟨11|_{D1,A} + j_D2A·|11⟩⟨11|_{A,D2}.

    The kHz figures enter directly as angular rates, j_khz·1e-3 rad/µs,
    without a 2π factor.

    Returns:
        np.ndarray: Real diagonal 8×8 matrix in rad/µs
    """
    w_d1a = params.j_d1a_khz * 1e-3
    w_d2a = params.j_d2a_khz * 1e-3
    return (w_d1a * pair_projector_11((Site.D1, Site.A))
            + w_d2a * pair_projector_11((Site.A, Site.D2)))


def _symmetric_assignment(p_correct: float) -> np.ndarray:
    return np.array([[p_correct, 1 - p_correct], [1 - p_correct, p_correct]])


def normalized_readout(params: DeviceParams) -> np.ndarray:
    """
    Ancilla assignment matrix with rows renormalized to sum to one.

    Returns:
        np.ndarray: 2×2 matrix ``m[j, i] = P(i | j)``
    """
    raw = np.array([
        [params.p0_given_0, params.p1_given_0],
        [params.p0_given_1, params.p1_given_1],
    ], dtype=float)
    if np.any(raw < 0) or np.any(raw > 1):
        raise InvalidInputError("readout probabilities must lie in [0, 1]")
    sums = raw.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise InvalidInputError("readout probabilities of a prepared state sum to zero")
    return raw / sums


@dataclass(frozen=True)
class MeasurementModel:
    """
    Ancilla POVM and readout assignment model.

    Attributes:
        m_plus: Measurement operator for outcome +1 (ancilla reported |0⟩)
        m_minus: Measurement operator for outcome −1 (ancilla reported |1⟩)
        assignment3: 8×8 row-stochastic matrix P(assigned s | prepared ζ)
        raw_probabilities: Un-normalized readout figures as configured
    """

    m_plus: np.ndarray = field(repr=False)
    m_minus: np.ndarray = field(repr=False)
    assignment3: np.ndarray = field(repr=False)
    raw_probabilities: Dict[str, float] = field(default_factory=dict)

    def completeness_error(self) -> float:
        total = self.m_plus.conj().T @ self.m_plus + self.m_minus.conj().T @ self.m_minus
        return float(np.abs(total - np.eye(total.shape[0])).max())

    def data_assignment(self) -> np.ndarray:
        """4×4 assignment matrix of D1 ⊗ D2 (ancilla marginalized out)."""
        a3 = self.assignment3.reshape(2, 2, 2, 2, 2, 2)
        # average over prepared ancilla state, sum over assigned ancilla state
        marginal = a3.sum(axis=4).mean(axis=1)
        return marginal.reshape(4, 4)

    @classmethod
    def ideal(cls) -> "MeasurementModel":
        """Projective ancilla measurement with perfect assignment."""
        return cls(
            m_plus=embed_single(np.diag([1.0, 0.0]), Site.A),
            m_minus=embed_single(np.diag([0.0, 1.0]), Site.A),
            assignment3=np.eye(8),
            raw_probabilities={"p0_given_0": 1.0, "p1_given_0": 0.0,
                               "p0_given_1": 0.0, "p1_given_1": 1.0},
        )


def build_povm(params: DeviceParams) -> MeasurementModel:
    """
    Minimal-disturbance POVM for the ancilla readout.

    M₊ = √P(0|0)|0⟩⟨0|_A + √P(0|1)|1⟩⟨1|_A and M₋ analogous with P(1|·),
    built from probabilities renormalized so that P(0|j) + P(1|j) = 1.

    Returns:
        MeasurementModel: POVM plus the three-qubit assignment matrix
    """
    readout = normalized_readout(params)
    m_plus = embed_single(np.diag(np.sqrt([readout[0, 0], readout[1, 0]])), Site.A)
    m_minus = embed_single(np.diag(np.sqrt([readout[0, 1], readout[1, 1]])), Site.A)
    assignment3 = tensor(
        _symmetric_assignment(params.d1.assignment_prob),
        readout,
        _symmetric_assignment(params.d2.assignment_prob),
    ).real
    model = MeasurementModel(
        m_plus=m_plus,
        m_minus=m_minus,
        assignment3=assignment3,
        raw_probabilities={
            "p0_given_0": params.p0_given_0,
            "p1_given_0": params.p1_given_0,
            "p0_given_1": params.p0_given_1,
            "p1_given_1": params.p1_given_1,
        },
    )
    err = model.completeness_error()
    if err > COMPLETENESS_TOL:
        raise InvalidInputError(f"POVM is not complete (deviation {err:.3e})")
    return model


def _z_phase(site: Site, angle_rad: float) -> np.ndarray:
    return embed_single(rotation("z", angle_rad), site)


def stark_angles(params: DeviceParams) -> Tuple[Tuple[float, float], Tuple[float, float]]:
    """
    Z-rotation angles (rad) on (D1, D2) for the readout Stark shift and its compensation.

    Returns:
        Tuple: ``((stark_d1, stark_d2), (virtual_z_d1, virtual_z_d2))``; the
        virtual-Z angles are zero when compensation is disabled
    """
    stark = (np.deg2rad(params.stark_d1_deg), np.deg2rad(params.stark_d2_deg))
    if not params.stark_compensation:
        return stark, (0.0, 0.0)
    extra = np.deg2rad(params.stark_overcorrection_deg)
    return stark, (-stark[0] - extra, -stark[1] - extra)


def stark_unitary(params: DeviceParams) -> np.ndarray:
    """Stark rotation e^{−iφ_D1 Z_D1/2}·e^{−iφ_D2 Z_D2/2} picked up during ancilla readout."""
    (phi_d1, phi_d2), _ = stark_angles(params)
    return _z_phase(Site.D1, phi_d1) @ _z_phase(Site.D2, phi_d2)


def stark_compensation_unitary(params: DeviceParams) -> np.ndarray:
    """
    Virtual-Z gates applied after the readout.

    Returns the exact inverse of :func:`stark_unitary` rotated further by
    ``stark_overcorrection_deg`` when compensation is enabled, identity otherwise.
    """
    _, (vz_d1, vz_d2) = stark_angles(params)
    return _z_phase(Site.D1, vz_d1) @ _z_phase(Site.D2, vz_d2)


def readout_dephasing_kraus(params: DeviceParams) -> List[List[np.ndarray]]:
    """
    Phase-flip channels on D1 and D2 caused by the ancilla readout pulse.

    Returns:
        List[List[np.ndarray]]: One Kraus set per data qubit; empty when the
        configured probability is zero
    """
    p = params.readout_dephasing_prob
    if p <= 0:
        return []
    channels = []
    for site in (Site.D1, Site.D2):
        channels.append([
            np.sqrt(1 - p) * np.eye(8, dtype=complex),
            np.sqrt(p) * embed_single(SIGMA_Z, site),
        ])
    return channels


@dataclass(frozen=True)
class NoiseModel:
    """
    Everything the engine adds on top of the control Hamiltonians.

    Attributes:
        collapse_ops: Lindblad operators active on noisy segments
        h_zz: Residual ZZ generator active on noisy segments
        measurement: Ancilla POVM and assignment model
        readout_kraus: Optional readout-induced dephasing channels
    """

    collapse_ops: Tuple[np.ndarray, ...] = field(repr=False)
    h_zz: np.ndarray = field(repr=False)
    measurement: MeasurementModel = field(repr=False)
    readout_kraus: Tuple[Tuple[np.ndarray, ...], ...] = field(default=(), repr=False)
    label: str = "device"

    @classmethod
    def from_params(cls, params: DeviceParams) -> "NoiseModel":
        params.validate()
        model = cls(
            collapse_ops=tuple(collapse_ops(params)),
            h_zz=residual_zz_hamiltonian(params),
            measurement=build_povm(params),
            readout_kraus=tuple(tuple(ch) for ch in readout_dephasing_kraus(params)),
        )
        logger.debug(
            f"[Noise] Built model: T2 source={params.t2_source}, "
            f"j_D1A={params.j_d1a_khz} kHz, j_D2A={params.j_d2a_khz} kHz"
        )
        return model

    @classmethod
    def noiseless(cls, measurement: Optional[MeasurementModel] = None) -> "NoiseModel":
        """No decoherence and no residual ZZ; ideal POVM unless one is given."""
        return cls(
            collapse_ops=(),
            h_zz=np.zeros((8, 8), dtype=complex),
            measurement=measurement or MeasurementModel.ideal(),
            label="noiseless",
        )

    def with_measurement(self, measurement: MeasurementModel) -> "NoiseModel":
        return replace(self, measurement=measurement)
