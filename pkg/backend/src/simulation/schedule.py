"""
Pulse schedule compiler for the parity stabilization protocol.

Turns the gate sequence of a stabilization experiment into a time-ordered
list of piecewise-constant segments. Every segment carries a constant
control generator (or is an instantaneous unitary / marker), so the engine
can propagate it with one exponential.

A ZZ round is laid out as

    R_y^{π/2}(A) · buffer · CZ(D1,A) · buffer · buffer · CZ(A,D2) · buffer · R_y^{−π/2}(A)
    · measure(A) · Stark · virtual-Z · delay with CPMG on D1, D2 · conditional pulse

and an XX round wraps the mapping block in R_y^{∓π/2} on D1 and D2.

Usage:
    timing = Timing()
    experiment = compile_experiment([Basis.ZZ, Basis.XX], Mode.FEEDBACK, timing)
    for line in format_schedule(experiment):
        print(line)
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from backend.src.config import constants
from backend.src.simulation.errors import ConfigError, InvalidInputError
from backend.src.simulation.qops import (
    PAULIS,
    Site,
    embed,
    pair_projector_11,
    rotation,
)

logger = logging.getLogger("schedule")

NS_PER_US = 1000.0


class Basis(enum.Enum):
    """Parity operator measured by a round."""

    ZZ = "ZZ"
    XX = "XX"

    @classmethod
    def parse(cls, value) -> "Basis":
        if isinstance(value, Basis):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidInputError(f"unknown parity basis '{value}' (expected ZZ or XX)")


class Mode(enum.Enum):
    """How the parity outcome is used: real-time feedback or Pauli frame updates."""

    FEEDBACK = "feedback"
    PFU = "pfu"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InvalidInputError(f"unknown mode '{value}' (expected feedback or pfu)")


class SegmentKind(enum.Enum):
    ROTATION = "rotation"
    CZ = "cz"
    IDLE = "idle"
    INSTANTANEOUS_UNITARY = "instantaneous_unitary"
    MEASURE_ANCILLA = "measure_ancilla"
    CONDITIONAL_PULSE = "conditional_pulse"
    TOMOGRAPHY = "tomography"


@dataclass(frozen=True)
class Drive:
    """A rotation by ``angle`` (rad) about ``axis`` on one site."""

    site: Site
    axis: str
    angle: float

    def unitary(self) -> np.ndarray:
        return embed({self.site: rotation(self.axis, self.angle)})

    def describe(self) -> str:
        return f"R{self.axis}({np.rad2deg(self.angle):+.1f}°)@{self.site.value}"


@dataclass(frozen=True)
class Timing:
    """
    Pulse durations of one stabilization cycle, in ns.

    Attributes:
        single_qubit_gate_ns: Duration t_g of every microwave pulse
        flux_d1a_ns: Flux pulse t_fp of the D1–A conditional phase gate
        flux_ad2_ns: Flux pulse t_fp of the A–D2 conditional phase gate
        buffer_ns: Idle before and after each flux pulse
        readout_pulse_ns: Ancilla readout pulse length (contained in the delay)
        feedback_delay_ns: Latency t_d between measurement and conditional pulse
        cpmg_count: Number of decoupling π pulses on D1 and D2 during the delay
        ideal_cpmg_pulses: Use zero-duration decoupling pulses
    """

    single_qubit_gate_ns: int = constants.SINGLE_QUBIT_GATE_NS
    flux_d1a_ns: int = constants.FLUX_D1A_NS
    flux_ad2_ns: int = constants.FLUX_AD2_NS
    buffer_ns: int = constants.BUFFER_NS
    readout_pulse_ns: int = constants.READOUT_PULSE_NS
    feedback_delay_ns: int = constants.FEEDBACK_DELAY_NS
    cpmg_count: int = constants.CPMG_COUNT
    ideal_cpmg_pulses: bool = False

    def validate(self) -> "Timing":
        """
        Check durations and the CPMG fit.

        Raises:
            ConfigError: Naming the offending ``timing.*`` field
        """
        for key in ("single_qubit_gate_ns", "flux_d1a_ns", "flux_ad2_ns", "buffer_ns",
                    "readout_pulse_ns", "feedback_delay_ns", "cpmg_count"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise ConfigError(f"timing.{key} must be an integer, got {value!r}")
            if value < 0:
                raise ConfigError(f"timing.{key} must be >= 0, got {value}")
        if self.single_qubit_gate_ns == 0:
            raise ConfigError("timing.single_qubit_gate_ns must be > 0")
        if self.flux_d1a_ns == 0 or self.flux_ad2_ns == 0:
            raise ConfigError("timing flux pulse durations must be > 0")
        if (not self.ideal_cpmg_pulses and self.feedback_delay_ns > 0
                and self.feedback_delay_ns < self.cpmg_count * self.single_qubit_gate_ns):
            raise ConfigError(
                f"timing.feedback_delay_ns = {self.feedback_delay_ns} cannot hold "
                f"{self.cpmg_count} decoupling pulses of {self.single_qubit_gate_ns} ns"
            )
        return self


@dataclass(frozen=True)
class ScheduleOptions:
    """
    Compilation switches that do not belong to the timing block.

    Attributes:
        target: "phi_plus" or "psi_plus"; psi_plus flips D2 on even ZZ outcomes
        stark_rad: Readout Stark rotation on (D1, D2)
        virtual_z_rad: Compensating virtual-Z rotation on (D1, D2)
    """

    target: str = "phi_plus"
    stark_rad: Tuple[float, float] = (0.0, 0.0)
    virtual_z_rad: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.target not in constants.TARGETS:
            raise InvalidInputError(f"unknown target '{self.target}'")


@dataclass(frozen=True)
class Segment:
    """
    One piecewise-constant interval of the schedule.

    Attributes:
        kind: What the segment does
        duration_ns: Length in ns (0 for instantaneous unitaries and markers)
        label: Human-readable name used in schedule dumps and diagnostics
        drives: Simultaneous rotations (rotation and instantaneous segments)
        cz_pair: Sites of the conditional phase gate (cz segments)
        noise_active: Whether collapse operators and residual ZZ act during the segment
        on_plus: Drives applied after outcome +1 (conditional segments)
        on_minus: Drives applied after outcome −1 (conditional segments)
    """

    kind: SegmentKind
    duration_ns: int
    label: str = ""
    drives: Tuple[Drive, ...] = ()
    cz_pair: Optional[Tuple[Site, Site]] = None
    noise_active: bool = True
    on_plus: Tuple[Drive, ...] = ()
    on_minus: Tuple[Drive, ...] = ()

    def __post_init__(self):
        if self.duration_ns < 0:
            raise InvalidInputError(f"segment '{self.label}' has negative duration")
        timed = (SegmentKind.ROTATION, SegmentKind.CZ, SegmentKind.IDLE,
                 SegmentKind.CONDITIONAL_PULSE)
        if self.kind in timed and self.duration_ns == 0:
            raise InvalidInputError(f"{self.kind.value} segment '{self.label}' needs a duration")
        if self.kind not in timed and self.duration_ns != 0:
            raise InvalidInputError(f"{self.kind.value} segment '{self.label}' must be instantaneous")
        if self.kind == SegmentKind.CZ and self.cz_pair is None:
            raise InvalidInputError(f"cz segment '{self.label}' needs a qubit pair")

    @property
    def duration_us(self) -> float:
        return self.duration_ns / NS_PER_US

    @property
    def key(self) -> tuple:
        """Hashable identity of the generator, independent of the label."""
        return (self.kind, self.duration_ns, self.drives, self.cz_pair, self.noise_active)

    def hamiltonian(self) -> np.ndarray:
        """
        Control generator of the segment in rad/µs.

        Rotations use amplitude α_θ = θ/t so that α_θ·t = θ; a CZ segment uses
        (π/t_fp)|11⟩⟨11| on its pair; idles have no control term.
        """
        h = np.zeros((8, 8), dtype=complex)
        if self.kind == SegmentKind.ROTATION:
            for drive in self.drives:
                amplitude = drive.angle / self.duration_us
                h += amplitude * embed({drive.site: PAULIS[drive.axis.upper()] / 2})
        elif self.kind == SegmentKind.CZ:
            h += (np.pi / self.duration_us) * pair_projector_11(self.cz_pair)
        elif self.kind != SegmentKind.IDLE:
            raise InvalidInputError(f"{self.kind.value} segment has no generator")
        return h

    def unitary(self) -> np.ndarray:
        """Unitary of an instantaneous segment (product of its drives)."""
        if self.kind != SegmentKind.INSTANTANEOUS_UNITARY:
            raise InvalidInputError(f"{self.kind.value} segment is not instantaneous")
        u = np.eye(8, dtype=complex)
        for drive in self.drives:
            u = drive.unitary() @ u
        return u

    def resolve(self, outcome: int) -> "Segment":
        """
        Concrete segment a conditional pulse turns into for ``outcome``.

        Returns:
            Segment: A rotation with the outcome's drives, or an idle of the same
            length when no drive is scheduled for that outcome
        """
        if self.kind != SegmentKind.CONDITIONAL_PULSE:
            raise InvalidInputError(f"{self.kind.value} segment is not conditional")
        drives = self.on_plus if outcome == 1 else self.on_minus
        if not drives:
            return Segment(SegmentKind.IDLE, self.duration_ns, label=f"{self.label}_idle",
                           noise_active=self.noise_active)
        return Segment(SegmentKind.ROTATION, self.duration_ns, label=f"{self.label}_pulse",
                       drives=drives, noise_active=self.noise_active)

    def describe(self) -> str:
        parts = [self.kind.value, self.label]
        if self.drives:
            parts.append(" ".join(d.describe() for d in self.drives))
        if self.cz_pair:
            parts.append(f"pair={self.cz_pair[0].value}-{self.cz_pair[1].value}")
        if self.kind == SegmentKind.CONDITIONAL_PULSE:
            plus = " ".join(d.describe() for d in self.on_plus) or "idle"
            minus = " ".join(d.describe() for d in self.on_minus) or "idle"
            parts.append(f"+1: {plus} | -1: {minus}")
        return "  ".join(p for p in parts if p)


@dataclass(frozen=True)
class Round:
    """
    One parity stabilization cycle.

    Attributes:
        basis: Parity operator measured
        mode: Feedback or Pauli-frame-update operation
        segments: Ordered segments; exactly one measure_ancilla marker
    """

    basis: Basis
    mode: Mode
    segments: Tuple[Segment, ...]

    def __post_init__(self):
        markers = [s for s in self.segments if s.kind == SegmentKind.MEASURE_ANCILLA]
        if len(markers) != 1:
            raise InvalidInputError(f"a round needs exactly one measurement, found {len(markers)}")

    @property
    def duration_ns(self) -> int:
        return sum(s.duration_ns for s in self.segments)

    @property
    def measure_index(self) -> int:
        return next(i for i, s in enumerate(self.segments)
                    if s.kind == SegmentKind.MEASURE_ANCILLA)

    @property
    def pre_measurement(self) -> Tuple[Segment, ...]:
        return self.segments[:self.measure_index]

    @property
    def post_measurement(self) -> Tuple[Segment, ...]:
        return self.segments[self.measure_index + 1:]

    @property
    def correction_axis(self) -> str:
        """Lab-frame Pauli that flips D2 between the two parity subspaces."""
        return "x" if self.basis == Basis.ZZ else "z"


@dataclass(frozen=True)
class CompiledExperiment:
    """Preparation pulses, stabilization rounds and the final tomography marker."""

    preparation: Tuple[Segment, ...]
    rounds: Tuple[Round, ...]
    tomography: Segment = field(
        default_factory=lambda: Segment(SegmentKind.TOMOGRAPHY, 0, label="tomography")
    )

    def __iter__(self) -> Iterator[Round]:
        return iter(self.rounds)

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def duration_ns(self) -> int:
        return sum(s.duration_ns for s in self.preparation) + sum(r.duration_ns for r in self.rounds)


def _rotation(label: str, duration_ns: int, *drives: Drive) -> Segment:
    return Segment(SegmentKind.ROTATION, duration_ns, label=label, drives=tuple(drives))


def _idle(label: str, duration_ns: int) -> Segment:
    return Segment(SegmentKind.IDLE, duration_ns, label=label)


def compile_preparation(timing: Optional[Timing] = None) -> List[Segment]:
    """Simultaneous R_y^{π/2} on D1 and D2 as a single t_g segment."""
    timing = timing or Timing()
    return [_rotation(
        "prepare", timing.single_qubit_gate_ns,
        Drive(Site.D1, "y", np.pi / 2), Drive(Site.D2, "y", np.pi / 2),
    )]


def compile_delay(timing: Timing) -> List[Segment]:
    """
    Feedback delay with CPMG π_x pulses on D1 and D2.

    Pulse k (of n) is centred at (2k+1)/(2n) of the delay. Finite pulses last
    t_g; ideal pulses are zero-duration unitaries. A zero delay has no pulses.
    """
    t_d = timing.feedback_delay_ns
    n = timing.cpmg_count
    if t_d == 0:
        return []
    if n == 0:
        return [_idle("delay", t_d)]

    width = 0 if timing.ideal_cpmg_pulses else timing.single_qubit_gate_ns
    segments: List[Segment] = []
    cursor = 0
    for k in range(n):
        centre = t_d * (2 * k + 1) / (2 * n)
        start = int(round(centre - width / 2))
        if start > cursor:
            segments.append(_idle("delay", start - cursor))
        drives = (Drive(Site.D1, "x", np.pi), Drive(Site.D2, "x", np.pi))
        if timing.ideal_cpmg_pulses:
            segments.append(Segment(SegmentKind.INSTANTANEOUS_UNITARY, 0,
                                    label=f"cpmg_{k + 1}", drives=drives))
        else:
            segments.append(_rotation(f"cpmg_{k + 1}", width, *drives))
        cursor = start + width
    if t_d > cursor:
        segments.append(_idle("delay", t_d - cursor))
    return segments


def _conditional(basis: Basis, mode: Mode, timing: Timing, options: ScheduleOptions) -> Segment:
    reset = Drive(Site.A, "x", np.pi)
    on_plus: Tuple[Drive, ...] = ()
    on_minus: Tuple[Drive, ...] = (reset,)
    if mode == Mode.FEEDBACK:
        flip = Drive(Site.D2, "x" if basis == Basis.ZZ else "z", np.pi)
        if basis == Basis.ZZ and options.target == "psi_plus":
            on_plus = (flip,)
        else:
            on_minus = (flip, reset)
    return Segment(SegmentKind.CONDITIONAL_PULSE, timing.single_qubit_gate_ns,
                   label="conditional", on_plus=on_plus, on_minus=on_minus)


def compile_parity_round(basis, mode, timing: Optional[Timing] = None,
                         options: Optional[ScheduleOptions] = None) -> Round:
    """
    Compile one ZZ or XX parity stabilization cycle.

    Args:
        basis: Basis.ZZ or Basis.XX (or their string names)
        mode: Mode.FEEDBACK or Mode.PFU (or their string names)
        timing: Pulse durations; defaults to the measured device timing
        options: Target state and readout phase settings

    Returns:
        Round: Segments in execution order

    Raises:
        InvalidInputError: Unknown basis or mode
    """
    basis = Basis.parse(basis)
    mode = Mode.parse(mode)
    timing = (timing or Timing()).validate()
    options = options or ScheduleOptions()
    t_g = timing.single_qubit_gate_ns

    segments: List[Segment] = []
    if basis == Basis.XX:
        segments.append(_rotation("basis_in", t_g, Drive(Site.D1, "y", -np.pi / 2),
                                  Drive(Site.D2, "y", -np.pi / 2)))
    segments += [
        _rotation("map_in", t_g, Drive(Site.A, "y", np.pi / 2)),
        _idle("buffer", timing.buffer_ns) if timing.buffer_ns else None,
        Segment(SegmentKind.CZ, timing.flux_d1a_ns, label="cz_d1a", cz_pair=(Site.D1, Site.A)),
        _idle("buffer", timing.buffer_ns) if timing.buffer_ns else None,
        _idle("buffer", timing.buffer_ns) if timing.buffer_ns else None,
        Segment(SegmentKind.CZ, timing.flux_ad2_ns, label="cz_ad2", cz_pair=(Site.A, Site.D2)),
        _idle("buffer", timing.buffer_ns) if timing.buffer_ns else None,
        _rotation("map_out", t_g, Drive(Site.A, "y", -np.pi / 2)),
    ]
    segments = [s for s in segments if s is not None]
    if basis == Basis.XX:
        segments.append(_rotation("basis_out", t_g, Drive(Site.D1, "y", np.pi / 2),
                                  Drive(Site.D2, "y", np.pi / 2)))

    segments.append(Segment(SegmentKind.MEASURE_ANCILLA, 0, label="measure"))
    for label, angles in (("stark", options.stark_rad), ("virtual_z", options.virtual_z_rad)):
        drives = tuple(Drive(site, "z", float(angle))
                       for site, angle in zip((Site.D1, Site.D2), angles) if angle != 0)
        if drives:
            segments.append(Segment(SegmentKind.INSTANTANEOUS_UNITARY, 0, label=label,
                                    drives=drives))
    segments += compile_delay(timing)
    segments.append(_conditional(basis, mode, timing, options))
    return Round(basis=basis, mode=mode, segments=tuple(segments))


def compile_experiment(sequence: Sequence, mode, timing: Optional[Timing] = None,
                       options: Optional[ScheduleOptions] = None) -> CompiledExperiment:
    """
    Compile preparation followed by one round per entry of ``sequence``.

    Raises:
        InvalidInputError: If ``sequence`` is empty
    """
    if not sequence:
        raise InvalidInputError("experiment sequence must contain at least one round")
    timing = (timing or Timing()).validate()
    rounds = tuple(compile_parity_round(b, mode, timing, options) for b in sequence)
    experiment = CompiledExperiment(preparation=tuple(compile_preparation(timing)), rounds=rounds)
    logger.debug(
        f"[Schedule] Compiled {len(rounds)} rounds "
        f"({'/'.join(r.basis.value for r in rounds)}), total {experiment.duration_ns} ns"
    )
    return experiment


def expand_sequence(pattern: Iterable, rounds: int) -> List[Basis]:
    """Repeat ``pattern`` (e.g. ZZ, XX) cyclically up to ``rounds`` entries."""
    pattern = [Basis.parse(b) for b in pattern]
    if not pattern:
        raise InvalidInputError("sequence pattern must not be empty")
    if rounds < 1:
        raise InvalidInputError(f"number of rounds must be >= 1, got {rounds}")
    return [pattern[i % len(pattern)] for i in range(rounds)]


def format_schedule(experiment: CompiledExperiment) -> List[str]:
    """Human-readable listing with start and end time (ns) of every segment."""
    lines = []
    clock = 0

    def emit(segment: Segment, prefix: str):
        nonlocal clock
        start = clock
        clock += segment.duration_ns
        lines.append(f"{start:>7d} {clock:>7d}  {prefix:<10s} {segment.describe()}")

    for segment in experiment.preparation:
        emit(segment, "prep")
    for index, rnd in enumerate(experiment.rounds, start=1):
        for segment in rnd.segments:
            emit(segment, f"{rnd.basis.value}#{index}")
    emit(experiment.tomography, "final")
    return lines
