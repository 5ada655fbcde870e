"""Tests for the pulse schedule compiler."""

import numpy as np
import pytest

from backend.src.simulation.errors import ConfigError, InvalidInputError
from backend.src.simulation.qops import Site, is_unitary
from backend.src.simulation.schedule import (
    Basis,
    Drive,
    Mode,
    ScheduleOptions,
    Segment,
    SegmentKind,
    Timing,
    compile_delay,
    compile_experiment,
    compile_parity_round,
    compile_preparation,
    expand_sequence,
    format_schedule,
)


def kinds(segments):
    return [s.kind for s in segments]


class TestPreparation:

    def test_single_simultaneous_segment(self):
        (prep,) = compile_preparation()
        assert prep.kind == SegmentKind.ROTATION
        assert prep.duration_ns == 50
        assert {d.site for d in prep.drives} == {Site.D1, Site.D2}
        assert all(d.axis == "y" and d.angle == pytest.approx(np.pi / 2) for d in prep.drives)

    def test_amplitude_times_duration_is_angle(self):
        (prep,) = compile_preparation()
        h = prep.hamiltonian()
        # Drive on D1 alone couples |000⟩ and |100⟩ with amplitude α/2
        alpha = 2 * abs(h[0, 4])
        assert alpha * prep.duration_us == pytest.approx(np.pi / 2)


class TestParityRound:

    def test_zz_round_layout(self, timing):
        rnd = compile_parity_round(Basis.ZZ, Mode.FEEDBACK, timing)
        pre = rnd.pre_measurement
        assert [s.label for s in pre] == [
            "map_in", "buffer", "cz_d1a", "buffer", "buffer", "cz_ad2", "buffer", "map_out",
        ]
        assert [s.duration_ns for s in pre] == [50, 40, 96, 40, 40, 105, 40, 50]
        assert pre[2].cz_pair == (Site.D1, Site.A)
        assert pre[5].cz_pair == (Site.A, Site.D2)
        assert rnd.segments[-1].kind == SegmentKind.CONDITIONAL_PULSE

    def test_zz_round_duration_close_to_cycle_time(self, timing):
        rnd = compile_parity_round("ZZ", "feedback", timing)
        assert rnd.duration_ns == 1511
        assert abs(rnd.duration_ns - 1510) <= 150
        assert rnd.duration_ns == sum(s.duration_ns for s in rnd.segments)

    def test_xx_round_wraps_basis_change(self, timing):
        rnd = compile_parity_round("XX", "feedback", timing)
        pre = rnd.pre_measurement
        assert pre[0].label == "basis_in" and pre[-1].label == "basis_out"
        assert all(d.axis == "y" and d.angle < 0 for d in pre[0].drives)
        assert all(d.axis == "y" and d.angle > 0 for d in pre[-1].drives)
        assert rnd.duration_ns == 1611

    def test_exactly_one_measurement(self, timing):
        rnd = compile_parity_round("ZZ", "pfu", timing)
        assert kinds(rnd.segments).count(SegmentKind.MEASURE_ANCILLA) == 1

    @pytest.mark.parametrize(
        "basis, mode, target, plus, minus",
        [
            ("ZZ", "feedback", "phi_plus", set(), {(Site.D2, "x"), (Site.A, "x")}),
            ("XX", "feedback", "phi_plus", set(), {(Site.D2, "z"), (Site.A, "x")}),
            ("ZZ", "feedback", "psi_plus", {(Site.D2, "x")}, {(Site.A, "x")}),
            ("ZZ", "pfu", "phi_plus", set(), {(Site.A, "x")}),
            ("XX", "pfu", "phi_plus", set(), {(Site.A, "x")}),
        ],
    )
    def test_conditional_pulse(self, timing, basis, mode, target, plus, minus):
        rnd = compile_parity_round(basis, mode, timing, ScheduleOptions(target=target))
        conditional = rnd.segments[-1]
        assert {(d.site, d.axis) for d in conditional.on_plus} == plus
        assert {(d.site, d.axis) for d in conditional.on_minus} == minus
        assert conditional.duration_ns == 50

    def test_resolve_without_drives_idles(self, timing):
        conditional = compile_parity_round("ZZ", "pfu", timing).segments[-1]
        idle = conditional.resolve(1)
        assert idle.kind == SegmentKind.IDLE and idle.duration_ns == 50
        pulse = conditional.resolve(-1)
        assert pulse.kind == SegmentKind.ROTATION

    def test_stark_and_virtual_z_after_measurement(self, timing):
        options = ScheduleOptions(stark_rad=(0.5, 0.4), virtual_z_rad=(-0.5, -0.4))
        rnd = compile_parity_round("ZZ", "feedback", timing, options)
        post = rnd.post_measurement
        assert [s.label for s in post[:2]] == ["stark", "virtual_z"]
        total = post[1].unitary() @ post[0].unitary()
        np.testing.assert_allclose(total, np.eye(8), atol=1e-12)

    @pytest.mark.parametrize("basis, mode", [("YY", "feedback"), ("ZZ", "open_loop")])
    def test_unknown_basis_or_mode(self, timing, basis, mode):
        with pytest.raises(InvalidInputError):
            compile_parity_round(basis, mode, timing)


class TestDelay:

    def test_finite_cpmg_spacing(self, timing):
        delay = compile_delay(timing)
        assert [s.duration_ns for s in delay] == [100, 50, 200, 50, 200, 50, 200, 50, 100]
        pulses = [s for s in delay if s.kind == SegmentKind.ROTATION]
        assert len(pulses) == 4
        assert sum(s.duration_ns for s in delay) == 1000

    def test_ideal_cpmg_pulse_centres(self, ideal_timing):
        delay = compile_delay(ideal_timing)
        idles = [s.duration_ns for s in delay if s.kind == SegmentKind.IDLE]
        assert idles == [125, 250, 250, 250, 125]
        assert kinds(delay).count(SegmentKind.INSTANTANEOUS_UNITARY) == 4

    def test_zero_delay_has_no_pulses(self):
        assert compile_delay(Timing(feedback_delay_ns=0)) == []

    def test_delay_too_short_for_pulses(self):
        with pytest.raises(ConfigError):
            Timing(feedback_delay_ns=150).validate()

    def test_ideal_pulses_fit_any_delay(self):
        assert Timing(feedback_delay_ns=150, ideal_cpmg_pulses=True).validate()


class TestSegments:

    def test_zero_duration_rotation_rejected(self):
        with pytest.raises(InvalidInputError):
            Segment(SegmentKind.ROTATION, 0, drives=(Drive(Site.A, "x", np.pi),))

    def test_marker_must_be_instantaneous(self):
        with pytest.raises(InvalidInputError):
            Segment(SegmentKind.MEASURE_ANCILLA, 10)

    def test_cz_generator_phase(self):
        seg = Segment(SegmentKind.CZ, 96, cz_pair=(Site.D1, Site.A))
        h = seg.hamiltonian()
        assert h[int("110", 2), int("110", 2)].real * seg.duration_us == pytest.approx(np.pi)

    def test_key_ignores_label(self):
        a = Segment(SegmentKind.IDLE, 40, label="buffer")
        b = Segment(SegmentKind.IDLE, 40, label="delay")
        assert a.key == b.key

    def test_instantaneous_unitary(self):
        seg = Segment(SegmentKind.INSTANTANEOUS_UNITARY, 0, drives=(Drive(Site.D2, "z", 0.3),))
        assert is_unitary(seg.unitary())


class TestExperiment:

    def test_sequence_order(self, timing):
        experiment = compile_experiment(["ZZ", "XX"], "feedback", timing)
        assert [r.basis for r in experiment.rounds] == [Basis.ZZ, Basis.XX]
        assert experiment.tomography.kind == SegmentKind.TOMOGRAPHY
        assert experiment.duration_ns == 50 + 1511 + 1611

    def test_empty_sequence_rejected(self, timing):
        with pytest.raises(InvalidInputError):
            compile_experiment([], "feedback", timing)

    def test_expand_sequence(self):
        assert expand_sequence(["ZZ", "XX"], 5) == [Basis.ZZ, Basis.XX, Basis.ZZ, Basis.XX, Basis.ZZ]
        with pytest.raises(InvalidInputError):
            expand_sequence(["ZZ"], 0)

    def test_schedule_dump_times(self, timing):
        lines = format_schedule(compile_experiment(["ZZ"], "feedback", timing))
        assert lines[0].split()[:2] == ["0", "50"]
        assert lines[-1].split()[:2] == ["1561", "1561"]
        assert any("cz_d1a" in line for line in lines)
