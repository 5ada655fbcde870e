"""Cross-checks between the engine and the independent reference solutions."""

import itertools

import numpy as np
import pytest

from backend.src.simulation.engine import Engine
from backend.src.simulation.errors import InvalidInputError
from backend.src.simulation.noise import MeasurementModel, NoiseModel, dephasing_rate
from backend.src.simulation.oracle import (
    Provenance,
    analytic_decay,
    fixed_step_integrate,
    ideal_pre_measurement_state,
    statevector_run,
)
from backend.src.simulation.qops import (
    SIGMA_MINUS,
    SIGMA_Z,
    Site,
    basis_state,
    density,
    embed_single,
    partial_trace,
    tensor,
)
from backend.src.simulation.schedule import Drive, Segment, SegmentKind, compile_experiment

PHI_PLUS_WITH_GROUND_ANCILLA = (basis_state("000") + basis_state("101")) / np.sqrt(2)


def overlap(a, b):
    return abs(np.vdot(a, b)) ** 2


class TestStatevector:

    @pytest.mark.parametrize("rounds", [1, 2, 3, 4])
    def test_every_outcome_string_ends_in_phi_plus(self, timing, rounds):
        sequence = (["ZZ", "XX"] * 2)[:rounds]
        experiment = compile_experiment(sequence, "feedback", timing)
        completed = 0
        for outcomes in itertools.product((1, -1), repeat=rounds):
            try:
                result = statevector_run(experiment, outcomes)
            except InvalidInputError:
                continue
            completed += 1
            assert result.provenance == Provenance.STATEVECTOR
            assert overlap(result.value, PHI_PLUS_WITH_GROUND_ANCILLA) == pytest.approx(1.0, abs=1e-12)
        # Only the first parity outcome is random; later ones are fixed by the stabilized state
        assert completed == 2

    def test_forced_odd_outcome_is_corrected(self, timing):
        experiment = compile_experiment(["ZZ"], "feedback", timing)
        result = statevector_run(experiment, [-1])
        assert overlap(result.value, PHI_PLUS_WITH_GROUND_ANCILLA) == pytest.approx(1.0, abs=1e-12)

    def test_zero_probability_outcome_rejected(self, timing):
        experiment = compile_experiment(["ZZ", "ZZ"], "feedback", timing)
        with pytest.raises(InvalidInputError, match="zero probability"):
            statevector_run(experiment, [1, -1])

    def test_outcome_count_must_match(self, timing):
        experiment = compile_experiment(["ZZ", "XX"], "feedback", timing)
        with pytest.raises(InvalidInputError):
            statevector_run(experiment, [1])

    def test_pre_measurement_state_entangles_ancilla(self, timing):
        experiment = compile_experiment(["ZZ"], "feedback", timing)
        psi = ideal_pre_measurement_state(experiment).value
        rho_a = partial_trace(density(psi), [Site.A])
        np.testing.assert_allclose(np.diag(rho_a).real, [0.5, 0.5], atol=1e-12)


class TestAnalyticDecay:

    def test_random_parameters_match_engine(self, rng, random_density):
        for _ in range(20):
            t1 = rng.uniform(5.0, 50.0)
            t2 = rng.uniform(1.0, 2 * t1)
            duration_ns = int(rng.integers(1, 40000))
            model = NoiseModel(
                collapse_ops=(np.sqrt(1 / t1) * embed_single(SIGMA_MINUS, Site.D1),
                              np.sqrt(dephasing_rate(t1, t2)) * embed_single(SIGMA_Z, Site.D1)),
                h_zz=np.zeros((8, 8), dtype=complex),
                measurement=MeasurementModel.ideal(),
            )
            rho0 = random_density(dim=2)
            full = tensor(rho0, density(basis_state("0")), density(basis_state("0")))
            evolved = Engine(model).propagate(full, Segment(SegmentKind.IDLE, duration_ns))
            expected = analytic_decay(t1, t2, duration_ns / 1000.0, rho0)
            assert expected.provenance == Provenance.ANALYTIC
            np.testing.assert_allclose(partial_trace(evolved, [Site.D1]), expected.value, atol=1e-10)

    def test_zero_time_is_identity(self, random_density):
        rho0 = random_density(dim=2)
        np.testing.assert_allclose(analytic_decay(20.0, 15.0, 0.0, rho0).value, rho0, atol=1e-15)

    def test_t2_above_twice_t1_rejected(self, random_density):
        with pytest.raises(InvalidInputError):
            analytic_decay(5.0, 11.0, 1.0, random_density(dim=2))


class TestFixedStep:

    def test_no_generator_is_identity(self, noiseless_model, random_density):
        rho = random_density()
        result = fixed_step_integrate(rho, Segment(SegmentKind.IDLE, 300), noiseless_model)
        np.testing.assert_allclose(result.value, rho, atol=1e-15)
        assert not result.flagged

    def test_fourth_order_convergence(self, noiseless_model, random_density):
        rho = random_density()
        strong = Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.A, "x", 15.0),))
        exact = Engine(noiseless_model).propagate(rho, strong)
        coarse = np.linalg.norm(fixed_step_integrate(rho, strong, noiseless_model, dt_ns=1.0).value - exact)
        fine = np.linalg.norm(fixed_step_integrate(rho, strong, noiseless_model, dt_ns=0.5).value - exact)
        assert 10 < coarse / fine < 22

    @pytest.mark.parametrize("dt_ns", [0.0, 1.5, -1.0])
    def test_step_size_bounds(self, noiseless_model, ground, dt_ns):
        with pytest.raises(InvalidInputError):
            fixed_step_integrate(ground, Segment(SegmentKind.IDLE, 10), noiseless_model, dt_ns=dt_ns)

    def test_instantaneous_segment_applied_exactly(self, noiseless_model, ground):
        flip = Segment(SegmentKind.INSTANTANEOUS_UNITARY, 0, drives=(Drive(Site.D1, "x", np.pi),))
        result = fixed_step_integrate(ground, flip, noiseless_model)
        assert result.value[4, 4].real == pytest.approx(1.0)
