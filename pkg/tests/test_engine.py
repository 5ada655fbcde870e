"""Tests for Lindblad propagation, measurement branching and recombination."""

import numpy as np
import pytest
from scipy.linalg import expm

from backend.src.simulation.engine import (
    Branch,
    Engine,
    apply_unitary,
    build_liouvillian,
    evolve,
    measure_ancilla,
    propagate,
    recombine,
    unvec,
    vec,
)
from backend.src.simulation.errors import InvalidInputError, PropagationError
from backend.src.simulation.noise import (
    DeviceParams,
    MeasurementModel,
    NoiseModel,
    QubitParams,
    build_povm,
)
from backend.src.simulation.oracle import fixed_step_integrate
from backend.src.simulation.qops import (
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Z,
    DATA_SITES,
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
    Drive,
    Segment,
    SegmentKind,
    compile_delay,
    compile_experiment,
    compile_parity_round,
    compile_preparation,
)


def single_channel_model(*c_ops):
    return NoiseModel(collapse_ops=tuple(c_ops), h_zz=np.zeros((8, 8), dtype=complex),
                      measurement=MeasurementModel.ideal())


def idle(ns):
    return Segment(SegmentKind.IDLE, ns, label="idle")


class TestLiouvillian:

    def test_vec_column_stacking(self):
        a = np.arange(4).reshape(2, 2)
        np.testing.assert_array_equal(vec(a), [0, 2, 1, 3])
        np.testing.assert_array_equal(unvec(vec(a), 2), a)

    def test_vec_identity(self, rng):
        a, b, rho = (rng.normal(size=(3, 3)) for _ in range(3))
        np.testing.assert_allclose(vec(a @ rho @ b), np.kron(b.T, a) @ vec(rho), atol=1e-12)

    def test_trace_preserving(self, device_model):
        liouvillian = build_liouvillian(device_model.h_zz, device_model.collapse_ops)
        left = vec(np.eye(8)).conj() @ liouvillian
        assert np.abs(left).max() < 1e-12

    def test_trace_drift_under_random_devices(self, rng, random_density):
        def random_qubit():
            t1 = rng.uniform(5.0, 50.0)
            return QubitParams(t1_us=t1, t2_echo_us=rng.uniform(1.0, 2 * t1),
                               t2_ramsey_us=rng.uniform(1.0, 2 * t1),
                               assignment_prob=rng.uniform(0.9, 1.0))

        for _ in range(100):
            params = DeviceParams.default().with_overrides(
                d1=random_qubit(), a=random_qubit(), d2=random_qubit(),
                j_d1a_khz=rng.uniform(0.0, 500.0), j_d2a_khz=rng.uniform(0.0, 500.0),
            )
            engine = Engine(NoiseModel.from_params(params))
            rho = engine.propagate(random_density(), idle(1000))
            assert abs(np.trace(rho) - 1) < 1e-9
            assert engine.min_eigenvalue(rho) > -1e-9

    def test_evolve_matches_cached_propagation(self, device_model, random_density):
        rho = random_density()
        liouvillian = build_liouvillian(device_model.h_zz, device_model.collapse_ops)
        np.testing.assert_allclose(evolve(rho, liouvillian, 1.0),
                                   Engine(device_model).propagate(rho, idle(1000)), atol=1e-10)

    def test_choi_positive(self):
        c = np.sqrt(0.3) * SIGMA_MINUS
        h = 0.7 * SIGMA_X
        superop = expm(build_liouvillian(h, [c, np.sqrt(0.2) * SIGMA_Z]) * 1.3)
        choi = np.zeros((4, 4), dtype=complex)
        for i in range(2):
            for j in range(2):
                e = np.zeros((2, 2))
                e[i, j] = 1
                choi += np.kron(e, unvec(superop @ vec(e), 2))
        assert np.linalg.eigvalsh(choi).min() > -1e-12


class TestPropagate:

    def test_no_generator_is_identity(self, noiseless_model, random_density):
        rho = random_density()
        np.testing.assert_allclose(propagate(rho, idle(500), noiseless_model), rho, atol=1e-14)

    def test_amplitude_damping(self):
        model = single_channel_model(np.sqrt(1 / 20.0) * embed_single(SIGMA_MINUS, Site.D1))
        rho = propagate(density(basis_state("100")), idle(1000), model)
        assert rho[4, 4].real == pytest.approx(np.exp(-0.05), abs=1e-12)

    def test_pure_dephasing(self):
        # T1 = ∞, T2 = 10 µs: rate 1/(2·T2)
        model = single_channel_model(np.sqrt(0.05) * embed_single(SIGMA_Z, Site.D2))
        plus = np.array([1, 1]) / np.sqrt(2)
        psi = tensor(basis_state("0"), basis_state("0"), plus)
        rho = propagate(density(psi), idle(1000), model)
        assert abs(rho[0, 1]) == pytest.approx(0.5 * np.exp(-0.1), abs=1e-12)

    def test_cache_reused(self, device_model, ground):
        engine = Engine(device_model)
        engine.run_segments(ground, [idle(40), idle(40), idle(40)])
        assert engine.cache_hits == 2

    def test_zero_duration_rejected(self, device_model, ground):
        marker = Segment(SegmentKind.TOMOGRAPHY, 0)
        with pytest.raises(InvalidInputError):
            Engine(device_model).propagate(ground, marker)

    def test_non_finite_state_aborts(self, device_model):
        rho = np.full((8, 8), np.nan, dtype=complex)
        with pytest.raises(PropagationError) as info:
            Engine(device_model).propagate(rho, idle(40))
        assert info.value.segment == "idle"

    def test_invariants_over_twelve_alternating_rounds(self, device_model, timing):
        engine = Engine(device_model)
        experiment = compile_experiment(["ZZ", "XX"] * 6, "feedback", timing)
        rho = engine.run_segments(density(basis_state("000")), experiment.preparation)
        for rnd in experiment.rounds:
            for segment in rnd.pre_measurement:
                rho = engine.apply(rho, segment)
                assert abs(np.trace(rho).real - 1) < 1e-9
                assert np.linalg.eigvalsh(rho).min() > -1e-8
            branches = engine.measure_ancilla(rho)
            states = []
            for outcome, weight, state in branches.outcomes():
                for segment in rnd.post_measurement:
                    if segment.kind == SegmentKind.CONDITIONAL_PULSE:
                        segment = segment.resolve(outcome)
                    state = engine.apply(state, segment)
                    assert np.linalg.eigvalsh(state).min() > -1e-8
                states.append(Branch(weight, state))
            rho = recombine(states)
        assert abs(np.trace(rho).real - 1) < 1e-7

    # Simultaneous π pulses are the stiffest segments; they get the half-ns step
    @pytest.mark.parametrize("segment, dt_ns", [
        (Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.A, "y", np.pi / 2),)), 1.0),
        (Segment(SegmentKind.CZ, 96, cz_pair=(Site.D1, Site.A)), 1.0),
        (Segment(SegmentKind.CZ, 105, cz_pair=(Site.A, Site.D2)), 1.0),
        (Segment(SegmentKind.IDLE, 200), 1.0),
        (Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.D1, "y", np.pi / 2),
                                                   Drive(Site.D2, "y", np.pi / 2))), 1.0),
        (Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.D1, "x", np.pi), Drive(Site.D2, "x", np.pi))), 0.5),
        (Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.D2, "z", np.pi), Drive(Site.A, "x", np.pi))), 0.5),
    ])
    def test_matches_fixed_step_integrator(self, device_model, random_density, segment, dt_ns):
        rho = random_density()
        exact = Engine(device_model).propagate(rho, segment)
        reference = fixed_step_integrate(rho, segment, device_model, dt_ns=dt_ns)
        assert not reference.flagged
        assert np.linalg.norm(exact - reference.value) < 1e-6

    def test_cpmg_echo_cancels_static_zz(self, ideal_timing, params):
        zz_only = NoiseModel(collapse_ops=(), h_zz=NoiseModel.from_params(params).h_zz,
                             measurement=MeasurementModel.ideal())
        engine = Engine(zz_only)
        plus = np.array([1, 1]) / np.sqrt(2)
        for ancilla in ("0", "1"):
            psi = tensor(plus, basis_state(ancilla), np.array([1, 1j]) / np.sqrt(2))
            rho = density(psi)
            after = engine.run_segments(rho, compile_delay(ideal_timing))
            np.testing.assert_allclose(after, rho, atol=1e-10)

    def test_zero_angle_schedule_is_identity(self, noiseless_model, random_density):
        rho = random_density()
        segments = [
            Segment(SegmentKind.ROTATION, 50, drives=(Drive(Site.D1, "y", 0.0), Drive(Site.D2, "x", 0.0))),
            Segment(SegmentKind.INSTANTANEOUS_UNITARY, 0, drives=(Drive(Site.A, "z", 0.0),)),
            idle(1000),
        ]
        np.testing.assert_allclose(Engine(noiseless_model).run_segments(rho, segments), rho, atol=1e-10)


class TestApplyUnitary:

    def test_identity(self, random_density):
        rho = random_density()
        np.testing.assert_allclose(apply_unitary(rho, np.eye(8)), rho)

    def test_x_on_d2_maps_psi_plus_to_phi_plus(self):
        rho = density(bell_state("psi_plus"))
        mapped = apply_unitary(rho, tensor(np.eye(2), SIGMA_X))
        assert fidelity(mapped, bell_state("phi_plus")) == pytest.approx(1.0)

    def test_z_on_d2_flips_xx(self):
        rho = density(bell_state("phi_minus"))
        assert expectation(rho, pauli_operator("XX")) == pytest.approx(-1.0)
        mapped = apply_unitary(rho, tensor(np.eye(2), SIGMA_Z))
        assert expectation(mapped, pauli_operator("XX")) == pytest.approx(1.0)

    def test_non_unitary_rejected(self, ground):
        with pytest.raises(InvalidInputError):
            apply_unitary(ground, 2 * np.eye(8))


class TestMeasurement:

    def test_ideal_ground_ancilla(self, ground):
        branches = measure_ancilla(ground, MeasurementModel.ideal())
        assert branches.p_plus == pytest.approx(1.0)
        assert branches.rho_minus is None
        np.testing.assert_allclose(branches.rho_plus, ground)

    def test_device_povm_ground_ancilla(self, params, ground):
        branches = measure_ancilla(ground, build_povm(params))
        assert branches.p_plus == pytest.approx(0.994 / 0.9994, abs=1e-9)
        assert branches.p_plus == pytest.approx(0.994, abs=1e-3)

    def test_completeness_on_random_states(self, params, random_density):
        model = build_povm(params)
        for _ in range(1000):
            rho = random_density(rank=2)
            branches = measure_ancilla(rho, model)
            assert branches.p_plus + branches.p_minus == pytest.approx(1.0, abs=1e-9)

    def test_parity_mapped_branches(self, noiseless_model, timing):
        engine = Engine(noiseless_model)
        rho = engine.run_segments(density(basis_state("000")), compile_preparation(timing))
        rho = engine.run_segments(rho, compile_parity_round("ZZ", "feedback", timing).pre_measurement)
        branches = engine.measure_ancilla(rho)
        assert branches.p_plus == pytest.approx(0.5, abs=1e-12)
        assert branches.p_minus == pytest.approx(0.5, abs=1e-12)
        zz = pauli_operator("ZZ")
        assert expectation(partial_trace(branches.rho_plus, DATA_SITES), zz) == pytest.approx(1.0)
        assert expectation(partial_trace(branches.rho_minus, DATA_SITES), zz) == pytest.approx(-1.0)

    def test_vanishing_probabilities_raise(self):
        with pytest.raises(PropagationError):
            measure_ancilla(np.zeros((8, 8), dtype=complex), MeasurementModel.ideal())


class TestRecombine:

    def test_single_branch(self, random_density):
        rho = random_density()
        np.testing.assert_allclose(recombine([Branch(1.0, rho)]), rho, atol=1e-15)

    def test_phi_psi_mixture(self):
        mixed = recombine([Branch(0.5, density(bell_state("phi_plus"))),
                           Branch(0.5, density(bell_state("psi_plus")))])
        assert expectation(mixed, pauli_operator("ZZ")) == pytest.approx(0.0, abs=1e-12)
        assert expectation(mixed, pauli_operator("XX")) == pytest.approx(1.0)

    def test_weights_must_sum_to_one(self, ground):
        with pytest.raises(InvalidInputError):
            recombine([Branch(0.7, ground)])

    def test_frame_mismatch_rejected(self, ground):
        with pytest.raises(InvalidInputError):
            recombine([Branch(0.5, ground, frame="I"), Branch(0.5, ground, frame="X")])
