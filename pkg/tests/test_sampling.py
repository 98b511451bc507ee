"""Unit tests for hqugan.sampling: shot estimators, rotation-insertion gradients, overlap tests, budgets."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqugan.controls import ControlSchedule, HamiltonianModel, build_ltfim, build_single_control_ltfim
from hqugan.costs import CostSpec, gradient_first_order
from hqugan.qcore import (
    Observable,
    QuantumState,
    basis_state,
    pauli,
    random_hermitian,
    random_pure_state,
    single_qubit,
)
from hqugan.sampling import (
    ShotConfig,
    ShotEstimate,
    gradient_from_rotations_dense,
    hadamard_test_imag_overlap,
    hadamard_test_probability,
    imag_overlap_superposition,
    rotation,
    sample_expectation,
    sampled_gradient_entry,
    shot_budget_report,
)

X, Y, Z = (single_qubit(c) for c in "XYZ")
PLUS = QuantumState.from_vector([1, 1], normalize=True)


def random_instance(rng, n=2, n_steps=6, dt=0.1):
    model = build_ltfim(n)
    sched = ControlSchedule(rng.uniform(-1, 1, size=(n_steps, 2 * n)), n_steps * dt)
    return model, sched, Observable(random_hermitian(2**n, rng)), random_pure_state(n, rng), random_pure_state(n, rng)


class TestShotConfig:
    def test_epsilon_drives_shots(self):
        assert ShotConfig(epsilon_target=0.01).shots_for(1.0) == 10**4
        assert ShotConfig(epsilon_target=0.02).shots_for(1.0) == 2500

    def test_validation(self):
        with pytest.raises(ValueError):
            ShotConfig(shots=0)
        with pytest.raises(ValueError):
            ShotEstimate(0.0, -1.0, 1)


class TestSampleExpectation:
    def test_deterministic_outcome(self):
        est = sample_expectation(basis_state("000"), pauli("Z", 0, 3), ShotConfig(shots=500))
        assert est.mean == 1.0 and est.std_error == 0.0

    def test_plus_state(self):
        est = sample_expectation(PLUS, Z, ShotConfig(shots=10**4, seed=1))
        assert abs(est.mean) <= 4 / np.sqrt(10**4)

    def test_exact_mode(self):
        rng = np.random.default_rng(2)
        s, d = random_pure_state(2, rng), random_hermitian(4, rng)
        assert sample_expectation(s, d, ShotConfig(exact=True)).mean == pytest.approx(s.expectation(d), abs=1e-12)

    def test_mixed_state(self):
        rho = QuantumState.from_density(np.diag([0.25, 0.75]))
        assert sample_expectation(rho, Z, ShotConfig(exact=True)).mean == pytest.approx(-0.5)

    def test_coverage(self):
        rng = np.random.default_rng(3)
        s, d = random_pure_state(2, rng), random_hermitian(4, rng)
        exact = s.expectation(d)
        hits = 0
        for seed in range(300):
            est = sample_expectation(s, d, ShotConfig(shots=10**5, seed=seed))
            hits += abs(est.mean - exact) <= 3 * est.std_error
        assert hits / 300 >= 0.99

    def test_unbiased(self):
        rng = np.random.default_rng(4)
        s, d = random_pure_state(2, rng), random_hermitian(4, rng)
        means = [sample_expectation(s, d, ShotConfig(shots=200, seed=k)).mean for k in range(1000)]
        grand_se = np.std(means, ddof=1) / np.sqrt(len(means))
        assert abs(np.mean(means) - s.expectation(d)) <= 4 * grand_se

    def test_seeded_reproducible(self):
        s = random_pure_state(2, np.random.default_rng(5))
        a = sample_expectation(s, pauli("X", 1, 2), ShotConfig(shots=100, seed=9))
        b = sample_expectation(s, pauli("X", 1, 2), ShotConfig(shots=100, seed=9))
        assert a == b


class TestRotation:
    def test_quarter_turn(self):
        r = rotation("X", 0, 1, +1)
        assert np.allclose(r, (np.eye(2) - 1j * X) / np.sqrt(2))
        assert np.allclose(rotation("X", 0, 1, -1), r.conj().T)


class TestSampledGradient:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["abs_squared", "trace_signed"]))
    def test_exact_mode_matches_dense(self, seed, kind):
        rng = np.random.default_rng(seed)
        model, sched, d, sigma, init = random_instance(rng)
        i, j = int(rng.integers(4)), int(rng.integers(6))
        spec = CostSpec(kind)
        est = sampled_gradient_entry(model, sched, d, sigma, i, j, ShotConfig(exact=True), spec, init)
        dense = gradient_from_rotations_dense(model, sched, d, sigma, i, j, spec, init)
        assert abs(est.mean - dense) <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_dense_matches_adjoint(self, seed):
        rng = np.random.default_rng(seed)
        model, sched, d, sigma, init = random_instance(rng)
        g = gradient_first_order(model, sched, d, sigma, CostSpec("abs_squared"), init)
        dense = np.array([[gradient_from_rotations_dense(model, sched, d, sigma, i, j, initial=init)
                           for i in range(4)] for j in range(6)])
        assert np.max(np.abs(g - dense)) <= 5 * sched.dt * max(np.max(np.abs(g)), 1e-12)

    def test_commuting_d(self):
        model = HamiltonianModel(1, np.zeros((2, 2)), (Z,), (("Z", 0),))
        sched = ControlSchedule(np.ones((3, 1)), 0.3)
        est = sampled_gradient_entry(model, sched, Z, PLUS, 0, 1, ShotConfig(shots=10**4), initial=basis_state("1"))
        assert abs(est.mean) <= 4 * est.std_error + 1e-12

    def test_pedagogical_instance(self):
        model = HamiltonianModel(1, np.zeros((2, 2)), (X,), (("X", 0),))
        sched = ControlSchedule(np.array([[0.8]]), 0.5)
        sigma = basis_state("1")
        exact = gradient_first_order(model, sched, Observable(Z), sigma, CostSpec("abs_squared"), basis_state("0"))[0, 0]
        est = sampled_gradient_entry(model, sched, Z, sigma, 0, 0, ShotConfig(shots=10**6, seed=1),
                                     initial=basis_state("0"))
        assert abs(est.mean - exact) <= 3 * est.std_error

    def test_no_pauli_axis(self):
        model = build_single_control_ltfim(2)
        with pytest.raises(ValueError):
            sampled_gradient_entry(model, ControlSchedule(np.ones((3, 1)), 1.0), np.eye(4), basis_state("00"),
                                   0, 0, ShotConfig())

    def test_step_out_of_range(self):
        model, sched, d, sigma, init = random_instance(np.random.default_rng(6))
        with pytest.raises(IndexError):
            sampled_gradient_entry(model, sched, d, sigma, 0, 6, ShotConfig(), initial=init)


class TestHadamardTest:
    def test_same_state_identity(self):
        s = random_pure_state(2, np.random.default_rng(7))
        assert hadamard_test_probability(s, s, np.eye(4)) == pytest.approx(0.5, abs=1e-12)

    def test_y_flip(self):
        assert hadamard_test_probability(basis_state("0"), basis_state("1"), Y) == pytest.approx(1.0, abs=1e-12)
        est = hadamard_test_imag_overlap(basis_state("0"), basis_state("1"), Y, ShotConfig(exact=True))
        assert est.mean == pytest.approx(-1.0, abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.sampled_from(["imag", "real"]))
    def test_probability_in_unit_interval(self, seed, part):
        rng = np.random.default_rng(seed)
        a, b = random_pure_state(2, rng), random_pure_state(2, rng)
        p = pauli(["X", "Y", "Z"][seed % 3], seed % 2, 2)
        prob = hadamard_test_probability(a, b, p, part)
        assert -1e-12 <= prob <= 1 + 1e-12
        z = np.vdot(a.data, p @ b.data)
        assert 1 - 2 * prob == pytest.approx(z.imag if part == "imag" else z.real, abs=1e-12)

    def test_random_pair_sampled(self):
        rng = np.random.default_rng(8)
        a, b = random_pure_state(2, rng), random_pure_state(2, rng)
        p = pauli("X", 0, 2)
        est = hadamard_test_imag_overlap(a, b, p, ShotConfig(shots=10**5, seed=2))
        assert abs(est.mean - np.vdot(a.data, p @ b.data).imag) <= 3 * est.std_error

    def test_validation(self):
        with pytest.raises(ValueError):
            hadamard_test_imag_overlap(PLUS, PLUS, np.diag([1.0, 0.5]), ShotConfig())
        with pytest.raises(ValueError):
            hadamard_test_imag_overlap(PLUS, PLUS, Z, ShotConfig(), part="bogus")

    def test_superposition(self):
        rng = np.random.default_rng(9)
        a, b, phi = (random_pure_state(1, rng) for _ in range(3))
        c = [0.3 - 0.2j, -1.1 + 0.5j]
        chi = c[0] * a.data + c[1] * b.data
        est = imag_overlap_superposition(c, [a, b], phi, X, ShotConfig(exact=True))
        assert est.mean == pytest.approx(np.vdot(chi, X @ phi.data).imag, abs=1e-12)


class TestShotBudget:
    def test_unit_case(self):
        b = shot_budget_report(1, 1, 1, 1.0)
        assert b.expectations_per_sweep == 8
        assert b.copies_generator_per_round == 8 and b.copies_total == 16

    def test_epsilon_scaling(self):
        assert shot_budget_report(2, 10, 1, 0.01).shots_generator == 10**4
        assert shot_budget_report(2, 10, 1, 0.02).shots_generator == 2500

    def test_trotter_quadratic_in_t(self):
        a = shot_budget_report(3, 10, 1, 0.1, t_total=5.0, delta=0.01).trotter_steps
        b = shot_budget_report(3, 10, 1, 0.1, t_total=10.0, delta=0.01).trotter_steps
        assert b == 4 * a

    def test_validation(self):
        with pytest.raises(ValueError):
            shot_budget_report(0, 1, 1, 0.1)
