"""Unit tests for hqugan.controls: models, schedules, propagation, resampling, CSV I/O."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hqugan.controls import (
    ControlSchedule,
    HamiltonianModel,
    build_ltfim,
    build_single_control_ltfim,
    default_initial_schedule,
    load_schedule_csv,
    propagate,
    propagate_observable_backward,
    resample_linear,
    save_schedule_csv,
)
from hqugan.qcore import (
    Observable,
    QuantumState,
    basis_state,
    fidelity,
    pauli,
    random_hermitian,
    random_pure_state,
    single_qubit,
)

X, Y, Z = (single_qubit(c) for c in "XYZ")


def x_only_model():
    return HamiltonianModel(1, np.zeros((2, 2)), (X,), (("X", 0),))


def random_instance(rng, n, n_steps=12, t_total=1.0):
    model = build_ltfim(n)
    sched = ControlSchedule(rng.normal(size=(n_steps, 2 * n)), t_total)
    return model, sched


class TestModels:
    def test_ltfim_single_qubit(self):
        m = build_ltfim(1)
        assert np.allclose(m.drift, 0)
        assert len(m.controls) == 2
        assert np.allclose(m.controls[0], X) and np.allclose(m.controls[1], Z)

    def test_ltfim_two_qubits(self):
        m = build_ltfim(2)
        assert np.allclose(m.drift, -np.kron(Z, Z))
        assert len(m.controls) == 4
        assert [a[0] for a in m.control_axis] == ["X", "X", "Z", "Z"]

    def test_ltfim_three_qubit_spectrum(self):
        ev = np.linalg.eigvalsh(build_ltfim(3, 0.1).drift)
        assert np.allclose(sorted(set(np.round(ev, 12))), [-0.2, 0.0, 0.2])
        assert np.sum(np.isclose(ev, 0.0)) == 4

    def test_zero_qubits(self):
        with pytest.raises(ValueError):
            build_ltfim(0)
        with pytest.raises(ValueError):
            build_single_control_ltfim(0)

    def test_single_control(self):
        m = build_single_control_ltfim(1)
        assert np.allclose(m.drift, 0)
        assert np.allclose(m.controls[0], X + Z)
        m2 = build_single_control_ltfim(2)
        summed = sum(pauli(a, q, 2) for a in "XZ" for q in range(2))
        assert np.allclose(m2.controls[0], summed)
        m3 = build_single_control_ltfim(3)
        assert len(m3.controls) == 1
        assert np.linalg.norm(m3.controls[0], 2) == pytest.approx(3 * np.sqrt(2))


class TestInitialSchedules:
    def test_sinusoidal_endpoints(self):
        m = build_ltfim(2)
        s = default_initial_schedule(m, 5.0, 50)
        assert np.allclose(s.values[0, :2], 0) and np.allclose(s.values[0, 2:], 1)
        assert np.allclose(s.values[-1, :2], np.sin(10.0))
        assert s.values[-1, 0] == pytest.approx(-0.5440, abs=1e-4)

    def test_constant(self):
        s = default_initial_schedule(build_single_control_ltfim(3), 1.0, 5, style="constant")
        assert s.values.shape == (5, 1) and np.all(s.values == 1.0)

    def test_sinusoidal_needs_ltfim_layout(self):
        with pytest.raises(ValueError):
            default_initial_schedule(build_single_control_ltfim(2), 1.0, 5)

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_all_ones_is_ground_state_at_t0(self, n):
        m = build_ltfim(n)
        s = default_initial_schedule(m, 5.0, 50)
        h0 = m.drift + sum(e * h for e, h in zip(s.values[0], m.controls))
        psi = basis_state("1" * n).data
        e_min = np.linalg.eigvalsh(h0).min()
        assert np.allclose(h0 @ psi, e_min * psi)


class TestSchedule:
    def test_invariants(self):
        s = ControlSchedule(np.ones((4, 2)), 2.0)
        assert s.n_steps * s.dt == pytest.approx(2.0, abs=1e-12)
        with pytest.raises(ValueError):
            ControlSchedule(np.array([[np.nan]]), 1.0)
        with pytest.raises(ValueError):
            ControlSchedule(np.array([[2.0]]), 1.0, bounds=(-1.0, 1.0))


class TestPropagate:
    def test_identity_evolution(self):
        m = HamiltonianModel(1, np.zeros((2, 2)), (X,), (("X", 0),))
        psi = random_pure_state(1, np.random.default_rng(0))
        out, _ = propagate(m, ControlSchedule(np.zeros((7, 1)), 3.0), psi)
        assert np.allclose(out.data, psi.data)

    def test_rabi_flip(self):
        out, _ = propagate(x_only_model(), ControlSchedule(np.ones((1000, 1)), np.pi / 2), basis_state("0"))
        assert np.allclose(out.data, [0, -1j], atol=1e-9)
        assert fidelity(out, basis_state("1")) >= 1 - 1e-5

    def test_log_length(self):
        m, s = random_instance(np.random.default_rng(1), 2)
        _, log = propagate(m, s, basis_state("11"), keep_log=True)
        assert len(log.forward_states) == s.n_steps + 1

    def test_control_mismatch(self):
        with pytest.raises(ValueError):
            propagate(build_ltfim(2), ControlSchedule(np.zeros((3, 2)), 1.0), basis_state("00"))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 4))
    def test_norm_and_trace_preserved(self, seed, n):
        rng = np.random.default_rng(seed)
        m, s = random_instance(rng, n, n_steps=8)
        out, _ = propagate(m, s, random_pure_state(n, rng))
        assert abs(np.linalg.norm(out.data) - 1) <= 1e-9
        g = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
        rho = g @ g.conj().T
        mixed, _ = propagate(m, s, QuantumState.from_density(rho / np.trace(rho).real))
        assert abs(np.trace(mixed.data) - 1) <= 1e-9
        assert np.allclose(mixed.data, mixed.data.conj().T, atol=1e-9)

    def test_pure_and_mixed_agree(self):
        rng = np.random.default_rng(2)
        m, s = random_instance(rng, 2)
        psi = random_pure_state(2, rng)
        a, _ = propagate(m, s, psi)
        b, _ = propagate(m, s, QuantumState.from_density(psi.density()))
        assert np.allclose(a.density(), b.data, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_composition(self, seed):
        rng = np.random.default_rng(seed)
        m, s = random_instance(rng, 2, n_steps=10, t_total=2.0)
        psi = random_pure_state(2, rng)
        full, _ = propagate(m, s, psi)
        mid, _ = propagate(m, ControlSchedule(s.values[:5], 1.0), psi)
        half, _ = propagate(m, ControlSchedule(s.values[5:], 1.0), mid)
        assert np.allclose(full.data, half.data, atol=1e-10)


class TestBackward:
    def test_last_entry_is_d(self):
        m, s = random_instance(np.random.default_rng(3), 2)
        d = Observable(pauli("Z", 0, 2))
        back = propagate_observable_backward(m, s, d)
        assert len(back) == s.n_steps + 1
        assert np.allclose(back[-1].matrix, d.matrix)

    def test_identity_segment(self):
        m = x_only_model()
        back = propagate_observable_backward(m, ControlSchedule(np.zeros((4, 1)), 1.0), Observable(Z))
        assert all(np.allclose(b.matrix, Z) for b in back)

    def test_single_step_closed_form(self):
        theta, dt = 0.37, 0.5
        back = propagate_observable_backward(
            x_only_model(), ControlSchedule(np.array([[theta / dt]]), dt), Observable(Z)
        )
        assert np.allclose(back[0].matrix, np.cos(2 * theta) * Z + np.sin(2 * theta) * Y, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31 - 1), st.integers(1, 3))
    def test_duality(self, seed, n):
        rng = np.random.default_rng(seed)
        m, s = random_instance(rng, n, n_steps=6)
        d = Observable(random_hermitian(2**n, rng))
        psi = random_pure_state(n, rng)
        _, log = propagate(m, s, psi, keep_log=True)
        back = propagate_observable_backward(m, s, d)
        vals = [np.vdot(v, b.matrix @ v).real for v, b in zip(log.forward_states, back)]
        assert np.ptp(vals) <= 1e-9


class TestResample:
    def test_same_n_unchanged(self):
        s = ControlSchedule(np.random.default_rng(4).normal(size=(6, 2)), 1.5)
        assert np.array_equal(resample_linear(s, 6).values, s.values)

    def test_constant(self):
        s = ControlSchedule(np.full((3, 1), 0.7), 1.0)
        assert np.allclose(resample_linear(s, 31).values, 0.7)

    def test_ramp(self):
        s = ControlSchedule(np.array([[0.0], [1.0]]), 1.0)
        assert np.allclose(resample_linear(s, 4).values[:, 0], [0, 1 / 3, 2 / 3, 1])

    def test_coarsening_rejected(self):
        with pytest.raises(ValueError):
            resample_linear(ControlSchedule(np.zeros((4, 1)), 1.0), 3)


class TestCsv:
    def test_round_trip_exact(self, tmp_path):
        s = ControlSchedule(np.random.default_rng(5).normal(size=(9, 3)), 2.5)
        path = tmp_path / "s.csv"
        save_schedule_csv(s, path)
        assert path.read_text().splitlines()[0] == "t,eps_1,eps_2,eps_3"
        back = load_schedule_csv(path, t_total=2.5)
        assert np.array_equal(back.values, s.values)
        assert back.t_total == 2.5
