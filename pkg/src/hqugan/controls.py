"""Control schedules, Hamiltonian models and piecewise-constant propagation.

Grid convention
---------------
A schedule holds ``N`` samples per control. Sample ``j`` is held constant
on the propagation interval ``[j*dt, (j+1)*dt)`` with ``dt = T/N``. For
pulse *shapes* (initial pulses, Krotov update shapes, interpolation,
CSV time column) the samples sit on ``N`` nodes spread evenly over the
closed horizon, ``tau_j = j*T/(N-1)``, so the first sample is the pulse at
``t = 0`` and the last one the pulse at ``t = T``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np

from .qcore import (
    DimensionError,
    Observable,
    QuantumState,
    expm_hermitian_i,
    pauli,
    require_hermitian,
)


@dataclass(frozen=True, eq=False)
class ControlSchedule:
    values: np.ndarray
    t_total: float
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"schedule values must be (N, K), got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("schedule has non-finite values")
        if not self.t_total > 0:
            raise ValueError("total time must be positive")
        if self.bounds is not None:
            lo, hi = self.bounds
            if lo > hi:
                raise ValueError("empty amplitude bounds")
            if v.min() < lo - 1e-12 or v.max() > hi + 1e-12:
                raise ValueError("schedule values outside amplitude bounds")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_controls(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return self.t_total / self.n_steps

    def interval_starts(self) -> np.ndarray:
        return np.arange(self.n_steps) * self.dt

    def node_times(self) -> np.ndarray:
        """Times the samples represent on the pulse-shape grid."""
        return node_times(self.t_total, self.n_steps)

    def with_values(self, values) -> "ControlSchedule":
        values = np.asarray(values, dtype=float).reshape(self.values.shape)
        if self.bounds is not None:
            values = np.clip(values, *self.bounds)
        return replace(self, values=values)

    def split(self, at_step: int) -> tuple["ControlSchedule", "ControlSchedule"]:
        if not 0 < at_step < self.n_steps:
            raise ValueError("split point must be an interior step")
        first = ControlSchedule(self.values[:at_step], at_step * self.dt, self.bounds)
        second = ControlSchedule(self.values[at_step:], (self.n_steps - at_step) * self.dt, self.bounds)
        return first, second


def node_times(t_total: float, n_steps: int) -> np.ndarray:
    if n_steps == 1:
        return np.zeros(1)
    return np.linspace(0.0, t_total, n_steps)


@dataclass(frozen=True, eq=False)
class HamiltonianModel:
    """``H(t) = drift + sum_i eps_i(t) controls[i]`` on ``n_qubits`` qubits.

    ``control_axis[i]`` is ``(label, qubit)`` when control ``i`` is a single
    Pauli on one qubit (needed for rotation-insertion gradients), else None.
    """

    n_qubits: int
    drift: np.ndarray
    controls: tuple[np.ndarray, ...]
    control_axis: tuple[tuple[str, int] | None, ...] = field(default=())

    def __post_init__(self):
        dim = 2**self.n_qubits
        drift = np.array(self.drift, dtype=complex)
        ctrls = tuple(np.array(c, dtype=complex) for c in self.controls)
        for what, m in [("drift", drift)] + [(f"control {i}", c) for i, c in enumerate(ctrls)]:
            if m.shape != (dim, dim):
                raise DimensionError(f"{what} has shape {m.shape}, expected {(dim, dim)}")
            require_hermitian(m, what)
        axis = tuple(self.control_axis) if self.control_axis else (None,) * len(ctrls)
        if len(axis) != len(ctrls):
            raise ValueError("control_axis length must match the number of controls")
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", ctrls)
        object.__setattr__(self, "control_axis", axis)

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    @property
    def n_controls(self) -> int:
        return len(self.controls)

    @cached_property
    def control_stack(self) -> np.ndarray:
        return np.stack(self.controls) if self.controls else np.zeros((0, self.dim, self.dim), complex)

    def hamiltonians(self, schedule: ControlSchedule) -> np.ndarray:
        """Stack of the N piecewise-constant Hamiltonians, shape ``(N, d, d)``."""
        self._check(schedule)
        return self.drift[None] + np.einsum("jk,kab->jab", schedule.values, self.control_stack)

    def step_unitaries(self, schedule: ControlSchedule) -> np.ndarray:
        return expm_hermitian_i(self.hamiltonians(schedule), schedule.dt)

    def total_unitary(self, schedule: ControlSchedule) -> np.ndarray:
        u = np.eye(self.dim, dtype=complex)
        for step in self.step_unitaries(schedule):
            u = step @ u
        return u

    def embedded(self, n_spectator: int) -> "HamiltonianModel":
        """Same dynamics acting on the right factor of ``I_(2^n_spectator) (x) H``."""
        eye = np.eye(2**n_spectator)
        axis = tuple(None if a is None else (a[0], a[1] + n_spectator) for a in self.control_axis)
        return HamiltonianModel(
            self.n_qubits + n_spectator,
            np.kron(eye, self.drift),
            tuple(np.kron(eye, c) for c in self.controls),
            axis,
        )

    def _check(self, schedule: ControlSchedule) -> None:
        if schedule.n_controls != self.n_controls:
            raise DimensionError(
                f"schedule has {schedule.n_controls} controls, model has {self.n_controls}"
            )


def build_ltfim(n: int, coupling: float = 1.0) -> HamiltonianModel:
    """Open-boundary Ising chain with local X and Z controls.

    Drift ``-J sum Z_i Z_(i+1)``; controls ``X_1..X_n`` then ``Z_1..Z_n``.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    drift = np.zeros((2**n, 2**n), dtype=complex)
    for i in range(n - 1):
        drift -= coupling * pauli("Z", i, n) @ pauli("Z", i + 1, n)
    controls = [pauli("X", i, n) for i in range(n)] + [pauli("Z", i, n) for i in range(n)]
    axis = [("X", i) for i in range(n)] + [("Z", i) for i in range(n)]
    return HamiltonianModel(n, drift, tuple(controls), tuple(axis))


def build_single_control_ltfim(n: int, coupling: float = 1.0) -> HamiltonianModel:
    """Ising chain driven by one field on every local X and Z term."""
    if n < 1:
        raise ValueError("need at least one qubit")
    drift = build_ltfim(n, coupling).drift
    control = sum(pauli("X", i, n) + pauli("Z", i, n) for i in range(n))
    return HamiltonianModel(n, drift, (control,), (None,))


def sinusoidal_pulse(t, t_total: float, n_qubits: int) -> np.ndarray:
    """Initial pulses: ``sin(10 t/T)`` on the X controls, ``cos(10 t/T)`` on the Z controls."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    phase = 10.0 * t / t_total
    return np.concatenate(
        [np.repeat(np.sin(phase)[:, None], n_qubits, axis=1), np.repeat(np.cos(phase)[:, None], n_qubits, axis=1)],
        axis=1,
    )


def default_initial_schedule(
    model: HamiltonianModel,
    t_total: float,
    n_steps: int,
    style: str = "sinusoidal",
    bounds: tuple[float, float] | None = None,
) -> ControlSchedule:
    if n_steps < 1:
        raise ValueError("need at least one time step")
    if style == "constant":
        values = np.ones((n_steps, model.n_controls))
    elif style == "sinusoidal":
        if model.n_controls != 2 * model.n_qubits or any(a is None for a in model.control_axis):
            raise ValueError("sinusoidal initial pulses need the 2n-control Ising layout")
        values = sinusoidal_pulse(node_times(t_total, n_steps), t_total, model.n_qubits)
    else:
        raise ValueError(f"unknown initial pulse style {style!r}")
    if bounds is not None:
        values = np.clip(values, *bounds)
    return ControlSchedule(values, t_total, bounds)


@dataclass
class PropagationLog:
    """Forward states at every grid time ``j*dt`` (``N+1`` entries) and the step unitaries."""

    forward_states: list[np.ndarray]
    step_unitaries: np.ndarray | None = None


def _evolve(u: np.ndarray, data: np.ndarray, pure: bool) -> np.ndarray:
    return u @ data if pure else u @ data @ u.conj().T


def propagate(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    initial: QuantumState,
    keep_log: bool = False,
    unitaries: np.ndarray | None = None,
) -> tuple[QuantumState, PropagationLog | None]:
    """Evolve ``initial`` through every step of ``schedule``."""
    if initial.dim != model.dim:
        raise DimensionError(f"state dimension {initial.dim} != model dimension {model.dim}")
    if unitaries is None:
        unitaries = model.step_unitaries(schedule)
    data = initial.data
    states = [data] if keep_log else None
    for u in unitaries:
        data = _evolve(u, data, initial.is_pure)
        if keep_log:
            states.append(data)
    if initial.is_pure:
        final = QuantumState(data / np.linalg.norm(data))
    else:
        final = QuantumState((data + data.conj().T) / 2, "mixed")
    log = PropagationLog(states, unitaries) if keep_log else None
    return final, log


def forward_vectors(unitaries: np.ndarray, psi0: np.ndarray) -> np.ndarray:
    """All intermediate vectors, shape ``(N+1, d)``."""
    out = np.empty((len(unitaries) + 1, psi0.shape[0]), dtype=complex)
    out[0] = psi0
    for j, u in enumerate(unitaries):
        out[j + 1] = u @ out[j]
    return out


def backward_vectors(unitaries: np.ndarray, chi_final: np.ndarray) -> np.ndarray:
    """Co-states ``chi_j = (U_(N-1) ... U_j)^dagger chi_final``, shape ``(N+1, d)``."""
    n = len(unitaries)
    out = np.empty((n + 1, chi_final.shape[0]), dtype=complex)
    out[n] = chi_final
    for j in range(n - 1, -1, -1):
        out[j] = unitaries[j].conj().T @ out[j + 1]
    return out


def propagate_observable_backward(
    model: HamiltonianModel, schedule: ControlSchedule, d: Observable
) -> list[Observable]:
    """Heisenberg-picture ``D`` at every grid time; the last entry is ``D`` itself."""
    if d.dim != model.dim:
        raise DimensionError("observable dimension does not match model")
    unitaries = model.step_unitaries(schedule)
    out = [d]
    m = d.matrix
    for u in unitaries[::-1]:
        m = u.conj().T @ m @ u
        m = (m + m.conj().T) / 2
        out.append(Observable(m, "unconstrained"))
    return out[::-1]


def resample_linear(schedule: ControlSchedule, new_n: int) -> ControlSchedule:
    """Linear interpolation of every control onto ``new_n`` nodes over the same horizon."""
    if new_n < schedule.n_steps:
        raise ValueError("resampling can only refine the grid")
    old_t = schedule.node_times()
    new_t = node_times(schedule.t_total, new_n)
    if schedule.n_steps == 1:
        values = np.repeat(schedule.values, new_n, axis=0)
    else:
        values = np.column_stack([np.interp(new_t, old_t, col) for col in schedule.values.T])
    return ControlSchedule(values, schedule.t_total, schedule.bounds)


def save_schedule_csv(schedule: ControlSchedule, path) -> None:
    path = Path(path)
    header = ["t"] + [f"eps_{k + 1}" for k in range(schedule.n_controls)]
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t, row in zip(schedule.node_times(), schedule.values):
            writer.writerow([f"{t:.17g}"] + [f"{x:.17g}" for x in row])


def load_schedule_csv(path, t_total: float | None = None, bounds=None) -> ControlSchedule:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if not header or header[0] != "t" or any(h != f"eps_{k}" for k, h in enumerate(header[1:], 1)):
            raise ValueError(f"unexpected schedule header {header}")
        rows = np.array([[float(x) for x in row] for row in reader if row])
    if rows.size == 0:
        raise ValueError("schedule file has no rows")
    if t_total is None:
        if len(rows) < 2:
            raise ValueError("single-row schedule needs an explicit total time")
        t_total = float(rows[-1, 0])
    return ControlSchedule(rows[:, 1:], t_total, bounds)
