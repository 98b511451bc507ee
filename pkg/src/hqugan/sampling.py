"""Shot-level emulation of the measurements a quantum device would perform.

Estimators take a seeded :class:`ShotConfig`; ``exact=True`` skips sampling
and returns Born-rule means, which isolates estimator algebra from noise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .controls import ControlSchedule, HamiltonianModel
from .costs import CostSpec
from .qcore import DimensionError, Observable, QuantumState, basis_state, pauli


@dataclass
class ShotConfig:
    shots: int = 1000
    seed: int = 0
    epsilon_target: float | None = None
    exact: bool = False

    def __post_init__(self):
        if self.shots < 1:
            raise ValueError("shots must be at least 1")
        if self.epsilon_target is not None and self.epsilon_target <= 0:
            raise ValueError("epsilon_target must be positive")

    def shots_for(self, op_norm: float) -> int:
        """``ceil(||D||^2 / eps^2)`` when a precision target is set, else ``shots``."""
        if self.epsilon_target is None:
            return self.shots
        return max(1, math.ceil(op_norm**2 / self.epsilon_target**2 - 1e-9))

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class ShotEstimate:
    mean: float
    std_error: float
    shots_used: int

    def __post_init__(self):
        if self.std_error < 0:
            raise ValueError("standard error must be nonnegative")


def _matrix(d):
    return d.matrix if isinstance(d, Observable) else np.asarray(d, dtype=complex)


def born_distribution(state: QuantumState, d) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of ``D`` and the outcome probabilities for ``state``."""
    w, v = np.linalg.eigh(_matrix(d))
    if state.is_pure:
        p = np.abs(v.conj().T @ state.data) ** 2
    else:
        p = np.einsum("ak,ab,bk->k", v.conj(), state.data, v).real
    p = np.clip(p, 0.0, None)
    return w, p / p.sum()


def sample_expectation(state: QuantumState, d, cfg: ShotConfig, rng: np.random.Generator | None = None) -> ShotEstimate:
    """Empirical mean of ``D`` over Born-sampled eigenvalue outcomes."""
    m = _matrix(d)
    if m.shape[0] != state.dim:
        raise DimensionError("observable and state differ in dimension")
    w, p = born_distribution(state, m)
    shots = cfg.shots_for(float(np.max(np.abs(w), initial=0.0)))
    if cfg.exact:
        return ShotEstimate(float(w @ p), 0.0, 0)
    rng = rng if rng is not None else cfg.rng()
    counts = rng.multinomial(shots, p)
    mean = float(counts @ w) / shots
    if shots > 1:
        var = float(counts @ (w - mean) ** 2) / (shots - 1)
        se = math.sqrt(max(var, 0.0) / shots)
    else:
        se = 0.0
    return ShotEstimate(mean, se, shots)


def rotation(label: str, qubit: int, n: int, sign: int) -> np.ndarray:
    """``R(+-pi/2) = exp(-+ i pi/4 P)`` for the Pauli ``P`` on ``qubit``."""
    return expm(-1j * sign * np.pi / 4 * pauli(label, qubit, n))


def _shifted_states(model, schedule, initial, i, j):
    axis = model.control_axis[i]
    if axis is None:
        raise ValueError(f"control {i} is not a single-qubit Pauli; parameter-shift unavailable")
    if not 0 <= j < schedule.n_steps:
        raise IndexError(f"step {j} outside 0..{schedule.n_steps - 1}")
    unitaries = model.step_unitaries(schedule)
    head = np.eye(model.dim, dtype=complex)
    for u in unitaries[: j + 1]:
        head = u @ head
    tail = np.eye(model.dim, dtype=complex)
    for u in unitaries[j + 1:]:
        tail = u @ tail
    out = []
    for sign in (+1, -1):
        w = tail @ rotation(axis[0], axis[1], model.n_qubits, sign) @ head
        out.append(_evolve_state(w, initial))
    return _evolve_state(tail @ head, initial), out[0], out[1]


def _evolve_state(u, state: QuantumState) -> QuantumState:
    if state.is_pure:
        v = u @ state.data
        return QuantumState(v / np.linalg.norm(v))
    r = u @ state.data @ u.conj().T
    return QuantumState((r + r.conj().T) / 2, "mixed")


def sampled_gradient_entry(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    d,
    sigma: QuantumState,
    i: int,
    j: int,
    cfg: ShotConfig,
    spec: CostSpec | None = None,
    initial: QuantumState | None = None,
) -> ShotEstimate:
    """Rotation-insertion estimate of ``dC/d eps_i(t_j)``.

    Inserts ``R(+-pi/2)`` for control ``i``'s Pauli after step ``j`` and
    measures ``D`` on ``rho(T)``, ``sigma``, ``rho_+`` and ``rho_-``. The
    squared cost combines them as ``2 dt (e1 - e2)(e3 - e4)``, the signed
    cost as ``dt (e3 - e4)``.
    """
    spec = spec or CostSpec("abs_squared")
    if spec.kind not in ("trace_signed", "abs_squared"):
        raise ValueError("sampled gradients cover the single-pair costs")
    initial = initial or basis_state("1" * model.n_qubits)
    m = _matrix(d)
    rho_t, rho_p, rho_m = _shifted_states(model, schedule, initial, i, j)
    rng = cfg.rng()
    e3 = sample_expectation(rho_p, m, cfg, rng)
    e4 = sample_expectation(rho_m, m, cfg, rng)
    dt = schedule.dt
    shift = e3.mean - e4.mean
    shift_se = math.hypot(e3.std_error, e4.std_error)
    if not spec.squared:
        return ShotEstimate(dt * shift, dt * shift_se, e3.shots_used + e4.shots_used)
    e1 = sample_expectation(rho_t, m, cfg, rng)
    e2 = sample_expectation(sigma, m, cfg, rng)
    sep = e1.mean - e2.mean
    sep_se = math.hypot(e1.std_error, e2.std_error)
    se = 2 * dt * math.hypot(sep * shift_se, shift * sep_se)
    used = e1.shots_used + e2.shots_used + e3.shots_used + e4.shots_used
    return ShotEstimate(2 * dt * sep * shift, se, used)


def gradient_from_rotations_dense(model, schedule, d, sigma, i, j, spec=None, initial=None) -> float:
    """The same estimator with every expectation taken exactly by dense algebra."""
    spec = spec or CostSpec("abs_squared")
    initial = initial or basis_state("1" * model.n_qubits)
    m = _matrix(d)
    rho_t, rho_p, rho_m = _shifted_states(model, schedule, initial, i, j)
    shift = rho_p.expectation(m) - rho_m.expectation(m)
    if not spec.squared:
        return schedule.dt * shift
    return 2 * schedule.dt * (rho_t.expectation(m) - sigma.expectation(m)) * shift


def _check_unit(state: QuantumState, what: str) -> np.ndarray:
    if not state.is_pure:
        raise ValueError(f"{what} must be a pure state")
    if abs(np.linalg.norm(state.data) - 1) > 1e-10:
        raise ValueError(f"{what} is not normalised")
    return state.data


def hadamard_test_probability(chi, phi, p: np.ndarray, part: str = "imag") -> float:
    """Ancilla ``P(1)`` for the controlled-selection test.

    The ancilla goes through H, then S^dag for the imaginary part, selects
    ``|chi>`` or ``P|phi>`` and is read out after a final H, giving
    ``P(1) = (1 - Im<chi|P|phi>)/2`` (or ``(1 - Re<chi|P|phi>)/2`` without S^dag).
    """
    a = _check_unit(chi, "chi") if isinstance(chi, QuantumState) else np.asarray(chi)
    b = _check_unit(phi, "phi") if isinstance(phi, QuantumState) else np.asarray(phi)
    pb = np.asarray(p, dtype=complex) @ b
    phase = -1j if part == "imag" else 1.0
    # |1> amplitude after the final H: (|chi> - phase P|phi>) / 2
    amp = (a - phase * pb) / 2
    return float(min(max(np.vdot(amp, amp).real, 0.0), 1.0))


def hadamard_test_imag_overlap(chi: QuantumState, phi: QuantumState, p, cfg: ShotConfig,
                               rng: np.random.Generator | None = None, part: str = "imag") -> ShotEstimate:
    """Estimate ``Im<chi|P|phi>`` (or the real part) from ancilla samples."""
    if part not in ("imag", "real"):
        raise ValueError("part must be 'imag' or 'real'")
    p = np.asarray(p, dtype=complex)
    if not np.allclose(p @ p.conj().T, np.eye(p.shape[0]), atol=1e-10):
        raise ValueError("P must be unitary")
    if chi.dim != phi.dim or p.shape[0] != chi.dim:
        raise DimensionError("states and operator differ in dimension")
    prob1 = hadamard_test_probability(chi, phi, p, part)
    if cfg.exact:
        return ShotEstimate(1 - 2 * prob1, 0.0, 0)
    rng = rng if rng is not None else cfg.rng()
    shots = cfg.shots_for(1.0)
    ones = rng.binomial(shots, prob1)
    f = ones / shots
    se = 2 * math.sqrt(f * (1 - f) / shots) if shots > 1 else 0.0
    return ShotEstimate(1 - 2 * f, se, shots)


def imag_overlap_superposition(coeffs, chis: list[QuantumState], phi: QuantumState, p, cfg: ShotConfig) -> ShotEstimate:
    """``Im<chi|P|phi>`` for ``|chi> = sum_m c_m |chi_m>`` from real and imaginary tests.

    This is how a device would evaluate the discriminator's Krotov update,
    whose co-state is a combination of two propagated states.
    """
    rng = None if cfg.exact else cfg.rng()
    total, var, used = 0.0, 0.0, 0
    for c, chi in zip(coeffs, chis):
        re = hadamard_test_imag_overlap(chi, phi, p, cfg, rng, "real")
        im = hadamard_test_imag_overlap(chi, phi, p, cfg, rng, "imag")
        # Im(conj(c) z) = Re(c) Im(z) - Im(c) Re(z)
        c = complex(c)
        total += c.real * im.mean - c.imag * re.mean
        var += (c.real * im.std_error) ** 2 + (c.imag * re.std_error) ** 2
        used += re.shots_used + im.shots_used
    return ShotEstimate(total, math.sqrt(var), used)


@dataclass(frozen=True)
class ShotBudget:
    shots_generator: int
    shots_discriminator: int
    expectations_per_sweep: int
    copies_generator_per_round: int
    copies_discriminator_per_round: int
    copies_total: int
    trotter_steps: int | None

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def shot_budget_report(n: int, n_steps: int, rounds: int, epsilon: float, d_norm: float = 1.0,
                       t_total: float | None = None, delta: float | None = None) -> ShotBudget:
    """Copy counts for one gradient sweep per player per round.

    Conventions (all constants set to 1): 4 expectations per gradient entry,
    ``N`` entries per control, ``2n`` controls; ``ceil(||D||^2/eps^2)`` shots
    per generator expectation and ``ceil(1/eps^2)`` per discriminator one.
    The Trotter count is ``n T^2 / delta`` when ``T`` and ``delta`` are given.
    """
    if min(n, n_steps, epsilon) <= 0 or rounds < 0 or d_norm <= 0:
        raise ValueError("inputs must be positive")
    sg = math.ceil(d_norm**2 / epsilon**2 - 1e-9)
    sd = math.ceil(1 / epsilon**2 - 1e-9)
    per_sweep = 4 * n_steps * 2 * n
    gen, disc = per_sweep * sg, per_sweep * sd
    trotter = None
    if t_total is not None and delta is not None:
        if t_total <= 0 or delta <= 0:
            raise ValueError("T and delta must be positive")
        trotter = math.ceil(n * t_total**2 / delta - 1e-9)
    return ShotBudget(sg, sd, per_sweep, gen, disc, rounds * (gen + disc), trotter)


__all__ = [
    "ShotConfig", "ShotEstimate", "ShotBudget", "born_distribution", "sample_expectation",
    "rotation", "sampled_gradient_entry", "gradient_from_rotations_dense", "hadamard_test_probability",
    "hadamard_test_imag_overlap", "imag_overlap_superposition", "shot_budget_report",
]
