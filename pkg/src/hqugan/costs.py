"""Cost functionals of the minimax game and their first-order control gradients.

Gradients use the adjoint form: one forward sweep for the states, one
backward sweep for the observable. The propagator derivative is taken to
first order in ``dt`` with the control operator inserted *after* the step,

    dU_j/d eps_k(t_j) ~ -i dt H_k U_j,

which is the ordering the rotation-insertion estimator in
:mod:`hqugan.sampling` reproduces exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controls import ControlSchedule, HamiltonianModel, backward_vectors, forward_vectors
from .qcore import DimensionError, Observable, QuantumState, n_qubits_of, real_part, trace_pair

COST_KINDS = ("trace_signed", "abs_squared", "multi_pair", "choi_abs_squared")


@dataclass(frozen=True, eq=False)
class CostSpec:
    kind: str = "abs_squared"
    penalty_alpha: float = 0.0
    pairs: tuple[tuple[QuantumState, QuantumState], ...] = ()
    pin_t0: bool = False

    def __post_init__(self):
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        if self.penalty_alpha < 0:
            raise ValueError("penalty weight must be nonnegative")
        if self.kind == "multi_pair" and not self.pairs:
            raise ValueError("multi_pair cost needs at least one (input, target) pair")

    @property
    def squared(self) -> bool:
        return self.kind != "trace_signed"


@dataclass(frozen=True)
class CostValue:
    total: float
    main_term: float
    penalty_term: float = 0.0

    @classmethod
    def of(cls, main: float, penalty: float = 0.0) -> "CostValue":
        return cls(main + penalty, main, penalty)


def cost_trace_signed(d: Observable, rho: QuantumState, sigma: QuantumState) -> float:
    """``Tr(D (rho - sigma))``."""
    return trace_pair(_matrix(d), rho, sigma)


def cost_abs_squared(d: Observable, rho: QuantumState, sigma: QuantumState) -> float:
    return cost_trace_signed(d, rho, sigma) ** 2


def penalty_bandwidth(schedule: ControlSchedule, alpha: float) -> float:
    """``alpha * sum |eps(t_j) - eps(t_(j-1))|^2`` over neighbours, no wraparound."""
    if alpha < 0:
        raise ValueError("penalty weight must be nonnegative")
    if alpha == 0 or schedule.n_steps < 2:
        return 0.0
    return float(alpha * np.sum(np.diff(schedule.values, axis=0) ** 2))


def penalty_gradient(schedule: ControlSchedule, alpha: float) -> np.ndarray:
    grad = np.zeros_like(schedule.values)
    if alpha == 0 or schedule.n_steps < 2:
        return grad
    diff = np.diff(schedule.values, axis=0)
    grad[1:] += 2 * alpha * diff
    grad[:-1] -= 2 * alpha * diff
    return grad


def _matrix(d) -> np.ndarray:
    return d.matrix if isinstance(d, Observable) else np.asarray(d, dtype=complex)


def ensemble_of(state: QuantumState) -> tuple[np.ndarray, np.ndarray]:
    """Write a state as ``sum_m w_m |v_m><v_m|``; pure states are a single term."""
    if state.is_pure:
        return state.data[None, :], np.ones(1)
    w, v = np.linalg.eigh(state.data)
    keep = np.abs(w) > 1e-14
    return v[:, keep].T.copy(), w[keep]


def difference_ensemble(rho: QuantumState, sigma: QuantumState) -> tuple[np.ndarray, np.ndarray]:
    """``rho - sigma`` as a signed ensemble of vectors."""
    a, wa = ensemble_of(rho)
    b, wb = ensemble_of(sigma)
    return np.concatenate([a, b]), np.concatenate([wa, -wb])


def linear_expectation_gradient(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    vectors: np.ndarray,
    weights: np.ndarray,
    observable: np.ndarray,
    unitaries: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Value and first-order gradient of ``sum_m w_m <v_m(T)| O |v_m(T)>``.

    ``grad[j, k] = 2 dt Im sum_m w_m <chi_m(t_(j+1))| H_k |v_m(t_(j+1))>``
    with co-states ``chi_m(T) = O v_m(T)`` propagated backwards.
    """
    if unitaries is None:
        unitaries = model.step_unitaries(schedule)
    value = 0.0
    grad = np.zeros((schedule.n_steps, schedule.n_controls))
    ctrl = model.control_stack
    for v0, w in zip(vectors, weights):
        fwd = forward_vectors(unitaries, v0)
        chi_t = observable @ fwd[-1]
        value += w * real_part(np.vdot(fwd[-1], chi_t))
        bwd = backward_vectors(unitaries, chi_t)
        h_psi = np.einsum("kab,jb->jka", ctrl, fwd[1:])
        grad += w * 2 * schedule.dt * np.einsum("ja,jka->jk", bwd[1:].conj(), h_psi).imag
    return value, grad


def _finish(spec: CostSpec, schedule: ControlSchedule, main: float, grad: np.ndarray):
    pen = penalty_bandwidth(schedule, spec.penalty_alpha)
    if spec.penalty_alpha > 0:
        grad = grad + penalty_gradient(schedule, spec.penalty_alpha)
    if spec.pin_t0:
        grad = grad.copy()
        grad[0] = 0.0
    return CostValue.of(main, pen), grad


def _resolve_choi(spec: CostSpec, model: HamiltonianModel, initial, d_dim: int):
    if spec.kind != "choi_abs_squared":
        return model, initial
    if d_dim == model.dim:
        return model, initial
    if d_dim != model.dim**2:
        raise DimensionError("Choi cost needs an observable on twice the generator's qubits")
    big = model.embedded(model.n_qubits)
    return big, (initial if initial is not None and initial.dim == big.dim else bell_state(model.n_qubits))


def value_and_gradient(
    spec: CostSpec,
    model: HamiltonianModel,
    schedule: ControlSchedule,
    d: Observable,
    sigma: QuantumState,
    initial: QuantumState | None,
) -> tuple[CostValue, np.ndarray]:
    """Generator cost for a single target and its gradient w.r.t. every control sample."""
    if spec.kind == "multi_pair":
        raise ValueError("use multipair_value_and_gradient for multi_pair costs")
    dm = _matrix(d)
    model, initial = _resolve_choi(spec, model, initial, dm.shape[0])
    if dm.shape[0] != model.dim or sigma.dim != model.dim or initial.dim != model.dim:
        raise DimensionError("observable, states and model must share a dimension")
    vecs, weights = ensemble_of(initial)
    expect_rho, g = linear_expectation_gradient(model, schedule, vecs, weights, dm)
    c = expect_rho - sigma.expectation(dm)
    if spec.squared:
        main, grad = c * c, 2 * c * g
    else:
        main, grad = c, g
    return _finish(spec, schedule, main, grad)


def gradient_first_order(model, schedule, d, sigma, spec, initial) -> np.ndarray:
    if spec.kind == "multi_pair":
        raise ValueError("first-order state gradient applies to trace_signed/abs_squared costs")
    return value_and_gradient(spec, model, schedule, d, sigma, initial)[1]


def evaluate_cost(spec, model, schedule, d, sigma, initial) -> CostValue:
    return value_and_gradient(spec, model, schedule, d, sigma, initial)[0]


def multipair_value_and_gradient(
    spec: CostSpec,
    model: HamiltonianModel,
    schedule: ControlSchedule,
    discriminators,
) -> tuple[CostValue, np.ndarray]:
    """``sum_k |Tr(D_k (U rho_k U^dag - sigma_k))|^2`` with one shared generator unitary."""
    if len(discriminators) != len(spec.pairs):
        raise ValueError(f"{len(spec.pairs)} pairs but {len(discriminators)} discriminators")
    unitaries = model.step_unitaries(schedule)
    main = 0.0
    grad = np.zeros_like(schedule.values)
    for (rho_in, sigma_out), d in zip(spec.pairs, discriminators):
        dm = _matrix(d)
        if rho_in.dim != model.dim or sigma_out.dim != model.dim or dm.shape[0] != model.dim:
            raise DimensionError("pair states and discriminators must match the model dimension")
        vecs, weights = ensemble_of(rho_in)
        expect, g = linear_expectation_gradient(model, schedule, vecs, weights, dm, unitaries)
        c = expect - sigma_out.expectation(dm)
        main += c * c
        grad += 2 * c * g
    return _finish(spec, schedule, main, grad)


def cost_multipair(spec, model, schedule, discriminators) -> float:
    return multipair_value_and_gradient(spec, model, schedule, discriminators)[0].main_term


def bell_state(n: int) -> QuantumState:
    """``|Omega> = 2^(-n/2) sum_b |b>|b>`` on ``2n`` qubits."""
    dim = 2**n
    vec = np.eye(dim, dtype=complex).reshape(-1) / np.sqrt(dim)
    return QuantumState(vec)


def choi_state(u: np.ndarray) -> QuantumState:
    """``(I (x) U)|Omega>`` for a unitary ``U`` on ``n`` qubits."""
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError("unitary must be square")
    n = n_qubits_of(u.shape[0])
    if not np.allclose(u.conj().T @ u, np.eye(u.shape[0]), atol=1e-10):
        raise ValueError("matrix is not unitary")
    # (I (x) U)|Omega> has amplitude U[c, b]/sqrt(d) on |b>|c>
    vec = u.T.reshape(-1) / np.sqrt(2**n)
    return QuantumState(vec / np.linalg.norm(vec))
