"""Discriminator strategies: each round produces the measurement operator ``D``.

* :class:`OptimalControl` steers a fixed measurement ``D0`` with its own
  control pulses, ``D = U^dag D0 U``, re-initialised every round.
* :class:`HelstromAnalytic` returns the optimal projector-difference operator.
* :class:`LipschitzW1` ascends inside a Lipschitz-type norm ball.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .controls import ControlSchedule, HamiltonianModel, default_initial_schedule
from .costs import difference_ensemble, linear_expectation_gradient
from .optimizers import (
    GrapeConfig,
    KrotovConfig,
    KrotovObjective,
    grape_minimize,
    krotov_minimize,
)
from .qcore import (
    DimensionError,
    Observable,
    QuantumState,
    helstrom_operator,
    kron_all,
    n_qubits_of,
    require_hermitian,
    single_qubit,
    trace_pair,
)


def default_d0(n: int) -> np.ndarray:
    """``Z (x) I^(n-1)``: a 1-local computational-basis measurement."""
    return kron_all([single_qubit("Z")] + [single_qubit("I")] * (n - 1))


def rotated_d0(thetas) -> np.ndarray:
    """``(x)_i (cos t_i X + sin t_i Z)``."""
    x, z = single_qubit("X"), single_qubit("Z")
    return kron_all([np.cos(t) * x + np.sin(t) * z for t in thetas])


def random_rotated_d0(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    thetas = rng.uniform(0.0, 2 * np.pi, n)
    return rotated_d0(thetas), thetas


@dataclass
class OptimalControl:
    model: HamiltonianModel
    t_total: float
    n_steps: int
    d0: np.ndarray
    optimizer: str = "grape"
    grape: GrapeConfig = field(default_factory=GrapeConfig)
    krotov: KrotovConfig = field(default_factory=lambda: KrotovConfig(max_iters=50))
    initial_style: str = "sinusoidal"
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        self.d0 = np.asarray(self.d0, dtype=complex)
        require_hermitian(self.d0, "D0")
        if self.d0.shape[0] != self.model.dim:
            raise DimensionError("D0 must act on the discriminator model's register")
        ev = np.linalg.eigvalsh(self.d0)
        if not np.allclose(np.abs(ev), 1.0, atol=1e-9):
            raise ValueError("D0 must have a +-1 spectrum")
        if self.optimizer not in ("grape", "krotov"):
            raise ValueError(f"unknown discriminator optimizer {self.optimizer!r}")

    def initial_schedule(self) -> ControlSchedule:
        return default_initial_schedule(self.model, self.t_total, self.n_steps, self.initial_style, self.bounds)


@dataclass
class HelstromAnalytic:
    p: float = np.inf


@dataclass
class LipschitzConfig:
    step_size: float = 0.1
    max_iters: int = 500
    surrogate_tol: float = 1e-8

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step size must be positive")


@dataclass
class LipschitzW1:
    config: LipschitzConfig = field(default_factory=LipschitzConfig)


DiscriminatorKind = OptimalControl | HelstromAnalytic | LipschitzW1


@dataclass
class DiscriminatorResult:
    observable: Observable
    separation: float
    schedule: ControlSchedule | None = None


def _max_separation(d0: np.ndarray, delta: np.ndarray) -> tuple[float, float]:
    """Largest and smallest ``Tr(D0 V delta V^dag)`` over unitaries ``V``."""
    a = np.sort(np.linalg.eigvalsh(d0))
    b = np.sort(np.linalg.eigvalsh(delta))
    return float(a @ b), float(a @ b[::-1])


def discriminator_round(
    kind: DiscriminatorKind,
    rho: QuantumState,
    sigma: QuantumState,
    squared: bool = True,
) -> DiscriminatorResult:
    """Best measurement for the current pair; ``separation = Tr(D (rho - sigma))``.

    ``squared`` selects which cost an optimal-control discriminator maximises:
    ``|Tr(D (rho - sigma))|^2`` or the signed trace.
    """
    if rho.dim != sigma.dim:
        raise DimensionError(f"state dimensions differ: {rho.dim} vs {sigma.dim}")
    if isinstance(kind, HelstromAnalytic):
        d = helstrom_operator(rho, sigma, kind.p)
        return DiscriminatorResult(d, trace_pair(d.matrix, rho, sigma))
    if isinstance(kind, LipschitzW1):
        d, val = lipschitz_ascent(rho, sigma, kind.config)
        return DiscriminatorResult(d, val)
    if isinstance(kind, OptimalControl):
        return _optimal_control_round(kind, rho, sigma, squared)
    raise TypeError(f"unknown discriminator kind {type(kind).__name__}")


def _optimal_control_round(kind: OptimalControl, rho, sigma, squared: bool) -> DiscriminatorResult:
    model, d0 = kind.model, kind.d0
    if rho.dim != model.dim:
        raise DimensionError("states must live on the discriminator model's register")
    vecs, weights = difference_ensemble(rho, sigma)
    schedule = kind.initial_schedule()
    if len(weights) == 0 or np.allclose(rho.density(), sigma.density(), atol=1e-14):
        u = model.total_unitary(schedule)
        return DiscriminatorResult(Observable(u.conj().T @ d0 @ u, "schatten", np.inf), 0.0, schedule)

    if kind.optimizer == "grape":
        hi, lo = _max_separation(d0, rho.density() - sigma.density())
        best = max(hi, -lo) ** 2 if squared else hi
        cfg = GrapeConfig(**{**kind.grape.__dict__, "cost_target": -best})

        def objective(s):
            c, g = linear_expectation_gradient(model, s, vecs, weights, d0)
            if squared:
                return -c * c, -2 * c * g
            return -c, -g

        schedule = grape_minimize(model, schedule, objective, cfg).schedule
    else:
        def sep(finals):
            return sum(w * np.vdot(f, d0 @ f).real for f, w in zip(finals, weights))

        def cost(finals):
            c = sep(finals)
            return -c * c if squared else -c

        def costate(finals):
            scale = 2 * sep(finals) if squared else 1.0
            return [scale * w * (d0 @ f) for f, w in zip(finals, weights)]

        obj = KrotovObjective(list(vecs), cost, costate)
        schedule = krotov_minimize(model, schedule, obj, kind.krotov).schedule

    u = model.total_unitary(schedule)
    dm = u.conj().T @ d0 @ u
    dm = (dm + dm.conj().T) / 2
    d = Observable(dm, "schatten", np.inf)
    return DiscriminatorResult(d, trace_pair(dm, rho, sigma), schedule)


# --------------------------------------------------------------------------- Lipschitz ball


def _remove_qubit(h: np.ndarray, i: int, n: int) -> np.ndarray:
    """``h - (I_i / 2) (x) Tr_i h`` with the identity reinserted at position ``i``."""
    a, b = 2**i, 2 ** (n - i - 1)
    t = h.reshape(a, 2, b, a, 2, b)
    reduced = np.einsum("xiyuiv->xyuv", t)
    back = np.einsum("xyuv,ij->xiyujv", reduced, np.eye(2) / 2)
    return h - back.reshape(h.shape)


def lipschitz_surrogate_norm(h) -> float:
    """``2 max_i || H - (I_i/2) (x) Tr_i H ||_inf``.

    An upper bound on the quantum Lipschitz constant; exact on one qubit.
    """
    m = h.matrix if isinstance(h, Observable) else np.asarray(h, dtype=complex)
    require_hermitian(m, "operator")
    n = n_qubits_of(m.shape[0])
    return float(2 * max(np.linalg.norm(_remove_qubit(m, i, n), 2) for i in range(n)))


def _surrogate_subgradient(m: np.ndarray, n: int) -> tuple[float, np.ndarray]:
    best, grad = -1.0, None
    for i in range(n):
        r = _remove_qubit(m, i, n)
        w, v = np.linalg.eigh((r + r.conj().T) / 2)
        k = int(np.argmax(np.abs(w)))
        if abs(w[k]) > best:
            top = np.outer(v[:, k], v[:, k].conj()) * np.sign(w[k])
            best, grad = abs(w[k]), 2 * _remove_qubit(top, i, n)
    return 2 * best, grad


def lipschitz_ascent(rho: QuantumState, sigma: QuantumState, config: LipschitzConfig | None = None):
    """Maximise ``Tr(D (rho - sigma))`` over Hermitian ``D`` with surrogate norm <= 1.

    The objective is linear, so ascent is run on the scale-free ratio
    ``Tr(D delta) / norm(D)`` with a normalised supergradient step; every
    iterate is rescaled onto the ball and the best feasible one is kept.
    """
    cfg = config or LipschitzConfig()
    if rho.dim != sigma.dim:
        raise DimensionError("state dimensions differ")
    n = n_qubits_of(rho.dim)
    delta = rho.density() - sigma.density()
    delta = (delta + delta.conj().T) / 2
    zero = Observable(np.zeros_like(delta), "lipschitz")
    if np.max(np.abs(delta)) < 1e-14:
        return zero, 0.0

    def feasible(m):
        nrm = lipschitz_surrogate_norm(m)
        return m / max(nrm, 1e-300) if nrm > cfg.surrogate_tol else None

    d = feasible(delta)
    best_d, best_val = d, float(np.real(np.trace(d @ delta)))
    for k in range(cfg.max_iters):
        nrm, gn = _surrogate_subgradient(d, n)
        val = np.real(np.trace(d @ delta))
        # supergradient of val / nrm at nrm = 1
        g = delta - val * gn
        g = (g + g.conj().T) / 2
        gnorm = np.linalg.norm(g)
        if gnorm < 1e-14:
            break
        cand = feasible(d + cfg.step_size / np.sqrt(k + 1) * g / gnorm)
        if cand is None:
            break
        d = cand
        val = float(np.real(np.trace(d @ delta)))
        if val > best_val:
            best_d, best_val = d, val
    if best_val <= 0:
        return zero, 0.0
    best_d = (best_d + best_d.conj().T) / 2
    return Observable(best_d, "lipschitz"), best_val
