"""Optimal-control engines: GRAPE with limited-memory quasi-Newton steps,
Krotov's sequential update, and CRAB (randomised Fourier ansatz + simplex search).
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .controls import ControlSchedule, HamiltonianModel, backward_vectors, node_times
from .costs import CostValue

log = logging.getLogger(__name__)


class OptimizerError(RuntimeError):
    pass


# --------------------------------------------------------------------------- GRAPE


@dataclass
class GrapeConfig:
    max_iters: int = 50
    grad_tol: float = 1e-5
    cost_tol: float = 1e-5
    memory_pairs: int = 10
    pin_t0: bool = False
    # stop once cost <= cost_target + cost_tol; None disables the test
    cost_target: float | None = None
    armijo: float = 1e-4
    shrink: float = 0.5
    max_backtracks: int = 30
    # largest change of any single control sample in one step (None = uncapped)
    max_step: float | None = 1.0

    def __post_init__(self):
        if self.grad_tol <= 0 or self.cost_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 0 or self.memory_pairs < 1:
            raise ValueError("invalid iteration/memory budget")


@dataclass
class GrapeResult:
    schedule: ControlSchedule
    cost: float
    grad_norm: float
    iterations: int
    status: str
    log: list[dict] = field(default_factory=list)

    def jsonl(self) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.log)


def _two_loop(g: np.ndarray, pairs: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in reversed(pairs):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if pairs:
        s, y = pairs[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(pairs, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return q


def grape_minimize(
    model: HamiltonianModel | None,
    schedule: ControlSchedule,
    objective: Callable[[ControlSchedule], tuple[float, np.ndarray]],
    config: GrapeConfig | None = None,
) -> GrapeResult:
    """Minimise ``objective`` over every control sample at once.

    Two-loop L-BFGS directions with backtracking Armijo search; the trial
    step is capped so no sample moves by more than ``max_step``. Amplitude
    bounds are enforced by clipping after each step; an active clip drops the
    stored curvature pairs. ``model`` is only used for dimension checks.
    """
    cfg = config or GrapeConfig()
    if model is not None and schedule.n_controls != model.n_controls:
        raise ValueError("schedule does not match the model's controls")
    shape = schedule.values.shape
    frozen = np.zeros(shape, dtype=bool)
    if cfg.pin_t0:
        frozen[0] = True
    frozen = frozen.ravel()

    def evaluate(x):
        f, g = objective(schedule.with_values(x.reshape(shape)))
        g = np.asarray(g, dtype=float).ravel().copy()
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite cost or gradient (cost={f!r})")
        g[frozen] = 0.0
        return float(f), g

    def project(x):
        return x if schedule.bounds is None else np.clip(x, *schedule.bounds)

    x = project(schedule.values.ravel().copy())
    f, g = evaluate(x)
    pairs: list[tuple[np.ndarray, np.ndarray]] = []
    records = [{"iter": 0, "cost": f, "grad_norm": float(np.linalg.norm(g)), "step_len": 0.0}]
    status = "max_iters"
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gnorm = np.linalg.norm(g)
        if gnorm <= cfg.grad_tol:
            status = "grad_tol"
            it -= 1
            break
        if cfg.cost_target is not None and f <= cfg.cost_target + cfg.cost_tol:
            status = "cost_tol"
            it -= 1
            break
        accepted = False
        for attempt in range(2):
            d = -_two_loop(g, pairs)
            if not pairs:
                d *= min(1.0, 1.0 / gnorm)
            if g @ d >= 0:
                pairs.clear()
                d = -g * min(1.0, 1.0 / gnorm)
            if cfg.max_step is not None:
                peak = np.max(np.abs(d))
                if peak > cfg.max_step:
                    d *= cfg.max_step / peak
            step = 1.0
            for _ in range(cfg.max_backtracks):
                x_new = project(x + step * d)
                x_new[frozen] = x[frozen]
                f_new, g_new = evaluate(x_new)
                if f_new <= f + cfg.armijo * (g @ (x_new - x)) and f_new <= f:
                    accepted = True
                    break
                step *= cfg.shrink
            if accepted or not pairs:
                break
            pairs.clear()
        if not accepted:
            status = "line_search"
            it -= 1
            break
        s, y = x_new - x, g_new - g
        clipped = schedule.bounds is not None and not np.allclose(x_new, x + step * d)
        if clipped:
            pairs.clear()
        elif s @ y > 1e-12 * max(1.0, np.linalg.norm(s) * np.linalg.norm(y)):
            pairs.append((s, y))
            if len(pairs) > cfg.memory_pairs:
                pairs.pop(0)
        x, f_old, f, g = x_new, f, f_new, g_new
        records.append({"iter": it, "cost": f, "grad_norm": float(np.linalg.norm(g)),
                        "step_len": float(np.linalg.norm(s))})
        if f_old - f <= 1e-15 * max(1.0, abs(f)):
            status = "stalled"
            break
    else:
        if np.linalg.norm(g) <= cfg.grad_tol:
            status = "grad_tol"
    return GrapeResult(schedule.with_values(x.reshape(shape)), f, float(np.linalg.norm(g)), it, status, records)


# --------------------------------------------------------------------------- Krotov


@dataclass(frozen=True)
class ShapeFunction:
    """Flat-top update shape: sin^2 switch-on and switch-off ramps."""

    t_rise: float | None = None
    t_fall: float | None = None

    def resolved(self, t_total: float) -> tuple[float, float]:
        rise = t_total / 20 if self.t_rise is None else self.t_rise
        fall = t_total / 20 if self.t_fall is None else self.t_fall
        if rise <= 0 or fall <= 0 or rise + fall > t_total * (1 + 1e-12):
            raise ValueError("need 0 < t_rise, t_fall and t_rise + t_fall <= T")
        return rise, fall


def shape_value(shape: ShapeFunction, t: float, t_total: float) -> float:
    if t < 0 or t > t_total:
        raise ValueError(f"t={t} outside [0, {t_total}]")
    rise, fall = shape.resolved(t_total)
    if t == 0 or t == t_total:
        return 0.0
    if t <= rise:
        return float(np.sin(np.pi * t / (2 * rise)) ** 2)
    if t >= t_total - fall:
        return float(np.sin(np.pi * (t - t_total) / (2 * fall)) ** 2)
    return 1.0


def shape_samples(shape: ShapeFunction, t_total: float, n_steps: int) -> np.ndarray:
    return np.array([shape_value(shape, t, t_total) for t in node_times(t_total, n_steps)])


@dataclass
class KrotovConfig:
    lambda_: float | Sequence[float] = 1.0
    shape: ShapeFunction = field(default_factory=ShapeFunction)
    max_iters: int = 10
    g_b_enabled: bool = False
    # d g_b / d<phi| evaluated on (time index, state vector); required when g_b is enabled
    g_b_costate: Callable[[int, np.ndarray], np.ndarray] | None = None
    # double lambda and redo an iteration whose cost went up (off = plain Krotov)
    monotonic_guard: bool = False
    cost_tol: float | None = None

    def __post_init__(self):
        if np.any(np.asarray(self.lambda_, dtype=float) <= 0):
            raise ValueError("Krotov step widths must be positive")

    def lambdas(self, n_controls: int) -> np.ndarray:
        lam = np.broadcast_to(np.asarray(self.lambda_, dtype=float), (n_controls,)).copy()
        if np.any(lam <= 0):
            raise ValueError("Krotov step widths must be positive")
        return lam


@dataclass
class KrotovObjective:
    """Terminal functional over an ensemble of propagated vectors.

    ``cost(finals)`` returns ``J_T``; ``costate(finals)`` returns the list of
    ``-dJ_T/d<phi_m(T)|``.
    """

    initial: list[np.ndarray]
    cost: Callable[[list[np.ndarray]], float]
    costate: Callable[[list[np.ndarray]], list[np.ndarray]]


@dataclass
class KrotovWorkspace:
    chi_states: list[np.ndarray]
    phi_states: list[np.ndarray]


def _forward_all(unitaries, vecs):
    finals = []
    for v in vecs:
        for u in unitaries:
            v = u @ v
        finals.append(v)
    return finals


def krotov_iterate(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    objective: KrotovObjective,
    config: KrotovConfig,
    workspace_out: list | None = None,
) -> tuple[ControlSchedule, CostValue]:
    """One sequential Krotov sweep; returns the updated schedule and its ``J_T``."""
    lam = config.lambdas(schedule.n_controls)
    shape = shape_samples(config.shape, schedule.t_total, schedule.n_steps)
    dt = schedule.dt
    old_u = model.step_unitaries(schedule)
    finals = _forward_all(old_u, objective.initial)
    chi_t = objective.costate(finals)
    if config.g_b_enabled:
        if config.g_b_costate is None:
            raise ValueError("g_b enabled without a state-penalty co-state")
        chis = []
        for v0, c in zip(objective.initial, chi_t):
            fwd = [v0]
            for u in old_u:
                fwd.append(u @ fwd[-1])
            out = [None] * (len(old_u) + 1)
            out[-1] = c
            for j in range(len(old_u) - 1, -1, -1):
                src = out[j + 1] + dt * config.g_b_costate(j + 1, fwd[j + 1])
                out[j] = old_u[j].conj().T @ src
            chis.append(np.array(out))
    else:
        chis = [backward_vectors(old_u, c) for c in chi_t]

    values = schedule.values.copy()
    ctrl = model.control_stack
    phis = [v.copy() for v in objective.initial]
    phi_log = [[p.copy()] for p in phis]
    for j in range(schedule.n_steps):
        overlap = np.zeros(schedule.n_controls)
        for chi, phi in zip(chis, phis):
            overlap += np.einsum("a,kab,b->k", chi[j].conj(), ctrl, phi).imag
        delta = shape[j] / lam * overlap
        if not np.all(np.isfinite(delta)):
            raise OptimizerError(f"non-finite Krotov update at step {j}")
        values[j] += delta
        if schedule.bounds is not None:
            values[j] = np.clip(values[j], *schedule.bounds)
        h = model.drift + np.tensordot(values[j], ctrl, axes=1)
        w, v = np.linalg.eigh(h)
        u = (v * np.exp(-1j * dt * w)) @ v.conj().T
        phis = [u @ p for p in phis]
        for store, p in zip(phi_log, phis):
            store.append(p)
    if workspace_out is not None:
        workspace_out.append(KrotovWorkspace([list(c) for c in chis], phi_log))
    new_schedule = schedule.with_values(values)
    return new_schedule, CostValue.of(float(objective.cost(phis)))


@dataclass
class KrotovResult:
    schedule: ControlSchedule
    costs: list[float]
    iterations: int
    status: str
    lambdas: np.ndarray


def krotov_minimize(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    objective: KrotovObjective,
    config: KrotovConfig,
) -> KrotovResult:
    """Repeated Krotov sweeps; ``costs[0]`` is the guess cost."""
    u = model.step_unitaries(schedule)
    costs = [float(objective.cost(_forward_all(u, objective.initial)))]
    cfg = replace(config)
    status = "max_iters"
    it = 0
    for it in range(1, config.max_iters + 1):
        if cfg.cost_tol is not None and costs[-1] <= cfg.cost_tol:
            status = "cost_tol"
            it -= 1
            break
        new, val = krotov_iterate(model, schedule, objective, cfg)
        retries = 0
        while cfg.monotonic_guard and val.total > costs[-1] + 1e-12 and retries < 20:
            cfg = replace(cfg, lambda_=cfg.lambdas(schedule.n_controls) * 2)
            new, val = krotov_iterate(model, schedule, objective, cfg)
            retries += 1
        schedule = new
        costs.append(val.total)
    return KrotovResult(schedule, costs, it, status, cfg.lambdas(schedule.n_controls))


# --------------------------------------------------------------------------- CRAB

FREQUENCY_MODES = ("harmonic_jitter", "uniform_band")


@dataclass
class CrabAnsatz:
    """``eps(t) = base + sum_n A_n sin(w_n t) + B_n cos(w_n t)``, clipped to +-bound."""

    frequencies: np.ndarray
    coeff_sin: np.ndarray
    coeff_cos: np.ndarray
    base_value: float = 1.0
    frequency_mode: str = "uniform_band"
    w_max: float | None = None
    amplitude_bound: float = 2.0

    def __post_init__(self):
        self.frequencies = np.asarray(self.frequencies, dtype=float)
        self.coeff_sin = np.asarray(self.coeff_sin, dtype=float)
        self.coeff_cos = np.asarray(self.coeff_cos, dtype=float)
        m = len(self.frequencies)
        if m < 1 or self.coeff_sin.shape != (m,) or self.coeff_cos.shape != (m,):
            raise ValueError("need M >= 1 frequencies with matching coefficient arrays")
        if np.any(self.frequencies < 0):
            raise ValueError("frequencies must be nonnegative")
        if self.frequency_mode not in FREQUENCY_MODES:
            raise ValueError(f"unknown frequency mode {self.frequency_mode!r}")

    @property
    def n_terms(self) -> int:
        return len(self.frequencies)

    @property
    def parameters(self) -> np.ndarray:
        return np.concatenate([self.coeff_sin, self.coeff_cos])

    def with_parameters(self, p) -> "CrabAnsatz":
        m = self.n_terms
        return replace(self, coeff_sin=np.array(p[:m]), coeff_cos=np.array(p[m:]))

    @classmethod
    def seeded(cls, n_terms: int, t_total: float, rng: np.random.Generator,
               frequency_mode: str = "uniform_band", w_max: float | None = None,
               base_value: float = 1.0, amplitude_bound: float = 2.0) -> "CrabAnsatz":
        freqs = draw_frequencies(n_terms, t_total, rng, frequency_mode, w_max)
        zeros = np.zeros(n_terms)
        return cls(freqs, zeros, zeros.copy(), base_value, frequency_mode, w_max, amplitude_bound)


def draw_frequencies(n_terms: int, t_total: float, rng: np.random.Generator,
                     mode: str = "uniform_band", w_max: float | None = None) -> np.ndarray:
    if mode == "harmonic_jitter":
        r = rng.uniform(-0.5, 0.5, n_terms)
        return (np.arange(1, n_terms + 1) + r) * np.pi / t_total
    if mode == "uniform_band":
        if w_max is None or w_max <= 0:
            raise ValueError("uniform_band needs a positive w_max")
        return rng.uniform(0.0, w_max, n_terms)
    raise ValueError(f"unknown frequency mode {mode!r}")


def crab_evaluate(ansatz: CrabAnsatz, t_grid, t_total: float | None = None) -> ControlSchedule:
    """Sample the ansatz on ``t_grid`` (the schedule's node times) as a one-control schedule."""
    t = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be sorted")
    if t_total is None:
        t_total = float(t[-1])
    phase = np.outer(t, ansatz.frequencies)
    eps = ansatz.base_value + np.sin(phase) @ ansatz.coeff_sin + np.cos(phase) @ ansatz.coeff_cos
    bound = ansatz.amplitude_bound
    return ControlSchedule(np.clip(eps, -bound, bound)[:, None], t_total)


@dataclass
class CrabResult:
    ansatz: CrabAnsatz
    cost: float
    restart_costs: list[float]
    evaluations: int


def crab_minimize(
    model: HamiltonianModel | None,
    ansatz_seed: CrabAnsatz,
    objective: Callable[[CrabAnsatz], float],
    t_total: float,
    restarts: int = 1,
    max_evals: int = 3000,
    seed: int = 0,
    initial_step: float = 0.1,
) -> CrabResult:
    """Nelder-Mead over the Fourier coefficients, redrawing frequencies each restart.

    The first restart keeps the seed ansatz's frequencies. ``model`` is
    accepted for symmetry with the other engines; the objective closes over it.
    """
    if max_evals < 1:
        raise ValueError("max_evals must be at least 1")
    best: CrabAnsatz | None = None
    best_cost = np.inf
    restart_costs = []
    total_evals = 0
    for r in range(max(1, restarts)):
        if r == 0:
            start = ansatz_seed
        else:
            # keyed per restart so no draw can coincide with a seed ansatz drawn from default_rng(seed)
            rng = np.random.default_rng([seed, r])
            freqs = draw_frequencies(ansatz_seed.n_terms, t_total, rng, ansatz_seed.frequency_mode, ansatz_seed.w_max)
            start = replace(ansatz_seed, frequencies=freqs)
        p0 = start.parameters
        simplex = np.vstack([p0] + [p0 + initial_step * e for e in np.eye(len(p0))])

        def fun(p, start=start):
            return float(objective(start.with_parameters(p)))

        res = minimize(
            fun, p0, method="Nelder-Mead",
            options={"maxfev": max_evals, "maxiter": max_evals, "initial_simplex": simplex,
                     "xatol": 1e-10, "fatol": 1e-12, "adaptive": False},
        )
        total_evals += int(res.nfev)
        cand = start.with_parameters(res.x)
        restart_costs.append(float(res.fun))
        if res.fun < best_cost:
            best, best_cost = cand, float(res.fun)
    return CrabResult(best, best_cost, restart_costs, total_evals)
