"""The adversarial game loop, cost schedules and mode-collapse tools.

One round = a generator optimisation against the current ``D`` followed by
a discriminator update. The generator warm-starts from its previous pulses;
in round 1 it plays against the fixed measurement ``D0``.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .controls import ControlSchedule, HamiltonianModel, build_ltfim, default_initial_schedule
from .costs import bell_state, choi_state, ensemble_of, linear_expectation_gradient, penalty_bandwidth, penalty_gradient
from .discriminators import (
    DiscriminatorKind,
    HelstromAnalytic,
    OptimalControl,
    default_d0,
    discriminator_round,
)
from .optimizers import (
    CrabAnsatz,
    GrapeConfig,
    KrotovConfig,
    KrotovObjective,
    crab_evaluate,
    crab_minimize,
    grape_minimize,
    krotov_minimize,
)
from .qcore import DimensionError, QuantumState, basis_state, fidelity, helstrom_operator, single_qubit

CONVERGED, BUDGET, MODE_COLLAPSE = "Converged", "Budget", "ModeCollapse"
COST_SCHEDULES = ("trace_signed", "abs_squared", "hybrid")


class GameError(RuntimeError):
    """Optimiser failure inside a round; the message carries the round index."""


@dataclass
class StateTarget:
    sigma: QuantumState


@dataclass
class UnitaryPairsTarget:
    pairs: list[tuple[QuantumState, QuantumState]]


@dataclass
class ChoiTarget:
    unitary: np.ndarray


@dataclass
class CrabSettings:
    n_terms: int = 20
    frequency_mode: str = "uniform_band"
    w_max: float | None = 5.0
    restarts: int = 1
    max_evals: int = 3000
    base_value: float = 1.0


@dataclass
class GameConfig:
    model: HamiltonianModel
    t_total: float
    target: StateTarget | UnitaryPairsTarget | ChoiTarget
    seed: int
    n_steps: int | None = None
    cost: str = "abs_squared"
    switch_round: int = 2
    penalty_alpha: float = 0.0
    generator: str = "grape"
    grape: GrapeConfig = field(default_factory=GrapeConfig)
    krotov: KrotovConfig = field(default_factory=lambda: KrotovConfig(max_iters=10))
    crab: CrabSettings = field(default_factory=CrabSettings)
    discriminator: DiscriminatorKind = field(default_factory=HelstromAnalytic)
    d0: np.ndarray | None = None
    fidelity_threshold: float = 0.999
    max_rounds: int = 50
    initial_style: str = "sinusoidal"
    initial_bits: str | None = None
    bounds: tuple[float, float] | None = None
    # optimal-control discriminators maximise |Tr(D delta)|^2 when True, the signed trace otherwise
    discriminator_squared: bool = False
    collapse_window: int | None = 6
    collapse_recurrence: float = 0.999

    def __post_init__(self):
        if self.n_steps is None:
            self.n_steps = int(round(10 * self.t_total))
        if self.t_total <= 0 or self.n_steps < 1:
            raise ValueError("need T > 0 and N >= 1")
        if not 0 < self.fidelity_threshold < 1:
            raise ValueError("fidelity threshold must lie in (0, 1)")
        if self.cost not in COST_SCHEDULES:
            raise ValueError(f"unknown cost schedule {self.cost!r}")
        if self.generator not in ("grape", "krotov", "crab"):
            raise ValueError(f"unknown generator optimiser {self.generator!r}")
        if self.generator != "grape" and self.penalty_alpha > 0:
            raise ValueError("the bandwidth penalty is only wired into the GRAPE generator")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be nonnegative")

    def cost_kind(self, round_index: int) -> str:
        """Cost used by the generator in 1-based ``round_index``."""
        if self.cost == "hybrid":
            return "trace_signed" if round_index <= self.switch_round else "abs_squared"
        return self.cost


@dataclass
class RoundRecord:
    round: int
    cost_kind: str
    generator_cost_before: float
    generator_cost_after: float
    generator_iterations: int
    discriminator_value: float | None
    fidelity: float
    recurrence: float | None
    schedule_file: str

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True)


@dataclass
class GameTrace:
    records: list[RoundRecord] = field(default_factory=list)
    status: str = BUDGET
    initial_fidelity: float = 0.0
    schedules: list[ControlSchedule] = field(default_factory=list)
    final_schedule: ControlSchedule | None = None
    wall_times: list[float] = field(default_factory=list)

    @property
    def rounds(self) -> int:
        return len(self.records)

    @property
    def fidelities(self) -> list[float]:
        return [r.fidelity for r in self.records]

    def jsonl(self) -> str:
        """Per-round records plus a closing status line; free of wall-clock data."""
        lines = [r.to_json() for r in self.records]
        lines.append(json.dumps({"status": self.status, "rounds": self.rounds,
                                 "initial_fidelity": self.initial_fidelity}, sort_keys=True))
        return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------- problem set-up


@dataclass
class _Slot:
    """One (generated, target) pair the discriminator has to separate."""

    vectors: np.ndarray
    weights: np.ndarray
    target: QuantumState


class _Problem:
    def __init__(self, cfg: GameConfig):
        self.cfg = cfg
        model, n = cfg.model, cfg.model.n_qubits
        bits = cfg.initial_bits or "1" * n
        tgt = cfg.target
        if isinstance(tgt, StateTarget):
            if tgt.sigma.dim != model.dim:
                raise DimensionError("target state does not match the model register")
            init = basis_state(bits)
            if init.dim != model.dim:
                raise DimensionError("initial bit string does not match the model register")
            self.gen_model = model
            self.slots = [_Slot(*ensemble_of(init), tgt.sigma)]
        elif isinstance(tgt, UnitaryPairsTarget):
            if not tgt.pairs:
                raise ValueError("need at least one (input, output) pair")
            for a, b in tgt.pairs:
                if a.dim != model.dim or b.dim != model.dim:
                    raise DimensionError("pair states must match the model register")
            self.gen_model = model
            self.slots = [_Slot(*ensemble_of(a), b) for a, b in tgt.pairs]
        elif isinstance(tgt, ChoiTarget):
            u = np.asarray(tgt.unitary, dtype=complex)
            if u.shape != (model.dim, model.dim):
                raise DimensionError("target unitary does not match the model register")
            self.gen_model = model.embedded(n)
            self.slots = [_Slot(*ensemble_of(bell_state(n)), choi_state(u))]
        else:
            raise TypeError(f"unknown target {type(tgt).__name__}")
        self.disc_n = self.gen_model.n_qubits

    def initial_schedule(self) -> ControlSchedule:
        cfg = self.cfg
        return default_initial_schedule(cfg.model, cfg.t_total, cfg.n_steps, cfg.initial_style, cfg.bounds)

    def d0(self) -> np.ndarray:
        cfg = self.cfg
        if isinstance(cfg.discriminator, OptimalControl):
            return cfg.discriminator.d0
        if cfg.d0 is not None:
            return np.asarray(cfg.d0, dtype=complex)
        return default_d0(self.disc_n)

    def final_states(self, schedule: ControlSchedule) -> list[QuantumState]:
        u = self.gen_model.total_unitary(schedule)
        out = []
        for slot in self.slots:
            if len(slot.weights) == 1:
                v = u @ slot.vectors[0]
                out.append(QuantumState(v / np.linalg.norm(v)))
            else:
                rho = sum(w * np.outer(u @ v, (u @ v).conj()) for v, w in zip(slot.vectors, slot.weights))
                out.append(QuantumState((rho + rho.conj().T) / 2, "mixed"))
        return out

    def fidelity(self, states: list[QuantumState]) -> float:
        return float(np.mean([fidelity(s, slot.target) for s, slot in zip(states, self.slots)]))

    def value_and_gradient(self, schedule, ds: list[np.ndarray], squared: bool, with_grad=True):
        cfg = self.cfg
        total = 0.0
        grad = np.zeros_like(schedule.values)
        unitaries = self.gen_model.step_unitaries(schedule)
        for slot, d in zip(self.slots, ds):
            expect, g = linear_expectation_gradient(self.gen_model, schedule, slot.vectors, slot.weights, d, unitaries)
            c = expect - slot.target.expectation(d)
            total += c * c if squared else c
            grad += 2 * c * g if squared else g
        total += penalty_bandwidth(schedule, cfg.penalty_alpha)
        if cfg.penalty_alpha > 0:
            grad += penalty_gradient(schedule, cfg.penalty_alpha)
        grad[0] = 0.0
        return total, grad

    def cost_floor(self, ds, squared: bool) -> float | None:
        """Best value the main term could reach; None when unknown."""
        if squared:
            return 0.0
        floor = 0.0
        for slot, d in zip(self.slots, ds):
            floor += np.linalg.eigvalsh(d)[0] - slot.target.expectation(d)
        return float(floor)


# --------------------------------------------------------------------------- rounds


def generator_round(cfg: GameConfig, schedule: ControlSchedule, ds, round_index: int = 1,
                    problem: _Problem | None = None, crab_state: dict | None = None):
    """Optimise the generator against fixed discriminators ``ds``.

    Returns ``(schedule', cost_before, cost_after, iterations)``.
    """
    problem = problem or _Problem(cfg)
    if not isinstance(ds, (list, tuple)):
        ds = [ds]
    ds = [d.matrix if hasattr(d, "matrix") else np.asarray(d, dtype=complex) for d in ds]
    squared = cfg.cost_kind(round_index) != "trace_signed"
    before, _ = problem.value_and_gradient(schedule, ds, squared)
    if all(np.max(np.abs(d)) <= 1e-12 for d in ds) and cfg.penalty_alpha == 0:
        return schedule, before, before, 0
    if cfg.generator == "grape":
        floor = problem.cost_floor(ds, squared)
        gcfg = GrapeConfig(**{**cfg.grape.__dict__, "pin_t0": True, "cost_target": floor})
        res = grape_minimize(problem.gen_model, schedule, lambda s: problem.value_and_gradient(s, ds, squared), gcfg)
        return res.schedule, before, res.cost, res.iterations
    if cfg.generator == "krotov":
        obj = _krotov_generator_objective(problem, ds, squared)
        res = krotov_minimize(problem.gen_model, schedule, obj, cfg.krotov)
        return res.schedule, before, res.costs[-1], res.iterations
    return _crab_generator(cfg, problem, schedule, ds, squared, before, crab_state)


def _krotov_generator_objective(problem: _Problem, ds, squared: bool) -> KrotovObjective:
    vecs, owners = [], []
    for k, slot in enumerate(problem.slots):
        for v, w in zip(slot.vectors, slot.weights):
            vecs.append(v)
            owners.append((k, w))
    offsets = [slot.target.expectation(d) for slot, d in zip(problem.slots, ds)]

    def separations(finals):
        c = np.array(offsets) * -1.0
        for f, (k, w) in zip(finals, owners):
            c[k] += w * np.vdot(f, ds[k] @ f).real
        return c

    def cost(finals):
        c = separations(finals)
        return float(np.sum(c * c) if squared else np.sum(c))

    def costate(finals):
        c = separations(finals)
        return [-(2 * c[k] if squared else 1.0) * w * (ds[k] @ f) for f, (k, w) in zip(finals, owners)]

    return KrotovObjective(vecs, cost, costate)


def _crab_generator(cfg, problem, schedule, ds, squared, before, crab_state):
    if cfg.model.n_controls != 1:
        raise ValueError("the CRAB generator drives a single control field")
    st = crab_state if crab_state is not None else {}
    t_grid = schedule.node_times()
    if "ansatz" not in st:
        rng = np.random.default_rng(cfg.seed)
        st["ansatz"] = CrabAnsatz.seeded(cfg.crab.n_terms, cfg.t_total, rng, cfg.crab.frequency_mode,
                                         cfg.crab.w_max, cfg.crab.base_value)

    def objective(ans):
        s = crab_evaluate(ans, t_grid, cfg.t_total)
        return problem.value_and_gradient(s, ds, squared)[0]

    res = crab_minimize(cfg.model, st["ansatz"], objective, cfg.t_total, cfg.crab.restarts,
                        cfg.crab.max_evals, seed=cfg.seed)
    st["ansatz"] = res.ansatz
    return crab_evaluate(res.ansatz, t_grid, cfg.t_total), before, res.cost, res.evaluations


def _discriminate(cfg: GameConfig, problem: _Problem, states, round_index: int):
    squared = cfg.discriminator_squared and cfg.cost_kind(round_index) != "trace_signed"
    ds, seps = [], []
    for st, slot in zip(states, problem.slots):
        r = discriminator_round(cfg.discriminator, st, slot.target, squared)
        ds.append(r.observable.matrix)
        seps.append(r.separation)
    return ds, float(np.sum(seps))


def _recurrence(history, states) -> float | None:
    if len(history) < 2:
        return None
    old = history[-2]
    return float(min(fidelity(a, b) for a, b in zip(old, states)))


def run_hqugan(config: GameConfig) -> GameTrace:
    """Alternate generator and discriminator rounds until the fidelity threshold or budget."""
    cfg = config
    problem = _Problem(cfg)
    schedule = problem.initial_schedule()
    states = problem.final_states(schedule)
    trace = GameTrace(initial_fidelity=problem.fidelity(states), schedules=[schedule])
    if trace.initial_fidelity > cfg.fidelity_threshold:
        trace.status, trace.final_schedule = CONVERGED, schedule
        return trace
    ds = [problem.d0()] * len(problem.slots)
    history: list[list[QuantumState]] = []
    crab_state: dict = {}
    for k in range(1, cfg.max_rounds + 1):
        t0 = time.perf_counter()
        try:
            schedule, before, after, iters = generator_round(cfg, schedule, ds, k, problem, crab_state)
        except Exception as exc:  # keep the round index in the diagnostic
            raise GameError(f"generator failed in round {k}: {exc}") from exc
        states = problem.final_states(schedule)
        fid = problem.fidelity(states)
        rec = RoundRecord(k, cfg.cost_kind(k), float(before), float(after), int(iters), None, fid,
                          _recurrence(history, states), f"schedule_round_{k}.csv")
        history.append(states)
        trace.records.append(rec)
        trace.schedules.append(schedule)
        if fid > cfg.fidelity_threshold:
            trace.status = CONVERGED
            trace.wall_times.append(time.perf_counter() - t0)
            break
        try:
            ds, rec.discriminator_value = _discriminate(cfg, problem, states, k + 1)
        except Exception as exc:
            raise GameError(f"discriminator failed in round {k}: {exc}") from exc
        trace.wall_times.append(time.perf_counter() - t0)
        if cfg.collapse_window and detect_mode_collapse(trace, cfg.collapse_window,
                                                        cfg.fidelity_threshold, cfg.collapse_recurrence):
            trace.status = MODE_COLLAPSE
            break
    trace.final_schedule = schedule
    return trace


def run_unitary_learning(config: GameConfig) -> GameTrace:
    if not isinstance(config.target, (UnitaryPairsTarget, ChoiTarget)):
        raise ValueError("unitary learning needs a pairs or Choi target")
    return run_hqugan(config)


def detect_mode_collapse(trace: GameTrace, window: int = 6, threshold: float = 0.999,
                         recurrence: float = 0.999, progress_tol: float = 1e-3) -> bool:
    """Period-2 recurrence below the fidelity threshold over the last ``window`` rounds.

    Every round in the window must nearly repeat the state two rounds back,
    and the net fidelity gain across the window must be at most
    ``progress_tol``. The gain compares two-round means, which cancels the
    period-2 jitter of a cycle but still spots a slowly converging game.
    """
    recs = trace.records
    if window < 1 or len(recs) < window + 2:
        return False
    for r in recs[-window:]:
        if r.fidelity > threshold or r.recurrence is None or r.recurrence <= recurrence:
            return False
    before = recs[-window - 2:-window]
    gain = np.mean([r.fidelity for r in recs[-2:]]) - np.mean([r.fidelity for r in before])
    return bool(gain <= progress_tol)


# --------------------------------------------------------------------------- hybrid two-round oracle


def exact_generator_state(d: np.ndarray) -> QuantumState:
    """Idealised generator for the signed cost: the lowest eigenvector of ``D``."""
    w, v = np.linalg.eigh(d)
    return QuantumState(v[:, 0] / np.linalg.norm(v[:, 0]))


# --------------------------------------------------------------------------- Bloch-sphere example

_PAULI_XYZ = [single_qubit("X"), single_qubit("Y"), single_qubit("Z")]


@dataclass(frozen=True)
class BlochState:
    a_x: float
    a_y: float
    a_z: float

    def __post_init__(self):
        if self.a_x**2 + self.a_y**2 + self.a_z**2 > 1 + 1e-12:
            raise ValueError("Bloch vector longer than 1")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a_x, self.a_y, self.a_z])

    @classmethod
    def of(cls, v) -> "BlochState":
        return cls(float(v[0]), float(v[1]), float(v[2]))

    def density(self) -> np.ndarray:
        return (np.eye(2) + sum(a * p for a, p in zip(self.vector, _PAULI_XYZ))) / 2

    def state(self) -> QuantumState:
        return QuantumState.from_density(self.density())


BLOCH_SIGMA = BlochState(np.cos(np.pi / 6), np.sin(np.pi / 6), 0.0)
BLOCH_RHO = BlochState(np.cos(np.pi / 6), -np.sin(np.pi / 6), 0.0)

Selector = Callable[[np.ndarray, float, np.ndarray], np.ndarray]


def closest_to_target_selector(normal, offset, target):
    """Solution-circle point nearest the target's Bloch vector."""
    centre = offset * normal
    r = np.sqrt(max(1 - offset**2, 0.0))
    inplane = target - (target @ normal) * normal
    nrm = np.linalg.norm(inplane)
    if nrm < 1e-15:
        inplane = np.cross(normal, [1.0, 0.0, 0.0])
        if np.linalg.norm(inplane) < 1e-12:
            inplane = np.cross(normal, [0.0, 1.0, 0.0])
        nrm = np.linalg.norm(inplane)
    return centre + r * inplane / nrm


def random_circle_selector(rng: np.random.Generator) -> Selector:
    def select(normal, offset, target):
        a = np.cross(normal, [1.0, 0.0, 0.0])
        if np.linalg.norm(a) < 1e-12:
            a = np.cross(normal, [0.0, 1.0, 0.0])
        a /= np.linalg.norm(a)
        b = np.cross(normal, a)
        phi = rng.uniform(0, 2 * np.pi)
        r = np.sqrt(max(1 - offset**2, 0.0))
        return offset * normal + r * (np.cos(phi) * a + np.sin(phi) * b)
    return select


def _bloch_of(m: np.ndarray) -> np.ndarray:
    return np.array([np.trace(p @ m).real for p in _PAULI_XYZ])


def run_bloch_mode_collapse(cost: str = "signed", selector: Selector | None = None, rounds: int = 6,
                            sigma: BlochState = BLOCH_SIGMA, rho: BlochState = BLOCH_RHO) -> list[BlochState]:
    """Single-qubit game with exact players; returns the generator's states per round.

    The discriminator plays the positive projector of ``sigma - rho``; with
    the signed cost the generator aligns with it, with the squared cost it
    picks a point on the circle ``Tr(D rho') = Tr(D sigma)`` via ``selector``.
    """
    if cost not in ("signed", "abs_squared"):
        raise ValueError(f"unknown cost {cost!r}")
    selector = selector or closest_to_target_selector
    s = sigma.vector
    cur = rho
    out: list[BlochState] = []
    for _ in range(rounds):
        h = helstrom_operator(sigma.state(), cur.state())
        if h.is_zero():
            break
        # positive projector of sigma - rho as a Bloch direction
        normal = _bloch_of(h.matrix)
        normal /= np.linalg.norm(normal)
        if cost == "signed":
            nxt = normal
        else:
            nxt = np.asarray(selector(normal, float(normal @ s), s), dtype=float)
            if abs(nxt @ normal - normal @ s) > 1e-9 or abs(np.linalg.norm(nxt) - 1) > 1e-9:
                raise ValueError("selector returned a point off the solution circle")
        cur = BlochState.of(np.clip(nxt, -1, 1) if np.linalg.norm(nxt) <= 1 else nxt / np.linalg.norm(nxt))
        out.append(cur)
    return out


def bloch_trace(states: list[BlochState], sigma: BlochState = BLOCH_SIGMA) -> GameTrace:
    """Wrap a Bloch sequence as a trace so the collapse detector can read it."""
    trace = GameTrace()
    qs = [s.state() for s in states]
    for k, q in enumerate(qs, start=1):  # recurrence compares with two rounds back
        rec = None if k < 3 else fidelity(q, qs[k - 3])
        trace.records.append(RoundRecord(k, "trace_signed", 0.0, 0.0, 0, None,
                                         fidelity(q, sigma.state()), rec, ""))
    return trace


def ghz_config(n: int, t_total: float, seed: int, **kw) -> GameConfig:
    """GHZ learning on the Ising chain with the default set-up."""
    from .qcore import ghz_state

    return GameConfig(build_ltfim(n), t_total, StateTarget(ghz_state(n)), seed, **kw)
