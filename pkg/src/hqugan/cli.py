"""Experiment runner: ``hqugan run``, ``hqugan sweep`` and ``hqugan analyze``.

Configs are JSON objects. ``experiment``, ``seed`` and ``n_qubits`` are
required; every other field has a per-experiment default. Exit codes: 0
converged, 2 round budget exhausted, 3 mode collapse, 64 bad config, 1 any
other failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    SpeedLimitParams,
    crab_speed_limit_run,
    fft_bandwidth,
    refidelity_continuous,
    speed_limit_min_time,
    write_spectrum_csv,
    write_spectrum_json,
)
from .controls import build_ltfim, build_single_control_ltfim, load_schedule_csv, node_times, save_schedule_csv
from .discriminators import HelstromAnalytic, LipschitzW1, OptimalControl, default_d0, rotated_d0
from .game import (
    BUDGET,
    CONVERGED,
    MODE_COLLAPSE,
    ChoiTarget,
    CrabSettings,
    GameConfig,
    GameTrace,
    StateTarget,
    UnitaryPairsTarget,
    run_hqugan,
)
from .optimizers import GrapeConfig, KrotovConfig, crab_evaluate
from .qcore import QuantumState, basis_state, ghz_state

EXIT_OK, EXIT_RUNTIME, EXIT_BUDGET, EXIT_COLLAPSE, EXIT_CONFIG = 0, 1, 2, 3, 64
STATUS_EXIT = {CONVERGED: EXIT_OK, BUDGET: EXIT_BUDGET, MODE_COLLAPSE: EXIT_COLLAPSE}
RUNS_ENV = "HQUGAN_RUNS"

EXPERIMENTS = ("GhzGrape", "GhzKrotov", "States50", "ModeCollapse", "Hybrid", "Bandwidth",
               "CrabSpeedLimit", "UnitaryPairs", "UnitaryChoi", "Refidelity")
DISCRIMINATORS = ("helstrom", "optimal_control", "lipschitz")

# per-experiment defaults; "steps_per_time" sets N = steps_per_time * T when N is absent
_DEFAULTS = {
    "GhzGrape": {"T": 5.0, "generator": "grape", "discriminator": "optimal_control", "cost": "abs_squared"},
    "GhzKrotov": {"T": 5.0, "generator": "krotov", "discriminator": "helstrom", "cost": "abs_squared"},
    "States50": {"T": 5.0, "generator": "grape", "discriminator": "optimal_control", "cost": "abs_squared"},
    "ModeCollapse": {"T": 5.0, "generator": "grape", "discriminator": "helstrom", "cost": "trace_signed"},
    "Hybrid": {"T": 5.0, "generator": "grape", "discriminator": "helstrom", "cost": "hybrid"},
    "Bandwidth": {"T": 10.0, "generator": "grape", "discriminator": "helstrom", "cost": "abs_squared",
                  "initial_style": "constant", "max_rounds": 100, "steps_per_time": 100},
    "CrabSpeedLimit": {"T": 10.0, "generator": "crab", "discriminator": "helstrom", "cost": "abs_squared",
                       "initial_style": "constant"},
    "UnitaryPairs": {"T": 5.0, "generator": "grape", "discriminator": "optimal_control", "cost": "abs_squared",
                     "steps_per_time": 200, "d0_thetas": [0.7222]},
    "UnitaryChoi": {"T": 5.0, "generator": "grape", "discriminator": "optimal_control", "cost": "abs_squared",
                    "steps_per_time": 200, "d0_thetas": [0.9375, 1.9798]},
    "Refidelity": {"T": 5.0, "generator": "grape", "discriminator": "helstrom", "cost": "abs_squared",
                   "steps_per_time": 40},
}


class ConfigError(ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"field {field!r}: {message}")
        self.field = field


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    n_qubits: int
    T: float | None = None
    N: int | None = None
    J: float = 1.0
    cost: str | None = None
    discriminator: str | None = None
    disc_optimizer: str = "grape"
    generator: str | None = None
    max_rounds: int | None = None
    fidelity_threshold: float = 0.999
    initial_style: str | None = None
    bounds: list | None = None
    penalty_alpha: float = 0.0
    switch_round: int = 2
    grape_max_iters: int = 50
    grape_grad_tol: float = 1e-5
    grape_cost_tol: float = 1e-5
    grape_max_step: float = 1.0
    krotov_lambda: float = 10.0
    krotov_iters: int = 10
    d0_thetas: list | None = None
    k: int = 0
    fine_factor: int = 25
    crab_terms: int = 20
    crab_w_max: float = 5.0
    crab_restarts: int = 5
    crab_max_evals: int = 3000
    output_dir: str | None = None
    run_id: str | None = None

    def resolved(self) -> "ExperimentConfig":
        """Copy with every experiment-dependent default filled in."""
        d = dict(_DEFAULTS[self.experiment])
        per_t = d.pop("steps_per_time", 10)
        vals = {k: v for k, v in d.items() if getattr(self, k) is None}
        t = self.T if self.T is not None else d["T"]
        if self.N is None:
            vals["N"] = int(round(per_t * t))
        if self.max_rounds is None and "max_rounds" not in vals:
            vals["max_rounds"] = 50
        if self.initial_style is None and "initial_style" not in vals:
            vals["initial_style"] = "sinusoidal"
        return replace(self, **vals)

    def hash(self) -> str:
        """SHA-256 of the resolved config, ignoring where the run is written."""
        d = asdict(self.resolved())
        d.pop("output_dir")
        d.pop("run_id")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_INT_FIELDS = {"seed", "n_qubits", "N", "max_rounds", "switch_round", "grape_max_iters", "krotov_iters",
               "k", "fine_factor", "crab_terms", "crab_restarts", "crab_max_evals"}
_FLOAT_FIELDS = {"T", "J", "fidelity_threshold", "penalty_alpha", "grape_grad_tol", "grape_cost_tol",
                 "grape_max_step", "krotov_lambda", "crab_w_max"}
_STR_FIELDS = {"experiment", "cost", "discriminator", "disc_optimizer", "generator", "initial_style",
               "output_dir", "run_id"}
_NONNEGATIVE = {"seed", "k", "penalty_alpha"}
_REQUIRED = ("experiment", "seed", "n_qubits")
FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))
SWEEPABLE = tuple(n for n in FIELD_NAMES if n not in ("experiment", "output_dir", "run_id"))


def _check_type(name: str, value) -> None:
    if value is None:
        if name in _REQUIRED:
            raise ConfigError(name, "must not be null")
        return
    if name in _INT_FIELDS and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if name in _FLOAT_FIELDS and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if name in _STR_FIELDS and not isinstance(value, str):
        raise ConfigError(name, f"expected a string, got {value!r}")
    if name in ("bounds", "d0_thetas"):
        if not isinstance(value, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                  for x in value):
            raise ConfigError(name, "expected a list of numbers")
    if name in _INT_FIELDS | _FLOAT_FIELDS:
        if not math.isfinite(value):
            raise ConfigError(name, "must be finite")
        if name in _NONNEGATIVE:
            if value < 0:
                raise ConfigError(name, "must be nonnegative")
        elif value <= 0:
            raise ConfigError(name, "must be positive")


def config_from_dict(data) -> ExperimentConfig:
    """Validate a parsed JSON object; unknown keys and missing required keys are errors."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in data:
        if key not in FIELD_NAMES:
            raise ConfigError(key, "unknown field")
    for key in _REQUIRED:
        if key not in data:
            raise ConfigError(key, "missing required field")
    for key, value in data.items():
        _check_type(key, value)
    cfg = ExperimentConfig(**data)
    if cfg.experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}")
    if cfg.discriminator is not None and cfg.discriminator not in DISCRIMINATORS:
        raise ConfigError("discriminator", f"expected one of {DISCRIMINATORS}")
    if cfg.disc_optimizer not in ("grape", "krotov"):
        raise ConfigError("disc_optimizer", "expected 'grape' or 'krotov'")
    if not cfg.fidelity_threshold < 1:
        raise ConfigError("fidelity_threshold", "must be below 1")
    if cfg.bounds is not None and (len(cfg.bounds) != 2 or not cfg.bounds[0] < cfg.bounds[1]):
        raise ConfigError("bounds", "expected [low, high] with low < high")
    if cfg.experiment == "States50" and cfg.k >= 50:
        raise ConfigError("k", "state index must lie in 0..49")
    if cfg.experiment in ("UnitaryPairs", "UnitaryChoi") and cfg.n_qubits != 1:
        raise ConfigError("n_qubits", "the Hadamard experiments act on one qubit")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"not valid JSON: {exc}") from exc
    return config_from_dict(data)


# --------------------------------------------------------------------------- experiment assembly


def hadamard() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)


def hadamard_pairs() -> list[tuple[QuantumState, QuantumState]]:
    """``|0> -> |+>``, ``|1> -> |->``, ``|+> -> |0>``: enough to fix the relative phase."""
    zero, one = basis_state("0").data, basis_state("1").data
    plus, minus = (zero + one) / np.sqrt(2), (zero - one) / np.sqrt(2)
    return [(QuantumState(zero), QuantumState(plus)), (QuantumState(one), QuantumState(minus)),
            (QuantumState(plus), QuantumState(zero))]


def target_state(cfg: ExperimentConfig) -> QuantumState:
    if cfg.experiment == "States50":
        return ghz_state(cfg.n_qubits, 2 * np.pi * cfg.k / 50)
    return ghz_state(cfg.n_qubits)


def build_model(cfg: ExperimentConfig):
    if cfg.experiment in ("Bandwidth", "CrabSpeedLimit"):
        return build_single_control_ltfim(cfg.n_qubits, cfg.J)
    return build_ltfim(cfg.n_qubits, cfg.J)


def build_game(config: ExperimentConfig) -> GameConfig:
    """Translate a config into the game's own configuration object."""
    cfg = config.resolved()
    model = build_model(cfg)
    if cfg.experiment == "UnitaryPairs":
        target, disc_n = UnitaryPairsTarget(hadamard_pairs()), cfg.n_qubits
    elif cfg.experiment == "UnitaryChoi":
        target, disc_n = ChoiTarget(hadamard()), 2 * cfg.n_qubits
    else:
        target, disc_n = StateTarget(target_state(cfg)), cfg.n_qubits
    if cfg.d0_thetas is not None:
        if len(cfg.d0_thetas) != disc_n:
            raise ConfigError("d0_thetas", f"need {disc_n} angles for the discriminator register")
        d0 = rotated_d0(cfg.d0_thetas)
    else:
        d0 = default_d0(disc_n)
    grape = GrapeConfig(max_iters=cfg.grape_max_iters, grad_tol=cfg.grape_grad_tol,
                        cost_tol=cfg.grape_cost_tol, max_step=cfg.grape_max_step)
    if cfg.discriminator == "optimal_control":
        disc = OptimalControl(build_ltfim(disc_n, cfg.J), cfg.T, cfg.N, d0, cfg.disc_optimizer, grape=grape)
    elif cfg.discriminator == "lipschitz":
        disc = LipschitzW1()
    else:
        disc = HelstromAnalytic()
    crab = CrabSettings(n_terms=cfg.crab_terms, w_max=cfg.crab_w_max, restarts=1, max_evals=cfg.crab_max_evals)
    try:
        return GameConfig(
            model, cfg.T, target, cfg.seed, n_steps=cfg.N, cost=cfg.cost, switch_round=cfg.switch_round,
            penalty_alpha=cfg.penalty_alpha, generator=cfg.generator, grape=grape,
            krotov=KrotovConfig(lambda_=cfg.krotov_lambda, max_iters=cfg.krotov_iters), crab=crab,
            discriminator=disc, d0=d0, fidelity_threshold=cfg.fidelity_threshold, max_rounds=cfg.max_rounds,
            initial_style=cfg.initial_style, bounds=tuple(cfg.bounds) if cfg.bounds else None,
        )
    except ValueError as exc:
        raise ConfigError(_guess_field(str(exc)), str(exc)) from exc


def _guess_field(message: str) -> str:
    for name in ("cost", "generator", "initial_style", "penalty_alpha", "max_rounds", "fidelity_threshold"):
        if name.split("_")[0] in message:
            return name
    return "<config>"


# --------------------------------------------------------------------------- artifacts


def _fmt(x) -> str:
    return "nan" if x is None else f"{x:.17g}"


def _write_fidelity_curve(trace: GameTrace, path: Path) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "fidelity", "cost"])
        w.writerow([0, _fmt(trace.initial_fidelity), "nan"])
        for r in trace.records:
            w.writerow([r.round, _fmt(r.fidelity), _fmt(r.generator_cost_after)])


def run_root(cfg: ExperimentConfig) -> Path:
    return Path(cfg.output_dir or os.environ.get(RUNS_ENV) or "runs")


@dataclass
class RunOutcome:
    run_dir: Path
    status: str
    rounds: int
    final_fidelity: float
    exit_code: int


def _run_game(cfg: ExperimentConfig, out: Path, files: list[str]) -> tuple[str, int, float, dict]:
    trace = run_hqugan(build_game(cfg))
    (out / "trace.jsonl").write_text(trace.jsonl())
    files.append("trace.jsonl")
    for k, sched in enumerate(trace.schedules):
        name = f"schedule_round_{k}.csv"
        save_schedule_csv(sched, out / name)
        files.append(name)
    _write_fidelity_curve(trace, out / "fidelity_curve.csv")
    files.append("fidelity_curve.csv")
    final_fid = trace.records[-1].fidelity if trace.records else trace.initial_fidelity
    extra = {"final_schedule": f"schedule_round_{len(trace.schedules) - 1}.csv",
             "wall_times": trace.wall_times}
    if cfg.experiment == "Bandwidth":
        files.extend(_write_fft(trace.final_schedule, out))
    if cfg.experiment == "Refidelity":
        files.append(_write_refidelity(cfg, trace.final_schedule, out, cfg.fine_factor))
    return trace.status, trace.rounds, final_fid, extra


def _run_crab(cfg: ExperimentConfig, out: Path, files: list[str]) -> tuple[str, int, float, dict]:
    model = build_model(cfg)
    res = crab_speed_limit_run(model, target_state(cfg), cfg.T, cfg.N, cfg.crab_w_max, cfg.crab_terms,
                               cfg.crab_restarts, cfg.crab_max_evals, cfg.seed)
    lines = [json.dumps({"restart": r, "infidelity": c}, sort_keys=True) for r, c in enumerate(res.restart_costs)]
    best_fid = 1.0 - res.cost
    status = CONVERGED if best_fid > cfg.fidelity_threshold else BUDGET
    lines.append(json.dumps({"status": status, "best_infidelity": res.cost, "evaluations": res.evaluations,
                             "median_infidelity": float(np.median(res.restart_costs))}, sort_keys=True))
    (out / "trace.jsonl").write_text("\n".join(lines) + "\n")
    sched = crab_evaluate(res.ansatz, node_times(cfg.T, cfg.N), cfg.T)
    save_schedule_csv(sched, out / "schedule_best.csv")
    with (out / "fidelity_curve.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "fidelity", "cost"])
        for r, c in enumerate(res.restart_costs):
            w.writerow([r, _fmt(1.0 - c), _fmt(c)])
    files += ["trace.jsonl", "schedule_best.csv", "fidelity_curve.csv"]
    return status, len(res.restart_costs), best_fid, {"final_schedule": "schedule_best.csv"}


def _write_fft(schedule, out: Path) -> list[str]:
    report = fft_bandwidth(schedule)
    write_spectrum_csv(report, out / "spectrum.csv")
    write_spectrum_json(report, out / "spectrum.json")
    return ["spectrum.csv", "spectrum.json"]


def _write_refidelity(cfg: ExperimentConfig, schedule, out: Path, fine_factor: int) -> str:
    if cfg.experiment in ("UnitaryPairs", "UnitaryChoi"):
        raise ValueError("refidelity needs a state-learning run")
    coarse, fine = refidelity_continuous(build_model(cfg), schedule, target_state(cfg), fine_factor)
    doc = {"coarse_fidelity": coarse, "fine_fidelity": fine, "fine_factor": fine_factor,
           "n_steps": schedule.n_steps}
    (out / "refidelity.json").write_text(json.dumps(doc, sort_keys=True) + "\n")
    return "refidelity.json"


def _stamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_run(config: ExperimentConfig | str | os.PathLike) -> RunOutcome:
    """Run one experiment and write its artifacts; returns where and how it ended."""
    base = config if isinstance(config, ExperimentConfig) else load_config(config)
    cfg = base.resolved()
    digest = cfg.hash()
    out = run_root(cfg) / (cfg.run_id or f"{cfg.experiment}-{digest[:12]}")
    out.mkdir(parents=True, exist_ok=True)
    started = _stamp()
    (out / "config.json").write_text(json.dumps(asdict(cfg), sort_keys=True, indent=2) + "\n")
    files = ["config.json"]
    runner = _run_crab if cfg.experiment == "CrabSpeedLimit" else _run_game
    status, rounds, final_fid, extra = runner(cfg, out, files)
    manifest = {"config_hash": digest, "files": files, "tool_version": __version__, "started": started,
                "finished": _stamp(), "status": status, "rounds": rounds, "final_fidelity": final_fid, **extra}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return RunOutcome(out, status, rounds, final_fid, STATUS_EXIT[status])


# --------------------------------------------------------------------------- sweep


SWEEP_COLUMNS = ["value", "rounds_to_converge", "final_fidelity", "wall_time", "status"]


def _value_cell(value) -> str:
    return value if isinstance(value, str) else json.dumps(value)


def _sweep_instance(payload: tuple[dict, str, object]) -> list:
    data, axis, value = payload
    t0 = time.perf_counter()
    try:
        cfg = config_from_dict({**data, axis: value})
        cfg = cfg.resolved()
        if cfg.experiment == "CrabSpeedLimit":
            res = crab_speed_limit_run(build_model(cfg), target_state(cfg), cfg.T, cfg.N, cfg.crab_w_max,
                                       cfg.crab_terms, cfg.crab_restarts, cfg.crab_max_evals, cfg.seed)
            fid = 1.0 - res.cost
            status = CONVERGED if fid > cfg.fidelity_threshold else BUDGET
            rounds = len(res.restart_costs)
        else:
            trace = run_hqugan(build_game(cfg))
            status, rounds = trace.status, trace.rounds
            fid = trace.records[-1].fidelity if trace.records else trace.initial_fidelity
        conv = str(rounds) if status == CONVERGED else ""
        return [_value_cell(value), conv, _fmt(fid), _fmt(time.perf_counter() - t0), status]
    except Exception as exc:  # one failed instance must not stop the sweep
        msg = " ".join(f"{type(exc).__name__}: {exc}".split())
        return [_value_cell(value), "", "", _fmt(time.perf_counter() - t0), f"error: {msg}"]


def parse_values(text: str) -> list:
    """Comma-separated JSON scalars; bare words are kept as strings."""
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        try:
            out.append(json.loads(tok))
        except json.JSONDecodeError:
            out.append(tok)
    return out


def cmd_sweep(config_path, axis: str, values: list, workers: int = 1, out_path=None) -> Path:
    """Run one instance per value of ``axis`` and write the summary CSV."""
    if axis not in SWEEPABLE:
        raise ConfigError(axis, f"not a sweepable field; choose from {SWEEPABLE}")
    if workers < 1:
        raise ConfigError("workers", "must be at least 1")
    try:
        data = json.loads(Path(config_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError("<file>", str(exc)) from exc
    base = config_from_dict(data)
    if out_path is None:
        tag = hashlib.sha256(json.dumps([base.hash(), axis, values]).encode()).hexdigest()[:12]
        out_path = run_root(base) / f"sweep-{axis}-{tag}" / "summary.csv"
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    payloads = [(data, axis, v) for v in values]
    if workers == 1 or len(payloads) <= 1:
        rows = [_sweep_instance(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_instance, payloads))
    with out_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    return out_path


# --------------------------------------------------------------------------- analyze


def cmd_analyze(run_dir, kind: str, fine_factor: int | None = None, control: int = 0,
                speed: SpeedLimitParams | None = None) -> list[Path]:
    """Write fft, refidelity or speed-limit reports next to a run."""
    run_dir = Path(run_dir)
    if kind == "speedlimit":
        if speed is None:
            raise ConfigError("speedlimit", "needs --dim, --bandwidth, --bit-depth and --epsilon")
        run_dir.mkdir(parents=True, exist_ok=True)
        path = run_dir / "speedlimit.json"
        path.write_text(json.dumps(speed_limit_min_time(speed)) + "\n")
        return [path]
    if kind not in ("fft", "refidelity"):
        raise ConfigError("kind", f"unknown analysis {kind!r}")
    manifest_path, config_path = run_dir / "manifest.json", run_dir / "config.json"
    for p in (manifest_path, config_path):
        if not p.exists():
            raise FileNotFoundError(f"missing artifact {p}")
    manifest = json.loads(manifest_path.read_text())
    sched_path = run_dir / manifest.get("final_schedule", "")
    if not sched_path.is_file():
        raise FileNotFoundError(f"missing artifact {sched_path}")
    cfg = config_from_dict(json.loads(config_path.read_text())).resolved()
    schedule = load_schedule_csv(sched_path, cfg.T)
    if kind == "fft":
        report = fft_bandwidth(schedule, control)
        write_spectrum_csv(report, run_dir / "spectrum.csv")
        write_spectrum_json(report, run_dir / "spectrum.json")
        return [run_dir / "spectrum.csv", run_dir / "spectrum.json"]
    return [run_dir / _write_refidelity(cfg, schedule, run_dir, fine_factor or cfg.fine_factor)]


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hqugan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one experiment from a JSON config")
    r.add_argument("config")

    s = sub.add_parser("sweep", help="run a config once per value of one field")
    s.add_argument("config")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated values, e.g. 1,2,3")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=None, help="summary CSV path")

    a = sub.add_parser("analyze", help="post-process a run directory")
    a.add_argument("run_dir")
    a.add_argument("--kind", required=True, choices=("fft", "refidelity", "speedlimit"))
    a.add_argument("--fine-factor", type=int, default=None)
    a.add_argument("--control", type=int, default=0)
    a.add_argument("--dim", type=float, help="reachable-set dimension")
    a.add_argument("--bandwidth", type=float, help="control bandwidth")
    a.add_argument("--bit-depth", type=float)
    a.add_argument("--epsilon", type=float)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            outcome = cmd_run(args.config)
            print(f"{outcome.status}: {outcome.rounds} rounds, fidelity {outcome.final_fidelity:.6f} -> "
                  f"{outcome.run_dir}")
            return outcome.exit_code
        if args.command == "sweep":
            path = cmd_sweep(args.config, args.axis, parse_values(args.values), args.workers, args.out)
            print(path)
            return EXIT_OK
        speed = None
        if args.kind == "speedlimit":
            parts = (args.dim, args.bandwidth, args.bit_depth, args.epsilon)
            if any(x is None for x in parts):
                raise ConfigError("speedlimit", "needs --dim, --bandwidth, --bit-depth and --epsilon")
            try:
                speed = SpeedLimitParams(*parts)
            except ValueError as exc:
                raise ConfigError("speedlimit", str(exc)) from exc
        for path in cmd_analyze(args.run_dir, args.kind, args.fine_factor, args.control, speed):
            print(path)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
