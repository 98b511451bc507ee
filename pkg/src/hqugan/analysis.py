"""Bandwidth of optimised pulses, the time-bandwidth bound, and grid-refinement checks."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .controls import ControlSchedule, HamiltonianModel, node_times, propagate, resample_linear
from .optimizers import CrabAnsatz, CrabResult, crab_evaluate, crab_minimize
from .qcore import QuantumState, basis_state, fidelity


@dataclass
class SpectrumReport:
    """One-sided amplitude spectrum; frequencies in radians per time unit."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    w_max: float
    threshold: float = 0.05

    def summary(self) -> dict:
        return {"w_max": float(self.w_max), "w_max_over_2pi": float(self.w_max / (2 * np.pi)),
                "threshold": float(self.threshold)}


def amplitude_spectrum(values, t_total: float) -> tuple[np.ndarray, np.ndarray]:
    """Real FFT amplitudes normalised by ``N/2`` (DC and Nyquist by ``N``)."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    amps = np.abs(np.fft.rfft(x)) / (n / 2)
    amps[0] /= 2
    if n % 2 == 0:
        amps[-1] /= 2
    freqs = 2 * np.pi * np.arange(len(amps)) / t_total
    return freqs, amps


def fft_bandwidth(schedule: ControlSchedule, control: int = 0, threshold: float = 0.05) -> SpectrumReport:
    """Largest angular frequency ``2 pi k / T`` whose amplitude exceeds ``threshold``.

    The held sample values are transformed directly, without windowing.
    """
    if schedule.n_steps < 8:
        raise ValueError(f"need at least 8 samples for a spectrum, got {schedule.n_steps}")
    if not 0 <= control < schedule.n_controls:
        raise IndexError(f"control {control} out of range")
    freqs, amps = amplitude_spectrum(schedule.values[:, control], schedule.t_total)
    above = np.nonzero(amps > threshold)[0]
    w_max = float(freqs[above[-1]]) if len(above) else 0.0
    return SpectrumReport(freqs, amps, w_max, threshold)


def write_spectrum_csv(report: SpectrumReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq_rad_per_time", "amplitude"])
        for f, a in zip(report.frequencies, report.amplitudes):
            w.writerow([f"{f:.17g}", f"{a:.17g}"])


def write_spectrum_json(report: SpectrumReport, path) -> None:
    Path(path).write_text(json.dumps(report.summary(), sort_keys=True) + "\n")


@dataclass(frozen=True)
class SpeedLimitParams:
    d_dim: float
    delta_omega: float
    kappa_s: float
    epsilon: float

    def __post_init__(self):
        if self.d_dim <= 0 or self.delta_omega <= 0 or self.kappa_s <= 0:
            raise ValueError("dimension, bandwidth and bit depth must be positive")
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")


def speed_limit_min_time(params: SpeedLimitParams) -> float:
    """``T_min = D / (dOmega kappa_s) * log2(1/eps)``."""
    p = params
    return p.d_dim / (p.delta_omega * p.kappa_s) * math.log2(1.0 / p.epsilon)


def bit_depth(max_variation: float, min_variation: float) -> float:
    """``kappa_s = log2(1 + dgamma_max / dgamma_min)``; both variations must be given."""
    if max_variation <= 0 or min_variation <= 0:
        raise ValueError("variations must be positive")
    return math.log2(1 + max_variation / min_variation)


def refidelity_continuous(
    model: HamiltonianModel,
    schedule: ControlSchedule,
    target: QuantumState,
    fine_factor: int = 25,
    initial: QuantumState | None = None,
) -> tuple[float, float]:
    """Fidelity on the optimiser grid and on a ``fine_factor``-times finer interpolated grid."""
    if fine_factor < 2:
        raise ValueError("fine_factor must be at least 2")
    initial = initial or basis_state("1" * model.n_qubits)
    coarse, _ = propagate(model, schedule, initial)
    fine_sched = resample_linear(schedule, fine_factor * schedule.n_steps)
    fine, _ = propagate(model, fine_sched, initial)
    return fidelity(coarse, target), fidelity(fine, target)


def crab_speed_limit_run(
    model: HamiltonianModel,
    target: QuantumState,
    t_total: float,
    n_steps: int,
    w_max: float,
    n_terms: int = 20,
    restarts: int = 5,
    max_evals: int = 3000,
    seed: int = 0,
    initial: QuantumState | None = None,
) -> CrabResult:
    """Direct CRAB minimisation of ``1 - F`` with frequencies drawn from ``[0, w_max]``.

    ``restart_costs`` holds the best infidelity of every restart.
    """
    if model.n_controls != 1:
        raise ValueError("the CRAB ansatz drives a single control field")
    initial = initial or basis_state("1" * model.n_qubits)
    grid = node_times(t_total, n_steps)

    def infidelity(ansatz: CrabAnsatz) -> float:
        final, _ = propagate(model, crab_evaluate(ansatz, grid, t_total), initial)
        return 1.0 - fidelity(final, target)

    start = CrabAnsatz.seeded(n_terms, t_total, np.random.default_rng(seed), "uniform_band", w_max)
    return crab_minimize(model, start, infidelity, t_total, restarts, max_evals, seed)
