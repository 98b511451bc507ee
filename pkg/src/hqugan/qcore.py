"""Dense linear algebra and qubit-register primitives.

Everything here operates on plain complex numpy arrays. Qubit 0 is the
leftmost tensor factor, so ``pauli("Z", 0, 2)`` is ``Z (x) I``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

HERMITIAN_TOL = 1e-10
EIG_CUTOFF = 1e-10
ROUNDOFF_EIG = 1e-14  # eigenvalues below this are treated as exact zeros in matrix square roots

_PAULIS = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DimensionError(ValueError):
    """Operands live on registers of different size."""


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} has non-finite entries")


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return m.ndim == 2 and m.shape[0] == m.shape[1] and np.allclose(m, m.conj().T, atol=tol, rtol=0)


def require_hermitian(m: np.ndarray, what: str = "operator", tol: float = HERMITIAN_TOL) -> None:
    if not is_hermitian(m, tol):
        dev = np.max(np.abs(m - m.conj().T)) if m.ndim == 2 and m.shape[0] == m.shape[1] else float("nan")
        raise ValueError(f"{what} is not Hermitian (max deviation {dev:.3e})")


def n_qubits_of(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if dim < 2 or 2**n != dim:
        raise DimensionError(f"dimension {dim} is not a power of two")
    return n


def kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def pauli(label: str, qubit: int, n_qubits: int) -> np.ndarray:
    """Pauli ``label`` acting on ``qubit`` of an ``n_qubits`` register."""
    if label not in _PAULIS:
        raise ValueError(f"unknown Pauli label {label!r}")
    if n_qubits < 1 or not 0 <= qubit < n_qubits:
        raise IndexError(f"qubit {qubit} out of range for {n_qubits} qubits")
    factors = [_PAULIS["I"]] * n_qubits
    factors[qubit] = _PAULIS[label]
    return kron_all(factors)


def single_qubit(label: str) -> np.ndarray:
    return _PAULIS[label].copy()


def expm_hermitian_i(h: np.ndarray, scale: float) -> np.ndarray:
    """Return ``exp(-i * scale * h)`` for Hermitian ``h``.

    Uses the eigendecomposition of ``h``; also accepts a stack of
    matrices with shape ``(..., d, d)``.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim == 2:
        require_hermitian(h, "generator")
    elif not np.allclose(h, np.swapaxes(h.conj(), -1, -2), atol=HERMITIAN_TOL, rtol=0):
        raise ValueError("generator stack is not Hermitian")
    w, v = np.linalg.eigh(h)
    phases = np.exp(-1j * scale * w)
    return (v * phases[..., None, :]) @ np.swapaxes(v.conj(), -1, -2)


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A pure state vector (``kind="pure"``) or a density matrix (``kind="mixed"``)."""

    data: np.ndarray
    kind: str = "pure"

    def __post_init__(self):
        data = np.array(self.data, dtype=complex)
        object.__setattr__(self, "data", data)
        _check_finite(data, "state")
        if self.kind == "pure":
            if data.ndim != 1:
                raise ValueError("pure state must be a vector")
            n_qubits_of(data.shape[0])
            norm = np.linalg.norm(data)
            if abs(norm - 1.0) > 1e-10:
                raise ValueError(f"state vector norm {norm!r} differs from 1")
        elif self.kind == "mixed":
            n_qubits_of(data.shape[0])
            require_hermitian(data, "density matrix")
            tr = np.trace(data).real
            if abs(tr - 1.0) > 1e-10:
                raise ValueError(f"density matrix trace {tr!r} differs from 1")
            if np.linalg.eigvalsh(data).min() < -1e-10:
                raise ValueError("density matrix has negative eigenvalues")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")

    @classmethod
    def from_vector(cls, vec, normalize: bool = False) -> "QuantumState":
        vec = np.asarray(vec, dtype=complex)
        if normalize:
            vec = vec / np.linalg.norm(vec)
        return cls(vec, "pure")

    @classmethod
    def from_density(cls, rho) -> "QuantumState":
        return cls(np.asarray(rho, dtype=complex), "mixed")

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_qubits(self) -> int:
        return n_qubits_of(self.dim)

    @property
    def is_pure(self) -> bool:
        return self.kind == "pure"

    def density(self) -> np.ndarray:
        if self.is_pure:
            return np.outer(self.data, self.data.conj())
        return self.data

    def expectation(self, op: np.ndarray) -> float:
        if self.is_pure:
            val = np.vdot(self.data, op @ self.data)
        else:
            val = np.trace(op @ self.data)
        return real_part(val)


NORM_TAGS = ("schatten", "lipschitz", "unconstrained")


@dataclass(frozen=True, eq=False)
class Observable:
    """Hermitian measurement operator with the norm ball it was drawn from."""

    matrix: np.ndarray
    norm_tag: str = "unconstrained"
    p: float | None = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", m)
        _check_finite(m, "observable")
        require_hermitian(m, "observable")
        if self.norm_tag not in NORM_TAGS:
            raise ValueError(f"unknown norm tag {self.norm_tag!r}")
        if self.norm_tag == "schatten":
            if self.p is None:
                raise ValueError("schatten tag needs p")
            if schatten_norm(m, self.p) > 1 + 1e-8:
                raise ValueError("observable exceeds its Schatten-p unit ball")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def is_zero(self, tol: float = EIG_CUTOFF) -> bool:
        return bool(np.max(np.abs(self.matrix)) <= tol)


def real_part(z, tol: float = 1e-8) -> float:
    """Real part of a trace that should be real; a large imaginary residue is a bug."""
    z = complex(z)
    if abs(z.imag) > tol * max(1.0, abs(z.real)):
        raise ValueError(f"expected a real trace, got imaginary part {z.imag:.3e}")
    return z.real


def schatten_norm(m: np.ndarray, p: float) -> float:
    s = np.linalg.svd(m, compute_uv=False)
    if np.isinf(p):
        return float(s.max(initial=0.0))
    return float(np.sum(s**p) ** (1.0 / p))


def basis_state(bits: str) -> QuantumState:
    """Computational basis state, e.g. ``basis_state("111")``."""
    vec = np.zeros(2 ** len(bits), dtype=complex)
    vec[int(bits, 2)] = 1.0
    return QuantumState(vec)


def ghz_state(n: int, theta: float = np.pi / 4) -> QuantumState:
    """``cos(theta)|0..0> + sin(theta)|1..1>``; the default angle gives GHZ."""
    vec = np.zeros(2**n, dtype=complex)
    vec[0] = np.cos(theta)
    vec[-1] += np.sin(theta)
    return QuantumState(vec)


def random_pure_state(n: int, rng: np.random.Generator) -> QuantumState:
    vec = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return QuantumState.from_vector(vec, normalize=True)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + a.conj().T) / 2


def _check_same_dim(a: QuantumState, b: QuantumState) -> None:
    if a.dim != b.dim:
        raise DimensionError(f"state dimensions differ: {a.dim} vs {b.dim}")


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(m)
    # round-off eigenvalues would otherwise enter as sqrt(1e-17) ~ 3e-9
    w = np.where(w > ROUNDOFF_EIG, w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann fidelity; ``|<a|b>|^2`` when both states are pure."""
    _check_same_dim(a, b)
    if a.is_pure and b.is_pure:
        f = abs(np.vdot(a.data, b.data)) ** 2
    elif a.is_pure:
        f = b.expectation(np.outer(a.data, a.data.conj()))
    elif b.is_pure:
        f = a.expectation(np.outer(b.data, b.data.conj()))
    else:
        sa = _psd_sqrt(a.data)
        inner = sa @ b.data @ sa
        f = uhlmann_fidelity(a.data, b.data)
    return float(min(max(f, 0.0), 1.0))


def uhlmann_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann formula on raw density matrices, without the pure-state shortcut."""
    sr = _psd_sqrt(rho)
    inner = sr @ sigma @ sr
    ev = np.linalg.eigvalsh((inner + inner.conj().T) / 2)
    ev = np.where(ev > ROUNDOFF_EIG, ev, 0.0)
    return float(np.sum(np.sqrt(ev)) ** 2)


def helstrom_operator(rho: QuantumState, sigma: QuantumState, p: float = np.inf) -> Observable:
    """Optimal discriminating observable ``2^(-1/p) (P+ - P-)`` for ``rho - sigma``.

    ``P+``/``P-`` project onto the eigenspaces of ``rho - sigma`` whose
    eigenvalues lie above/below ``+-EIG_CUTOFF``. Identical inputs give the
    zero operator, which the game reads as equilibrium.
    """
    _check_same_dim(rho, sigma)
    if p < 1:
        raise ValueError("Schatten index p must be >= 1")
    delta = rho.density() - sigma.density()
    w, v = np.linalg.eigh((delta + delta.conj().T) / 2)
    signs = np.where(w > EIG_CUTOFF, 1.0, np.where(w < -EIG_CUTOFF, -1.0, 0.0))
    scale = 1.0 if np.isinf(p) else 2.0 ** (-1.0 / p)
    d = scale * (v * signs) @ v.conj().T
    if not np.any(signs):
        return Observable(np.zeros_like(delta), "schatten", p)
    # rank > 2 differences (mixed inputs) can leave the p-ball for finite p
    if not np.isinf(p) and schatten_norm(d, p) > 1:
        d = d / schatten_norm(d, p)
    return Observable(d, "schatten", p)


def trace_pair(d: np.ndarray, rho: QuantumState, sigma: QuantumState) -> float:
    """``Tr(D (rho - sigma))`` as a real number."""
    _check_same_dim(rho, sigma)
    if d.shape[0] != rho.dim:
        raise DimensionError("observable and states differ in dimension")
    return rho.expectation(d) - sigma.expectation(d)
