"""Finite-dimensional quantum mechanics for up to three qubits.

Conventions
-----------
- Computational basis |0> = (1, 0), |1> = (0, 1); polarization |0> <-> |H>, |1> <-> |V>.
- Qubit ordering A (x) B (x) C, basis index 4a + 2b + c.
- Outcome label 0 <-> eigenvalue +1, outcome 1 <-> eigenvalue -1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import OutOfRange, ZeroVector

Array = np.ndarray


@dataclass(frozen=True)
class Numerics:
    """Tolerances used by invariant checks."""

    hermitian: float = 1e-12
    trace: float = 1e-12
    psd: float = 1e-10
    unit_norm: float = 1e-9
    zero_vector: float = 1e-12
    denominator: float = 1e-12
    default: float = 1e-10


NUMERICS = Numerics()

I2 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


def _frozen(a: Array) -> Array:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def bloch_of(op: Array) -> Array:
    """Real Bloch components (Tr(op sigma_i) / 2) of a 2x2 operator."""
    op = np.asarray(op)
    return np.array([np.real(np.trace(op @ p)) / 2 for p in PAULIS])


@dataclass(frozen=True)
class Observable:
    """Dichotomic qubit observable n . sigma with eigenvalues +1 and -1."""

    matrix: Array = field(repr=False)
    bloch: Array

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = np.asarray(self.bloch, dtype=float)
        if m.shape != (2, 2) or n.shape != (3,):
            raise ValueError("Observable needs a 2x2 matrix and a 3-vector")
        if np.max(np.abs(m - m.conj().T)) > NUMERICS.hermitian:
            raise ValueError("Observable matrix is not Hermitian")
        if np.max(np.abs(m - sum(c * p for c, p in zip(n, PAULIS)))) > NUMERICS.hermitian:
            raise ValueError("Observable matrix and Bloch vector disagree")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "bloch", _frozen(n))

    def __neg__(self) -> Observable:
        return bloch_observable(-self.bloch)

    def distance(self, other: Observable) -> float:
        """Euclidean distance between Bloch vectors."""
        return float(np.linalg.norm(self.bloch - other.bloch))


@dataclass(frozen=True)
class Projector:
    matrix: Array = field(repr=False)
    outcome: int

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(np.asarray(self.matrix, dtype=complex)))


@dataclass(frozen=True)
class TripartiteState:
    """Three-qubit density operator, optionally with the pure vector it came from."""

    density: Array = field(repr=False)
    pure_vector: Array | None = field(default=None, repr=False)

    def __post_init__(self):
        rho = np.asarray(self.density, dtype=complex)
        if rho.shape != (8, 8):
            raise ValueError(f"expected an 8x8 density matrix, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > NUMERICS.hermitian:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > NUMERICS.trace:
            raise ValueError("density matrix does not have unit trace")
        if np.linalg.eigvalsh(rho).min() < -NUMERICS.psd:
            raise ValueError("density matrix is not positive semidefinite")
        object.__setattr__(self, "density", _frozen(rho))
        if self.pure_vector is not None:
            psi = np.asarray(self.pure_vector, dtype=complex)
            if np.max(np.abs(np.outer(psi, psi.conj()) - rho)) > NUMERICS.hermitian:
                raise ValueError("pure_vector does not match density")
            object.__setattr__(self, "pure_vector", _frozen(psi))

    @classmethod
    def from_vector(cls, psi: Sequence[complex]) -> TripartiteState:
        psi = np.asarray(psi, dtype=complex)
        norm = np.linalg.norm(psi)
        if norm < NUMERICS.zero_vector:
            raise ZeroVector("state vector has zero norm")
        psi = psi / norm
        return cls(np.outer(psi, psi.conj()), psi)

    @classmethod
    def maximally_mixed(cls) -> TripartiteState:
        return cls(np.eye(8, dtype=complex) / 8)

    def marginal(self, keep: Sequence[int]) -> Array:
        return partial_trace(self.density, keep)


def pauli(axis: Literal["x", "y", "z"]) -> Observable:
    try:
        idx = "xyz".index(axis)
    except ValueError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None
    n = np.zeros(3)
    n[idx] = 1.0
    return Observable(PAULIS[idx], n)


def bloch_observable(n: Sequence[float]) -> Observable:
    """Observable n . sigma for a unit Bloch direction n."""
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if norm < NUMERICS.zero_vector:
        raise ZeroVector("Bloch direction has zero length")
    if abs(norm - 1) > NUMERICS.unit_norm:
        raise ValueError(f"Bloch direction must be unit length (|n| = {norm})")
    n = n / norm
    return Observable(sum(c * p for c, p in zip(n, PAULIS)), n)


def projector(m: Observable, outcome: int) -> Projector:
    if outcome not in (0, 1):
        raise ValueError("outcome must be 0 or 1")
    sign = 1.0 if outcome == 0 else -1.0
    return Projector((I2 + sign * m.matrix) / 2, outcome)


def gghz_state(theta: float) -> TripartiteState:
    """cos(theta)|000> + sin(theta)|111> for 0 < theta < pi/2."""
    if not 0.0 < theta < np.pi / 2:
        raise OutOfRange(f"theta={theta} outside the open interval (0, pi/2)")
    psi = np.zeros(8, dtype=complex)
    psi[0] = np.cos(theta)
    psi[7] = np.sin(theta)
    return TripartiteState(np.outer(psi, psi.conj()), psi)


def product_state(*kets: Sequence[complex]) -> TripartiteState:
    """Product of three single-qubit kets."""
    if len(kets) != 3:
        raise ValueError("need exactly three single-qubit kets")
    return TripartiteState.from_vector(np.kron(np.kron(kets[0], kets[1]), kets[2]))


def tensor3(a: Array, b: Array, c: Array) -> Array:
    return np.kron(np.kron(a, b), c)


def partial_trace(rho: Array, keep: Sequence[int]) -> Array:
    """Reduce a three-qubit operator onto the qubits listed in ``keep``."""
    keep = sorted(keep)
    t = np.asarray(rho).reshape((2,) * 6)
    letters = "abc"
    ket = list(letters)
    bra = [ch.upper() if i in keep else ch for i, ch in enumerate(letters)]
    out = "".join(letters[i] for i in keep) + "".join(letters[i].upper() for i in keep)
    res = np.einsum("".join(ket) + "".join(bra) + "->" + out, t)
    d = 2 ** len(keep)
    return res.reshape(d, d)


def is_density(rho: Array, tol: float = NUMERICS.default) -> bool:
    rho = np.asarray(rho)
    return (
        np.max(np.abs(rho - rho.conj().T)) <= tol
        and abs(np.trace(rho) - 1) <= tol
        and np.linalg.eigvalsh((rho + rho.conj().T) / 2).min() >= -tol
    )


def qubit_density(bloch: Sequence[float]) -> Array:
    """Single-qubit density (I + r . sigma) / 2 for |r| <= 1."""
    r = np.asarray(bloch, dtype=float)
    if np.linalg.norm(r) > 1 + NUMERICS.unit_norm:
        raise OutOfRange("Bloch vector lies outside the unit ball")
    return (I2 + sum(c * p for c, p in zip(r, PAULIS))) / 2


def born_distribution(state: TripartiteState, a: Observable, b: Observable, c: Observable) -> Array:
    """Joint outcome probabilities as a (2, 2, 2) array indexed [a, b, c]."""
    out = np.empty((2, 2, 2))
    for x in (0, 1):
        px = projector(a, x).matrix
        for y in (0, 1):
            py = projector(b, y).matrix
            for z in (0, 1):
                op = tensor3(px, py, projector(c, z).matrix)
                out[x, y, z] = np.real(np.trace(op @ state.density))
    return out


def random_state(rng: np.random.Generator, rank: int = 8) -> TripartiteState:
    """Random three-qubit density matrix of the given rank (Ginibre ensemble)."""
    g = rng.normal(size=(8, rank)) + 1j * rng.normal(size=(8, rank))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    return TripartiteState((rho + rho.conj().T) / 2)


def random_observable(rng: np.random.Generator) -> Observable:
    """Observable with a uniformly (Haar) distributed Bloch direction."""
    v = rng.normal(size=3)
    return bloch_observable(v / np.linalg.norm(v))
