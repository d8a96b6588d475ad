"""Independent reference computations shared by the tests.

These oracles avoid the package's own projector and partial-trace code: they
build eigenvectors by diagonalization and evaluate Born probabilities as
explicit 8-dimensional traces.
"""

from __future__ import annotations

import numpy as np
import pytest

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def obs_matrix(n):
    return n[0] * SX + n[1] * SY + n[2] * SZ


def eig_projector(n, outcome):
    """|v><v| for the eigenvector of n.sigma with eigenvalue +1 (outcome 0) or -1 (outcome 1)."""
    vals, vecs = np.linalg.eigh(obs_matrix(np.asarray(n, dtype=float)))
    v = vecs[:, 1] if outcome == 0 else vecs[:, 0]  # eigh sorts ascending
    return np.outer(v, v.conj())


def born_oracle(rho, na, nb, nc, a, b, c):
    op = np.kron(np.kron(eig_projector(na, a), eig_projector(nb, b)), eig_projector(nc, c))
    return float(np.real(np.trace(op @ rho)))


def conditional_oracle(rho, na, nb, nc, a, b, c):
    num = born_oracle(rho, na, nb, nc, a, b, c)
    den = num + born_oracle(rho, na, nb, nc, a, b, 1 - c)
    return num / den


def ghz_vector(theta):
    v = np.zeros(8, dtype=complex)
    v[0], v[7] = np.cos(theta), np.sin(theta)
    return v


def eq13(theta):
    """Bloch vectors of the six measurements that maximize S."""
    s, c = np.sin(2 * theta), np.cos(2 * theta)
    return {
        "a0": (1.0, 0.0, 0.0),
        "a1": (0.0, 1.0, 0.0),
        "b0": (s, 0.0, c),
        "b1": (0.0, s, c),
        "c0": (1.0, 0.0, 0.0),
        "c1": (0.0, 1.0, 0.0),
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)
