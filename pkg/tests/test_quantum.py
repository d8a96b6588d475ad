from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import SX, SZ, ghz_vector
from steercert.errors import OutOfRange, ZeroVector
from steercert.quantum import (
    Observable,
    TripartiteState,
    bloch_observable,
    born_distribution,
    gghz_state,
    is_density,
    partial_trace,
    pauli,
    product_state,
    projector,
    qubit_density,
    random_observable,
    random_state,
    tensor3,
)

unit_vectors = (
    st.tuples(*[st.floats(-1, 1, allow_nan=False)] * 3)
    .filter(lambda v: np.linalg.norm(v) > 1e-3)
    .map(lambda v: tuple(np.asarray(v) / np.linalg.norm(v)))
)


def test_pauli_z_and_x():
    z, x = pauli("z"), pauli("x")
    np.testing.assert_allclose(z.matrix, np.diag([1, -1]))
    np.testing.assert_allclose(z.bloch, [0, 0, 1])
    np.testing.assert_allclose(x.matrix, [[0, 1], [1, 0]])
    np.testing.assert_allclose(x.bloch, [1, 0, 0])


def test_pauli_y_squares_to_identity():
    y = pauli("y").matrix
    np.testing.assert_allclose(y @ y, np.eye(2), atol=1e-15)


def test_pauli_rejects_unknown_axis():
    with pytest.raises(ValueError):
        pauli("w")


def test_bloch_observable_axis_cases():
    np.testing.assert_allclose(bloch_observable((0, 0, 1)).matrix, SZ)
    n = (math.sin(math.pi / 2), 0.0, math.cos(math.pi / 2))
    np.testing.assert_allclose(bloch_observable(n).matrix, SX, atol=1e-15)


def test_bloch_observable_eigenvalues():
    n = (math.sin(0.2 * math.pi), 0.0, math.cos(0.2 * math.pi))
    vals = np.linalg.eigvalsh(bloch_observable(n).matrix)
    np.testing.assert_allclose(vals, [-1, 1], atol=1e-12)


@pytest.mark.parametrize("bad", [(0, 0, 0), (1e-15, 0, 0)])
def test_bloch_observable_zero_vector(bad):
    with pytest.raises(ZeroVector):
        bloch_observable(bad)


def test_bloch_observable_rejects_non_unit():
    with pytest.raises(ValueError):
        bloch_observable((0.5, 0, 0))


def test_observable_rejects_inconsistent_matrix():
    with pytest.raises(ValueError):
        Observable(SX, np.array([0.0, 0.0, 1.0]))


@settings(max_examples=200, deadline=None)
@given(unit_vectors)
def test_observable_is_involution(n):
    m = bloch_observable(n).matrix
    np.testing.assert_allclose(m @ m, np.eye(2), atol=1e-10)


def test_projector_examples():
    np.testing.assert_allclose(projector(pauli("z"), 0).matrix, np.diag([1, 0]))
    np.testing.assert_allclose(projector(pauli("x"), 0).matrix, 0.5 * np.ones((2, 2)))


@settings(max_examples=100, deadline=None)
@given(unit_vectors)
def test_projector_completeness_and_idempotence(n):
    m = bloch_observable(n)
    p0, p1 = projector(m, 0).matrix, projector(m, 1).matrix
    np.testing.assert_allclose(p0 + p1, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(p0 @ p0, p0, atol=1e-12)
    np.testing.assert_allclose(p0 @ p1, np.zeros((2, 2)), atol=1e-12)
    np.testing.assert_allclose(m.matrix @ p0, p0, atol=1e-12)


def test_projector_rejects_bad_outcome():
    with pytest.raises(ValueError):
        projector(pauli("z"), 2)


def test_ghz_symmetric_case():
    psi = gghz_state(math.pi / 4).pure_vector
    expected = np.zeros(8)
    expected[[0, 7]] = 1 / math.sqrt(2)
    np.testing.assert_allclose(psi, expected, atol=1e-15)


def test_ghz_amplitudes_and_norm():
    state = gghz_state(0.1 * math.pi)
    psi = state.pure_vector
    assert psi[0] == pytest.approx(math.cos(0.1 * math.pi))
    assert psi[7] == pytest.approx(math.sin(0.1 * math.pi))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(state.density, np.outer(ghz_vector(0.1 * math.pi), ghz_vector(0.1 * math.pi)))


@pytest.mark.parametrize("theta", [0.0, math.pi / 2, -0.1, 2.0, float("nan")])
def test_ghz_out_of_range(theta):
    with pytest.raises(OutOfRange):
        gghz_state(theta)


def test_tensor3_identity_and_eigenbasis():
    np.testing.assert_allclose(tensor3(np.eye(2), np.eye(2), np.eye(2)), np.eye(8))
    op = tensor3(SZ, np.eye(2), np.eye(2))
    e000, e111 = np.eye(8)[0], np.eye(8)[7]
    np.testing.assert_allclose(op @ e000, e000)
    np.testing.assert_allclose(op @ e111, -e111)


def test_ghz_xxx_correlation():
    rho = gghz_state(math.pi / 4).density
    assert np.real(np.trace(tensor3(SX, SX, SX) @ rho)) == pytest.approx(1.0, abs=1e-12)


def test_tensor3_associativity(rng):
    for _ in range(20):
        a, b, c = (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)) for _ in range(3))
        np.testing.assert_allclose(tensor3(a, b, c), np.kron(np.kron(a, b), c))
        np.testing.assert_allclose(tensor3(a, b, c), np.kron(a, np.kron(b, c)))


@pytest.mark.parametrize("theta", [0.1 * math.pi, 0.25 * math.pi, 0.4 * math.pi])
def test_ghz_single_qubit_marginals(theta):
    state = gghz_state(theta)
    expected = np.diag([math.cos(theta) ** 2, math.sin(theta) ** 2])
    for q in range(3):
        np.testing.assert_allclose(state.marginal([q]), expected, atol=1e-12)


def _loop_partial_trace(rho, keep):
    """Reference partial trace by explicit index loops."""
    t = rho.reshape((2,) * 6)
    d = 2 ** len(keep)
    out = np.zeros((d, d), dtype=complex)
    for idx in np.ndindex(*(2,) * 6):
        ket, bra = idx[:3], idx[3:]
        if any(ket[q] != bra[q] for q in range(3) if q not in keep):
            continue
        r = int("".join(str(ket[q]) for q in keep), 2)
        c = int("".join(str(bra[q]) for q in keep), 2)
        out[r, c] += t[idx]
    return out


@pytest.mark.parametrize("keep", [[0], [1], [2], [0, 1], [1, 2], [0, 2]])
def test_partial_trace_matches_loops(rng, keep):
    rho = random_state(rng).density
    np.testing.assert_allclose(partial_trace(rho, keep), _loop_partial_trace(rho, keep), atol=1e-14)


def test_product_state_and_validation():
    s = product_state([1, 0], [0, 1], [1, 1])
    assert is_density(s.density)
    assert s.density[2, 2] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        TripartiteState(np.eye(8))
    with pytest.raises(ValueError):
        TripartiteState(np.eye(4) / 4)
    with pytest.raises(ZeroVector):
        TripartiteState.from_vector(np.zeros(8))


def test_qubit_density():
    rho = qubit_density((0, 0, 1))
    np.testing.assert_allclose(rho, np.diag([1, 0]))
    with pytest.raises(OutOfRange):
        qubit_density((1, 1, 0))


def test_born_distribution_sums_to_one(rng):
    for _ in range(50):
        state = random_state(rng, rank=int(rng.integers(1, 9)))
        p = born_distribution(state, *(random_observable(rng) for _ in range(3)))
        assert p.sum() == pytest.approx(1.0, abs=1e-10)
        assert p.min() >= -1e-12 and p.max() <= 1 + 1e-12


def test_born_distribution_on_pauli_basis():
    # <XXX> = +1 for the GHZ state: only even numbers of -1 outcomes occur.
    p = born_distribution(gghz_state(math.pi / 4), pauli("x"), pauli("x"), pauli("x"))
    for a, b, c in np.ndindex(2, 2, 2):
        assert p[a, b, c] == pytest.approx(0.25 if (a + b + c) % 2 == 0 else 0.0, abs=1e-12)
