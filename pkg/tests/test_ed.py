import math

import numpy as np
import pytest
import scipy.sparse as sp

from socmps.ed import (
    DenseHamiltonian,
    correlation_matrix,
    dense_hamiltonian,
    expectation,
    gamma_operator,
    lowest_spectrum,
    site_expectations,
    site_operator,
)
from socmps.mpo import SX, SZ, ModelParams

# lowest three eigenvalues at (0.8 pi, 0.75, 0.5), L=10, from dense diagonalization
REF_L10 = (-3.5934930895334367, -3.530047134920475, -3.4320786990737546)


def test_isotropic_two_site():
    h = dense_hamiltonian(ModelParams(0, 1, 0, 2))
    vals = [e for e, _ in lowest_spectrum(h, 4)]
    assert np.allclose(vals, [-0.25, -0.25, -0.25, 0.75])


def test_pure_dm_pair_is_symmetric():
    h = dense_hamiltonian(ModelParams(math.pi / 2, 0.5, 0, 2)).array
    vals = np.linalg.eigvalsh(h)
    assert np.allclose(vals, -vals[::-1])
    assert np.allclose(sorted(vals), [-1, 0, 0, 1])


def test_polarized_ground_states_are_degenerate():
    h = dense_hamiltonian(ModelParams(0.3 * math.pi, 1.25, 0, 6))
    (e0, v0), (e1, v1) = lowest_spectrum(h, 2)
    assert e0 == pytest.approx(-1.5, abs=1e-12)
    assert e1 == pytest.approx(-1.5, abs=1e-12)


def test_identity_input():
    vals = [e for e, _ in lowest_spectrum(np.eye(5), 5)]
    assert np.allclose(vals, 1)


def test_reference_spectrum_and_residuals():
    h = dense_hamiltonian(ModelParams(0.8 * math.pi, 0.75, 0.5, 10))
    pairs = lowest_spectrum(h, 3)
    assert [e for e, _ in pairs] == pytest.approx(REF_L10, abs=1e-10)
    vecs = np.array([v for _, v in pairs]).T
    assert np.allclose(vecs.conj().T @ vecs, np.eye(3), atol=1e-10)
    for e, v in pairs:
        assert np.linalg.norm(h.matrix @ v - e * v) < 1e-9


def test_krylov_path_agrees_with_dense():
    # force the iterative branch on a dense-sized problem
    h = dense_hamiltonian(ModelParams(0.8 * math.pi, 0.75, 0.5, 10))
    vals, _ = sp.linalg.eigsh(h.matrix, k=3, which="SA", tol=1e-13)
    assert sorted(vals) == pytest.approx(REF_L10, abs=1e-9)


def test_hermitian_and_size_cap():
    h = dense_hamiltonian(ModelParams(0.5 * math.pi, 0.75, 0.3, 8))
    assert abs(h.matrix - h.matrix.conj().T).max() < 1e-12
    assert h.dim == 256 and h.length == 8
    with pytest.raises(ValueError):
        dense_hamiltonian(ModelParams(0, 1, 0, 15))


def test_gauge_flatness_in_ed():
    ref = np.linalg.eigvalsh(dense_hamiltonian(ModelParams(0, 0.75, 0, 6)).array)
    for phi in (0.3 * math.pi, 0.8 * math.pi, math.pi):
        vals = np.linalg.eigvalsh(dense_hamiltonian(ModelParams(phi, 0.75, 0, 6)).array)
        assert np.allclose(vals, ref, atol=1e-10)


def test_gamma_spectrum_symmetry():
    for phi in (0.3, 1.2, 2.9):
        a = dense_hamiltonian(ModelParams(phi, 0.8, 0.4, 6)).array
        g = gamma_operator(6).toarray()
        assert np.allclose(np.linalg.eigvalsh(g @ a @ g), np.linalg.eigvalsh(a))


def test_oracle_helpers_on_product_state():
    v = np.zeros(2 ** 4, dtype=complex)
    v[0] = 1
    assert np.allclose(site_expectations(v, SZ), 0.5)
    assert np.allclose(site_expectations(v, SX), 0)
    c = correlation_matrix(v, SZ, SZ)
    assert np.allclose(c, 0.25)
    assert expectation(v, site_operator(SZ, 2, 4)) == pytest.approx(0.5)


def test_large_chain_uses_krylov():
    h = dense_hamiltonian(ModelParams(0, 1.25, 0.2, 13))
    assert isinstance(h, DenseHamiltonian)
    (e0, v0), = lowest_spectrum(h, 1)
    assert np.linalg.norm(h.matrix @ v0 - e0 * v0) < 1e-8
    with pytest.raises(ValueError):
        _ = h.array
