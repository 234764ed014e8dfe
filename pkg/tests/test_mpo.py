import math
import warnings

import numpy as np
import pytest

from socmps.ed import dense_hamiltonian, gamma_operator, hamiltonian_from_terms
from socmps.mpo import (
    SX,
    SY,
    SZ,
    ModelParams,
    build_xxz_dm_mpo,
    derive_scaled_params,
    nearest_neighbor_mpo,
    xxz_dm_terms,
)

POINTS = [
    (0.0, 1.25, 0.2),
    (0.3 * math.pi, 0.75, 0.0),
    (0.5 * math.pi, 0.75, 0.5),
    (0.8 * math.pi, 0.92, 0.7),
    (math.pi, 0.75, 1.0),
]


def explicit_hamiltonian(phi, lam, om, L):
    """Direct kron evaluation of the chain, independent of the term list."""
    def op(o, j):
        mats = [np.eye(2)] * L
        mats[j] = o
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    h = np.zeros((2 ** L, 2 ** L), dtype=complex)
    for j in range(L - 1):
        k = j + 1
        h += -(1 / lam) * (
            math.cos(phi) * (op(SX, j) @ op(SX, k) + op(SY, j) @ op(SY, k))
            + (2 * lam - 1) * op(SZ, j) @ op(SZ, k)
            + math.sin(phi) * (op(SX, j) @ op(SY, k) - op(SY, j) @ op(SX, k))
        )
    for j in range(L):
        h += -om * op(SX, j)
    return h


def test_scaled_params():
    assert derive_scaled_params(1, 20, 1, 0) == pytest.approx((-0.2, 1, 0))
    assert derive_scaled_params(1, 20, 0.5, 0)[1] == 0
    assert derive_scaled_params(1, 20, 0.75, 0.05) == pytest.approx((-4 / 15, 0.5, 0.25))


def test_scaled_params_warn_outside_superexchange():
    with pytest.warns(UserWarning):
        derive_scaled_params(1, 5, 1, 0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        derive_scaled_params(1, 50, 1, 0)
    with pytest.raises(ValueError):
        derive_scaled_params(1, 20, -1, 0)


@pytest.mark.parametrize("bad", [
    dict(phi=-0.1, lam=1, omega_prime=0, length=4),
    dict(phi=4.0, lam=1, omega_prime=0, length=4),
    dict(phi=0, lam=0, omega_prime=0, length=4),
    dict(phi=0, lam=1, omega_prime=-1, length=4),
    dict(phi=0, lam=1, omega_prime=0, length=1),
])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        ModelParams(**bad)


@pytest.mark.parametrize("pt", POINTS)
def test_bulk_bond_dimension_five(pt):
    h = build_xxz_dm_mpo(ModelParams(*pt, 6))
    assert h.bond_dims == [1, 5, 5, 5, 5, 5, 1]


@pytest.mark.parametrize("pt", POINTS)
@pytest.mark.parametrize("L", [2, 3, 5])
def test_mpo_matches_explicit_hamiltonian(pt, L):
    dense = build_xxz_dm_mpo(ModelParams(*pt, L)).to_dense()
    assert np.max(np.abs(dense - explicit_hamiltonian(*pt, L))) < 1e-14
    assert np.array_equal(dense, dense.conj().T) or np.max(np.abs(dense - dense.conj().T)) == 0


@pytest.mark.parametrize("pt", POINTS)
def test_two_independent_builders_agree(pt):
    p = ModelParams(*pt, 4)
    bonds, onsite = xxz_dm_terms(*pt)
    generic = nearest_neighbor_mpo(4, bonds, onsite)
    assert np.max(np.abs(generic.to_dense() - build_xxz_dm_mpo(p).to_dense())) < 1e-14


def test_isotropic_two_site_spectrum():
    dense = build_xxz_dm_mpo(ModelParams(0, 1, 0, 2)).to_dense()
    heis = -(np.kron(SX, SX) + np.kron(SY, SY) + np.kron(SZ, SZ))
    assert np.allclose(dense, heis)
    assert np.allclose(np.linalg.eigvalsh(dense), [-0.25, -0.25, -0.25, 0.75])


def test_no_in_plane_exchange_at_half_pi():
    h = build_xxz_dm_mpo(ModelParams(math.pi / 2, 0.8, 0.3, 2)).to_dense()
    for a in (SX, SY):
        coef = np.trace(np.kron(a, a).conj().T @ h) / 4
        assert abs(coef) < 1e-15


@pytest.mark.parametrize("pt", POINTS)
def test_hermitian(pt):
    dense = build_xxz_dm_mpo(ModelParams(*pt, 8)).to_dense()
    assert np.array_equal(dense, dense.conj().T)


@pytest.mark.parametrize("pt", POINTS)
def test_gamma_maps_phi_to_minus_phi(pt):
    phi, lam, om = pt
    L = 6
    g = gamma_operator(L).toarray()
    h = build_xxz_dm_mpo(ModelParams(*pt, L)).to_dense()
    bonds, onsite = xxz_dm_terms(-phi, lam, om)
    h_minus = hamiltonian_from_terms(L, bonds, onsite).toarray()
    assert np.max(np.abs(g @ h @ g.conj().T - h_minus)) < 1e-14
    assert np.max(np.abs(h_minus - explicit_hamiltonian(-phi, lam, om, L))) < 1e-14


@pytest.mark.parametrize("lam", [0.6, 0.75, 1.25])
def test_spectrum_flat_in_phi_without_field(lam):
    ref = np.linalg.eigvalsh(build_xxz_dm_mpo(ModelParams(0, lam, 0, 6)).to_dense())
    for phi in (0.2, 0.3 * math.pi, 0.5 * math.pi, 2.5, math.pi):
        spec = np.linalg.eigvalsh(build_xxz_dm_mpo(ModelParams(phi, lam, 0, 6)).to_dense())
        assert np.max(np.abs(spec - ref)) < 1e-10


def test_field_breaks_phi_flatness():
    a = np.linalg.eigvalsh(dense_hamiltonian(ModelParams(0, 0.75, 0.5, 6)).array)
    b = np.linalg.eigvalsh(dense_hamiltonian(ModelParams(0.5 * math.pi, 0.75, 0.5, 6)).array)
    assert np.max(np.abs(a - b)) > 1e-3


def test_dense_guard():
    with pytest.raises(ValueError):
        build_xxz_dm_mpo(ModelParams(0, 1, 0, 13)).to_dense()
