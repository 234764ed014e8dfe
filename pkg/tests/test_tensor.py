import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socmps.tensor import NumericError, ShapeError, as_tensor, contract, svd_full, svd_truncate

from conftest import random_complex


def test_identity_singular_values():
    assert np.allclose(svd_full(np.eye(2)).s, [1, 1])


def test_rank_one_matrix():
    u = np.array([1, 1j]) / np.sqrt(2)
    v = np.array([0.6, 0.8])
    s = svd_full(np.outer(u, v)).s
    assert np.allclose(s, [1, 0], atol=1e-14)


def test_random_svd_matches_eigenvalues_of_gram(rng):
    m = random_complex(rng, (4, 4))
    t = svd_full(m)
    assert np.max(np.abs(t.matrix() - m)) < 1e-12
    ev = np.linalg.eigvalsh(m.conj().T @ m)[::-1]
    assert np.allclose(t.s, np.sqrt(np.clip(ev, 0, None)), atol=1e-12)


def test_identity_truncation_breaks_ties_by_index():
    t = svd_truncate(np.eye(2), 1)
    assert np.allclose(t.s, [1])
    assert t.discarded_weight == pytest.approx(1.0)
    assert np.allclose(np.abs(t.matrix()), [[1, 0], [0, 0]])


def test_truncation_without_cut_equals_full(rng):
    m = random_complex(rng, (5, 3))
    a, b = svd_full(m), svd_truncate(m, 10, cutoff=0.0)
    assert np.array_equal(a.s, b.s)
    assert np.array_equal(a.u, b.u)
    assert b.discarded_weight == 0.0


def test_truncation_error_matches_tail(rng):
    m = random_complex(rng, (6, 6))
    s = svd_full(m).s
    t = svd_truncate(m, 3)
    assert np.linalg.norm(m - t.matrix()) == pytest.approx(np.sqrt(np.sum(s[3:] ** 2)), rel=1e-10)


def test_zero_matrix_keeps_one_value():
    t = svd_truncate(np.zeros((3, 2)), 2)
    assert t.rank == 1 and t.s[0] == 0


def test_bad_inputs():
    with pytest.raises(ShapeError):
        svd_full(np.zeros((2, 2, 2)))
    with pytest.raises(NumericError):
        svd_full(np.array([[1.0, np.nan], [0, 1]]))
    with pytest.raises(ValueError):
        svd_truncate(np.eye(2), 0)
    with pytest.raises(ShapeError):
        as_tensor(np.arange(6), (4, 2))


matrices = st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2 ** 31 - 1))


@settings(max_examples=40, deadline=None)
@given(matrices, st.integers(1, 8))
def test_discarded_weight_is_frobenius_error(dims, chi):
    rows, cols, seed = dims
    m = random_complex(np.random.default_rng(seed), (rows, cols))
    t = svd_truncate(m, chi, cutoff=0.0)
    err = np.linalg.norm(m - t.matrix()) ** 2
    assert err == pytest.approx(t.discarded_weight, rel=1e-10, abs=1e-12)
    assert np.all(np.diff(t.s) <= 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 4))
def test_truncation_beats_random_rank_r_projections(seed, r):
    rng = np.random.default_rng(seed)
    m = random_complex(rng, (6, 5))
    best = np.linalg.norm(m - svd_truncate(m, r, cutoff=0.0).matrix())
    for _ in range(10):
        q, _ = np.linalg.qr(random_complex(rng, (6, r)))
        assert np.linalg.norm(m - q @ (q.conj().T @ m)) >= best - 1e-12


def test_contract_identity_and_inner_product(rng):
    m = random_complex(rng, (3, 4))
    assert np.allclose(contract(m, np.eye(4), [(1, 0)]), m)
    a, b = random_complex(rng, 5), random_complex(rng, 5)
    assert contract(a, b, [(0, 0)]) == pytest.approx(np.sum(a * b))


def test_contract_matches_nested_loops(rng):
    a = random_complex(rng, (2, 3, 4))
    b = random_complex(rng, (4, 3, 2))
    got = contract(a, b, [(1, 1), (2, 0)])
    ref = np.zeros((2, 2), dtype=complex)
    for i, k in itertools.product(range(2), range(2)):
        for j, l in itertools.product(range(3), range(4)):
            ref[i, k] += a[i, j, l] * b[l, j, k]
    assert np.allclose(got, ref, atol=1e-13)


def test_contract_is_bilinear(rng):
    a, b = random_complex(rng, (3, 2)), random_complex(rng, (2, 4))
    alpha = 0.3 - 1.7j
    assert np.allclose(contract(alpha * a, b, [(1, 0)]), alpha * contract(a, b, [(1, 0)]))


def test_contract_dimension_mismatch():
    with pytest.raises(ShapeError):
        contract(np.zeros((2, 3)), np.zeros((2, 3)), [(1, 0)])
    with pytest.raises(ShapeError):
        contract(np.zeros((2, 3)), np.zeros((3,)), [(5, 0)])
