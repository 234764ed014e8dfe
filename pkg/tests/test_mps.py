import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socmps.mps import (
    MpsState,
    canonical_errors,
    canonicalize,
    from_dense_vector,
    insert_gauge,
    left_normalized_error,
    load_mps,
    max_bond_dims,
    norm,
    overlap,
    product_state,
    random_mps,
    right_normalized_error,
    save_mps,
    shift_center,
)
from socmps.tensor import ShapeError

from conftest import random_complex

UP, DOWN = [1, 0], [0, 1]


def unit(rng, n):
    v = random_complex(rng, n)
    return v / np.linalg.norm(v)


def test_product_state_has_unit_bonds():
    c = np.zeros(16)
    c[0] = 1
    psi = from_dense_vector(c)
    assert psi.bond_dims == [1] * 5


def test_bell_state_schmidt_spectrum():
    c = np.array([1, 0, 0, 1]) / np.sqrt(2)
    psi = from_dense_vector(c)
    assert psi.bond_dims == [1, 2, 1]
    s = np.linalg.svd(psi.tensors[1].reshape(2, 2), compute_uv=False)
    assert np.allclose(s, [1 / np.sqrt(2)] * 2)


def test_dense_round_trip(rng):
    c = unit(rng, 2 ** 6)
    psi = from_dense_vector(c, chi_max=8)
    assert np.max(np.abs(psi.to_dense() - c)) < 1e-10
    assert psi.canonical_form == "left"
    assert max(canonical_errors(psi)) < 1e-10


def test_truncated_round_trip_records_weight(rng):
    c = unit(rng, 2 ** 8)
    psi = from_dense_vector(c, chi_max=4)
    assert max(psi.bond_dims) == 4
    assert psi.discarded_weight > 0
    assert np.linalg.norm(psi.to_dense() - c) ** 2 < 2 * psi.discarded_weight + 1e-12


def test_bad_vector_length():
    with pytest.raises(ShapeError):
        from_dense_vector(np.ones(6))


def test_random_mps_small_and_deterministic():
    psi = random_mps(2, 2, 1, seed=5)
    assert psi.bond_dims == [1, 1, 1]
    assert norm(psi) == pytest.approx(1.0)
    a, b = random_mps(8, 2, 4, seed=11), random_mps(8, 2, 4, seed=11)
    assert all(np.array_equal(x, y) for x, y in zip(a.tensors, b.tensors))


def test_random_mps_invariants():
    psi = random_mps(10, 2, 4, seed=3)
    assert psi.canonical_form == "right"
    dims = max_bond_dims(10, 2, 4)
    assert all(a <= b for a, b in zip(psi.bond_dims, dims))
    moved = shift_center(psi, 1)
    assert max(canonical_errors(moved)) < 1e-10
    assert moved.center == 1 and moved.canonical_form == "mixed"


def test_shift_center_idempotent_and_round_trip():
    psi = random_mps(8, 2, 6, seed=1)
    same = shift_center(psi, 0)
    assert all(np.allclose(a, b, atol=1e-12) for a, b in zip(psi.tensors, same.tensors))
    back = shift_center(shift_center(psi, 7), 0)
    assert abs(overlap(psi, back)) == pytest.approx(norm(psi) ** 2, abs=1e-10)


def test_product_state_is_canonical_everywhere():
    psi = product_state([UP, DOWN, [1 / np.sqrt(2), 1j / np.sqrt(2)], UP])
    for k in range(4):
        moved = shift_center(psi, k)
        for t in moved.tensors:
            assert left_normalized_error(t) < 1e-12
            assert right_normalized_error(t) < 1e-12


def test_norm_and_overlap(rng):
    c = unit(rng, 64)
    psi = from_dense_vector(c)
    assert norm(psi) == pytest.approx(1.0, abs=1e-12)
    assert norm(psi.scaled(3)) == pytest.approx(3.0)
    assert overlap(psi, psi) == pytest.approx(norm(psi) ** 2)
    assert overlap(product_state([UP] * 5), product_state([DOWN] * 5)) == 0


def test_dense_oracles():
    a, b = random_mps(6, 2, 3, seed=21), random_mps(6, 2, 3, seed=22)
    a = a.scaled(1.7)
    va, vb = a.to_dense(), b.to_dense()
    assert norm(a) == pytest.approx(np.linalg.norm(va), rel=1e-12)
    assert overlap(a, b) == pytest.approx(np.vdot(va, vb), abs=1e-12)
    # without a recorded gauge the norm comes from the overlap
    assert norm(MpsState(a.tensors)) == pytest.approx(np.linalg.norm(va), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(3, 8), st.integers(1, 6))
def test_canonical_forms_hold(seed, length, chi):
    psi = random_mps(length, 2, chi, seed=seed)
    for k in range(length):
        moved = shift_center(psi, k)
        assert max(canonical_errors(moved)) < 1e-10
        assert abs(norm(moved) - 1) < 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(0, 4))
def test_gauge_insertion_changes_nothing(seed, bond):
    rng = np.random.default_rng(seed)
    psi = random_mps(6, 2, 4, seed=rng)
    other = random_mps(6, 2, 4, seed=rng)
    dim = psi.bond_dims[bond + 1]
    x = random_complex(rng, (dim, dim)) + 3 * np.eye(dim)
    gauged = insert_gauge(psi, bond, x)
    assert abs(overlap(other, gauged) - overlap(other, psi)) < 1e-10
    assert abs(overlap(gauged, gauged) - 1) < 1e-10
    assert max(canonical_errors(canonicalize(gauged, 2))) < 1e-10


def test_checkpoint_bit_exact(tmp_path):
    psi = shift_center(random_mps(9, 2, 5, seed=8), 4)
    path = tmp_path / "state.mps"
    save_mps(psi, path)
    back = load_mps(path)
    assert back.center == 4
    assert all(a.tobytes() == b.tobytes() for a, b in zip(psi.tensors, back.tensors))
    raw = path.read_bytes()
    assert raw[:8] == b"SOCMPS\x00\x01"


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.mps"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError):
        load_mps(path)
    psi = random_mps(4, 2, 2, seed=0)
    save_mps(psi, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        load_mps(path)


def test_dense_guard():
    psi = product_state([UP] * 21)
    with pytest.raises(ValueError):
        psi.to_dense()


def test_mismatched_bonds_rejected():
    with pytest.raises(ShapeError):
        MpsState((np.ones((1, 2, 2)), np.ones((3, 2, 1))))
