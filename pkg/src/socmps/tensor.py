"""Dense tensor primitives: contraction, SVD and rank truncation.

Tensors are plain ``numpy.ndarray`` objects of dtype ``complex128`` stored in
C (row-major) order.  Reshapes therefore keep the linear data untouched.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

DEFAULT_CUTOFF = 1e-14


class ShapeError(ValueError):
    """Raised when tensor ranks or dimensions do not fit an operation."""


class NumericError(ArithmeticError):
    """Raised on non-finite input to a decomposition."""


def as_tensor(data, shape: Sequence[int] | None = None) -> np.ndarray:
    """Return ``data`` as a C-ordered complex128 array, optionally reshaped."""
    arr = np.ascontiguousarray(data, dtype=np.complex128)
    if shape is not None:
        shape = tuple(int(n) for n in shape)
        if any(n < 1 for n in shape):
            raise ShapeError(f"dimensions must be positive, got {shape}")
        if int(np.prod(shape)) != arr.size:
            raise ShapeError(f"cannot reshape {arr.size} values into {shape}")
        arr = arr.reshape(shape)
    return arr


@dataclass(frozen=True)
class SvdTriple:
    """Result of a (possibly truncated) singular value decomposition.

    ``u @ np.diag(s) @ vdag`` is the kept part of the input matrix and
    ``discarded_weight`` is the sum of squares of the dropped singular values.
    """

    u: np.ndarray
    s: np.ndarray
    vdag: np.ndarray
    discarded_weight: float = 0.0

    @property
    def rank(self) -> int:
        return self.s.size

    def matrix(self) -> np.ndarray:
        return (self.u * self.s) @ self.vdag


def _check_matrix(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got rank-{m.ndim} tensor")
    if not np.all(np.isfinite(m)):
        raise NumericError("matrix contains non-finite entries")
    return m.astype(np.complex128, copy=False)


def _svd(m: np.ndarray):
    try:
        u, s, vdag = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but robust
        u, s, vdag = scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")
    # stable order: equal values keep their LAPACK position
    order = np.argsort(-s, kind="stable")
    return u[:, order], s[order], vdag[order, :]


def svd_full(m) -> SvdTriple:
    """Thin SVD of a matrix with singular values in descending order."""
    u, s, vdag = _svd(_check_matrix(m))
    return SvdTriple(u, s, vdag, 0.0)


def svd_truncate(m, chi_max: int, cutoff: float = DEFAULT_CUTOFF) -> SvdTriple:
    """SVD keeping at most ``chi_max`` singular values larger than ``cutoff``.

    At least one singular value is always kept so that the factors remain
    usable as MPS tensors, even for the zero matrix.
    """
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be non-negative, got {cutoff}")
    u, s, vdag = _svd(_check_matrix(m))
    keep = min(chi_max, int(np.count_nonzero(s > cutoff)))
    keep = max(keep, 1)
    discarded = float(np.sum(s[keep:] ** 2))
    return SvdTriple(u[:, :keep], s[:keep], vdag[:keep, :], discarded)


def contract(a, b, index_pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Sum over paired indices of ``a`` and ``b``.

    The free indices of the result are those of ``a`` followed by those of
    ``b``, each group in its original order.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    axes_a = [int(i) for i, _ in index_pairs]
    axes_b = [int(j) for _, j in index_pairs]
    for i, j in zip(axes_a, axes_b):
        if not (-a.ndim <= i < a.ndim and -b.ndim <= j < b.ndim):
            raise ShapeError(f"index pair ({i}, {j}) out of range")
        if a.shape[i] != b.shape[j]:
            raise ShapeError(
                f"dimension mismatch on pair ({i}, {j}): {a.shape[i]} vs {b.shape[j]}"
            )
    return np.tensordot(a, b, axes=(axes_a, axes_b))
