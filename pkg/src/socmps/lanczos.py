"""Restarted Lanczos for the lowest eigenpair of a Hermitian operator."""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


def lowest_eigenpair(matvec: Callable[[np.ndarray], np.ndarray], v0: np.ndarray,
                     tol: float = 1e-8, krylov_dim: int = 20,
                     max_restarts: int = 100) -> tuple[float, np.ndarray, int]:
    """Smallest eigenvalue and unit eigenvector of the operator ``matvec``.

    Stops once the residual norm ``|A v - e v|`` drops below ``tol``.  The
    Krylov basis is fully reorthogonalized and the iteration restarts from
    the current Ritz vector.  Returns ``(e, v, matvec_count)``.
    """
    n = v0.size
    v = v0 / np.linalg.norm(v0)
    krylov_dim = max(2, min(krylov_dim, n))
    count = 0
    e = float("nan")
    for _ in range(max_restarts):
        basis = np.empty((krylov_dim, n), dtype=np.complex128)
        alpha = np.zeros(krylov_dim)
        beta = np.zeros(krylov_dim)
        basis[0] = v
        w = matvec(v)
        count += 1
        m = krylov_dim
        for j in range(krylov_dim):
            alpha[j] = np.vdot(basis[j], w).real
            w = w - alpha[j] * basis[j]
            if j > 0:
                w = w - beta[j - 1] * basis[j - 1]
            # full reorthogonalization, twice is enough
            for _rep in range(2):
                w = w - basis[: j + 1].T @ (basis[: j + 1].conj() @ w)
            b = np.linalg.norm(w)
            beta[j] = b
            if j + 1 == krylov_dim or b < 1e-14:
                m = j + 1
                break
            if j >= 2:
                vals, vecs = scipy.linalg.eigh_tridiagonal(alpha[: j + 1], beta[:j],
                                                           select="i", select_range=(0, 0))
                if abs(b * vecs[-1, 0]) < tol:
                    m = j + 1
                    break
            basis[j + 1] = w / b
            w = matvec(basis[j + 1])
            count += 1
        if m == 1:
            return float(alpha[0]), v, count
        vals, vecs = scipy.linalg.eigh_tridiagonal(alpha[:m], beta[: m - 1],
                                                   select="i", select_range=(0, 0))
        e = float(vals[0])
        y = vecs[:, 0]
        v = y @ basis[:m]
        v = v / np.linalg.norm(v)
        residual = abs(beta[m - 1] * y[-1])
        if residual < tol or beta[m - 1] < 1e-14:
            return e, v, count
    return e, v, count
