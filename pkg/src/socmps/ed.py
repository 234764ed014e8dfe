"""Exact diagonalization of short chains, used as a reference oracle.

The Hamiltonian is assembled term by term with Kronecker products and kept
as a sparse matrix.  Chains up to 12 sites are diagonalized densely; 13 and
14 sites go through a Krylov solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mpo import ModelParams, xxz_dm_terms

MAX_ED_SITES = 14
MAX_DENSE_ED_SITES = 12


def site_operator(op: np.ndarray, site: int, length: int) -> sp.csr_matrix:
    """``op`` acting on ``site`` (0-based) of a chain of spin-1/2."""
    d = op.shape[0]
    left = sp.identity(d ** site, dtype=np.complex128, format="csr")
    right = sp.identity(d ** (length - site - 1), dtype=np.complex128, format="csr")
    return sp.kron(sp.kron(left, sp.csr_matrix(op)), right, format="csr")


def two_site_operator(op_a: np.ndarray, j: int, op_b: np.ndarray, l: int, length: int) -> sp.csr_matrix:
    return (site_operator(op_a, j, length) @ site_operator(op_b, l, length)).tocsr()


def hamiltonian_from_terms(length: int, bonds, onsite: np.ndarray) -> sp.csr_matrix:
    """Sum of the bond terms over the L-1 open-chain bonds plus the on-site term."""
    if length > MAX_ED_SITES:
        raise ValueError(f"exact diagonalization limited to L <= {MAX_ED_SITES}, got {length}")
    dim = 2 ** length
    h = sp.csr_matrix((dim, dim), dtype=np.complex128)
    for j in range(length - 1):
        left = sp.identity(2 ** j, dtype=np.complex128, format="csr")
        right = sp.identity(2 ** (length - j - 2), dtype=np.complex128, format="csr")
        local = sum(t.coef * np.kron(t.left, t.right) for t in bonds)
        h = h + sp.kron(sp.kron(left, sp.csr_matrix(local)), right, format="csr")
    if np.any(onsite):
        for j in range(length):
            h = h + site_operator(onsite, j, length)
    return h.tocsr()


@dataclass(frozen=True)
class DenseHamiltonian:
    """Full Hamiltonian of a short chain.

    ``matrix`` is stored sparse to keep 13-14 site chains in memory;
    ``array`` gives the dense form where that is affordable.
    """

    matrix: sp.csr_matrix
    params: ModelParams | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def length(self) -> int:
        return int(round(np.log2(self.dim)))

    @property
    def array(self) -> np.ndarray:
        if self.dim > 2 ** MAX_DENSE_ED_SITES:
            raise ValueError("dense form limited to 12 sites")
        return self.matrix.toarray()


def dense_hamiltonian(p: ModelParams) -> DenseHamiltonian:
    bonds, onsite = xxz_dm_terms(p.phi, p.lam, p.omega_prime)
    return DenseHamiltonian(hamiltonian_from_terms(p.length, bonds, onsite), p)


def lowest_spectrum(h: DenseHamiltonian | np.ndarray, n: int = 1):
    """The ``n`` lowest eigenpairs as a list of ``(energy, vector)``, ascending."""
    if isinstance(h, DenseHamiltonian):
        mat = h.matrix
    else:
        mat = h
    dim = mat.shape[0]
    if not 1 <= n <= dim:
        raise ValueError(f"n must lie in [1, {dim}]")
    if dim <= 2 ** MAX_DENSE_ED_SITES or n >= dim - 1:
        dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat)
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=(0, n - 1))
    else:
        vals, vecs = spla.eigsh(mat, k=n, which="SA", tol=1e-13, ncv=max(2 * n + 20, 40))
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    return [(float(vals[i]), vecs[:, i]) for i in range(n)]


def gamma_operator(length: int) -> sp.csr_matrix:
    """prod_j 2 Sx_j, i.e. a global spin flip."""
    sx2 = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    return reduce(lambda a, b: sp.kron(a, b, format="csr"), [sp.csr_matrix(sx2)] * length)


def expectation(vec: np.ndarray, op) -> complex:
    vec = np.asarray(vec)
    return complex(np.vdot(vec, op @ vec) / np.vdot(vec, vec))


def site_expectations(vec: np.ndarray, op: np.ndarray) -> np.ndarray:
    L = int(round(np.log2(vec.size)))
    return np.array([expectation(vec, site_operator(op, j, L)) for j in range(L)])


def correlation_matrix(vec: np.ndarray, op_a: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """C[j, l] = <op_a_j op_b_l> for all pairs, by brute force."""
    L = int(round(np.log2(vec.size)))
    out = np.empty((L, L), dtype=np.complex128)
    for j in range(L):
        aj = site_operator(op_a, j, L)
        for l in range(L):
            out[j, l] = expectation(vec, aj @ site_operator(op_b, l, L))
    return out

