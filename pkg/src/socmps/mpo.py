"""Matrix product operators and the XXZ chain with DM interaction.

Energies are measured in units of 4t^2/U.  In these units the chain is

    H = -(1/lam) sum_j [ cos(phi) (Sx Sx + Sy Sy) + (2 lam - 1) Sz Sz
                         + sin(phi) (Sx_j Sy_{j+1} - Sy_j Sx_{j+1}) ]
        - omega_prime sum_j Sx_j

with open boundaries.  ``Gamma = prod_j 2 Sx_j`` maps H(phi) to H(-phi), so
only phi in [0, pi] is accepted.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeError, as_tensor

SX = np.array([[0, 1], [1, 0]], dtype=np.complex128) / 2
SY = np.array([[0, -1j], [1j, 0]], dtype=np.complex128) / 2
SZ = np.array([[1, 0], [0, -1]], dtype=np.complex128) / 2
ID2 = np.eye(2, dtype=np.complex128)
SPIN_OPS = {"x": SX, "y": SY, "z": SZ}


@dataclass(frozen=True)
class ModelParams:
    """Scaled model parameters (phi, lambda, omega') and chain length."""

    phi: float
    lam: float
    omega_prime: float
    length: int

    def __post_init__(self):
        if not (0.0 <= self.phi <= math.pi + 1e-12):
            raise ValueError(f"phi must lie in [0, pi], got {self.phi}")
        if not self.lam > 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")
        if not self.omega_prime >= 0:
            raise ValueError(f"omega_prime must be non-negative, got {self.omega_prime}")
        if int(self.length) != self.length or self.length < 2:
            raise ValueError(f"length must be an integer >= 2, got {self.length}")

    def with_length(self, length: int) -> "ModelParams":
        return ModelParams(self.phi, self.lam, self.omega_prime, length)


def derive_scaled_params(t: float, u: float, lam: float, omega: float) -> tuple[float, float, float]:
    """Spin couplings from the Hubbard parameters of the ladder.

    Returns ``(J, J_z, omega_prime)`` with J = -4t^2/(lam u), J_z = 2 lam - 1
    and omega_prime = omega u / (4 t^2).  J is in the raw energy unit.
    """
    if t <= 0 or u <= 0:
        raise ValueError("t and u must be positive")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if omega < 0:
        raise ValueError("omega must be non-negative")
    if u < 10 * max(t, omega):
        warnings.warn(
            f"u={u} is not much larger than t={t}, omega={omega}; "
            "the superexchange description may be inaccurate",
            stacklevel=2,
        )
    j = -4 * t * t / (lam * u)
    return j, 2 * lam - 1, omega * u / (4 * t * t)


@dataclass(frozen=True)
class BondTerm:
    """coef * A_j B_{j+1} on every bond."""

    coef: complex
    left: np.ndarray
    right: np.ndarray


def xxz_dm_terms(phi: float, lam: float, omega_prime: float):
    """Bond terms and on-site field of the chain, valid for any real phi.

    Returns ``(bond_terms, onsite)``.
    """
    c, s = math.cos(phi), math.sin(phi)
    g = -1.0 / lam
    bonds = [
        BondTerm(g * c, SX, SX),
        BondTerm(g * c, SY, SY),
        BondTerm(g * (2 * lam - 1), SZ, SZ),
        BondTerm(g * s, SX, SY),
        BondTerm(-g * s, SY, SX),
    ]
    return bonds, -omega_prime * SX


@dataclass(frozen=True)
class MpoOperator:
    """Operator as a list of rank-4 tensors ``(b_left, s_out, s_in, b_right)``."""

    tensors: tuple[np.ndarray, ...]

    def __post_init__(self):
        tensors = tuple(as_tensor(w) for w in self.tensors)
        for i, w in enumerate(tensors):
            if w.ndim != 4 or w.shape[1] != w.shape[2]:
                raise ShapeError(f"site {i}: bad MPO tensor shape {w.shape}")
            if i + 1 < len(tensors) and w.shape[3] != tensors[i + 1].shape[0]:
                raise ShapeError(f"bond {i}/{i + 1}: MPO dimensions do not match")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[3] != 1:
            raise ShapeError("MPO boundary bonds must have dimension 1")
        object.__setattr__(self, "tensors", tensors)

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def phys_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        return [1] + [w.shape[3] for w in self.tensors]

    def to_dense(self) -> np.ndarray:
        """Full operator matrix; refuses chains longer than 12 sites."""
        if self.length > 12:
            raise ValueError("dense MPO reconstruction limited to L <= 12")
        op = self.tensors[0][0]  # (s, s', b)
        for w in self.tensors[1:]:
            op = np.tensordot(op, w, axes=(-1, 0))  # (..., s, s', b)
        op = op[..., 0]
        L = self.length
        # interleaved (s1, s1', s2, s2', ...) -> (s1..sL, s1'..sL')
        perm = list(range(0, 2 * L, 2)) + list(range(1, 2 * L, 2))
        dim = self.phys_dim ** L
        return op.transpose(perm).reshape(dim, dim)


def build_xxz_dm_mpo(p: ModelParams) -> MpoOperator:
    """The chain Hamiltonian as an MPO with bulk bond dimension 5.

    Channel 0 collects finished terms, channels 1-3 carry an open Sx, Sy,
    Sz from the left neighbour and channel 4 is the empty (identity) state.
    """
    c, s = math.cos(p.phi), math.sin(p.phi)
    g = -1.0 / p.lam
    field = -p.omega_prime * SX
    row = [
        field,
        g * (c * SX - s * SY),
        g * (c * SY + s * SX),
        g * (2 * p.lam - 1) * SZ,
        ID2,
    ]
    column = [ID2, SX, SY, SZ, field]

    first = np.zeros((1, 2, 2, 5), dtype=np.complex128)
    for b, op in enumerate(row):
        first[0, :, :, b] = op
    last = np.zeros((5, 2, 2, 1), dtype=np.complex128)
    for b, op in enumerate(column):
        last[b, :, :, 0] = op
    bulk = np.zeros((5, 2, 2, 5), dtype=np.complex128)
    for b, op in enumerate(column):
        bulk[b, :, :, 0] = op
    for b, op in enumerate(row):
        bulk[4, :, :, b] = op

    return MpoOperator((first,) + (bulk,) * (p.length - 2) + (last,))


def nearest_neighbor_mpo(length: int, bonds: Sequence[BondTerm], onsite: np.ndarray) -> MpoOperator:
    """Generic translation-invariant nearest-neighbour MPO.

    One automaton channel per bond term: start (identity) -> open term k ->
    done.  Used to cross-check the hand-written builder.
    """
    if length < 2:
        raise ValueError("length must be >= 2")
    d = onsite.shape[0]
    n = len(bonds)
    D = n + 2
    start, done = 0, n + 1
    eye = np.eye(d, dtype=np.complex128)
    w = np.zeros((D, d, d, D), dtype=np.complex128)
    w[start, :, :, start] = eye
    w[done, :, :, done] = eye
    w[start, :, :, done] = onsite
    for k, term in enumerate(bonds):
        w[start, :, :, k + 1] = term.coef * term.left
        w[k + 1, :, :, done] = term.right
    first = w[start:start + 1]
    last = w[:, :, :, done:done + 1]
    return MpoOperator((first,) + (w,) * (length - 2) + (last,))
