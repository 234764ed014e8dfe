"""Magnetic observables of matrix product states.

All expectation values are normalized by <psi|psi>.  Sites are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .mpo import SPIN_OPS, SX, SY, SZ
from .mps import MpsState, left_orthonormalize, shift_center

AXES = ("x", "y", "z")
GAP_CLAMP = 1e-9

# (S_j x S_{j+1})^alpha as a list of (coef, A_j, B_{j+1})
CHIRALITY_TERMS = {
    "x": ((1.0, SY, SZ), (-1.0, SZ, SY)),
    "y": ((1.0, SZ, SX), (-1.0, SX, SZ)),
    "z": ((1.0, SX, SY), (-1.0, SY, SX)),
}


class SolverQualityError(RuntimeError):
    """Energies come back in an order a converged solver cannot produce."""


@dataclass(frozen=True)
class CorrelationRecord:
    """Same-axis two-point function <S^a_j S^a_l> for every pair of sites.

    ``matrix[j, l]`` holds the value for sites j and l; the diagonal is the
    on-site <(S^a)^2> = 1/4.
    """

    axis: str
    matrix: np.ndarray

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"correlation matrix must be square, got shape {m.shape}")

    @property
    def length(self) -> int:
        return self.matrix.shape[0]

    def __getitem__(self, pair: tuple[int, int]) -> complex:
        return complex(self.matrix[pair])

    @property
    def reference_site(self) -> int:
        """Central site, ceil(L/2) in 1-based counting."""
        return math.ceil(self.length / 2) - 1

    def profile(self, ref: int | None = None) -> np.ndarray:
        """Real part of <S_ref S_(ref+r)> for r = 0, 1, ..., L-1-ref."""
        ref = self.reference_site if ref is None else ref
        return self.matrix[ref, ref:].real.copy()


@dataclass(frozen=True)
class OrderParameters:
    """Magnetization m, staggered magnetization n and vector chirality c."""

    m: tuple[float, float, float]
    n: tuple[float, float, float]
    c: tuple[float, float, float]

    def as_dict(self) -> dict[str, float]:
        out = {}
        for name, vals in (("M", self.m), ("N", self.n), ("C", self.c)):
            for ax, val in zip(AXES, vals):
                out[f"{name}{ax}"] = float(val)
        return out


@dataclass(frozen=True)
class GapRecord:
    lengths: tuple[int, ...]
    delta1: tuple[float, ...]
    delta2: tuple[float, ...]

    def __post_init__(self):
        if not len(self.lengths) == len(self.delta1) == len(self.delta2):
            raise ValueError("lengths, delta1 and delta2 must have equal size")
        for d1, d2 in zip(self.delta1, self.delta2):
            if d1 < -GAP_CLAMP or d2 < d1 - GAP_CLAMP:
                raise SolverQualityError(f"gaps out of order: delta1={d1}, delta2={d2}")


def _check_site(psi: MpsState, j: int):
    if not 0 <= j < psi.length:
        raise IndexError(f"site {j} outside chain of length {psi.length}")


def _center_norm2(psi: MpsState) -> float:
    c = psi.tensors[psi.center]
    return float(np.vdot(c, c).real)


def _local(m: np.ndarray, op: np.ndarray) -> complex:
    return complex(np.einsum("asb,st,atb->", m.conj(), op, m))


def expect_site(psi: MpsState, j: int, op: np.ndarray) -> complex:
    """<op_j>, evaluated at the orthogonality center moved to ``j``."""
    _check_site(psi, j)
    psi = shift_center(psi, j)
    return _local(psi.tensors[j], op) / _center_norm2(psi)


def _walk_centers(psi: MpsState):
    """Yield ``(j, center tensor, tensors)`` for j = 0..L-1.

    The state is made right-canonical once and the center then moves one
    site per step, so ``tensors[j+1:]`` are always right-normalized.
    """
    psi = shift_center(psi, 0)
    norm2 = _center_norm2(psi)
    tensors = list(psi.tensors)
    for j in range(psi.length):
        yield j, tensors, norm2
        if j + 1 < psi.length:
            tensors[j], tensors[j + 1], _ = left_orthonormalize(tensors[j], tensors[j + 1])


def site_expectations(psi: MpsState, ops: Sequence[np.ndarray]) -> np.ndarray:
    """``out[i, j] = <ops[i]_j>`` from one pass along the chain."""
    out = np.empty((len(ops), psi.length), dtype=np.complex128)
    for j, tensors, norm2 in _walk_centers(psi):
        for i, op in enumerate(ops):
            out[i, j] = _local(tensors[j], op) / norm2
    return out


def _close(g: np.ndarray, b: np.ndarray, op: np.ndarray) -> complex:
    """Finish a string at a right-normalized site carrying ``op``."""
    return complex(np.einsum("ab,asc,st,btc->", g, b.conj(), op, b))


def _transfer(g: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ab,asc,bsd->cd", g, b.conj(), b)


def correlation(psi: MpsState, j: int, l: int, op_a: np.ndarray, op_b: np.ndarray,
                center: int | None = None) -> complex:
    """<op_a_j op_b_l> for j < l, contracting only sites j..l.

    The center is moved to ``center`` (default ``j``), which must lie in
    [j, l]; the left and right parts then contract to identities.
    """
    if not j < l:
        raise ValueError(f"need j < l, got j={j}, l={l}; swap and conjugate instead")
    _check_site(psi, j)
    _check_site(psi, l)
    center = j if center is None else center
    if not j <= center <= l:
        raise ValueError(f"center {center} must lie in [{j}, {l}]")
    psi = shift_center(psi, center)
    t = psi.tensors
    g = np.einsum("asb,st,atc->bc", t[j].conj(), op_a, t[j])
    for m in range(j + 1, l):
        g = _transfer(g, t[m])
    return _close(g, t[l], op_b) / _center_norm2(psi)


def _upper_rows(psi: MpsState, pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """``out[p, j, l] = <a_j b_l>`` for j < l and ``<(a b)_j>`` on the diagonal."""
    L = psi.length
    out = np.zeros((len(pairs), L, L), dtype=np.complex128)
    for j, tensors, norm2 in _walk_centers(psi):
        m = tensors[j]
        for p, (a, b) in enumerate(pairs):
            out[p, j, j] = _local(m, a @ b) / norm2
            g = np.einsum("asb,st,atc->bc", m.conj(), a, m)
            for l in range(j + 1, L):
                out[p, j, l] = _close(g, tensors[l], b) / norm2
                if l + 1 < L:
                    g = _transfer(g, tensors[l])
    return out


def correlation_matrix(psi: MpsState, op_a: np.ndarray, op_b: np.ndarray) -> np.ndarray:
    """C[j, l] = <op_a_j op_b_l> for all j, l in O(L^2 chi^3)."""
    if np.array_equal(op_a, op_b):
        up = _upper_rows(psi, [(op_a, op_b)])[0]
        lower = up
    else:
        up, rev = _upper_rows(psi, [(op_a, op_b), (op_b, op_a)])
        lower = rev
    # operators on different sites commute: <a_l b_j> = <b_j a_l>
    out = np.triu(up) + np.tril(lower.T, -1)
    return out


def correlation_profile(psi: MpsState, axis: str) -> CorrelationRecord:
    op = SPIN_OPS[axis]
    return CorrelationRecord(axis, correlation_matrix(psi, op, op))


def default_k_grid(length: int) -> np.ndarray:
    return 2 * np.pi * np.arange(length) / length


def structure_factor(corr: CorrelationRecord, k_grid: Sequence[float] | None = None) -> np.ndarray:
    """Q(k) = (1/L) sum_{j,l} exp(ik(j-l)) <S_j S_l> on ``k_grid``.

    The default grid is 2 pi m / L.  Raises if Q comes out complex or
    negative beyond 1e-9.
    """
    c = np.asarray(corr.matrix)
    if not np.all(np.isfinite(c)):
        raise ValueError("correlation matrix has missing (non-finite) entries")
    L = corr.length
    k = default_k_grid(L) if k_grid is None else np.asarray(k_grid, dtype=float)
    phases = np.exp(1j * np.outer(k, np.arange(L)))
    q = np.einsum("kj,jl,kl->k", phases, c, phases.conj()) / L
    if np.max(np.abs(q.imag), initial=0.0) > 1e-9:
        raise ValueError(f"structure factor not real: max |Im Q| = {np.max(np.abs(q.imag)):.3e}")
    if np.min(q.real, initial=0.0) < -1e-9:
        raise ValueError(f"structure factor negative: min Q = {np.min(q.real):.3e}")
    return q.real


def structure_factor_peak(corr: CorrelationRecord, k_grid: Sequence[float] | None = None) -> tuple[float, float]:
    """Momentum and height of the largest Q(k); ties go to the smallest k."""
    k = default_k_grid(corr.length) if k_grid is None else np.asarray(k_grid, dtype=float)
    q = structure_factor(corr, k)
    i = int(np.argmax(q))
    return float(k[i]), float(q[i])


def bond_expectations(psi: MpsState, pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """``out[p, j] = <a_j b_(j+1)>`` for each pair ``(a, b)`` and bond j."""
    out = np.empty((len(pairs), psi.length - 1), dtype=np.complex128)
    for j, tensors, norm2 in _walk_centers(psi):
        if j + 1 == psi.length:
            break
        theta = np.tensordot(tensors[j], tensors[j + 1], axes=(2, 0))
        for p, (a, b) in enumerate(pairs):
            val = np.einsum("astc,su,tv,auvc->", theta.conj(), a, b, theta)
            out[p, j] = val / norm2
    return out


def chirality_profile(psi: MpsState) -> np.ndarray:
    """``out[alpha, j] = <(S_j x S_(j+1))^alpha>`` built from six mixed correlations."""
    pairs = []
    for ax in AXES:
        pairs.extend((a, b) for _, a, b in CHIRALITY_TERMS[ax])
    raw = bond_expectations(psi, pairs)
    out = np.empty((3, psi.length - 1), dtype=np.complex128)
    for i, ax in enumerate(AXES):
        (c0, _, _), (c1, _, _) = CHIRALITY_TERMS[ax]
        out[i] = c0 * raw[2 * i] + c1 * raw[2 * i + 1]
    return out


def order_parameters_from_profiles(spins: np.ndarray, chirality: np.ndarray) -> OrderParameters:
    """Order parameters from per-site <S^a_j> (3 x L) and per-bond chirality (3 x (L-1))."""
    L = spins.shape[1]
    sign = (-1.0) ** np.arange(L)
    m = tuple(float(abs(spins[i].sum().real)) / L for i in range(3))
    n = tuple(float(abs((sign * spins[i]).sum().real)) / L for i in range(3))
    c = tuple(float(abs(chirality[i].sum().real)) / L for i in range(3))
    return OrderParameters(m, n, c)


def order_parameters(psi: MpsState) -> OrderParameters:
    """M = |sum_j <S_j>|/L, N = |sum_j (-1)^j <S_j>|/L, C = |sum_j <S_j x S_(j+1)>|/L."""
    spins = site_expectations(psi, [SX, SY, SZ])
    return order_parameters_from_profiles(spins, chirality_profile(psi))


def energy_gaps(energies: Sequence[float]) -> tuple[float, ...]:
    """Gaps E_i - E_0, with small negative values clamped to zero.

    Raises SolverQualityError when the energies are out of order by more
    than 1e-9.
    """
    e = [float(x) for x in energies]
    if len(e) < 2:
        raise ValueError("need at least two energies")
    for a, b in zip(e, e[1:]):
        if b < a - GAP_CLAMP:
            raise SolverQualityError(f"energies out of order: {e}")
    return tuple(max(x - e[0], 0.0) for x in e[1:])
