"""Single-site variational sweeps for ground and low excited states.

Environment tensors follow the index order ``(bra bond, MPO bond, ket bond)``.
``left[k]`` contracts sites ``0..k-1`` of <psi|H|psi> and ``right[k]``
contracts sites ``k..L-1``; ``left[0]`` and ``right[L]`` are the scalar 1.
The effective Hamiltonian of site ``k`` is built from ``left[k]``, the MPO
tensor of site ``k`` and ``right[k+1]``.

Excited states are found by minimizing under orthogonality to previously
found states.  The overlap with each lower state is linear in the center
tensor, ``<psi|phi_m> = <v|F_m>``, and the local eigenproblem is solved in
the orthogonal complement of the ``F_m``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .lanczos import lowest_eigenpair
from .mpo import MpoOperator
from .mps import (
    MpsState,
    left_orthonormalize,
    overlap,
    random_mps,
    right_orthonormalize,
    shift_center,
)

log = logging.getLogger(__name__)

GRAM_FLOOR = 1e-12
ENERGY_TIE = 1e-9


class DegeneracyError(RuntimeError):
    """The orthogonality constraints leave no room for a local update."""


@dataclass(frozen=True)
class SweepConfig:
    chi_max: int = 16
    tol_variance: float = 1e-7
    max_sweeps: int = 40
    restarts: int = 1
    seed: int = 0
    local_solver_dim_threshold: int = 256
    noise: float = 0.0
    noise_sweeps: int = 3
    min_sweeps: int = 2
    stall_tol: float = 1e-10
    krylov_tol: float = 1e-8

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if not self.tol_variance > 0:
            raise ValueError("tol_variance must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")


@dataclass(frozen=True)
class SweepRecord:
    """Progress of one full (right + left) sweep."""

    sweep: int
    energy: float
    variance: float
    max_discarded_weight: float


@dataclass
class SolveReport:
    energy: float
    variance: float
    sweeps_used: int
    converged: bool
    final_state: MpsState
    history: list[SweepRecord] = field(default_factory=list)
    local_energies: list[float] = field(default_factory=list)
    attempt_energies: list[float] = field(default_factory=list)
    max_discarded_weight: float = 0.0


# -- environments ---------------------------------------------------------

def _ones3() -> np.ndarray:
    return np.ones((1, 1, 1), dtype=np.complex128)


def grow_left(env: np.ndarray, a: np.ndarray, w: np.ndarray,
              bra: np.ndarray | None = None) -> np.ndarray:
    """Absorb one site into a left environment.

    ``bra`` defaults to ``a``; pass another tensor for off-diagonal elements.
    """
    bra = a if bra is None else bra
    t = np.tensordot(env, a, axes=(2, 0))             # (x, b, s', y')
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))     # (x, y', s, B)
    t = np.tensordot(bra.conj(), t, axes=([0, 1], [0, 2]))  # (y, y', B)
    return t.transpose(0, 2, 1)


def grow_right(env: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Absorb one site into a right environment."""
    t = np.tensordot(b, env, axes=(2, 2))             # (x', s', z, B)
    t = np.tensordot(w, t, axes=([2, 3], [1, 3]))     # (b, s, x', z)
    t = np.tensordot(b.conj(), t, axes=([1, 2], [1, 3]))  # (x, b, x')
    return t


@dataclass
class EnvironmentCache:
    """Partial contractions of <psi|H|psi> from both ends of the chain.

    Entries that are not valid for the current gauge are ``None``.
    """

    left: list
    right: list

    @classmethod
    def empty(cls, length: int) -> "EnvironmentCache":
        left = [None] * (length + 1)
        right = [None] * (length + 1)
        left[0] = _ones3()
        right[length] = _ones3()
        return cls(left, right)

    @classmethod
    def build(cls, psi: MpsState, h: MpoOperator) -> "EnvironmentCache":
        """All environments valid for the center of ``psi``."""
        if psi.center is None:
            raise ValueError("environment construction needs a canonical form")
        cache = cls.empty(psi.length)
        for k in range(psi.center):
            cache.left[k + 1] = grow_left(cache.left[k], psi.tensors[k], h.tensors[k])
        for k in range(psi.length - 1, psi.center, -1):
            cache.right[k] = grow_right(cache.right[k + 1], psi.tensors[k], h.tensors[k])
        return cache

    def copy(self) -> "EnvironmentCache":
        return EnvironmentCache(list(self.left), list(self.right))


def update_environment(cache: EnvironmentCache, side: str, site: int,
                       psi: MpsState, h: MpoOperator) -> EnvironmentCache:
    """Return a cache with one environment recomputed from its neighbour.

    ``side="left"`` computes ``left[site+1]`` (needs ``site`` left of the
    center); ``side="right"`` computes ``right[site]`` (needs ``site`` right
    of the center).
    """
    L = psi.length
    if not 0 <= site < L:
        raise IndexError(f"site {site} outside chain of length {L}")
    if psi.center is None:
        raise ValueError("stale canonical form: state has no orthogonality center")
    out = cache.copy()
    if side == "left":
        if site >= psi.center:
            raise ValueError(f"stale canonical form: site {site} is not left of center {psi.center}")
        if cache.left[site] is None:
            raise ValueError(f"left environment {site} missing")
        out.left[site + 1] = grow_left(cache.left[site], psi.tensors[site], h.tensors[site])
    elif side == "right":
        if site <= psi.center:
            raise ValueError(f"stale canonical form: site {site} is not right of center {psi.center}")
        if cache.right[site + 1] is None:
            raise ValueError(f"right environment {site + 1} missing")
        out.right[site] = grow_right(cache.right[site + 1], psi.tensors[site], h.tensors[site])
    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    return out


def apply_effective(left: np.ndarray, w: np.ndarray, right: np.ndarray, v: np.ndarray) -> np.ndarray:
    """H^[k] v for a center tensor ``v`` of shape (a, s, c)."""
    t = np.tensordot(left, v, axes=(2, 0))            # (x, b, s', c')
    t = np.tensordot(t, w, axes=([1, 2], [0, 2]))     # (x, c', s, B)
    t = np.tensordot(t, right, axes=([1, 3], [2, 1]))  # (x, s, z)
    return t


def effective_matrix(left: np.ndarray, w: np.ndarray, right: np.ndarray) -> np.ndarray:
    t = np.tensordot(left, w, axes=(1, 0))            # (x, x', s, s', B)
    t = np.tensordot(t, right, axes=(4, 1))           # (x, x', s, s', z, z')
    t = t.transpose(0, 2, 4, 1, 3, 5)
    n = left.shape[0] * w.shape[1] * right.shape[0]
    return t.reshape(n, n)


def local_effective_hamiltonian(cache: EnvironmentCache, h: MpoOperator, k: int) -> np.ndarray:
    """Dense effective Hamiltonian of site ``k``, rows indexed (a, s, c)."""
    if not 0 <= k < h.length:
        raise IndexError(f"site {k} outside chain")
    left, right = cache.left[k], cache.right[k + 1]
    if left is None or right is None:
        raise ValueError(f"environments around site {k} are not available")
    if left.shape[1] != h.tensors[k].shape[0] or right.shape[1] != h.tensors[k].shape[3]:
        raise ValueError(f"cached environments inconsistent with MPO at site {k}")
    m = effective_matrix(left, h.tensors[k], right)
    return (m + m.conj().T) / 2


# -- expectation values ---------------------------------------------------

def expectation_value(psi: MpsState, h: MpoOperator) -> float:
    """<psi|H|psi> / <psi|psi>."""
    env = _ones3()
    for a, w in zip(psi.tensors, h.tensors):
        env = grow_left(env, a, w)
    return float(env[0, 0, 0].real / overlap(psi, psi).real)


def matrix_element(bra: MpsState, h: MpoOperator, ket: MpsState) -> complex:
    """<bra|H|ket> without normalization."""
    env = _ones3()
    for b, a, w in zip(bra.tensors, ket.tensors, h.tensors):
        env = grow_left(env, a, w, bra=b)
    return complex(env[0, 0, 0])


def subspace_energies(h: MpoOperator, states: Sequence[MpsState]) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of H restricted to the span of ``states``.

    Returns ``(energies, mixing)`` with ``mixing[:, i]`` the coefficients of
    the i-th Ritz vector in the given states.  Near-degenerate pairs that
    the sweeps found as symmetry-broken combinations are split correctly,
    because the tunnelling element <a|H|b> enters the small matrix.
    """
    n = len(states)
    gram = np.empty((n, n), dtype=np.complex128)
    hmat = np.empty((n, n), dtype=np.complex128)
    for i in range(n):
        for j in range(i, n):
            gram[i, j] = overlap(states[i], states[j])
            hmat[i, j] = matrix_element(states[i], h, states[j])
            gram[j, i] = gram[i, j].conjugate()
            hmat[j, i] = hmat[i, j].conjugate()
    vals, vecs = scipy.linalg.eigh(hmat, gram)
    return vals, vecs


def _grow_left_double(env: np.ndarray, a: np.ndarray, w: np.ndarray) -> np.ndarray:
    t = np.tensordot(env, a, axes=(3, 0))             # (x, b1, b2, s2, y')
    t = np.tensordot(t, w, axes=([2, 3], [0, 2]))     # (x, b1, y', s1, B2)
    t = np.tensordot(t, w, axes=([1, 3], [0, 2]))     # (x, y', B2, s0, B1)
    t = np.tensordot(a.conj(), t, axes=([0, 1], [0, 3]))  # (y, y', B2, B1)
    return t.transpose(0, 3, 2, 1)


def energy_variance(psi: MpsState, h: MpoOperator) -> float:
    """<H^2> - <H>^2 for the normalized state, clamped at zero.

    <H^2> is contracted with two MPO layers between bra and ket.
    """
    norm2 = overlap(psi, psi).real
    env1 = _ones3()
    env2 = np.ones((1, 1, 1, 1), dtype=np.complex128)
    for a, w in zip(psi.tensors, h.tensors):
        env1 = grow_left(env1, a, w)
        env2 = _grow_left_double(env2, a, w)
    e = env1[0, 0, 0].real / norm2
    e2 = env2[0, 0, 0, 0].real / norm2
    return max(float(e2 - e * e), 0.0)


# -- local eigensolvers ---------------------------------------------------

def _lowest_dense(m: np.ndarray):
    vals, vecs = scipy.linalg.eigh(m, subset_by_index=(0, 0))
    return float(vals[0]), vecs[:, 0]




class _Projector:
    """Orthogonal projector onto the complement of span{F_m}."""

    def __init__(self, fs: Sequence[np.ndarray], dim: int):
        if not fs:
            self.q = np.zeros((dim, 0), dtype=np.complex128)
            return
        f = np.stack([x.reshape(-1) for x in fs], axis=1)
        gram = f.conj().T @ f
        vals, vecs = np.linalg.eigh((gram + gram.conj().T) / 2)
        keep = vals > GRAM_FLOOR
        # regularized N^-1/2 turns the F_m into an orthonormal basis of their span
        self.q = f @ (vecs[:, keep] / np.sqrt(vals[keep]))
        if self.q.shape[1] >= dim:
            raise DegeneracyError(
                f"constraints span the whole local space (rank {self.q.shape[1]}, dim {dim}); "
                f"Gram eigenvalues {vals}"
            )

    @property
    def rank(self) -> int:
        return self.q.shape[1]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        if self.rank == 0:
            return v
        return v - self.q @ (self.q.conj().T @ v)

    def matrix(self) -> np.ndarray:
        return np.eye(self.q.shape[0]) - self.q @ self.q.conj().T


# -- the sweep engine -----------------------------------------------------

class _Sweeper:
    """Mutable working state of one variational solve."""

    def __init__(self, h: MpoOperator, psi: MpsState, config: SweepConfig,
                 lower: Sequence[MpsState] = (), rng=None):
        self.h = h
        self.config = config
        self.L = h.length
        psi = shift_center(psi, 0) if psi.center != 0 else psi
        self.tensors = list(psi.tensors)
        self.tensors[0] = self.tensors[0] / np.linalg.norm(self.tensors[0])
        self.lower = [list(shift_center(p, 0).tensors) if p.center is None else list(p.tensors)
                      for p in lower]
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.local_energies: list[float] = []
        self.discarded: list[float] = []
        self.noise = 0.0
        self.matvecs = 0
        self.krylov_tol = config.krylov_tol
        self._init_environments()

    def _init_environments(self):
        L = self.L
        cache = EnvironmentCache.empty(L)
        for k in range(L - 1, 0, -1):
            cache.right[k] = grow_right(cache.right[k + 1], self.tensors[k], self.h.tensors[k])
        self.env = cache
        self.oleft = []
        self.oright = []
        for phi in self.lower:
            ol = [None] * (L + 1)
            orr = [None] * (L + 1)
            ol[0] = np.ones((1, 1), dtype=np.complex128)
            orr[L] = np.ones((1, 1), dtype=np.complex128)
            for k in range(L - 1, 0, -1):
                orr[k] = self._ov_right(orr[k + 1], self.tensors[k], phi[k])
            self.oleft.append(ol)
            self.oright.append(orr)

    @staticmethod
    def _ov_left(env, m, a):
        t = np.tensordot(env, a, axes=(1, 0))          # (x, s, y')
        return np.tensordot(m.conj(), t, axes=([0, 1], [0, 1]))

    @staticmethod
    def _ov_right(env, m, a):
        t = np.tensordot(a, env, axes=(2, 1))          # (x', s, y)
        return np.tensordot(m.conj(), t, axes=([1, 2], [1, 2]))

    def _constraint_vectors(self, k: int) -> list[np.ndarray]:
        fs = []
        for phi, ol, orr in zip(self.lower, self.oleft, self.oright):
            t = np.tensordot(ol[k], phi[k], axes=(1, 0))     # (x, s, z')
            fs.append(np.tensordot(t, orr[k + 1], axes=(2, 1)))
        return fs

    def _solve_site(self, k: int) -> np.ndarray:
        left, w, right = self.env.left[k], self.h.tensors[k], self.env.right[k + 1]
        shape = (left.shape[0], w.shape[1], right.shape[0])
        n = int(np.prod(shape))
        proj = _Projector(self._constraint_vectors(k), n)
        v0 = proj(self.tensors[k].reshape(-1))
        if np.linalg.norm(v0) < 1e-8:
            v0 = proj(self.rng.standard_normal(n) + 1j * self.rng.standard_normal(n))
        v0 = v0 / np.linalg.norm(v0)

        if n <= self.config.local_solver_dim_threshold or n <= 3:
            m = effective_matrix(left, w, right)
            m = (m + m.conj().T) / 2
            if proj.rank:
                basis = scipy.linalg.null_space(proj.q.conj().T)
                e, y = _lowest_dense(basis.conj().T @ m @ basis)
                v = basis @ y
            else:
                e, v = _lowest_dense(m)
        else:
            a, d, c = shape
            # fuse left environment with the MPO tensor once per site
            lw = np.tensordot(left, w, axes=(1, 0)).transpose(0, 2, 1, 3, 4)
            lw = lw.reshape(a * d, -1)

            def hv(x):
                t = np.tensordot(x.reshape(shape), right, axes=(2, 2))  # (x', s', z, B)
                t = t.transpose(0, 1, 3, 2).reshape(-1, c)
                return (lw @ t).reshape(-1)

            if proj.rank:
                hv0 = proj(hv(v0))
                shift = float(np.vdot(v0, hv0).real) + 1.0

                def matvec(x):
                    px = proj(x)
                    return proj(hv(px)) + shift * (x - px)
            else:
                matvec = hv
            e, v, count = lowest_eigenpair(matvec, v0, self.krylov_tol)
            self.matvecs += count
            v = proj(v)
            v = v / np.linalg.norm(v)
        self.local_energies.append(e)
        if self.noise > 0:
            kick = self.rng.standard_normal(n) + 1j * self.rng.standard_normal(n)
            v = v + self.noise * proj(kick) / math.sqrt(2 * n)
            v = v / np.linalg.norm(v)
        return v.reshape(shape)

    def right_sweep(self):
        chi = self.config.chi_max
        for k in range(self.L - 1):
            m = self._solve_site(k)
            a, self.tensors[k + 1], svd = left_orthonormalize(m, self.tensors[k + 1], chi, 0.0)
            self.tensors[k] = a
            self.discarded.append(svd.discarded_weight)
            self.env.left[k + 1] = grow_left(self.env.left[k], a, self.h.tensors[k])
            for phi, ol in zip(self.lower, self.oleft):
                ol[k + 1] = self._ov_left(ol[k], a, phi[k])

    def left_sweep(self):
        chi = self.config.chi_max
        for k in range(self.L - 1, 0, -1):
            m = self._solve_site(k)
            b, self.tensors[k - 1], svd = right_orthonormalize(m, self.tensors[k - 1], chi, 0.0)
            self.tensors[k] = b
            self.discarded.append(svd.discarded_weight)
            self.env.right[k] = grow_right(self.env.right[k + 1], b, self.h.tensors[k])
            for phi, orr in zip(self.lower, self.oright):
                orr[k] = self._ov_right(orr[k + 1], b, phi[k])
        self.tensors[0] = self.tensors[0] / np.linalg.norm(self.tensors[0])

    def state(self) -> MpsState:
        return MpsState(tuple(self.tensors), 0, float(sum(self.discarded)))


def _run_single(h: MpoOperator, psi0: MpsState, config: SweepConfig,
                lower: Sequence[MpsState], rng, progress) -> SolveReport:
    sweeper = _Sweeper(h, psi0, config, lower, rng)
    history = []
    converged = False
    energy = math.nan
    variance = math.nan
    max_dw = 0.0
    sweep = 0
    for sweep in range(1, config.max_sweeps + 1):
        sweeper.noise = config.noise * 0.5 ** (sweep - 1) if sweep <= config.noise_sweeps else 0.0
        sweeper.discarded = []
        # loose local solves while far from convergence; the Ritz value never
        # exceeds the starting Rayleigh quotient, so sweeps stay monotone
        sweeper.krylov_tol = max(config.krylov_tol, 1e-3 * 10.0 ** (1 - sweep))
        sweeper.right_sweep()
        sweeper.left_sweep()
        psi = sweeper.state()
        energy = expectation_value(psi, h)
        variance = energy_variance(psi, h)
        dw = max(sweeper.discarded, default=0.0)
        max_dw = max(max_dw, dw)
        record = SweepRecord(sweep, energy, variance, dw)
        history.append(record)
        log.debug("sweep %d: E=%.12f var=%.3e dw=%.2e", sweep, energy, variance, dw)
        if progress is not None:
            progress(record)
        if sweeper.noise == 0 and sweep >= config.min_sweeps:
            if variance < config.tol_variance:
                converged = True
                break
            # energy no longer moves: the variance floor is set by chi_max
            if len(history) >= 3 and all(
                abs(history[-i].energy - history[-i - 1].energy) < config.stall_tol * h.length
                for i in (1, 2)
            ):
                log.info("sweeps stalled at variance %.3e after %d sweeps", variance, sweep)
                break
    return SolveReport(
        energy=energy,
        variance=variance,
        sweeps_used=sweep,
        converged=converged,
        final_state=sweeper.state(),
        history=history,
        local_energies=sweeper.local_energies,
        max_discarded_weight=max_dw,
    )


def _solve(h: MpoOperator, config: SweepConfig, lower: Sequence[MpsState],
           initial: MpsState | None, progress) -> SolveReport:
    starts: list[tuple[MpsState, np.random.Generator]] = []
    seq = np.random.SeedSequence([config.seed, len(lower)])
    children = seq.spawn(config.restarts + 1)
    if initial is not None:
        if initial.length != h.length:
            raise ValueError("initial state and MPO differ in length")
        starts.append((initial, np.random.default_rng(children[-1])))
    for r in range(config.restarts):
        rng = np.random.default_rng(children[r])
        psi = random_mps(h.length, h.phys_dim, config.chi_max, rng)
        starts.append((psi, rng))
    if not starts:
        raise ValueError("no initial state: give restarts >= 1 or an initial state")

    reports = [_run_single(h, psi0, config, lower, rng, progress) for psi0, rng in starts]
    energies = [r.energy for r in reports]
    # lowest energy wins; among attempts tied with it a converged one is preferred
    floor = min(energies)
    tied = [r for r in reports if r.energy <= floor + ENERGY_TIE * h.length]
    best = min(tied, key=lambda r: (not r.converged, r.energy))
    best.attempt_energies = energies
    if not best.converged:
        log.warning("no converged attempt out of %d (best variance %.3e)", len(starts), best.variance)
    return best


def ground_state_search(h: MpoOperator, config: SweepConfig, initial: MpsState | None = None,
                        progress: Callable[[SweepRecord], None] | None = None) -> SolveReport:
    """Variational ground state by alternating single-site sweeps.

    ``config.restarts`` random initial states are tried (plus ``initial``
    when given) and the lowest-energy result wins, converged results first.
    The returned state is right-canonical with unit norm.
    """
    return _solve(h, config, (), initial, progress)


def excited_state_search(h: MpoOperator, lower: Sequence[MpsState], config: SweepConfig,
                         initial: MpsState | None = None,
                         progress: Callable[[SweepRecord], None] | None = None) -> SolveReport:
    """Lowest state orthogonal to every state in ``lower``.

    The lower states must be mutually orthogonal (to 1e-6) and non-zero.
    """
    lower = [p if p.center is not None else shift_center(p, 0) for p in lower]
    lower = [p.scaled(1.0 / np.linalg.norm(p.tensors[p.center])) for p in lower]
    for i in range(len(lower)):
        for j in range(i):
            ov = abs(overlap(lower[i], lower[j]))
            if ov > 1e-6:
                raise ValueError(f"lower states {j} and {i} are not orthogonal (|overlap|={ov:.2e})")
    return _solve(h, config, lower, initial, progress)
