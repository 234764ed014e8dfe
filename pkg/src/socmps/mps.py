"""Matrix product states with tracked canonical form.

Site tensors have index order ``(left bond, physical, right bond)`` and the
boundary bonds have dimension one.  Sites are numbered from 0.

The orthogonality center ``center`` is the site carrying the norm: every
tensor left of it is left-normalized and every tensor right of it is
right-normalized.  ``center = 0`` is the right-canonical form and
``center = L - 1`` the left-canonical form.  ``center = None`` means no
gauge is known.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .tensor import DEFAULT_CUTOFF, ShapeError, as_tensor, svd_truncate

MAX_DENSE_SITES = 20

CHECKPOINT_MAGIC = b"SOCMPS\x00\x01"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class MpsState:
    tensors: tuple[np.ndarray, ...]
    center: int | None = None
    discarded_weight: float = field(default=0.0, compare=False)

    def __post_init__(self):
        tensors = tuple(as_tensor(t) for t in self.tensors)
        if len(tensors) < 1:
            raise ShapeError("an MPS needs at least one site")
        for i, t in enumerate(tensors):
            if t.ndim != 3:
                raise ShapeError(f"site {i}: expected rank-3 tensor, got shape {t.shape}")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ShapeError("boundary bond dimensions must be 1")
        d = tensors[0].shape[1]
        for i in range(len(tensors)):
            if tensors[i].shape[1] != d:
                raise ShapeError(f"site {i}: physical dimension differs from {d}")
            if i + 1 < len(tensors) and tensors[i].shape[2] != tensors[i + 1].shape[0]:
                raise ShapeError(f"bond {i}/{i + 1}: dimensions do not match")
        if self.center is not None and not 0 <= self.center < len(tensors):
            raise IndexError(f"center {self.center} outside chain of {len(tensors)}")
        object.__setattr__(self, "tensors", tensors)

    @property
    def length(self) -> int:
        return len(self.tensors)

    @property
    def phys_dim(self) -> int:
        return self.tensors[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        """Dimensions of the L + 1 bonds including both trivial boundaries."""
        return [self.tensors[0].shape[0]] + [t.shape[2] for t in self.tensors]

    @property
    def canonical_form(self) -> str | None:
        if self.center is None:
            return None
        if self.length == 1:
            return "mixed"
        if self.center == 0:
            return "right"
        if self.center == self.length - 1:
            return "left"
        return "mixed"

    def scaled(self, factor: complex) -> "MpsState":
        """Multiply the state by ``factor`` (applied to the center tensor)."""
        k = 0 if self.center is None else self.center
        tensors = list(self.tensors)
        tensors[k] = tensors[k] * factor
        return replace(self, tensors=tuple(tensors))

    def normalized(self) -> "MpsState":
        return self.scaled(1.0 / norm(self))

    def to_dense(self) -> np.ndarray:
        """Full coefficient vector; only allowed for short chains."""
        if self.length > MAX_DENSE_SITES:
            raise ValueError(f"dense reconstruction refused for L={self.length} > {MAX_DENSE_SITES}")
        vec = self.tensors[0].reshape(-1, self.tensors[0].shape[2])
        for t in self.tensors[1:]:
            vec = (vec @ t.reshape(t.shape[0], -1)).reshape(-1, t.shape[2])
        return vec.reshape(-1)


def left_normalized_error(t: np.ndarray) -> float:
    """Max deviation of sum_s A^s† A^s from the identity."""
    m = t.reshape(-1, t.shape[2])
    return float(np.max(np.abs(m.conj().T @ m - np.eye(t.shape[2]))))


def right_normalized_error(t: np.ndarray) -> float:
    """Max deviation of sum_s B^s B^s† from the identity."""
    m = t.reshape(t.shape[0], -1)
    return float(np.max(np.abs(m @ m.conj().T - np.eye(t.shape[0]))))


def canonical_errors(psi: MpsState) -> list[float]:
    """Per-site normalization error relative to the recorded center.

    The center itself reports 0.  Raises if no canonical form is recorded.
    """
    if psi.center is None:
        raise ValueError("state has no recorded canonical form")
    errs = []
    for i, t in enumerate(psi.tensors):
        if i < psi.center:
            errs.append(left_normalized_error(t))
        elif i > psi.center:
            errs.append(right_normalized_error(t))
        else:
            errs.append(0.0)
    return errs


def max_bond_dims(length: int, d: int, chi_max: int) -> list[int]:
    """Largest useful bond dimensions min(d^l, d^(L-l), chi_max) for l = 0..L."""
    dims = []
    for l in range(length + 1):
        dims.append(int(min(d ** min(l, length - l), chi_max)))
    return dims


# -- canonical moves ------------------------------------------------------

def left_orthonormalize(t: np.ndarray, nxt: np.ndarray | None, chi_max: int | None = None,
                        cutoff: float = 0.0):
    """Split ``t`` into an isometry and push ``S V†`` into ``nxt``.

    Returns ``(A, new_next, svd)``; ``new_next`` is ``S V†`` itself when
    ``nxt`` is None.
    """
    a, d, b = t.shape
    svd = svd_truncate(t.reshape(a * d, b), chi_max or a * d, cutoff)
    left = svd.u.reshape(a, d, svd.rank)
    carry = svd.s[:, None] * svd.vdag
    if nxt is None:
        return left, carry, svd
    return left, np.tensordot(carry, nxt, axes=(1, 0)), svd


def right_orthonormalize(t: np.ndarray, prev: np.ndarray | None, chi_max: int | None = None,
                         cutoff: float = 0.0):
    """Split ``t`` into a co-isometry and push ``U S`` into ``prev``."""
    a, d, b = t.shape
    svd = svd_truncate(t.reshape(a, d * b), chi_max or d * b, cutoff)
    right = svd.vdag.reshape(svd.rank, d, b)
    carry = svd.u * svd.s
    if prev is None:
        return right, carry, svd
    return right, np.tensordot(prev, carry, axes=(2, 0)), svd


def shift_center(psi: MpsState, k: int, chi_max: int | None = None,
                 cutoff: float = 0.0) -> MpsState:
    """Bring ``psi`` to mixed-canonical form with orthogonality center ``k``.

    Without ``chi_max`` the move is exact.  A state with unknown gauge is
    fully canonicalized: left-normalized from site 0 up to ``k`` and
    right-normalized from site ``L-1`` down to ``k``.
    """
    L = psi.length
    if not 0 <= k < L:
        raise IndexError(f"center {k} outside chain of length {L}")
    tensors = list(psi.tensors)
    discarded = 0.0
    if psi.center is None:
        lo, hi = 0, L - 1
    else:
        lo = hi = psi.center
    for i in range(lo, k):
        tensors[i], tensors[i + 1], svd = left_orthonormalize(tensors[i], tensors[i + 1], chi_max, cutoff)
        discarded += svd.discarded_weight
    for i in range(hi, k, -1):
        tensors[i], tensors[i - 1], svd = right_orthonormalize(tensors[i], tensors[i - 1], chi_max, cutoff)
        discarded += svd.discarded_weight
    return MpsState(tuple(tensors), k, psi.discarded_weight + discarded)


def canonicalize(psi: MpsState, k: int = 0) -> MpsState:
    """Full canonicalization from scratch, regardless of the recorded form."""
    return shift_center(replace(psi, center=None), k)


# -- construction ---------------------------------------------------------

def from_dense_vector(c, chi_max: int | None = None, d: int = 2,
                      cutoff: float = DEFAULT_CUTOFF) -> MpsState:
    """Left-canonical MPS from a coefficient vector of length d**L.

    Successive SVDs split off one site at a time; the norm of ``c`` ends up
    in the last tensor.  Truncation to ``chi_max`` is optimal per bond and
    the total discarded weight is recorded on the state.
    """
    c = as_tensor(c).reshape(-1)
    L = int(round(np.log(c.size) / np.log(d))) if c.size > 1 else 0
    if L < 1 or d ** L != c.size:
        raise ShapeError(f"vector length {c.size} is not a power of {d}")
    chi_max = chi_max or c.size
    tensors = []
    psi = c.reshape(1, -1)
    discarded = 0.0
    for _ in range(L - 1):
        a = psi.shape[0]
        svd = svd_truncate(psi.reshape(a * d, -1), chi_max, cutoff)
        tensors.append(svd.u.reshape(a, d, svd.rank))
        discarded += svd.discarded_weight
        psi = svd.s[:, None] * svd.vdag
    tensors.append(psi.reshape(psi.shape[0], d, 1))
    return MpsState(tuple(tensors), L - 1, discarded)


def product_state(local_states: Sequence[Sequence[complex]]) -> MpsState:
    """Bond-dimension-one MPS from one local vector per site."""
    tensors = tuple(as_tensor(v).reshape(1, -1, 1) for v in local_states)
    # every site is both left- and right-normalized iff each vector is a unit vector
    return MpsState(tensors, None)


def random_mps(length: int, d: int = 2, chi_max: int = 8, seed=None) -> MpsState:
    """Random right-canonical MPS of unit norm.

    Entries have independent standard normal real and imaginary parts
    before canonicalization.  ``seed`` may be anything accepted by
    ``numpy.random.default_rng``.
    """
    if length < 2:
        raise ValueError(f"length must be >= 2, got {length}")
    if d < 1 or chi_max < 1:
        raise ValueError("d and chi_max must be positive")
    rng = np.random.default_rng(seed)
    dims = max_bond_dims(length, d, chi_max)
    tensors = []
    for l in range(length):
        shape = (dims[l], d, dims[l + 1])
        tensors.append(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    psi = shift_center(MpsState(tuple(tensors), None), 0)
    return psi.scaled(1.0 / norm(psi))


# -- norms and overlaps ---------------------------------------------------

def norm(psi: MpsState) -> float:
    if psi.center is not None:
        return float(np.linalg.norm(psi.tensors[psi.center]))
    return float(np.sqrt(max(overlap(psi, psi).real, 0.0)))


def overlap(phi: MpsState, psi: MpsState) -> complex:
    """<phi|psi> by a left-to-right transfer-matrix contraction."""
    if phi.length != psi.length or phi.phys_dim != psi.phys_dim:
        raise ShapeError("states differ in length or physical dimension")
    env = np.ones((1, 1), dtype=np.complex128)
    for a, b in zip(phi.tensors, psi.tensors):
        env = np.tensordot(env, b, axes=(1, 0))
        env = np.tensordot(a.conj(), env, axes=([0, 1], [0, 1]))
    return complex(env[0, 0])


def insert_gauge(psi: MpsState, bond: int, x: np.ndarray) -> MpsState:
    """Insert ``x x^-1`` on the bond between sites ``bond`` and ``bond+1``.

    The physical state is unchanged; the canonical form is forgotten.
    """
    tensors = list(psi.tensors)
    tensors[bond] = np.tensordot(tensors[bond], x, axes=(2, 0))
    tensors[bond + 1] = np.tensordot(np.linalg.inv(x), tensors[bond + 1], axes=(1, 0))
    return MpsState(tuple(tensors), None)


# -- checkpoint files -----------------------------------------------------
#
# Layout (all integers little-endian):
#   8 bytes  magic  b"SOCMPS\x00\x01"
#   4 bytes  uint32 format version
#   4 bytes  uint32 header length n
#   n bytes  UTF-8 JSON header {"L", "d", "shapes", "canonical_form", "center"}
#   data     each site tensor in C order as float64 pairs (re, im), little-endian

def save_mps(psi: MpsState, path) -> None:
    header = {
        "L": psi.length,
        "d": psi.phys_dim,
        "shapes": [list(t.shape) for t in psi.tensors],
        "canonical_form": psi.canonical_form,
        "center": psi.center,
        "discarded_weight": psi.discarded_weight,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(Path(path), "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        fh.write(blob)
        for t in psi.tensors:
            fh.write(np.ascontiguousarray(t, dtype="<c16").tobytes())


def load_mps(path) -> MpsState:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an MPS checkpoint")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    tensors = []
    for shape in header["shapes"]:
        n = int(np.prod(shape))
        t = np.frombuffer(raw, dtype="<c16", count=n, offset=offset).reshape(shape)
        tensors.append(t.astype(np.complex128))
        offset += 16 * n
    if offset != len(raw):
        raise ValueError(f"{path}: trailing or missing tensor data")
    if len(tensors) != header["L"]:
        raise ValueError(f"{path}: header declares {header['L']} sites, found {len(tensors)}")
    return MpsState(tuple(tensors), header["center"], header.get("discarded_weight", 0.0))
