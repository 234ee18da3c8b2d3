"""Two-electron reduced density matrices in packed antisymmetric storage.

A 2-RDM ``D[i, j, k, l] = <a+_i a+_j a_l a_k>`` is antisymmetric under
``i <-> j`` and ``k <-> l``, so only the ``i < j``, ``k < l`` block is stored.
The packed matrix is indexed by ordered pairs in ``np.triu_indices(r, 1)``
order: (0, 1), (0, 2), ..., (r-2, r-1).

Every element of the packed block appears four times in the full tensor, so

* full-index trace      = 2 x packed trace
* full-index Frobenius  = 2 x packed Frobenius
* full-index eigenvalue = 2 x packed eigenvalue

Traces and norms are reported in the full-index convention unless asked
otherwise, so ``trace() == N * (N - 1)`` for a representable 2-RDM.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)

FULL = "full"
PACKED = "packed"


@lru_cache(maxsize=None)
def pair_indices(r: int) -> tuple[np.ndarray, np.ndarray]:
    """Row/column orbital indices of the packed pair basis (i < j)."""
    i, j = np.triu_indices(r, 1)
    i.setflags(write=False)
    j.setflags(write=False)
    return i, j


@lru_cache(maxsize=None)
def pair_lookup(r: int) -> np.ndarray:
    """``(r, r)`` table: packed index of pair (i, j) for i < j, -1 elsewhere."""
    table = -np.ones((r, r), dtype=np.int64)
    i, j = pair_indices(r)
    table[i, j] = np.arange(len(i))
    table.setflags(write=False)
    return table


def n_pairs(r: int) -> int:
    return r * (r - 1) // 2


def pack(full: np.ndarray) -> np.ndarray:
    """Extract the ``i<j, k<l`` block of antisymmetric 4-index tensor(s).

    Leading batch dimensions are carried through.
    """
    r = full.shape[-1]
    i, j = pair_indices(r)
    return full[..., i[:, None], j[:, None], i[None, :], j[None, :]]


def unpack(packed: np.ndarray, r: int) -> np.ndarray:
    """Rebuild the antisymmetric ``(..., r, r, r, r)`` tensor from packed blocks."""
    i, j = pair_indices(r)
    full = np.zeros(packed.shape[:-2] + (r, r, r, r), dtype=packed.dtype)
    I, J = i[:, None], j[:, None]
    K, L = i[None, :], j[None, :]
    full[..., I, J, K, L] = packed
    full[..., J, I, K, L] = -packed
    full[..., I, J, L, K] = -packed
    full[..., J, I, L, K] = packed
    return full


def contract_full(full: np.ndarray, N: int) -> np.ndarray:
    return np.einsum("...ijkj->...ik", full) / (N - 1)


def q_from_packed(packed: np.ndarray, r: int, N: int, constant: bool = True) -> np.ndarray:
    """Packed two-hole matrix for (a batch of) packed 2-RDMs.

    ``constant=False`` drops the D-independent term, leaving the linear part.
    """
    full = unpack(packed, r)
    d1 = contract_full(full, N)
    eye = np.eye(r)
    Q = full
    Q -= np.einsum("ik,...jl->...ijkl", eye, d1)
    Q -= np.einsum("jl,...ik->...ijkl", eye, d1)
    Q += np.einsum("il,...jk->...ijkl", eye, d1)
    Q += np.einsum("jk,...il->...ijkl", eye, d1)
    if constant:
        Q += np.einsum("ik,jl->ijkl", eye, eye) - np.einsum("il,jk->ijkl", eye, eye)
    return pack(Q)


def g_from_packed(packed: np.ndarray, r: int, N: int) -> np.ndarray:
    """``(..., r*r, r*r)`` particle-hole matrix for (a batch of) packed 2-RDMs."""
    full = unpack(packed, r)
    d1 = contract_full(full, N) if N >= 2 else np.zeros(full.shape[:-4] + (r, r))
    G = np.einsum("jl,...ik->...ijkl", np.eye(r), d1) - np.swapaxes(full, -1, -3)
    return G.reshape(full.shape[:-4] + (r * r, r * r))


def _check_symmetric(data: np.ndarray, what: str, tol: float = 1e-12) -> None:
    if data.ndim != 2 or data.shape[0] != data.shape[1]:
        raise ValueError(f"{what} must be a square matrix, got shape {data.shape}")
    asym = np.max(np.abs(data - data.T)) if data.size else 0.0
    if asym > tol * max(1.0, np.max(np.abs(data))):
        raise ValueError(f"{what} is not symmetric (max asymmetry {asym:.3e})")


@dataclass(frozen=True, eq=False)
class TwoRDM:
    """Packed 2-RDM (also used for the Q matrix and the slack blocks).

    ``data`` is the real symmetric ``r(r-1)/2`` square matrix over pairs i<j.
    """

    r: int
    N: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        p = n_pairs(self.r)
        if data.shape != (p, p):
            raise ValueError(f"packed 2-RDM for r={self.r} must be {p}x{p}, got {data.shape}")
        _check_symmetric(data, "packed 2-RDM")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @classmethod
    def from_full(cls, full: np.ndarray, N: int) -> "TwoRDM":
        full = np.asarray(full, dtype=float)
        return cls(full.shape[0], N, pack(full))

    @classmethod
    def from_noisy(cls, data: np.ndarray, r: int, N: int) -> "TwoRDM":
        """Hermitize measured data before use; the removed asymmetry is logged."""
        data = np.asarray(data, dtype=float)
        asym = float(np.max(np.abs(data - data.T))) if data.size else 0.0
        if asym > 0:
            logger.info("hermitized input 2-RDM, max asymmetry %.3e", asym)
        return cls(r, N, 0.5 * (data + data.T))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def full(self) -> np.ndarray:
        return unpack(self.data, self.r)

    def trace(self, convention: str = FULL) -> float:
        t = float(np.trace(self.data))
        return 2.0 * t if convention == FULL else t

    def scaled(self, c: float) -> "TwoRDM":
        return TwoRDM(self.r, self.N, c * self.data)

    def __sub__(self, other: "TwoRDM") -> "TwoRDM":
        _check_compatible(self, other)
        return TwoRDM(self.r, self.N, self.data - other.data)

    def __add__(self, other: "TwoRDM") -> "TwoRDM":
        _check_compatible(self, other)
        return TwoRDM(self.r, self.N, self.data + other.data)

    def to_json(self) -> dict:
        rows, cols = np.tril_indices(self.dim)
        return {
            "r": self.r,
            "N": self.N,
            "convention": PACKED,
            "data": self.data[rows, cols].tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TwoRDM":
        r, N = int(obj["r"]), int(obj["N"])
        if obj.get("convention", PACKED) != PACKED:
            raise ValueError(f"unsupported 2-RDM convention {obj.get('convention')!r}")
        return cls.from_noisy(lower_to_matrix(obj["data"], n_pairs(r)), r, N)


def lower_to_matrix(flat, dim: int) -> np.ndarray:
    """Symmetric matrix from its row-major lower triangle."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (dim * (dim + 1) // 2,):
        raise ValueError(
            f"expected {dim * (dim + 1) // 2} lower-triangle entries, got {flat.size}"
        )
    out = np.zeros((dim, dim))
    rows, cols = np.tril_indices(dim)
    out[rows, cols] = flat
    out[cols, rows] = flat
    return out


def save_rdm(D: TwoRDM, path) -> None:
    Path(path).write_text(json.dumps(D.to_json()))


def load_rdm(path) -> TwoRDM:
    return TwoRDM.from_json(json.loads(Path(path).read_text()))


def _check_compatible(a: TwoRDM, b: TwoRDM) -> None:
    if a.r != b.r or a.data.shape != b.data.shape:
        raise ValueError(f"2-RDM dimension mismatch: r={a.r} vs r={b.r}")


@dataclass(frozen=True, eq=False)
class GMatrix:
    """Particle-hole matrix over all ordered index pairs, ``(r*r, r*r)``."""

    r: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (self.r**2, self.r**2):
            raise ValueError(f"G matrix for r={self.r} must be {self.r**2} square")
        _check_symmetric(data, "G matrix", tol=1e-10)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    def full(self) -> np.ndarray:
        r = self.r
        return self.data.reshape(r, r, r, r)


@dataclass(frozen=True, eq=False)
class OneRDM:
    r: int
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.shape != (self.r, self.r):
            raise ValueError(f"1-RDM for r={self.r} must be {self.r}x{self.r}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)


def contract_to_1rdm(D: TwoRDM) -> OneRDM:
    """``1D[i, k] = sum_j D[i, j, k, j] / (N - 1)``."""
    if D.N < 2:
        raise ValueError(f"contraction needs N >= 2, got N={D.N}")
    return OneRDM(D.r, contract_full(D.full(), D.N))


def map_Q(D: TwoRDM) -> TwoRDM:
    """Two-hole matrix ``Q[i,j,k,l] = <a_i a_j a+_l a+_k>`` as a function of D.

    Q = D - (1D wedge I terms) + antisymmetrized identity.
    """
    if D.N < 2:
        raise ValueError(f"map_Q needs N >= 2, got N={D.N}")
    return TwoRDM(D.r, D.N, q_from_packed(D.data, D.r, D.N))


def map_G(D: TwoRDM) -> GMatrix:
    """Particle-hole matrix ``G[i,j,k,l] = delta_jl 1D[i,k] - D[i,l,k,j]``."""
    if D.N < 1:
        raise ValueError("map_G needs N >= 1")
    return GMatrix(D.r, g_from_packed(D.data, D.r, D.N))


class Spectrum(NamedTuple):
    min_eigenvalue: float
    n_negative: int
    eigenvalues: np.ndarray


def min_eigenvalues(M, tol: float = 1e-10) -> Spectrum:
    """Dense spectrum of a packed 2-RDM, G matrix, or plain symmetric array.

    Eigenvalues are those of the stored matrix (packed basis for a TwoRDM).
    """
    data = M.data if isinstance(M, (TwoRDM, GMatrix, OneRDM)) else np.asarray(M, float)
    w = np.linalg.eigvalsh(0.5 * (data + data.T))
    return Spectrum(float(w[0]), int(np.sum(w < -tol)), w)


class Deviation(NamedTuple):
    frobenius: float
    nuclear: float


def deviation_norms(A: TwoRDM, B: TwoRDM, convention: str = FULL) -> Deviation:
    """Frobenius and nuclear norms of ``A - B``.

    Full-index values are exactly twice the packed ones (see module docstring).
    """
    _check_compatible(A, B)
    diff = A.data - B.data
    fro = float(np.linalg.norm(diff))
    nuc = float(np.sum(np.abs(np.linalg.eigvalsh(diff))))
    if convention == FULL:
        return Deviation(2.0 * fro, 2.0 * nuc)
    if convention == PACKED:
        return Deviation(fro, nuc)
    raise ValueError(f"unknown convention {convention!r}")
