"""Determinant-basis exact diagonalization and direct RDM evaluation.

Determinants are occupation bitmasks, bit ``i`` set when spin orbital ``i`` is
occupied. Creation and annihilation carry the Jordan-Wigner phase
``(-1)^(number of occupied orbitals below i)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from .hamiltonians import MolecularIntegrals
from .rdm import GMatrix, OneRDM, TwoRDM, n_pairs, pair_indices


class EmptySectorError(ValueError):
    pass


def _below(det: int, i: int) -> int:
    return (det & ((1 << i) - 1)).bit_count()


def annihilate(det: int, i: int):
    """Return ``(sign, det')`` for ``a_i|det>``, or None when it vanishes."""
    if not det >> i & 1:
        return None
    return (-1 if _below(det, i) & 1 else 1), det ^ (1 << i)


def create(det: int, i: int):
    if det >> i & 1:
        return None
    return (-1 if _below(det, i) & 1 else 1), det | (1 << i)


def apply_string(ops, det: int):
    """Apply ``[(orbital, dagger), ...]`` right to left; None if annihilated."""
    sign = 1
    for orb, dagger in reversed(ops):
        res = create(det, orb) if dagger else annihilate(det, orb)
        if res is None:
            return None
        s, det = res
        sign *= s
    return sign, det


def sz2_of(det: int) -> int:
    alpha = det & 0x5555555555555555
    beta = det & 0xAAAAAAAAAAAAAAAA
    return alpha.bit_count() - beta.bit_count()


@dataclass(frozen=True, eq=False)
class FockBasis:
    r: int
    N: int
    sz2: int
    dets: tuple

    @cached_property
    def index(self) -> dict:
        return {d: n for n, d in enumerate(self.dets)}

    def __len__(self) -> int:
        return len(self.dets)


def build_basis(r: int, N: int, sz2: int = 0) -> FockBasis:
    """All determinants with ``N`` electrons and ``2*Sz == sz2`` in ascending order."""
    if not 0 <= N <= r:
        raise ValueError(f"particle count N={N} outside [0, {r}]")
    if r % 2:
        raise ValueError(f"spin-orbital count must be even, got r={r}")
    if (N + sz2) % 2:
        raise EmptySectorError(f"sz2={sz2} has the wrong parity for N={N}")
    n_alpha, n_beta = (N + sz2) // 2, (N - sz2) // 2
    n_spatial = r // 2
    if not (0 <= n_alpha <= n_spatial and 0 <= n_beta <= n_spatial):
        raise EmptySectorError(f"sector N={N}, sz2={sz2} is empty for r={r}")
    dets = []
    for occ_a in combinations(range(n_spatial), n_alpha):
        mask_a = sum(1 << (2 * p) for p in occ_a)
        for occ_b in combinations(range(n_spatial), n_beta):
            dets.append(mask_a | sum(1 << (2 * p + 1) for p in occ_b))
    return FockBasis(r, N, sz2, tuple(sorted(dets)))


@dataclass(frozen=True, eq=False)
class FockState:
    basis: FockBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=float)
        if amps.shape != (len(self.basis),):
            raise ValueError("amplitude vector does not match the basis size")
        if abs(np.linalg.norm(amps) - 1.0) > 1e-12:
            raise ValueError(f"state is not normalized (norm {np.linalg.norm(amps):.15f})")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def normalized(cls, basis: FockBasis, amplitudes) -> "FockState":
        amps = np.asarray(amplitudes, dtype=float)
        return cls(basis, amps / np.linalg.norm(amps))


def random_state(basis: FockBasis, rng: np.random.Generator) -> FockState:
    return FockState.normalized(basis, rng.standard_normal(len(basis)))


def _occupied(det: int, r: int) -> list[int]:
    return [i for i in range(r) if det >> i & 1]


def build_hamiltonian_matrix(ints: MolecularIntegrals, basis: FockBasis) -> np.ndarray:
    """Dense CI matrix from the Slater-Condon rules."""
    if ints.r != basis.r:
        raise ValueError(f"integrals have r={ints.r} but basis has r={basis.r}")
    h, V = ints.h, ints.V
    Va = V - V.transpose(0, 1, 3, 2)  # <ij||kl>
    dets = basis.dets
    n = len(dets)
    H = np.zeros((n, n))
    occs = [_occupied(d, basis.r) for d in dets]
    for m in range(n):
        occ = occs[m]
        H[m, m] = ints.e_core + sum(h[i, i] for i in occ) + 0.5 * sum(
            Va[i, j, i, j] for i in occ for j in occ
        )
        for n2 in range(m + 1, n):
            diff = dets[m] ^ dets[n2]
            degree = diff.bit_count() // 2
            if degree > 2:
                continue
            holes = _occupied(dets[m] & diff, basis.r)
            parts = _occupied(dets[n2] & diff, basis.r)
            if degree == 1:
                (i,), (a,) = holes, parts
                sign, _ = apply_string([(a, True), (i, False)], dets[m])
                val = h[a, i] + sum(Va[a, j, i, j] for j in occ if j != i)
            else:
                i, j = holes
                a, b = parts
                sign, _ = apply_string([(a, True), (b, True), (j, False), (i, False)], dets[m])
                val = Va[a, b, i, j]
            H[n2, m] = H[m, n2] = sign * val
    return H


def eigensolve(H: np.ndarray, k: int = 1, degeneracy_tol: float = 1e-9):
    """The ``k`` lowest eigenpairs as ``[(eigenvalue, amplitudes), ...]``.

    Degenerate subspaces get a canonical basis (projected unit vectors,
    Gram-Schmidt, first significant amplitude positive) and are ordered by
    descending lexicographic comparison of the rounded amplitude vectors.
    """
    H = np.asarray(H, dtype=float)
    dim = H.shape[0]
    if not 1 <= k <= dim:
        raise ValueError(f"requested k={k} eigenpairs of a {dim}x{dim} matrix")
    w, U = np.linalg.eigh(H)
    out = []
    start = 0
    while start < dim and len(out) < k:
        stop = start + 1
        while stop < dim and w[stop] - w[start] <= degeneracy_tol * max(1.0, abs(w[start])):
            stop += 1
        vecs = _canonical_basis(U[:, start:stop])
        ordered = sorted(vecs, key=lambda v: tuple(-np.round(v, 10)))
        for offset, v in enumerate(ordered):
            out.append((float(w[start + offset]), v))
        start = stop
    return out[:k]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    big = np.flatnonzero(np.abs(v) > 1e-8)
    if big.size and v[big[0]] < 0:
        v = -v
    return v


def _canonical_basis(sub: np.ndarray) -> list[np.ndarray]:
    d = sub.shape[1]
    if d == 1:
        v = sub[:, 0] / np.linalg.norm(sub[:, 0])
        return [_fix_sign(v)]
    P = sub @ sub.T
    vecs: list[np.ndarray] = []
    for col in range(P.shape[0]):
        v = P[:, col].copy()
        for u in vecs:
            v -= (u @ v) * u
        nrm = np.linalg.norm(v)
        if nrm > 1e-6:
            vecs.append(v / nrm)
        if len(vecs) == d:
            break
    return [_fix_sign(v) for v in vecs]


def ground_and_excited(ints: MolecularIntegrals, N: int, sz2: int = 0, k: int = 1):
    """Convenience: basis plus the ``k`` lowest ``(energy, FockState)`` pairs."""
    basis = build_basis(ints.r, N, sz2)
    pairs = eigensolve(build_hamiltonian_matrix(ints, basis), k)
    return basis, [(e, FockState.normalized(basis, v)) for e, v in pairs]


# direct RDM evaluation -----------------------------------------------------

def _transition_matrix(psi: FockState, ops_for_col, n_cols: int) -> np.ndarray:
    """Rows: intermediate determinants m; columns: operator strings c.

    Entry ``<m| O_c |psi>``.
    """
    rows: dict[int, int] = {}
    entries = []
    for det, amp in zip(psi.basis.dets, psi.amplitudes):
        if amp == 0.0:
            continue
        for col, ops in ops_for_col:
            res = apply_string(ops, det)
            if res is None:
                continue
            sign, m = res
            row = rows.setdefault(m, len(rows))
            entries.append((row, col, sign * amp))
    T = np.zeros((len(rows), n_cols))
    for row, col, val in entries:
        T[row, col] += val
    return T


def rdm1_from_state(psi: FockState) -> OneRDM:
    """``1D[i, k] = <a+_i a_k>`` by direct operator application."""
    r = psi.basis.r
    idx = psi.basis.index
    out = np.zeros((r, r))
    for det, amp in zip(psi.basis.dets, psi.amplitudes):
        for i in range(r):
            for k in range(r):
                res = apply_string([(i, True), (k, False)], det)
                if res is not None and res[1] in idx:
                    out[i, k] += psi.amplitudes[idx[res[1]]] * res[0] * amp
    return OneRDM(r, out)


def rdm2_from_state(psi: FockState) -> TwoRDM:
    """``D[ij, kl] = <a+_i a+_j a_l a_k>`` for i<j, k<l, as a Gram matrix."""
    r, N = psi.basis.r, psi.basis.N
    if N < 2:
        raise ValueError(f"2-RDM needs N >= 2, got N={N}")
    I, J = pair_indices(r)
    ops = [(c, [(int(j), False), (int(i), False)]) for c, (i, j) in enumerate(zip(I, J))]
    T = _transition_matrix(psi, ops, n_pairs(r))
    return TwoRDM(r, N, T.T @ T)


def rdmQ_from_state(psi: FockState) -> TwoRDM:
    """``Q[ij, kl] = <a_i a_j a+_l a+_k>`` for i<j, k<l, as a Gram matrix."""
    r, N = psi.basis.r, psi.basis.N
    I, J = pair_indices(r)
    ops = [(c, [(int(j), True), (int(i), True)]) for c, (i, j) in enumerate(zip(I, J))]
    U = _transition_matrix(psi, ops, n_pairs(r))
    return TwoRDM(r, N, U.T @ U)


def rdmG_from_state(psi: FockState) -> GMatrix:
    """``G[ij, kl] = <a+_i a_j a+_l a_k>`` over all ordered pairs."""
    r = psi.basis.r
    ops = [(k * r + l, [(l, True), (k, False)]) for k in range(r) for l in range(r)]
    W = _transition_matrix(psi, ops, r * r)
    return GMatrix(r, W.T @ W)
