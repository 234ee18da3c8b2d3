"""Correlated purification of a measured 2-RDM.

The program solved here is::

    minimize    Tr(K D) + w (Tr E+ + Tr E-)
    subject to  D >= 0,  Q = f_Q(D) >= 0,  G = f_G(D) >= 0,
                E+ >= 0, E- >= 0,
                Tr D = N (N - 1),
                D - D_measured = E+ - E-

Traces are full-index traces, so ``Tr E+ + Tr E-`` at the optimum is the
full-index nuclear norm of the correction. Mode ``v2rdm`` drops the slack
blocks and the data coupling (pure energy minimization); mode ``projection``
drops the energy term (nearest 2-positive 2-RDM in nuclear norm).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hamiltonians import ReducedHamiltonian, energy
from .rdm import (
    FULL, TwoRDM, deviation_norms, g_from_packed, map_G, map_Q, min_eigenvalues,
    n_pairs, q_from_packed,
)
from .sdp import (
    SQRT2, BlockSDPProblem, SDPSolution, SolverError, SolverOptions, check_kkt, solve,
)

logger = logging.getLogger(__name__)

CP = "correlated-purification"
V2RDM = "v2rdm"
PROJECTION = "projection"
MODES = (CP, V2RDM, PROJECTION)


@dataclass
class PurificationConfig:
    w: float = 0.1
    mode: str = CP
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode != V2RDM and not self.w > 0:
            raise ValueError(f"weight w must be positive, got {self.w}")


@dataclass(eq=False)
class PurificationResult:
    D_p: TwoRDM
    energy_p: float
    slack_trace: float
    frobenius: float
    nuclear: float
    min_eig_D: float
    min_eig_Q: float
    min_eig_G: float
    trace: float
    w: float
    mode: str
    solution: SDPSolution
    problem: BlockSDPProblem

    @property
    def diagnostics(self) -> dict:
        return self.solution.diagnostics()

    def kkt(self):
        return check_kkt(self.problem, self.solution, tol=None)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "w": self.w,
            "energy": self.energy_p,
            "slack_trace": self.slack_trace,
            "trace": self.trace,
            "deviation": {"frobenius": self.frobenius, "nuclear": self.nuclear,
                          "convention": FULL},
            "min_eigenvalues": {"D": self.min_eig_D, "Q": self.min_eig_Q, "G": self.min_eig_G},
            "solver": self.diagnostics,
            "D_p": self.D_p.to_json(),
        }


@lru_cache(maxsize=16)
def _coupling_rows(r: int, N: int):
    """Linear parts of f_Q and f_G as triplets on the packed D block.

    Returns ``(q_terms, q_const, g_terms, g_const)``. Each ``*_terms`` is
    ``(target_row_index, d_i, d_j, coefficient)`` in svec-scaled form: row
    ``t`` reads ``svec(Q)[t] - sum coef * D[d_i, d_j] = svec(const)[t]``.
    """
    p = n_pairs(r)
    q_dim, g_dim = p, r * r
    q_rows, q_cols = np.tril_indices(q_dim)
    g_rows, g_cols = np.tril_indices(g_dim)
    q_scale = np.where(q_rows == q_cols, 1.0, SQRT2)
    g_scale = np.where(g_rows == g_cols, 1.0, SQRT2)
    d_rows, d_cols = np.tril_indices(p)

    q_terms, g_terms = [], []
    batch = 128
    for start in range(0, len(d_rows), batch):
        stop = min(start + batch, len(d_rows))
        B = np.zeros((stop - start, p, p))
        idx = np.arange(stop - start)
        B[idx, d_rows[start:stop], d_cols[start:stop]] = 1.0
        B[idx, d_cols[start:stop], d_rows[start:stop]] = 1.0
        Qb = q_from_packed(B, r, N, constant=False)[:, q_rows, q_cols] * q_scale
        Gb = g_from_packed(B, r, N)[:, g_rows, g_cols] * g_scale
        for terms, M in ((q_terms, Qb), (g_terms, Gb)):
            src, tgt = np.nonzero(np.abs(M) > 1e-14)
            terms.append(np.column_stack([
                tgt, d_rows[start + src], d_cols[start + src], M[src, tgt],
            ]))
    zeros = np.zeros((1, p, p))
    q_const = q_from_packed(zeros, r, N)[0][q_rows, q_cols] * q_scale
    g_const = g_from_packed(zeros, r, N)[0][g_rows, g_cols] * g_scale
    return np.vstack(q_terms), q_const, np.vstack(g_terms), g_const


def _identity_rows(row0: int, block: int, dim: int, sign: float = 1.0):
    """Triplets that make rows ``row0..`` read ``svec(X_block)`` (times sign)."""
    rows, cols = np.tril_indices(dim)
    vals = np.where(rows == cols, 1.0, SQRT2) * sign
    n = len(rows)
    return np.column_stack([row0 + np.arange(n), np.full(n, block), rows, cols, vals])


def assemble_cp_problem(K: ReducedHamiltonian, D_e: TwoRDM | None, N: int,
                        w: float = 0.1, mode: str = CP) -> BlockSDPProblem:
    """Build the block SDP. Blocks: D, Q, G (and E+, E- unless ``v2rdm``)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode != V2RDM and not w > 0:
        raise ValueError(f"weight w must be positive, got {w}")
    r = K.r
    if N < 2 or N > r:
        raise ValueError(f"N={N} incompatible with r={r}")
    if mode != V2RDM:
        if D_e is None:
            raise ValueError(f"mode {mode!r} needs a measured 2-RDM")
        if D_e.r != r:
            raise ValueError(f"dimension mismatch: K has r={r}, D_e has r={D_e.r}")
    p = n_pairs(r)
    with_slack = mode != V2RDM

    blocks = [("D", p), ("Q", p), ("G", r * r)]
    C_D = 4.0 * K.K if mode != PROJECTION else None
    objective = [C_D, None, None]
    if with_slack:
        blocks += [("E+", p), ("E-", p)]
        # full-index trace = 2 x packed trace
        objective += [2.0 * w * np.eye(p), 2.0 * w * np.eye(p)]
    D_, Q_, G_, EP, EM = range(5)

    parts = []
    rhs = []
    diag = np.arange(p)
    parts.append(np.column_stack([np.zeros(p), np.full(p, D_), diag, diag, np.full(p, 2.0)]))
    rhs.append([N * (N - 1)])
    row = 1

    q_terms, q_const, g_terms, g_const = _coupling_rows(r, N)
    for blk, dim, terms, const in ((Q_, p, q_terms, q_const), (G_, r * r, g_terms, g_const)):
        parts.append(_identity_rows(row, blk, dim))
        parts.append(np.column_stack([
            row + terms[:, 0], np.full(len(terms), D_), terms[:, 1], terms[:, 2], -terms[:, 3],
        ]))
        rhs.append(const)
        row += len(const)

    if with_slack:
        parts.append(_identity_rows(row, D_, p))
        parts.append(_identity_rows(row, EP, p, -1.0))
        parts.append(_identity_rows(row, EM, p, 1.0))
        rows, cols = np.tril_indices(p)
        rhs.append(D_e.data[rows, cols] * np.where(rows == cols, 1.0, SQRT2))
        row += len(rows)

    return BlockSDPProblem.from_triplets(blocks, objective, np.vstack(parts), np.concatenate(rhs))


def _result(K, D_e, N, problem, sol, w, mode) -> PurificationResult:
    D_p = TwoRDM(K.r, N, sol.X[0])
    slack = 0.0
    if mode != V2RDM:
        slack = 2.0 * float(np.trace(sol.X[3]) + np.trace(sol.X[4]))
    if D_e is not None:
        dev = deviation_norms(D_p, D_e)
        fro, nuc = dev.frobenius, dev.nuclear
    else:
        fro = nuc = float("nan")
    return PurificationResult(
        D_p=D_p, energy_p=energy(K, D_p), slack_trace=slack,
        frobenius=fro, nuclear=nuc,
        min_eig_D=min_eigenvalues(D_p).min_eigenvalue,
        min_eig_Q=min_eigenvalues(map_Q(D_p)).min_eigenvalue,
        min_eig_G=min_eigenvalues(map_G(D_p)).min_eigenvalue,
        trace=D_p.trace(), w=w, mode=mode, solution=sol, problem=problem,
    )


def purify(K: ReducedHamiltonian, D_e: TwoRDM | None, N: int,
           config: PurificationConfig | None = None,
           warm_start: SDPSolution | None = None) -> PurificationResult:
    """Solve one purification problem; raises :class:`SolverError` unless converged."""
    config = config or PurificationConfig()
    problem = assemble_cp_problem(K, D_e, N, config.w, config.mode)
    sol = solve(problem, config.solver, warm_start=warm_start)
    if not sol.converged:
        raise SolverError(
            f"{config.mode} solve at w={config.w:g} ended with status {sol.status} "
            f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e}, "
            f"{sol.iterations} iterations)",
            sol,
        )
    return _result(K, D_e, N, problem, sol, config.w, config.mode)


def v2rdm(K: ReducedHamiltonian, N: int, solver: SolverOptions | None = None) -> PurificationResult:
    return purify(K, None, N, PurificationConfig(mode=V2RDM, solver=solver or SolverOptions()))


def weight_sweep(K: ReducedHamiltonian, D_e: TwoRDM, N: int, w_list,
                 config: PurificationConfig | None = None,
                 warm_start: bool = True) -> list[PurificationResult]:
    """Purify along ascending weights, reusing each solution as the next start."""
    config = config or PurificationConfig()
    w_list = [float(w) for w in w_list]
    if not w_list or any(w <= 0 for w in w_list) or any(b <= a for a, b in zip(w_list, w_list[1:])):
        raise ValueError(f"w_list must be positive and strictly ascending, got {w_list}")
    results = []
    prev = None
    for w in w_list:
        cfg = PurificationConfig(w=w, mode=config.mode, solver=config.solver)
        try:
            res = purify(K, D_e, N, cfg, warm_start=prev if warm_start else None)
        except SolverError as exc:
            raise SolverError(f"weight sweep failed at w={w:g}: {exc}", exc.solution) from exc
        results.append(res)
        prev = res.solution
    return results
