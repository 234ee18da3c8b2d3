"""Boundary-point solver for block-diagonal semidefinite programs.

Standard form::

    minimize    sum_b Tr(C_b X_b)
    subject to  sum_b Tr(A_mb X_b) = c_m     for every constraint m
                X_b >= 0                     for every block b

Each symmetric block is handled in ``svec`` coordinates (lower triangle,
row-major, off-diagonal entries scaled by sqrt(2)) so the trace inner product
becomes the Euclidean one. The iteration alternates an exact solve for the
dual vector ``y`` with a spectral split of ``A^T y - C + mu X`` into its
positive part (the next primal ``X``) and negative part (the dual slack
``Z``); ``X Z = 0`` holds at every iterate, so convergence is declared from
primal and dual feasibility alone.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

CONVERGED = "converged"
MAX_ITER = "max_iter"
DIVERGED = "diverged"

SQRT2 = np.sqrt(2.0)


class SDPStructureError(ValueError):
    pass


class SolverError(RuntimeError):
    """Raised by callers that require convergence; carries the solution."""

    def __init__(self, message: str, solution: "SDPSolution | None" = None):
        super().__init__(message)
        self.solution = solution


def svec_len(n: int) -> int:
    return n * (n + 1) // 2


@lru_cache(maxsize=None)
def _tril(n: int):
    rows, cols = np.tril_indices(n)
    off = rows != cols
    weights = np.where(off, SQRT2, 1.0)
    for a in (rows, cols, off, weights):
        a.setflags(write=False)
    return rows, cols, off, weights


def svec(M: np.ndarray) -> np.ndarray:
    rows, cols, _, weights = _tril(M.shape[0])
    return M[rows, cols] * weights


def smat(v: np.ndarray, n: int) -> np.ndarray:
    rows, cols, _, weights = _tril(n)
    vals = v / weights
    M = np.empty((n, n))
    M[rows, cols] = vals
    M[cols, rows] = vals
    return M


def svec_index(i, j):
    """svec position of entry (i, j) of a symmetric block."""
    i, j = np.maximum(i, j), np.minimum(i, j)
    return i * (i + 1) // 2 + j


def psd_project(M: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (negative eigenvalues clipped)."""
    M = np.asarray(M, dtype=float)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > tol * scale:
        raise ValueError("psd_project needs a symmetric matrix")
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    return (U * np.maximum(w, 0.0)) @ U.T


@dataclass(frozen=True, eq=False)
class BlockSDPProblem:
    """Linear objective and sparse affine equalities over PSD blocks.

    Constraints are triplets ``(row, block, i, j, value)``: each adds
    ``value * X_block[i, j]`` to the left-hand side of constraint ``row``.
    A symmetric coefficient matrix therefore lists both (i, j) and (j, i).
    ``objective[b]`` is a dense symmetric ``C_b`` or None for zero.
    """

    blocks: tuple
    objective: tuple
    rows: np.ndarray
    cblocks: np.ndarray
    ii: np.ndarray
    jj: np.ndarray
    vals: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        names = [name for name, _ in self.blocks]
        if len(set(names)) != len(names):
            raise SDPStructureError(f"duplicate block names in {names}")
        if len(self.objective) != len(self.blocks):
            raise SDPStructureError("one objective entry per block is required")
        for (name, dim), C in zip(self.blocks, self.objective):
            if C is None:
                continue
            if C.shape != (dim, dim):
                raise SDPStructureError(f"objective for block {name!r} has shape {C.shape}, want {dim}")
            if np.max(np.abs(C - C.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(C))):
                raise SDPStructureError(f"objective for block {name!r} is not symmetric")
        n_con = len(self.rhs)
        arrays = (self.rows, self.cblocks, self.ii, self.jj, self.vals)
        if len({len(a) for a in arrays}) != 1:
            raise SDPStructureError("constraint triplet arrays differ in length")
        if len(self.rows) and (self.rows.min() < 0 or self.rows.max() >= n_con):
            raise SDPStructureError("constraint row index out of range")
        dims = np.array([d for _, d in self.blocks])
        if len(self.cblocks):
            if self.cblocks.min() < 0 or self.cblocks.max() >= len(dims):
                raise SDPStructureError("constraint block index out of range")
            bd = dims[self.cblocks]
            if np.any(self.ii < 0) or np.any(self.jj < 0) or np.any(self.ii >= bd) or np.any(self.jj >= bd):
                raise SDPStructureError("constraint entry outside its block")
        self._check_duplicates()

    @classmethod
    def from_triplets(cls, blocks, objective, triplets, rhs) -> "BlockSDPProblem":
        t = np.asarray(triplets, dtype=float).reshape(-1, 5)
        return cls(
            blocks=tuple((str(n), int(d)) for n, d in blocks),
            objective=tuple(None if C is None else np.asarray(C, dtype=float) for C in objective),
            rows=t[:, 0].astype(np.int64), cblocks=t[:, 1].astype(np.int64),
            ii=t[:, 2].astype(np.int64), jj=t[:, 3].astype(np.int64),
            vals=t[:, 4].copy(), rhs=np.asarray(rhs, dtype=float),
        )

    @property
    def n_constraints(self) -> int:
        return len(self.rhs)

    @property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum([svec_len(d) for _, d in self.blocks])])

    def block_index(self, name: str) -> int:
        for b, (n, _) in enumerate(self.blocks):
            if n == name:
                return b
        raise KeyError(name)

    def constraint_matrix(self) -> sp.csr_matrix:
        """Constraint operator in svec coordinates, ``(n_constraints, n_svec)``."""
        cached = self.__dict__.get("_A")
        if cached is not None:
            return cached
        offs = self.offsets
        cols = offs[self.cblocks] + svec_index(self.ii, self.jj)
        coef = np.where(self.ii == self.jj, self.vals, self.vals / SQRT2)
        A = sp.csr_matrix((coef, (self.rows, cols)), shape=(self.n_constraints, offs[-1]))
        A.sum_duplicates()
        A.eliminate_zeros()
        object.__setattr__(self, "_A", A)
        return A

    def cost_vector(self) -> np.ndarray:
        parts = []
        for (_, d), C in zip(self.blocks, self.objective):
            parts.append(np.zeros(svec_len(d)) if C is None else svec(C))
        return np.concatenate(parts)

    def _check_duplicates(self) -> None:
        A = self.constraint_matrix()
        seen = {}
        for m in range(A.shape[0]):
            lo, hi = A.indptr[m], A.indptr[m + 1]
            if lo == hi:
                raise SDPStructureError(f"constraint {m} has no coefficients")
            vals = A.data[lo:hi]
            key = (A.indices[lo:hi].tobytes(), np.round(vals / vals[0], 12).tobytes())
            if key in seen:
                raise SDPStructureError(f"constraint {m} duplicates constraint {seen[key]}")
            seen[key] = m

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        offs = self.offsets
        return [smat(x[offs[b]:offs[b + 1]], d) for b, (_, d) in enumerate(self.blocks)]

    def join(self, mats) -> np.ndarray:
        return np.concatenate([svec(np.asarray(M, dtype=float)) for M in mats])

    def to_json(self) -> dict:
        return {
            "blocks": [[n, d] for n, d in self.blocks],
            "objective": [None if C is None else C.tolist() for C in self.objective],
            "constraints": np.column_stack(
                [self.rows, self.cblocks, self.ii, self.jj, self.vals]
            ).tolist(),
            "rhs": self.rhs.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "BlockSDPProblem":
        return cls.from_triplets(obj["blocks"], obj["objective"], obj["constraints"], obj["rhs"])

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "BlockSDPProblem":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class SolverOptions:
    """Boundary-point options.

    ``penalty`` weights primal infeasibility in the ``y`` update; with
    ``penalty_adapt`` it grows by ``adapt_factor`` while the primal residual
    exceeds ``adapt_ratio`` times the dual residual, and shrinks in the
    mirrored case.
    """

    feas_tol: float = 1e-6
    max_iter: int = 50000
    penalty: float = 1.0
    penalty_adapt: bool = True
    adapt_factor: float = 1.1
    adapt_ratio: float = 10.0
    penalty_bounds: tuple = (1e-6, 1e6)
    divergence_factor: float = 1e6
    adapt_every: int = 10
    scale_cost: bool = True
    anderson_memory: int = 40
    anderson_safeguard: float = 2.0
    patience: int = 500
    history_every: int = 10


@dataclass(eq=False)
class SDPSolution:
    X: list
    y: np.ndarray
    Z: list
    objective: float
    dual_objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    wall_time: float
    status: str
    penalty: float
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    def diagnostics(self) -> dict:
        return {
            "status": self.status,
            "iterations": self.iterations,
            "wall_time": self.wall_time,
            "objective": self.objective,
            "dual_objective": self.dual_objective,
            "primal_residual": self.primal_residual,
            "dual_residual": self.dual_residual,
            "penalty": self.penalty,
        }


class _NormalSolver:
    """Factorization of ``A A^T``; dense Cholesky for small systems."""

    def __init__(self, A: sp.csr_matrix, dense_limit: int = 1500):
        AAt = (A @ A.T).tocsc()
        m = AAt.shape[0]
        self.dense = m <= dense_limit
        try:
            if self.dense:
                self._cho = scipy.linalg.cho_factor(AAt.toarray(), lower=True)
            else:
                self._lu = spla.splu(AAt, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                                     options={"SymmetricMode": True})
        except (np.linalg.LinAlgError, RuntimeError) as exc:
            raise SDPStructureError(f"constraint rows are linearly dependent: {exc}") from exc

    def __call__(self, rhs: np.ndarray) -> np.ndarray:
        if self.dense:
            return scipy.linalg.cho_solve(self._cho, rhs)
        return self._lu.solve(rhs)


def _split_spectrum(W: np.ndarray, dims, offsets):
    """Positive part of ``smat(W)`` per block, returned in svec coordinates."""
    pos = np.empty_like(W)
    for b, d in enumerate(dims):
        seg = slice(offsets[b], offsets[b + 1])
        if d == 1:
            pos[seg] = max(W[seg][0], 0.0)
            continue
        w, U = np.linalg.eigh(smat(W[seg], d))
        keep = w > 0
        if not keep.any():
            pos[seg] = 0.0
            continue
        Uk = U[:, keep]
        pos[seg] = svec((Uk * w[keep]) @ Uk.T)
    return pos


class _Anderson:
    """Type-II Anderson extrapolation for the fixed-point map on ``W``."""

    def __init__(self, memory: int, reg: float = 1e-10):
        self.memory = memory
        self.reg = reg
        self.reset()

    def reset(self) -> None:
        self._prev = None
        self._dF = self._dG = None
        self._gram = np.zeros((self.memory, self.memory))
        self._count = 0

    def step(self, f_val: np.ndarray, g: np.ndarray) -> np.ndarray:
        if self.memory <= 0:
            return f_val
        if self._prev is None:
            self._prev = (f_val, g)
            self._dF = np.empty((self.memory, f_val.size))
            self._dG = np.empty((self.memory, g.size))
            return f_val
        # differences live in a ring buffer; the Gram matrix is updated one
        # row at a time since column order does not affect the solution
        slot = self._count % self.memory
        self._dF[slot] = f_val - self._prev[0]
        self._dG[slot] = g - self._prev[1]
        self._prev = (f_val, g)
        self._count += 1
        k = min(self._count, self.memory)
        dG, dF = self._dG[:k], self._dF[:k]
        row = dG @ self._dG[slot]
        self._gram[slot, :k] = row
        self._gram[:k, slot] = row
        gram = self._gram[:k, :k].copy()
        # relative to |g|^2 too: when the map is nearly a translation, dG is
        # rounding noise and an unscaled solve would blow up
        gram += self.reg * max(np.trace(gram), g @ g, 1e-300) * np.eye(k)
        try:
            gamma = np.linalg.solve(gram, dG @ g)
        except np.linalg.LinAlgError:
            self.reset()
            return f_val
        return f_val - gamma @ dF


def solve(problem: BlockSDPProblem, options: SolverOptions | None = None,
          warm_start: SDPSolution | None = None) -> SDPSolution:
    """Run the boundary-point iteration; never raises on non-convergence.

    Check ``status`` (``converged`` / ``max_iter`` / ``diverged``). The
    iteration is a fixed-point map on ``W = A^T y - C + mu X``; with
    ``anderson_memory > 0`` it is extrapolated from recent iterates, and the
    history is cleared whenever the penalty changes or the fixed-point
    residual jumps.
    """
    opts = options or SolverOptions()
    start = time.perf_counter()
    A = problem.constraint_matrix()
    AT = A.T.tocsr()
    b = problem.rhs
    c = problem.cost_vector()
    dims = [d for _, d in problem.blocks]
    offs = problem.offsets
    normal = _NormalSolver(A)
    # the iteration runs on C / scale (same argmin); y and Z are rescaled on exit
    scale = max(1.0, float(np.max(np.abs(c)))) if opts.scale_cost else 1.0
    c_true = c
    c = c / scale
    Ac = A @ c

    if warm_start is not None:
        x = problem.join(warm_start.X)
        y = np.array(warm_start.y, dtype=float) / scale
        if x.shape != c.shape or y.shape != b.shape:
            raise SDPStructureError("warm start does not match the problem dimensions")
        mu = warm_start.penalty
    else:
        x = np.zeros_like(c)
        y = np.zeros_like(b)
        mu = opts.penalty
    W = AT @ y - c + mu * x
    lo_mu, hi_mu = opts.penalty_bounds
    accel = _Anderson(opts.anderson_memory)

    status = MAX_ITER
    history = []
    best = np.inf
    since_best = 0
    rp = rd = np.inf
    z = np.zeros_like(c)
    fallback = None  # plain step to return to if an extrapolation misbehaves
    prev_g = np.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        pos = _split_spectrum(W, dims, offs)
        x = pos / mu
        z = pos - W
        y = normal(Ac + mu * b - A @ (z + pos))
        W_next = AT @ y - c + pos
        rp = float(np.linalg.norm(A @ x - b))
        # dual residual C - A^T y - Z equals W - W_next
        g = W_next - W
        rd_scaled = float(np.linalg.norm(g))
        rd = scale * rd_scaled
        worst = max(rp, rd)
        if opts.history_every and it % opts.history_every == 0:
            history.append((it, rp, rd, mu))
        if worst <= opts.feas_tol:
            status = CONVERGED
            break
        if not np.isfinite(worst) and fallback is None:
            status = DIVERGED
            break
        if fallback is not None and not rd_scaled <= opts.anderson_safeguard * prev_g:
            W = fallback
            fallback = None
            accel.reset()
            continue
        if worst < best:
            best, since_best = worst, 0
        else:
            since_best += 1
            if worst > opts.divergence_factor * best and since_best >= opts.patience:
                status = DIVERGED
                break

        prev_g = rd_scaled
        W = accel.step(W_next, g)
        fallback = W_next if W is not W_next else None

        if opts.penalty_adapt and it % opts.adapt_every == 0:
            new_mu = mu
            if rp > opts.adapt_ratio * rd_scaled:
                new_mu = min(mu * opts.adapt_factor, hi_mu)
            elif rd_scaled > opts.adapt_ratio * rp:
                new_mu = max(mu / opts.adapt_factor, lo_mu)
            if new_mu != mu:
                # keep (X, y) of the plain step, which passed the safeguard,
                # and re-express it at the new penalty
                W = W_next
                x_cur = _split_spectrum(W, dims, offs) / mu
                W = W + (new_mu - mu) * x_cur
                mu = new_mu
                accel.reset()
                fallback = None

    y = y * scale
    z = z * scale
    sol = SDPSolution(
        X=problem.split(x), y=y, Z=problem.split(z),
        objective=float(c_true @ x), dual_objective=float(b @ y),
        primal_residual=rp, dual_residual=rd, iterations=it,
        wall_time=time.perf_counter() - start, status=status, penalty=mu,
        history=history,
    )
    logger.debug("sdp %s after %d iterations: rp=%.2e rd=%.2e obj=%.10f",
                 status, it, rp, rd, sol.objective)
    return sol


@dataclass
class BlockKKT:
    name: str
    primal_min_eig: float
    dual_min_eig: float
    complementarity: float


@dataclass
class KKTReport:
    primal_residual: float
    dual_residual: float
    duality_gap: float
    blocks: list
    tol: float

    @property
    def violations(self) -> list[str]:
        out = []
        if self.primal_residual > self.tol:
            out.append(f"primal residual {self.primal_residual:.2e}")
        if self.dual_residual > self.tol:
            out.append(f"dual residual {self.dual_residual:.2e}")
        for blk in self.blocks:
            if blk.primal_min_eig < -self.tol:
                out.append(f"{blk.name}: X min eigenvalue {blk.primal_min_eig:.2e}")
            if blk.dual_min_eig < -self.tol:
                out.append(f"{blk.name}: Z min eigenvalue {blk.dual_min_eig:.2e}")
            if abs(blk.complementarity) > self.tol:
                out.append(f"{blk.name}: complementarity {blk.complementarity:.2e}")
        return out

    @property
    def passed(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def check_kkt(problem: BlockSDPProblem, sol: SDPSolution, tol: float | None = None) -> KKTReport:
    """Recompute optimality conditions from ``(X, y)`` alone.

    The dual slack is ``Z_b = C_b - A_b^T y`` (not the solver's projected
    copy). Complementarity per block is ``Tr(X_b Z_b) / (1 + ||X_b||_F)``.
    """
    tol = 1e-6 if tol is None else tol
    A = problem.constraint_matrix()
    c = problem.cost_vector()
    x = problem.join(sol.X)
    slack = c - A.T @ sol.y
    Zs = problem.split(slack)
    z_proj = np.concatenate([svec(psd_project(Zb)) for Zb in Zs])
    blocks = []
    for (name, _), Xb, Zb in zip(problem.blocks, sol.X, Zs):
        blocks.append(BlockKKT(
            name=name,
            primal_min_eig=float(np.linalg.eigvalsh(Xb)[0]),
            dual_min_eig=float(np.linalg.eigvalsh(Zb)[0]),
            complementarity=float(np.sum(Xb * Zb) / (1.0 + np.linalg.norm(Xb))),
        ))
    return KKTReport(
        primal_residual=float(np.linalg.norm(A @ x - problem.rhs)),
        dual_residual=float(np.linalg.norm(slack - z_proj)),
        duality_gap=float(c @ x - problem.rhs @ sol.y),
        blocks=blocks, tol=tol,
    )
