"""Dense revised simplex for desk-scale linear programs.

Solves min c'x  s.t.  Ax = b, x >= 0 with a two-phase method: explicit basis
inverse with periodic refactorization, Dantzig pricing with a Bland fallback
once the objective stalls.  Written for determinism and exact control of
tolerances; problem sizes here are a few thousand rows by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger


class SimplexStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"
    UNBOUNDED = "unbounded"


@dataclass
class SimplexResult:
    status: SimplexStatus
    x: np.ndarray
    objective: float
    duals: np.ndarray
    n_iter: int
    phase1_objective: float
    feasibility_residual: float
    basis: np.ndarray | None = None


def _refactor(A: sp.csc_matrix, basis: np.ndarray) -> np.ndarray:
    B = A[:, basis].toarray()
    return np.asfortranarray(np.linalg.inv(B))


def _iterate(A, b, c, basis, B_inv, allowed, feas_tol, pivot_tol, max_iters, refresh=400):
    """Run revised-simplex pivots until optimal/unbounded/limit on one phase."""
    m, n = A.shape
    AT = A.T.tocsr()
    B_inv = np.asfortranarray(B_inv)
    n_iter = 0
    stall = 0
    best_obj = np.inf
    bland = False
    x_B = B_inv @ b
    while n_iter < max_iters:
        y = B_inv.T @ c[basis]
        obj = float(c[basis] @ x_B)
        if obj < best_obj - 1e-12 * (1.0 + abs(best_obj)):
            best_obj = obj
            stall = 0
        else:
            stall += 1
            if stall > 200:
                bland = True
        reduced = c - AT @ y
        reduced[basis] = 0.0
        cand = np.where(allowed & (reduced < -feas_tol))[0]
        if cand.size == 0:
            return SimplexStatus.OPTIMAL, basis, B_inv, n_iter
        j = int(cand[0]) if bland else int(cand[np.argmin(reduced[cand])])
        d = B_inv @ A[:, j].toarray().ravel()
        pos = d > pivot_tol
        if not pos.any():
            return SimplexStatus.UNBOUNDED, basis, B_inv, n_iter
        ratios = np.where(pos, np.maximum(x_B, 0.0) / np.where(pos, d, 1.0), np.inf)
        rmin = ratios.min()
        ties = np.where(ratios <= rmin + 1e-12)[0]
        # leave the tie with the largest pivot (stability), lowest index on equal pivots
        r = int(ties[np.argmax(d[ties] - 1e-12 * ties)])
        basis[r] = j
        piv = d[r]
        B_inv[r, :] /= piv
        d[r] = 0.0
        # in-place rank-1 eta update: B_inv -= d (x) pivot_row
        B_inv = dger(-1.0, d, B_inv[r, :].copy(), a=B_inv, overwrite_a=1)
        n_iter += 1
        if n_iter % refresh == 0:
            B_inv = _refactor(A, basis)
        x_B = B_inv @ b
    return SimplexStatus.ITERATION_LIMIT, basis, B_inv, n_iter


def solve_standard_lp(
    c: np.ndarray,
    A: sp.spmatrix,
    b: np.ndarray,
    feas_tol: float = 1e-9,
    pivot_tol: float = 1e-10,
    max_iters: int | None = None,
    basis0: np.ndarray | None = None,
) -> SimplexResult:
    """Two-phase dense revised simplex; ``basis0`` may crash-start phase 2.

    A caller-supplied basis is used only when it is numerically nonsingular
    and primal feasible; otherwise the artificial phase 1 runs as usual.
    """
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float).copy()
    A = sp.csc_matrix(A, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")
    if max_iters is None:
        max_iters = 200 * (m + 1) + 10 * n

    flip = b < 0
    if flip.any():
        b = np.where(flip, -b, b)
        D = sp.diags(np.where(flip, -1.0, 1.0))
        A = sp.csc_matrix(D @ A)

    A1 = sp.hstack([A, sp.eye(m, format="csc")], format="csc")
    basis = None
    it1 = 0
    phase1 = 0.0
    if basis0 is not None:
        cand = np.asarray(basis0, dtype=np.int64)
        if cand.shape == (m,) and np.unique(cand).size == m and cand.max() < n:
            try:
                B_inv = _refactor(A1, cand)
            except np.linalg.LinAlgError:
                B_inv = None
            if B_inv is not None and np.isfinite(B_inv).all():
                x_B = B_inv @ b
                if x_B.min() >= -feas_tol:
                    basis = cand.copy()
    if basis is None:
        # phase 1 from the artificial identity basis
        c1 = np.concatenate([np.zeros(n), np.ones(m)])
        basis = np.arange(n, n + m)
        B_inv = np.eye(m)
        allowed = np.ones(n + m, dtype=bool)
        status, basis, B_inv, it1 = _iterate(A1, b, c1, basis, B_inv, allowed, feas_tol, pivot_tol, max_iters)
        x_B = B_inv @ b
        phase1 = float(c1[basis] @ x_B)
        if status == SimplexStatus.ITERATION_LIMIT:
            return SimplexResult(status, np.zeros(n), np.nan, np.zeros(m), it1, phase1, np.nan)
        if phase1 > feas_tol * max(1.0, float(np.abs(b).max())):
            return SimplexResult(SimplexStatus.INFEASIBLE, np.zeros(n), np.nan, np.zeros(m), it1, phase1, np.nan)

    # drive remaining artificials out of the basis where a real pivot exists;
    # redundant rows keep their artificial basic at ~0 (barred from re-entering)
    for r in np.where(basis >= n)[0]:
        row = A.T @ B_inv[r, :]
        cands = np.where(np.abs(row) > 1e2 * pivot_tol)[0]
        if cands.size:
            basis[r] = int(cands[0])
            B_inv = _refactor(A1, basis)

    # phase 2 on the original objective; artificial columns may not enter
    c2 = np.concatenate([c, np.zeros(m)])
    allowed = np.concatenate([np.ones(n, dtype=bool), np.zeros(m, dtype=bool)])
    status, basis, B_inv, it2 = _iterate(A1, b, c2, basis, B_inv, allowed, feas_tol, pivot_tol, max_iters)
    if status == SimplexStatus.UNBOUNDED:
        return SimplexResult(status, np.zeros(n), -np.inf, np.zeros(m), it1 + it2, phase1, np.nan)
    B_inv = _refactor(A1, basis)  # fresh factorization for primal/dual extraction
    x = np.zeros(n + m)
    x[basis] = np.maximum(B_inv @ b, 0.0)
    y = B_inv.T @ c2[basis]
    if flip.any():
        y = np.where(flip, -y, y)
    resid = float(np.abs(A @ x[:n] + x[n:] - b).max())
    return SimplexResult(
        status,
        x[:n],
        float(c @ x[:n]),
        y,
        it1 + it2,
        phase1,
        resid,
        basis=basis.copy(),
    )
