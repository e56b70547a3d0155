"""Occupation-measure linear program: assembly, solve, and dual extraction.

One nonnegative mass per (discount node, state node, control); generator
rows built from multilinear hat test functions with upwind transport in the
state box and exponentially fitted rates along the discount axis (the flow
a' = -h a is autonomous, so rates are chosen to reproduce the canonical
discounted occupancy of each hat exactly).  A mass row and the fourth-moment
cap complete the constraint set.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .grids import AssemblyError, BoxGrid, StateGrid
from .model import ConfigError, ContractViolation, Dynamics, LipschitzProfile, NetworkState, lipschitz_profile
from .simplex import SimplexStatus, solve_standard_lp
from .simulate import OccupationMeasure

MAX_LP_STATE_DIM = 5  # n <= 2 edges; larger networks must use the HJB path


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    ITERATION_LIMIT = "iteration_limit"


# ---------------------------------------------------------------------------
# discount-axis fitting
# ---------------------------------------------------------------------------


def _hat_power_integrals(a_axis: np.ndarray, alpha: float) -> np.ndarray:
    """int_0^1 a^(alpha-1) * hat_j(a) da for every node hat on the axis."""

    def piece(lo, hi, c0, c1):
        # int a^(alpha-1) (c0 + c1 a) da on [lo, hi]
        return c0 * (hi**alpha - lo**alpha) / alpha + c1 * (hi ** (alpha + 1) - lo ** (alpha + 1)) / (alpha + 1)

    K = a_axis.size
    out = np.zeros(K)
    for j in range(K):
        if j > 0:
            lo, hi = a_axis[j - 1], a_axis[j]
            d = hi - lo
            out[j] += piece(lo, hi, -lo / d, 1.0 / d)
        if j < K - 1:
            lo, hi = a_axis[j], a_axis[j + 1]
            d = hi - lo
            out[j] += piece(lo, hi, hi / d, -1.0 / d)
    return out


def discount_hat_masses(a_axis: np.ndarray, h: float) -> np.ndarray:
    """Exact exp(-t)dt mass of each discount hat along a(t) = e^{-ht}."""
    return _hat_power_integrals(a_axis, 1.0 / h) / h


def discount_hat_power_means(a_axis: np.ndarray, h: float, q: float) -> np.ndarray:
    """Hat-averaged a^q along the canonical flow (objective coefficients)."""
    num = _hat_power_integrals(a_axis, q + 1.0 / h) / h
    return num / discount_hat_masses(a_axis, h)


def discount_rates(a_axis: np.ndarray, h: float) -> np.ndarray:
    """Downward transition rates making the fitted chain occupancy exact.

    Node j moves to node j-1 at rate rho_j under unit killing; rho_0 = 0
    (absorbing sink at a = 0).
    """
    m = discount_hat_masses(a_axis, h)
    flux = np.cumsum(m) - m  # mass strictly below node j
    rho = np.zeros_like(m)
    rho[1:] = flux[1:] / m[1:]
    return rho


# ---------------------------------------------------------------------------
# state-box operators
# ---------------------------------------------------------------------------


def _upwind_operator(box: BoxGrid, f: np.ndarray, feas_idx: np.ndarray, inv_pos: np.ndarray):
    """Monotone upwind transport rates on feasible nodes for one control.

    Returns (T, n_projected): sparse (F, F) with T[target, source] >= 0 off
    the diagonal; velocity components whose upwind neighbour is missing or
    infeasible are projected to zero (the exact flow is inward there).
    """
    F = feas_idx.size
    if box.dim == 0:
        return sp.csc_matrix((1, 1)), 0
    multi = np.array(np.unravel_index(feas_idx, box.shape)).T
    strides = box.strides()
    rows, cols, vals = [], [], []
    diag = np.zeros(F)
    n_proj = 0
    src = np.arange(F)
    for d, ax in enumerate(box.axes):
        v = f[:, d]
        j = multi[:, d]
        up = v > 0
        if up.any():
            has = up & (j + 1 <= ax.size - 1)
            tgt_full = feas_idx + strides[d]
            ok = has & (inv_pos[np.where(has, tgt_full, 0)] >= 0)
            n_proj += int((up & ~ok).sum())
            w = np.where(ok, v / np.where(has, ax[np.minimum(j + 1, ax.size - 1)] - ax[j], 1.0), 0.0)
            nz = ok & (w > 0)
            rows.append(inv_pos[tgt_full[nz]])
            cols.append(src[nz])
            vals.append(w[nz])
            diag -= np.where(nz, w, 0.0)
        dn = v < 0
        if dn.any():
            has = dn & (j - 1 >= 0)
            tgt_full = feas_idx - strides[d]
            ok = has & (inv_pos[np.where(has, tgt_full, 0)] >= 0)
            n_proj += int((dn & ~ok).sum())
            w = np.where(ok, -v / np.where(has, ax[j] - ax[np.maximum(j - 1, 0)], 1.0), 0.0)
            nz = ok & (w > 0)
            rows.append(inv_pos[tgt_full[nz]])
            cols.append(src[nz])
            vals.append(w[nz])
            diag -= np.where(nz, w, 0.0)
    if rows:
        T = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(F, F)
        )
    else:
        T = sp.csc_matrix((F, F))
    return T + sp.diags(diag, format="csc"), n_proj


def _jump_operator(box: BoxGrid, dyn: Dynamics, ctrl: np.ndarray, feas_nodes: np.ndarray,
                   feas_idx: np.ndarray, inv_pos: np.ndarray, clamp_margin: float):
    """lam * (E_y[interp at post-jump]^T - I) over feasible nodes."""
    F = feas_idx.size
    if dyn.lam == 0.0:
        return sp.csc_matrix((F, F))
    mix = sp.csc_matrix((F, F))
    for wk, yk in zip(dyn.claims.weights, dyn.claims.support):
        post = feas_nodes + dyn.jump(feas_nodes, ctrl, yk) if dyn.dim > 0 else feas_nodes
        try:
            Mk = box.interp_matrix(post, margin=clamp_margin)
        except AssemblyError as err:
            raise AssemblyError(f"post-jump interpolation (claim y={yk}, control {ctrl}): {err}") from None
        mix = mix + wk * sp.csc_matrix(Mk[:, feas_idx]).T
    return dyn.lam * (mix - sp.eye(F, format="csc"))


# ---------------------------------------------------------------------------
# LP problem
# ---------------------------------------------------------------------------


@dataclass
class LpProblem:
    """Assembled constraint system, control-major column layout."""

    c: np.ndarray
    A_test: sp.csc_matrix
    b_test: np.ndarray
    moment_coefs: np.ndarray
    moment_bound: float
    grid: StateGrid
    feas_idx: np.ndarray
    q: float
    x0: np.ndarray
    h: float
    L_nodes: np.ndarray
    n_projected: int
    meta: dict = field(default_factory=dict)

    @property
    def n_test(self) -> int:
        return self.A_test.shape[0]

    @property
    def n_rows(self) -> int:
        return self.n_test + 2

    @property
    def n_cols(self) -> int:
        return self.c.size

    def column_info(self, col: int):
        Ka = self.grid.a_axis.size
        F = self.feas_idx.size
        ic, rem = divmod(col, Ka * F)
        ia, fx = divmod(rem, F)
        return ic, ia, fx


def build_lp(
    dyn: Dynamics,
    grid: StateGrid,
    q: float,
    x0,
    L=None,
    h: float | None = None,
    profile: LipschitzProfile | None = None,
    clamp_margin: float = 1e-9,
) -> LpProblem:
    """Assemble the discrete constraint family and the a^q L^q objective.

    ``L`` maps an (N, dim) state batch to positive costs; default 1.  The
    moment row bound comes from the sampled coefficient profile.
    """
    if q < 2:
        raise ContractViolation("q must be >= 2")
    box = grid.box
    if box.dim > MAX_LP_STATE_DIM:
        raise ConfigError(
            f"LP path supports state dimension <= {MAX_LP_STATE_DIM} (n <= 2 edges); "
            f"got {box.dim}; use the HJB path for larger networks"
        )
    h = dyn.h if h is None else float(h)
    x0v = x0.vector() if isinstance(x0, NetworkState) else np.atleast_1d(np.asarray(x0, dtype=float))
    if box.dim:
        lo = np.array([ax[0] for ax in box.axes])
        hi = np.array([ax[-1] for ax in box.axes])
        if np.any(x0v < lo - 1e-12) or np.any(x0v > hi + 1e-12):
            raise ContractViolation(f"x0={x0v} outside the grid box")
    if L is None:
        L = lambda X: np.ones(X.shape[0])

    a_axis = grid.a_axis
    Ka = a_axis.size
    feas_idx = np.nonzero(box.feasible)[0]
    F = feas_idx.size
    inv_pos = np.full(box.size, -1, dtype=np.int64)
    inv_pos[feas_idx] = np.arange(F)
    feas_nodes = box.nodes()[feas_idx]

    rho = discount_rates(a_axis, h)
    A_a = sp.csc_matrix(
        (
            np.concatenate([rho[1:], -rho[1:]]),
            (
                np.concatenate([np.arange(Ka - 1), np.arange(1, Ka)]),
                np.concatenate([np.arange(1, Ka), np.arange(1, Ka)]),
            ),
        ),
        shape=(Ka, Ka),
    )
    abar_q = discount_hat_power_means(a_axis, h, q)

    L_nodes = np.asarray(L(feas_nodes), dtype=float)
    if np.any(L_nodes <= 0) or not np.all(np.isfinite(L_nodes**q)):
        raise ContractViolation("cost L must be positive with finite L^q on the grid")

    blocks, cost_blocks = [], []
    n_proj = 0
    eye_F = sp.eye(F, format="csc")
    eye_Ka = sp.eye(Ka, format="csc")
    kron_a = sp.kron(A_a, eye_F, format="csc")
    for ctrl in grid.controls:
        fvals = dyn.drift(feas_nodes, ctrl) if dyn.dim > 0 else np.zeros((F, 0))
        T_adv, proj = _upwind_operator(box, fvals, feas_idx, inv_pos)
        n_proj += proj
        T_jump = _jump_operator(box, dyn, ctrl, feas_nodes, feas_idx, inv_pos, clamp_margin)
        G = sp.kron(eye_Ka, T_adv + T_jump - eye_F, format="csc") + kron_a
        blocks.append(sp.csc_matrix(G.tocsr()[F:, :]))  # drop the absorbing a=0 layer rows
        cost_blocks.append(np.kron(abar_q, L_nodes**q))
    A_test = sp.hstack(blocks, format="csc")
    c = np.concatenate(cost_blocks)
    if np.any(c < 0):
        raise AssemblyError("objective coefficients must be nonnegative")

    idx0, w0 = box.interp_weights(x0v[None, :])
    b_test = np.zeros(A_test.shape[0])
    top_rows = (Ka - 2) * F + inv_pos[idx0[0]]
    if np.any(inv_pos[idx0[0]][w0[0] > 0] < 0):
        raise AssemblyError("x0 interpolates onto infeasible nodes")
    np.add.at(b_test, top_rows[w0[0] > 0], -w0[0][w0[0] > 0])

    if profile is None:
        if box.dim:
            bounds = [(ax[0], ax[-1]) for ax in box.axes]
            profile = lipschitz_profile(dyn, bounds, n_samples=1500, seed=11)
        else:
            profile = lipschitz_profile(dyn, [], seed=11)
    moment_bound = profile.theta_moment_bound(float(np.linalg.norm(x0v)))
    node_mom = np.sum(feas_nodes**2, axis=1) ** 2 if box.dim else np.zeros(F)
    moment_coefs = np.tile(np.tile(node_mom, Ka), grid.n_controls)

    return LpProblem(
        c=c,
        A_test=A_test,
        b_test=b_test,
        moment_coefs=moment_coefs,
        moment_bound=float(moment_bound),
        grid=grid,
        feas_idx=feas_idx,
        q=float(q),
        x0=x0v,
        h=h,
        L_nodes=L_nodes,
        n_projected=n_proj,
        meta={"dynamics": dyn.label, "n_controls": grid.n_controls},
    )


# ---------------------------------------------------------------------------
# solve and report
# ---------------------------------------------------------------------------


@dataclass
class LpSolution:
    status: LpStatus
    primal_value: float
    measure: OccupationMeasure | None
    duals_test: np.ndarray
    dual_mass: float
    dual_moment: float
    feasibility_residual: float
    cs_residual: float
    n_iter: int
    mass: float
    fourth_moment: float
    basis: np.ndarray | None = None


def _crash_basis(lp: LpProblem) -> np.ndarray:
    """Feasible starting basis: first-control chain columns at the test nodes.

    The occupation measure of the first grid control solves the equality
    rows, the a = 0 sink column absorbs the remaining mass, and the moment
    slack completes the basis.  Skips simplex phase 1 whenever the chain
    solve is clean.
    """
    Ka, F = lp.grid.a_axis.size, lp.feas_idx.size
    test_cols = F + np.arange((Ka - 1) * F)  # control block 0, a-layers 1..Ka-1
    return np.concatenate([test_cols, [0], [lp.n_cols]])


def solve_lp(lp: LpProblem, feas_tol: float = 1e-9, max_iters: int | None = None,
             basis0: np.ndarray | None = None) -> LpSolution:
    """Solve the assembled LP; duals are read off the final simplex basis.

    ``basis0`` may carry the optimal basis of a previous solve on the same
    grid (the constraint matrix does not depend on q, only the objective
    does), which makes q-chained solves cheap.
    """
    n = lp.n_cols
    A_std = sp.bmat(
        [
            [lp.A_test, None],
            [sp.csc_matrix(np.ones((1, n))), None],
            [sp.csc_matrix(lp.moment_coefs[None, :]), sp.csc_matrix(np.ones((1, 1)))],
        ],
        format="csc",
    )
    b_std = np.concatenate([lp.b_test, [1.0], [lp.moment_bound]])
    c_std = np.concatenate([lp.c, [0.0]])
    res = solve_standard_lp(c_std, A_std, b_std, feas_tol=feas_tol, max_iters=max_iters,
                            basis0=_crash_basis(lp) if basis0 is None else basis0)
    status = {
        SimplexStatus.OPTIMAL: LpStatus.OPTIMAL,
        SimplexStatus.INFEASIBLE: LpStatus.INFEASIBLE,
        SimplexStatus.ITERATION_LIMIT: LpStatus.ITERATION_LIMIT,
        SimplexStatus.UNBOUNDED: LpStatus.ITERATION_LIMIT,
    }[res.status]
    if status != LpStatus.OPTIMAL:
        return LpSolution(status, math.nan, None, np.zeros(lp.n_test), 0.0, 0.0,
                          res.phase1_objective, math.nan, res.n_iter, math.nan, math.nan)

    gamma = res.x[:n]
    rc = c_std - A_std.T @ res.duals
    cs = float(np.abs(rc * res.x).max())
    Ka, F = lp.grid.a_axis.size, lp.feas_idx.size
    pos = np.nonzero(gamma > 1e-14)[0]
    ic, rem = np.divmod(pos, Ka * F)
    ia, fx = np.divmod(rem, F)
    nodes = lp.grid.box.nodes()[lp.feas_idx]
    w = gamma[pos] / gamma[pos].sum()
    measure = OccupationMeasure(
        a=lp.grid.a_axis[ia],
        states=nodes[fx],
        ctrls=lp.grid.controls[ic],
        weights=w,
        path_ptr=None,
        meta={"source": "lp", "q": lp.q},
    )
    return LpSolution(
        status=status,
        primal_value=float(res.objective),
        measure=measure,
        duals_test=res.duals[: lp.n_test],
        dual_mass=float(res.duals[lp.n_test]),
        dual_moment=float(res.duals[lp.n_test + 1]),
        feasibility_residual=res.feasibility_residual,
        cs_residual=cs,
        n_iter=res.n_iter,
        mass=float(gamma.sum()),
        fourth_moment=float(lp.moment_coefs @ gamma),
        basis=res.basis,
    )


@dataclass
class LpRun:
    value: float
    solution: LpSolution
    problem: LpProblem


def lp_value_q(dyn: Dynamics, grid: StateGrid, q: float, x0, L=None, h: float | None = None,
               feas_tol: float = 1e-9, profile: LipschitzProfile | None = None,
               clamp_margin: float = 1e-9, basis0: np.ndarray | None = None) -> LpRun:
    """V_q estimate: (optimal value of the a^q L^q program)^(1/q)."""
    lp = build_lp(dyn, grid, q, x0, L=L, h=h, profile=profile, clamp_margin=clamp_margin)
    sol = solve_lp(lp, feas_tol=feas_tol, basis0=basis0)
    if sol.status != LpStatus.OPTIMAL:
        raise NonconvergenceLp(f"LP did not reach optimality: {sol.status.value}", sol)
    return LpRun(value=float(sol.primal_value ** (1.0 / q)), solution=sol, problem=lp)


class NonconvergenceLp(RuntimeError):
    def __init__(self, msg, solution):
        super().__init__(msg)
        self.solution = solution


# ---------------------------------------------------------------------------
# dual reconstruction
# ---------------------------------------------------------------------------


@dataclass
class DualReconstruction:
    """Multilinear test function rebuilt from the equality-row duals."""

    psi: np.ndarray            # (Ka, F): sink layer pinned at 0
    mass_dual: float
    moment_dual: float
    certified_bound: float
    max_violation: float
    psi_min: float
    psi_at_x0: float


def dual_as_test_function(sol: LpSolution, lp: LpProblem) -> DualReconstruction:
    """Rebuild psi from the duals and check the discrete dual inequality.

    The certified bound b'y never exceeds the primal value (weak duality);
    the reported violation is the worst breach of dual feasibility over all
    (node, control) columns.
    """
    if sol.status != LpStatus.OPTIMAL:
        raise ContractViolation("dual reconstruction needs an Optimal solution")
    Ka, F = lp.grid.a_axis.size, lp.feas_idx.size
    psi = np.zeros((Ka, F))
    psi[1:, :] = -sol.duals_test.reshape(Ka - 1, F)
    bound = float(lp.b_test @ sol.duals_test + sol.dual_mass + sol.dual_moment * lp.moment_bound)
    y = np.concatenate([sol.duals_test, [sol.dual_mass], [sol.dual_moment]])
    A_std = sp.vstack(
        [lp.A_test, sp.csc_matrix(np.ones((1, lp.n_cols))), sp.csc_matrix(lp.moment_coefs[None, :])],
        format="csc",
    )
    rc = lp.c - A_std.T @ y
    max_violation = float(max(0.0, -rc.min()))
    idx0, w0 = lp.grid.box.interp_weights(lp.x0[None, :])
    inv_pos = np.full(lp.grid.box.size, -1, dtype=np.int64)
    inv_pos[lp.feas_idx] = np.arange(F)
    psi_x0 = float(np.sum(psi[Ka - 1, inv_pos[idx0[0]]] * w0[0]))
    return DualReconstruction(
        psi=psi,
        mass_dual=sol.dual_mass,
        moment_dual=sol.dual_moment,
        certified_bound=bound,
        max_violation=max_violation,
        psi_min=float(psi.min()),
        psi_at_x0=psi_x0,
    )


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def export_lp(lp: LpProblem, path: str):
    """Plain-text dump: header, then one line per row and per column.

    Format:
        netrisk-lp v1
        rows <n_rows> cols <n_cols>
        row <i> eq|le <rhs>          # test rows, mass row, moment row in order
        col <j> <cost> : <row>:<coef> ...
    """
    A = sp.vstack(
        [lp.A_test, sp.csc_matrix(np.ones((1, lp.n_cols))), sp.csc_matrix(lp.moment_coefs[None, :])],
        format="csc",
    )
    rhs = np.concatenate([lp.b_test, [1.0], [lp.moment_bound]])
    kinds = ["eq"] * (lp.n_test + 1) + ["le"]
    with open(path, "w") as fh:
        fh.write("netrisk-lp v1\n")
        fh.write(f"rows {lp.n_rows} cols {lp.n_cols}\n")
        for i in range(lp.n_rows):
            fh.write(f"row {i} {kinds[i]} {rhs[i]:.17g}\n")
        Ac = A.tocsc()
        for j in range(lp.n_cols):
            start, end = Ac.indptr[j], Ac.indptr[j + 1]
            entries = " ".join(f"{Ac.indices[k]}:{Ac.data[k]:.17g}" for k in range(start, end))
            fh.write(f"col {j} {lp.c[j]:.17g} : {entries}\n")


def solution_to_json(sol: LpSolution, lp: LpProblem, path: str, measure_csv: str | None = None):
    doc = {
        "status": sol.status.value,
        "value": None if math.isnan(sol.primal_value) else sol.primal_value,
        "value_root": None if math.isnan(sol.primal_value) else sol.primal_value ** (1.0 / lp.q),
        "q": lp.q,
        "feasibility_residual": sol.feasibility_residual,
        "cs_residual": None if math.isnan(sol.cs_residual) else sol.cs_residual,
        "n_iter": sol.n_iter,
        "duals": {
            "test": sol.duals_test.tolist(),
            "mass": sol.dual_mass,
            "moment": sol.dual_moment,
        },
        "measure_csv_path": measure_csv,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
    return doc
