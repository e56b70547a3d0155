"""Semi-Lagrangian solvers for the L^q value functions and the running-max limit.

``value_iteration_q`` iterates the discounted one-step operator for W = V_q^q
on the state box (the discount coordinate is integrated out analytically:
the a^q factor folds into the e^{-(1+qh)t} discount).  ``q_sweep`` climbs a
q-schedule toward the L-infinity value; ``obstacle_solve`` attacks the
running-max equation directly through the jump-constrained control sets, and
``dual_certificate_check`` certifies lower bounds from smooth candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grids import AssemblyError, BoxGrid, StateGrid
from .model import ConfigError, ContractViolation, Dynamics, NetworkState, NonconvergenceError

# ---------------------------------------------------------------------------
# value grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValueGrid:
    """Values on the feasible nodes of a state box (multilinear in between).

    For W = V_q^q grids the stored values are in rescaled cost units
    (cost divided by ``cost_scale``), which keeps large q in floating range;
    ``vq_root`` undoes the scaling.  Root-form and obstacle grids have
    cost_scale 1.
    """

    box: BoxGrid
    values: np.ndarray
    q: float
    cost_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.box.size,):
            raise ContractViolation(f"values must have shape ({self.box.size},)")
        if not np.all(np.isfinite(vals[self.box.feasible])):
            raise ContractViolation("value grid has non-finite feasible entries")
        object.__setattr__(self, "values", vals)

    def interp(self, pts: np.ndarray, margin: float | None = None) -> np.ndarray:
        return self.box.interp(self.values, pts, margin=margin)

    def feasible_values(self) -> np.ndarray:
        return self.values[self.box.feasible]

    def min(self) -> float:
        return float(self.feasible_values().min())

    def max(self) -> float:
        return float(self.feasible_values().max())

    def adjacent_slope(self) -> float:
        """Largest |dV| / |dx| between feasible neighbour nodes."""
        worst = 0.0
        full = self.values.reshape(self.box.shape) if self.box.dim else self.values
        feas = self.box.feasible.reshape(self.box.shape) if self.box.dim else self.box.feasible
        for d, ax in enumerate(self.box.axes):
            sl_lo = [slice(None)] * self.box.dim
            sl_hi = [slice(None)] * self.box.dim
            sl_lo[d] = slice(None, -1)
            sl_hi[d] = slice(1, None)
            both = feas[tuple(sl_lo)] & feas[tuple(sl_hi)]
            if not both.any():
                continue
            dv = np.abs(full[tuple(sl_hi)] - full[tuple(sl_lo)])[both]
            dx = np.diff(ax).reshape([-1 if dd == d else 1 for dd in range(self.box.dim)])
            dxb = np.broadcast_to(dx, both.shape)[both]
            worst = max(worst, float((dv / dxb).max()))
        return worst


def _as_point_batch(x) -> np.ndarray:
    if isinstance(x, NetworkState):
        return x.vector()[None, :]
    arr = np.asarray(x, dtype=float)
    return arr[None, :] if arr.ndim == 1 else arr


# ---------------------------------------------------------------------------
# shared semi-Lagrangian operators
# ---------------------------------------------------------------------------


class SemiLagrangian:
    """Precomputed foot-point and post-jump interpolation operators.

    Foot points x + dt f(x, u) and post-jump points x + g(x, u, y_k) do not
    change across sweeps, so each becomes one sparse matrix acting on the
    vector of feasible-node values.
    """

    def __init__(self, dyn: Dynamics, grid: StateGrid, dt: float, clamp_margin: float | None = None):
        if dt <= 0:
            raise ConfigError("dt must be positive")
        if dyn.lam * dt >= 1.0:
            raise ConfigError(f"need lam*dt < 1 (got {dyn.lam * dt})")
        self.dyn = dyn
        self.grid = grid
        self.dt = dt
        box = grid.box
        self.box = box
        self.feas_idx = np.nonzero(box.feasible)[0]
        self.nodes = box.nodes()[self.feas_idx]
        self.F = self.feas_idx.size
        if clamp_margin is None:
            clamp_margin = 2.0 * box.max_spacing() if box.dim else None
        self.clamp_margin = clamp_margin
        self.P_drift, self.P_jump = [], []
        for ctrl in grid.controls:
            foot = self.nodes + dt * dyn.drift(self.nodes, ctrl) if dyn.dim else self.nodes
            try:
                Pd = box.interp_matrix(foot, margin=clamp_margin)
            except AssemblyError as err:
                raise AssemblyError(f"drift foot points (control {ctrl}): {err}") from None
            self.P_drift.append(sp.csr_matrix(Pd[:, self.feas_idx]))
            per_claim = []
            for yk in dyn.claims.support:
                post = self.nodes + dyn.jump(self.nodes, ctrl, yk) if dyn.dim else self.nodes
                try:
                    Pj = box.interp_matrix(post, margin=clamp_margin)
                except AssemblyError as err:
                    raise AssemblyError(f"post-jump points (claim y={yk}, control {ctrl}): {err}") from None
                per_claim.append(sp.csr_matrix(Pj[:, self.feas_idx]))
            self.P_jump.append(per_claim)
        w = dyn.claims.weights
        self.P_jump_mix = [
            sum(wk * Pk for wk, Pk in zip(w, per_claim)) for per_claim in self.P_jump
        ]

    def expand(self, vals_feas: np.ndarray) -> np.ndarray:
        full = np.zeros(self.box.size)
        full[self.feas_idx] = vals_feas
        return full


# ---------------------------------------------------------------------------
# value iteration for W = V_q^q
# ---------------------------------------------------------------------------


def value_iteration_q(
    dyn: Dynamics,
    grid: StateGrid,
    q: float,
    h: float | None = None,
    L: Callable[[np.ndarray], np.ndarray] | None = None,
    dt: float = 1e-2,
    tol: float = 1e-9,
    max_sweeps: int = 20000,
    w0: ValueGrid | None = None,
    engine: SemiLagrangian | None = None,
    policy_eval_every: int = 30,
) -> ValueGrid:
    """Fixed point of the one-step discounted operator for W ~ V_q^q.

    One sweep applies, per control, exact-discount running cost plus
    transport/jump interpolation, then minimizes pointwise; every
    ``policy_eval_every`` sweeps the current greedy policy is evaluated
    exactly (sparse solve), which cuts the geometric tail.  Costs are
    rescaled by sup L internally so large q stays in floating range.
    """
    if q < 2:
        raise ContractViolation("q must be >= 2")
    h = dyn.h if h is None else float(h)
    eng = engine or SemiLagrangian(dyn, grid, dt)
    L = L or (lambda X: np.ones(X.shape[0]))
    L_nodes = np.asarray(L(eng.nodes), dtype=float)
    if np.any(L_nodes <= 0):
        raise ContractViolation("cost L must be positive on the grid")
    scale = float(L_nodes.max())
    Lt = L_nodes / scale
    beta = 1.0 + q * h
    w_cost = -math.expm1(-beta * dt) / beta
    rho = math.exp(-beta * dt)
    pj = dyn.lam * dt
    base = w_cost * Lt**q
    if w0 is not None:
        # w0 is a root-form lower estimate of V_q (e.g. a lower-q root grid):
        # (V_prev / sup L)^q starts at or below the fixed point, keeping ascent
        if w0.cost_scale != 1.0:
            raise ContractViolation("w0 must be a root-form grid (cost_scale 1)")
        W = np.maximum(w0.values[eng.feas_idx] / scale, 0.0) ** q
    else:
        W = np.zeros(eng.F)
    n_ctrl = len(eng.P_drift)
    resid = math.inf
    sweeps = 0
    argmin = np.zeros(eng.F, dtype=np.int64)
    while sweeps < max_sweeps:
        sweeps += 1
        best = None
        for ic in range(n_ctrl):
            cand = base + rho * ((1.0 - pj) * (eng.P_drift[ic] @ W) + pj * (eng.P_jump_mix[ic] @ W))
            if best is None:
                best, argmin = cand, np.zeros(eng.F, dtype=np.int64)
            else:
                take = cand < best
                best = np.where(take, cand, best)
                argmin = np.where(take, ic, argmin)
        resid = float(np.abs(best - W).max())
        W = best
        if resid <= tol:
            break
        if policy_eval_every and sweeps % policy_eval_every == 0:
            W = _policy_evaluate(eng, argmin, base, rho, pj)
    else:
        raise NonconvergenceError(
            f"value iteration (q={q}) hit {max_sweeps} sweeps, residual {resid:.3e}",
            {"residual": resid, "q": q},
        )
    return ValueGrid(
        box=eng.box,
        values=eng.expand(W),
        q=q,
        cost_scale=scale,
        meta={
            "sweeps": sweeps,
            "residual": resid,
            "contraction": rho,
            "dt": dt,
            "h": h,
            "argmin_control": eng.expand(argmin.astype(float)),
        },
    )


def _policy_evaluate(eng: SemiLagrangian, argmin: np.ndarray, base, rho, pj) -> np.ndarray:
    """Exact value of the greedy policy: solve (I - rho P_pi) W = base."""
    row_blocks, mat_blocks = [], []
    for ic in range(len(eng.P_drift)):
        rows = np.nonzero(argmin == ic)[0]
        if rows.size == 0:
            continue
        M = ((1.0 - pj) * eng.P_drift[ic] + pj * eng.P_jump_mix[ic]).tocsr()[rows]
        row_blocks.append(rows)
        mat_blocks.append(M)
    order = np.argsort(np.concatenate(row_blocks), kind="stable")
    P = sp.vstack(mat_blocks, format="csr")[order]
    A = sp.eye(eng.F, format="csc") - rho * sp.csc_matrix(P)
    return np.asarray(spla.spsolve(A, base)).ravel()


def vq_root(W: ValueGrid) -> ValueGrid:
    """Pointwise q-th root of a W grid, undoing the internal cost rescale."""
    if not math.isfinite(W.q):
        raise ContractViolation("vq_root needs a finite-q grid")
    vals = W.values.copy()
    feas = W.box.feasible
    if np.any(vals[feas] <= 0):
        raise ContractViolation("W has nonpositive entries; value iteration is broken")
    out = np.zeros_like(vals)
    out[feas] = W.cost_scale * np.exp(np.log(vals[feas]) / W.q)
    return ValueGrid(W.box, out, q=W.q, cost_scale=1.0, meta=dict(W.meta))


def q_sweep(
    dyn: Dynamics,
    grid: StateGrid,
    q_list: Sequence[float] = (2.0, 4.0, 8.0, 16.0, 32.0),
    h: float | None = None,
    L=None,
    dt: float = 1e-2,
    tol: float = 1e-9,
    mono_tol: float = 1e-6,
    engine: SemiLagrangian | None = None,
) -> tuple[ValueGrid, dict]:
    """Climb V_q along an increasing q schedule; the last grid estimates sup_q V_q.

    Each stage warm-starts from the previous root grid (a certified lower
    start).  Pointwise monotonicity across stages is asserted up to
    ``mono_tol``; the report carries per-stage sup increments as Cauchy
    diagnostics plus the nodes still moving at the final stage.
    """
    q_list = [float(q) for q in q_list]
    if any(b <= a for a, b in zip(q_list, q_list[1:])):
        raise ConfigError("q_list must be strictly increasing")
    eng = engine or SemiLagrangian(dyn, grid, dt)
    report = {"q": [], "value_sup": [], "increment_sup": [], "sweeps": []}
    prev_root = None
    last_inc = None
    for q in q_list:
        W = value_iteration_q(dyn, grid, q, h=h, L=L, dt=dt, tol=tol, w0=prev_root, engine=eng)
        root = vq_root(W)
        if prev_root is not None:
            inc = root.feasible_values() - prev_root.feasible_values()
            if float(-inc.min()) > mono_tol:
                raise NonconvergenceError(
                    f"V_q monotonicity violated by {-inc.min():.3e} between "
                    f"q={report['q'][-1]} and q={q}",
                    {"drop": float(-inc.min())},
                )
            report["increment_sup"].append(float(inc.max()))
            last_inc = inc
        report["q"].append(q)
        report["value_sup"].append(root.max())
        report["sweeps"].append(W.meta["sweeps"])
        prev_root = root
    if last_inc is not None:
        stab_tol = 10.0 * mono_tol
        report["final_increment_sup"] = float(last_inc.max())
        report["unstable_nodes"] = int(np.sum(last_inc > stab_tol))
    out = ValueGrid(prev_root.box, prev_root.values, q=math.inf, cost_scale=1.0,
                    meta={"q_list": q_list, "dt": dt})
    return out, report


# ---------------------------------------------------------------------------
# constrained control sets and Hamiltonian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstrainedControlSet:
    """Controls whose every post-jump point keeps psi at or below the level r."""

    indices: np.ndarray
    r: float
    worst_post: np.ndarray  # max_k psi(x + g(x, u, y_k)) per control

    @property
    def empty(self) -> bool:
        return self.indices.size == 0


def constrained_controls(
    psi: ValueGrid,
    x,
    r: float,
    dyn: Dynamics,
    controls: np.ndarray | None = None,
) -> ConstrainedControlSet:
    """Finite claim law makes 'a.s.' exact: check every support point."""
    controls = dyn.controls if controls is None else np.asarray(controls, dtype=float)
    X = _as_point_batch(x)
    worst = np.empty(controls.shape[0])
    for ic, ctrl in enumerate(controls):
        posts = np.vstack([X + dyn.jump(X, ctrl, yk) for yk in dyn.claims.support]) if dyn.dim else X
        worst[ic] = float(psi.interp(posts).max())
    idx = np.nonzero(worst <= r)[0]
    return ConstrainedControlSet(indices=idx, r=float(r), worst_post=worst)


def constrained_hamiltonian(
    psi: ValueGrid,
    x,
    r: float,
    p: np.ndarray,
    dyn: Dynamics,
    controls: np.ndarray | None = None,
) -> float:
    """min <p, f(x, u)> over the jump-constrained set; +inf when empty."""
    controls = dyn.controls if controls is None else np.asarray(controls, dtype=float)
    cset = constrained_controls(psi, x, r, dyn, controls)
    if cset.empty:
        return math.inf
    X = _as_point_batch(x)
    p = np.asarray(p, dtype=float)
    vals = np.array([float(dyn.drift(X, controls[ic])[0] @ p) for ic in cset.indices])
    return float(vals[int(np.argmin(vals))])  # argmin takes the lowest index on ties


# ---------------------------------------------------------------------------
# obstacle iteration for the running-max value
# ---------------------------------------------------------------------------


def obstacle_solve(
    dyn: Dynamics,
    grid: StateGrid,
    h: float | None = None,
    L=None,
    dt: float = 1e-2,
    tol: float = 1e-8,
    max_sweeps: int = 5000,
    init: ValueGrid | None = None,
    band_factor: float = 1.0,
    engine: SemiLagrangian | None = None,
) -> tuple[ValueGrid, dict]:
    """Jacobi iteration of the obstacle update for the running-max value.

    psi <- max(L, min over controls allowed at level psi(x)+band of
    e^{-h dt} psi(foot)); the band regularizes the level constraint (the
    Hamiltonian is discontinuous in the level).  Where no control passes the
    constraint the update falls back to the full running-max step
    max(L, min_u max(e^{-h dt} psi(foot), max_k psi(post))).  Output is >= L
    by construction.  On detected cycling the band widens once.
    """
    h = dyn.h if h is None else float(h)
    eng = engine or SemiLagrangian(dyn, grid, dt)
    L = L or (lambda X: np.ones(X.shape[0]))
    L_nodes = np.asarray(L(eng.nodes), dtype=float)
    if init is not None:
        psi = np.maximum(L_nodes, init.values[eng.feas_idx])
    else:
        psi = L_nodes.copy()
    disc = math.exp(-h * dt)
    n_ctrl = len(eng.P_drift)
    widened = 0
    hist: list[float] = []
    fallback_nodes = 0
    for sweep in range(1, max_sweeps + 1):
        incr = _adjacent_increment(eng, psi)
        band = band_factor * incr
        level = psi + band
        best = np.full(eng.F, np.inf)
        fb = np.full(eng.F, np.inf)
        for ic in range(n_ctrl):
            drift_val = disc * (eng.P_drift[ic] @ psi)
            jmax = None
            for Pk in eng.P_jump[ic]:
                v = Pk @ psi
                jmax = v if jmax is None else np.maximum(jmax, v)
            if dyn.lam == 0.0:
                allowed_val = drift_val
                fb_val = drift_val
            else:
                allowed_val = np.where(jmax <= level, drift_val, np.inf)
                fb_val = np.maximum(drift_val, jmax)
            best = np.minimum(best, allowed_val)
            fb = np.minimum(fb, fb_val)
        need_fb = ~np.isfinite(best)
        fallback_nodes = int(need_fb.sum())
        new = np.maximum(L_nodes, np.where(need_fb, fb, best))
        resid = float(np.abs(new - psi).max())
        psi = new
        hist.append(resid)
        if resid <= tol:
            break
        if sweep > 60 and resid > tol and widened == 0:
            recent = hist[-30:]
            if min(recent) >= hist[-31] - 1e-15:  # no progress over the window
                band_factor *= 2.0
                widened = 1
    else:
        raise NonconvergenceError(
            f"obstacle iteration hit {max_sweeps} sweeps, residual {hist[-1]:.3e}",
            {"residuals": hist[-20:], "band_factor": band_factor, "widened": widened},
        )
    out = ValueGrid(
        eng.box,
        eng.expand(psi),
        q=math.inf,
        cost_scale=1.0,
        meta={
            "sweeps": len(hist),
            "residual": hist[-1],
            "band_factor": band_factor,
            "band_widened": widened,
            "fallback_nodes": fallback_nodes,
            "dt": dt,
            "h": h,
        },
    )
    return out, dict(out.meta)


def _adjacent_increment(eng: SemiLagrangian, psi: np.ndarray) -> float:
    """Largest |psi| gap between adjacent feasible nodes (the band scale)."""
    full = eng.expand(psi).reshape(eng.box.shape) if eng.box.dim else eng.expand(psi)
    feas = eng.box.feasible.reshape(eng.box.shape) if eng.box.dim else eng.box.feasible
    worst = 0.0
    for d in range(eng.box.dim):
        sl_lo = [slice(None)] * eng.box.dim
        sl_hi = [slice(None)] * eng.box.dim
        sl_lo[d] = slice(None, -1)
        sl_hi[d] = slice(1, None)
        both = feas[tuple(sl_lo)] & feas[tuple(sl_hi)]
        if both.any():
            worst = max(worst, float(np.abs(full[tuple(sl_hi)] - full[tuple(sl_lo)])[both].max()))
    return worst


# ---------------------------------------------------------------------------
# smooth candidates and the dual certificate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SmoothedCandidate:
    """Gaussian-kernel smoothing of grid values: C-infinity with exact gradients."""

    centers: np.ndarray
    base_values: np.ndarray
    bandwidth: float

    @classmethod
    def from_value_grid(cls, vg: ValueGrid, offset: float = 0.0, bandwidth_cells: float = 1.0):
        centers = vg.box.feasible_nodes()
        vals = vg.feasible_values() - offset
        return cls(centers, vals, bandwidth_cells * vg.box.max_spacing())

    _CHUNK = 512  # bound pairwise-kernel memory

    def _weights(self, X: np.ndarray) -> np.ndarray:
        d2 = ((X[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=2)
        # shift per row before exponentiating so far-field rows keep support
        d2 = d2 - d2.min(axis=1, keepdims=True)
        return np.exp(-0.5 * d2 / self.bandwidth**2)

    def value(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], self._CHUNK):
            w = self._weights(X[s : s + self._CHUNK])
            out[s : s + self._CHUNK] = (w @ self.base_values) / w.sum(axis=1)
        return out

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.empty_like(X)
        for s in range(0, X.shape[0], self._CHUNK):
            Xc = X[s : s + self._CHUNK]
            w = self._weights(Xc)
            tot = w.sum(axis=1)
            psi = (w @ self.base_values) / tot
            diff = (self.centers[None, :, :] - Xc[:, None, :]) / self.bandwidth**2
            num = np.einsum("nk,nkd,k->nd", w, diff, self.base_values)
            den = np.einsum("nk,nkd->nd", w, diff)
            out[s : s + self._CHUNK] = (num - psi[:, None] * den) / tot[:, None]
        return out


@dataclass(frozen=True)
class PolynomialCandidate:
    """Total-degree polynomial least-squares smoothing of a value grid.

    Smooth everywhere with exact gradients; preferred certificate candidate
    when the value surface is mild enough for a low-degree global fit.
    """

    powers: np.ndarray  # (n_terms, dim)
    coefs: np.ndarray

    @classmethod
    def fit(cls, vg: ValueGrid, degree: int = 2, offset: float = 0.0):
        X = vg.box.feasible_nodes()
        y = vg.feasible_values() - offset
        dim = X.shape[1]
        powers = [p for p in _monomials(dim, degree)]
        powers = np.asarray(powers, dtype=np.int64)
        A = np.ones((X.shape[0], powers.shape[0]))
        for t, pw in enumerate(powers):
            for d in range(dim):
                if pw[d]:
                    A[:, t] *= X[:, d] ** pw[d]
        coefs, *_ = np.linalg.lstsq(A, y, rcond=None)
        return cls(powers, coefs)

    def value(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for pw, cf in zip(self.powers, self.coefs):
            term = np.full(X.shape[0], cf)
            for d in range(X.shape[1]):
                if pw[d]:
                    term = term * X[:, d] ** pw[d]
            out += term
        return out

    def grad(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.zeros_like(X)
        for pw, cf in zip(self.powers, self.coefs):
            for d in range(X.shape[1]):
                if pw[d] == 0:
                    continue
                term = np.full(X.shape[0], cf * pw[d])
                for dd in range(X.shape[1]):
                    e = pw[dd] - (dd == d)
                    if e:
                        term = term * X[:, dd] ** e
                out[:, d] += term
        return out


def _monomials(dim: int, degree: int):
    if dim == 0:
        yield ()
        return
    for d0 in range(degree + 1):
        for rest in _monomials(dim - 1, degree - d0):
            yield (d0, *rest)


@dataclass(frozen=True)
class CertificateReport:
    certified: bool
    max_violation: float
    min_expression: float
    bound: float
    points_checked: int


def dual_certificate_check(
    psi,
    dyn: Dynamics,
    q: float,
    h: float | None = None,
    L=None,
    sample_points: np.ndarray | None = None,
    x0=None,
    controls: np.ndarray | None = None,
    tol: float = 1e-6,
) -> CertificateReport:
    """Check the q-scaled subsolution inequality for a smooth positive candidate.

    At every (point, control) the expression
        -(1+hq+lam)/q * psi + <f, grad psi> + (1/q)(L/psi)^q psi
        + (lam/q) E_y[(psi(x+g)/psi)^q] psi
    must be >= -tol; then psi(x0) is a certified lower bound for V_q(x0) up
    to the certification slack.  Ratio powers run in log space.
    """
    h = dyn.h if h is None else float(h)
    controls = dyn.controls if controls is None else np.asarray(controls, dtype=float)
    L = L or (lambda X: np.ones(X.shape[0]))
    if sample_points is None:
        raise ConfigError("sample_points required (default: pass the grid nodes)")
    X = np.asarray(sample_points, dtype=float)
    vals = psi.value(X)
    if np.any(vals <= 0):
        raise ContractViolation("candidate psi must be positive on the sample points")
    grads = psi.grad(X)
    logpsi = np.log(vals)
    Lv = np.asarray(L(X), dtype=float)
    with np.errstate(over="ignore"):
        cost_term = np.exp(q * (np.log(Lv) - logpsi) + logpsi) / q
    worst = np.inf
    for ctrl in controls:
        adv = np.sum(dyn.drift(X, ctrl) * grads, axis=1) if dyn.dim else np.zeros(X.shape[0])
        jump_term = np.zeros(X.shape[0])
        if dyn.lam > 0:
            for wk, yk in zip(dyn.claims.weights, dyn.claims.support):
                post_vals = psi.value(X + dyn.jump(X, ctrl, yk)) if dyn.dim else vals
                with np.errstate(over="ignore"):
                    jump_term += wk * np.exp(q * (np.log(post_vals) - logpsi) + logpsi)
            jump_term *= dyn.lam / q
        expr = -(1.0 + h * q + dyn.lam) / q * vals + adv + cost_term + jump_term
        worst = min(worst, float(expr.min()))
    bound = float("nan")
    if x0 is not None:
        bound = float(psi.value(_as_point_batch(x0))[0])
    return CertificateReport(
        certified=worst >= -tol,
        max_violation=max(0.0, -worst),
        min_expression=worst,
        bound=bound,
        points_checked=X.shape[0] * controls.shape[0],
    )


# ---------------------------------------------------------------------------
# limit-Hamiltonian probe
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProbeReport:
    rows: list
    rhs: float
    gaps: list


def hamiltonian_limit_probe(
    alpha: np.ndarray,
    beta: np.ndarray,
    phi: Callable[[float, np.ndarray], np.ndarray],
    phi_inf: Callable[[np.ndarray], np.ndarray],
    nu: float,
    mu: float,
    q_list: Sequence[float],
    claims,
) -> ProbeReport:
    """Penalized-minimum convergence table against the constrained infimum.

    Left side per q: min_u [alpha(u) + (mu/q) (||phi_q(beta(u,.))||_{L^q} / nu)^q];
    right side: inf alpha over controls whose phi_inf(beta) never exceeds nu
    (+inf when that set is empty).  Requires min phi_1 > 1 over the beta
    range.
    """
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (alpha.size, claims.support.size):
        raise ConfigError("beta must be (n_controls, n_claims)")
    if float(np.min(phi(1.0, beta.ravel()))) <= 1.0:
        raise ContractViolation("hypothesis violated: inf phi_1 over the beta range must exceed 1")
    feas = np.array([bool(np.max(phi_inf(beta[c])) <= nu) for c in range(alpha.size)])
    rhs = float(alpha[feas].min()) if feas.any() else math.inf
    logw = np.log(np.asarray(claims.weights, dtype=float))
    rows, gaps = [], []
    for q in q_list:
        q = float(q)
        with np.errstate(over="ignore", divide="ignore"):
            logphi = np.log(phi(q, beta))
            # log of (1/q) mu (||phi_q||_q / nu)^q  via logsumexp over claims
            a = logw[None, :] + q * logphi
            amax = a.max(axis=1)
            log_norm_q = amax + np.log(np.exp(a - amax[:, None]).sum(axis=1))
            log_pen = math.log(mu) - math.log(q) + log_norm_q - q * math.log(nu)
            pen = np.exp(log_pen)
        lhs = float(np.min(alpha + pen))
        rows.append({"q": q, "lhs": lhs})
        gaps.append(abs(lhs - rhs) if math.isfinite(rhs) and math.isfinite(lhs) else math.inf)
    return ProbeReport(rows=rows, rhs=rhs, gaps=gaps)
