"""Model coefficients, state/control types, claim laws, and the dynamics interface.

State layout used throughout the package: the stacked vector
``xbar = [s_1..s_n, i_1..i_n, x]`` (susceptible and infected fractions per
edge, then insurer capital).  Controls are stacked as ``[u, p_1..p_n]``
(exposure reduction, then the protection vector).  The discount coordinate
``a`` is carried separately by the simulator and the LP grid; it is never
part of ``xbar``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

GEOM_TOL = 1e-9  # tolerance for simplex-membership checks on (s, i)


class ConfigError(ValueError):
    """Bad model or scenario configuration."""


class ContractViolation(ValueError):
    """An operation was called outside its declared contract."""


class NonconvergenceError(RuntimeError):
    """An iterative solver hit its sweep limit before reaching tolerance."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


# ---------------------------------------------------------------------------
# claim law
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClaimLaw:
    """Finite discrete claim-size law: support points and probabilities.

    Continuous laws enter only through :meth:`from_quantiles`, which replaces
    them by an equal-mass quantization.  Keeping the law finite makes every
    claim integral an exact sum and turns almost-sure conditions into checks
    over the support.
    """

    support: np.ndarray
    weights: np.ndarray
    mean: float = field(init=False)
    moment4: float = field(init=False)

    def __post_init__(self):
        sup = np.atleast_1d(np.asarray(self.support, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if sup.ndim != 1 or w.shape != sup.shape or sup.size == 0:
            raise ConfigError("claims: support and weights must be equal-length 1-D arrays")
        if np.any(sup < 0):
            raise ConfigError("claims.support: claim sizes must be >= 0")
        if np.any(w < 0):
            raise ConfigError("claims.weights: probabilities must be >= 0")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigError(f"claims.weights: must sum to 1 (got {w.sum()!r})")
        sup.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "mean", float(np.dot(w, sup)))
        object.__setattr__(self, "moment4", float(np.dot(w, sup**4)))
        if not math.isfinite(self.moment4):
            raise ConfigError("claims: fourth moment must be finite")

    def moment(self, k: int) -> float:
        return float(np.dot(self.weights, self.support**k))

    def expect(self, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.dot(self.weights, fn(self.support)))

    @classmethod
    def degenerate(cls, y: float) -> "ClaimLaw":
        return cls(np.array([float(y)]), np.array([1.0]))

    @classmethod
    def from_quantiles(cls, ppf: Callable[[np.ndarray], np.ndarray], n_points: int = 32) -> "ClaimLaw":
        """Equal-mass quantization of a continuous law given by its quantile function."""
        if n_points < 1:
            raise ConfigError("claims quantization needs at least one point")
        u = (np.arange(n_points) + 0.5) / n_points
        sup = np.asarray(ppf(u), dtype=float)
        return cls(np.maximum(sup, 0.0), np.full(n_points, 1.0 / n_points))


# ---------------------------------------------------------------------------
# premium
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PremiumTable:
    """Multilinear lookup table for a custom premium over (s, i).

    ``axes`` holds one strictly increasing node list per state coordinate
    (s_1..s_n then i_1..i_n); ``values`` has one entry per grid point.  When
    ``scale_by_u`` the tabulated rate is multiplied by the exposure control.
    """

    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    scale_by_u: bool = True

    def __post_init__(self):
        axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        vals = np.asarray(self.values, dtype=float).reshape([len(ax) for ax in axes])
        for ax in axes:
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise ConfigError("premium.table.axes: each axis needs >= 2 strictly increasing nodes")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)

    def rate(self, s: np.ndarray, i: np.ndarray, u: np.ndarray) -> np.ndarray:
        from scipy.interpolate import RegularGridInterpolator

        pts = np.concatenate([s, i], axis=-1)
        interp = RegularGridInterpolator(self.axes, self.values, bounds_error=False, fill_value=None)
        out = interp(pts)
        if self.scale_by_u:
            out = out * u
        return out


@dataclass(frozen=True)
class PremiumSpec:
    """Premium functional: the zero-drift net premium or a custom variant."""

    kind: str = "net"  # net | constant | net_offset | table
    value: float = 0.0
    table: PremiumTable | None = None

    def __post_init__(self):
        if self.kind not in ("net", "constant", "net_offset", "table"):
            raise ConfigError(f"premium: unknown kind {self.kind!r}")
        if self.kind == "table" and self.table is None:
            raise ConfigError("premium: table mode needs a PremiumTable")


# ---------------------------------------------------------------------------
# parameters and states
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SirParams:
    """Per-edge SIR rates, the claim clock, control bounds, and the premium mode."""

    n: int
    beta: np.ndarray
    gamma: np.ndarray
    lam: float
    u_min: float
    prev_levels: tuple[tuple[float, ...], ...]
    h: float
    u_max: float = 1.0
    premium: PremiumSpec = field(default_factory=PremiumSpec)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("n: need at least one edge")
        beta = np.asarray(self.beta, dtype=float)
        gamma = np.asarray(self.gamma, dtype=float)
        if beta.shape != (self.n,) or gamma.shape != (self.n,):
            raise ConfigError(f"beta/gamma must have length n={self.n}")
        if np.any(beta < 0) or np.any(gamma < 0):
            raise ConfigError("beta and gamma must be nonnegative")
        if self.lam < 0:
            raise ConfigError("lambda must be nonnegative")
        if self.lam >= 1.0:
            # standing normalization of the occupation-measure discount
            raise ConfigError(f"lambda must be < 1 (got {self.lam}); rescale time first")
        if not (0.0 < self.u_min <= self.u_max <= 1.0):
            raise ConfigError("need 0 < u_min <= u_max <= 1")
        levels = tuple(tuple(float(v) for v in p) for p in self.prev_levels)
        if not levels:
            raise ConfigError("prev_levels: need at least one protection vector")
        for p in levels:
            if len(p) != self.n:
                raise ConfigError(f"prev_levels: each vector must have length n={self.n}")
            if min(p) < 1.0:
                raise ConfigError("prev_levels: every component must be >= 1")
        if self.h <= 0:
            raise ConfigError("h: discount rate must be positive")
        beta.setflags(write=False)
        gamma.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "prev_levels", levels)

    @property
    def state_dim(self) -> int:
        return 2 * self.n + 1

    @property
    def control_dim(self) -> int:
        return 1 + self.n


@dataclass(frozen=True)
class NetworkState:
    """Per-edge (s, i) fractions, insurer capital x, discount coordinate a."""

    s: np.ndarray
    i: np.ndarray
    x: float
    a: float = 1.0

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        i = np.atleast_1d(np.asarray(self.i, dtype=float))
        if s.shape != i.shape or s.ndim != 1:
            raise ContractViolation("s and i must be 1-D arrays of equal length")
        if np.any(s < -GEOM_TOL) or np.any(i < -GEOM_TOL) or np.any(s + i > 1.0 + GEOM_TOL):
            raise ContractViolation(f"(s, i) outside the unit simplex: s={s}, i={i}")
        if not (-GEOM_TOL <= self.a <= 1.0 + GEOM_TOL):
            raise ContractViolation(f"a={self.a} outside [0, 1]")
        s.setflags(write=False)
        i.setflags(write=False)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "i", i)

    @property
    def n(self) -> int:
        return self.s.size

    def vector(self) -> np.ndarray:
        return np.concatenate([self.s, self.i, [self.x]])

    @classmethod
    def from_vector(cls, v: np.ndarray, a: float = 1.0) -> "NetworkState":
        v = np.asarray(v, dtype=float)
        n = (v.size - 1) // 2
        return cls(v[:n], v[n : 2 * n], float(v[2 * n]), a)


@dataclass(frozen=True)
class ControlPoint:
    """Exposure reduction u and protection vector p."""

    u: float
    p: tuple[float, ...]

    def vector(self) -> np.ndarray:
        return np.concatenate([[self.u], self.p])

    @classmethod
    def from_vector(cls, v: np.ndarray) -> "ControlPoint":
        v = np.asarray(v, dtype=float)
        return cls(float(v[0]), tuple(v[1:]))

    def validate(self, params: SirParams) -> "ControlPoint":
        if not (params.u_min - 1e-12 <= self.u <= params.u_max + 1e-12):
            raise ContractViolation(f"u={self.u} outside [{params.u_min}, {params.u_max}]")
        if len(self.p) != params.n:
            raise ContractViolation(f"protection vector must have length n={params.n}")
        levels = {tuple(np.round(p, 12)) for p in params.prev_levels}
        if tuple(np.round(self.p, 12)) not in levels:
            raise ContractViolation(f"p={self.p} not among the declared protection levels")
        return self


# ---------------------------------------------------------------------------
# coefficients (vectorized cores + single-state wrappers)
# ---------------------------------------------------------------------------


def _split_state(X: np.ndarray, n: int):
    return X[..., :n], X[..., n : 2 * n], X[..., 2 * n]


def _split_ctrl(C: np.ndarray):
    return C[..., 0], C[..., 1:]


def _jump_terms(S, I, P):
    """Positive-part thresholds of the infection jump: di, -ds, and the claim factor."""
    i0 = np.mean(I, axis=-1, keepdims=True)
    di = np.maximum(i0 / P - I, 0.0)
    ds = np.maximum(S - 1.0 + i0 / P, 0.0)
    return di, ds, np.sum(di, axis=-1)


def premium_rate(S, I, U, P, params: SirParams, claims: ClaimLaw) -> np.ndarray:
    """Premium c(s, i, u, p) per the configured mode (batched over leading axes)."""
    spec = params.premium
    if spec.kind == "constant":
        return np.broadcast_to(float(spec.value), np.shape(U)).copy()
    if spec.kind == "table":
        return np.asarray(spec.table.rate(S, I, U), dtype=float)
    _, _, total = _jump_terms(S, I, P)
    net = params.lam * claims.mean * U * total
    if spec.kind == "net_offset":
        net = net + spec.value
    return net


def _sir_drift_batch(X: np.ndarray, C: np.ndarray, params: SirParams, claims: ClaimLaw) -> np.ndarray:
    S, I, _ = _split_state(X, params.n)
    U, P = _split_ctrl(C)
    u = U[..., None]
    dS = -params.beta * u * S * I
    dI = (params.beta * u * S - params.gamma) * I
    dX = premium_rate(S, I, U, P, params, claims)
    return np.concatenate([dS, dI, dX[..., None]], axis=-1)


def _sir_jump_batch(X: np.ndarray, C: np.ndarray, Y: np.ndarray, params: SirParams) -> np.ndarray:
    """Jump displacement g(xbar, u, y); post-jump state is X + g."""
    S, I, _ = _split_state(X, params.n)
    U, P = _split_ctrl(C)
    di, ds, total = _jump_terms(S, I, P)
    dx = -U * np.asarray(Y, dtype=float) * total
    return np.concatenate([-ds, di, dx[..., None]], axis=-1)


def sir_drift(state: NetworkState, ctrl: ControlPoint, params: SirParams, claims: ClaimLaw) -> np.ndarray:
    """Velocity (ds/dt, di/dt, dx/dt) of the controlled SIR/capital flow.

    The discount coordinate's velocity -h*a is supplied by the solvers, not
    here.
    """
    if state.n != params.n or len(ctrl.p) != params.n:
        raise ContractViolation(f"state/control dimension mismatch with n={params.n}")
    return _sir_drift_batch(state.vector()[None, :], ctrl.vector()[None, :], params, claims)[0]


def sir_jump(state: NetworkState, ctrl: ControlPoint, y: float, params: SirParams) -> NetworkState:
    """Post-jump state: infection threshold update plus the capital claim decrement."""
    if state.n != params.n or len(ctrl.p) != params.n:
        raise ContractViolation(f"state/control dimension mismatch with n={params.n}")
    if y < 0:
        raise ContractViolation("claim size must be >= 0")
    g = _sir_jump_batch(state.vector()[None, :], ctrl.vector()[None, :], np.array([y]), params)[0]
    v = state.vector() + g
    n = params.n
    return NetworkState(v[:n], v[n : 2 * n], float(v[2 * n]), state.a)


def net_premium(s: np.ndarray, i: np.ndarray, ctrl: ControlPoint, params: SirParams, claims: ClaimLaw) -> float:
    """Net premium rate c0: the drift making the expected capital velocity vanish."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    i = np.atleast_1d(np.asarray(i, dtype=float))
    if s.shape != (params.n,) or i.shape != (params.n,):
        raise ContractViolation(f"s and i must have length n={params.n}")
    if np.any(s < -GEOM_TOL) or np.any(i < -GEOM_TOL) or np.any(s + i > 1 + GEOM_TOL):
        raise ContractViolation("(s, i) outside the unit simplex")
    p = np.asarray(ctrl.p, dtype=float)
    thresh = np.sum(np.maximum(i.mean() / p - i, 0.0))
    return float(params.lam * claims.mean * ctrl.u * thresh)


# ---------------------------------------------------------------------------
# truncation taper
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Truncation:
    """Capital window outside which the coefficients are tapered to zero.

    The (s, i) block needs no truncation: the unit simplex is invariant for
    both the flow and the jumps.
    """

    x_lo: float = -5.0
    x_hi: float = 5.0
    margin: float = 1.0

    def __post_init__(self):
        if not (self.x_lo < self.x_hi) or self.margin <= 0:
            raise ConfigError("truncation: need x_lo < x_hi and margin > 0")

    def taper(self, x: np.ndarray) -> np.ndarray:
        """C^1 cutoff: 1 on [x_lo, x_hi], smoothstep down to 0 over the margin."""
        x = np.asarray(x, dtype=float)
        t = np.clip((np.maximum(self.x_lo - x, x - self.x_hi)) / self.margin, 0.0, 1.0)
        return 1.0 - t * t * (3.0 - 2.0 * t)


# ---------------------------------------------------------------------------
# generic dynamics interface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dynamics:
    """Coefficients every solver consumes: drift f, jump displacement g, claim law.

    ``drift(X, C)`` and ``jump(X, C, y)`` are batched: X is (N, dim), C is a
    control vector (control_dim,) or an (N, control_dim) batch, y a scalar or
    (N,) array.  ``controls`` is the default finite control grid (stacked
    vectors) used by the grid solvers and feedback policies.
    """

    dim: int
    control_dim: int
    drift: Callable[[np.ndarray, np.ndarray], np.ndarray]
    jump: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    claims: ClaimLaw
    lam: float
    h: float
    controls: np.ndarray = None
    invariant_violation: Callable[[np.ndarray], np.ndarray] | None = None
    project: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "generic"

    def __post_init__(self):
        if self.controls is None:
            object.__setattr__(self, "controls", np.zeros((1, self.control_dim)))
        ctrls = np.asarray(self.controls, dtype=float).reshape(-1, self.control_dim)
        ctrls.setflags(write=False)
        object.__setattr__(self, "controls", ctrls)

    def post_jump(self, X: np.ndarray, C: np.ndarray, y) -> np.ndarray:
        return X + self.jump(X, C, y)


def _checked(fn, dim, control_dim, what, expect_y):
    def wrapped(X, C, *rest):
        X = np.asarray(X, dtype=float)
        C = np.asarray(C, dtype=float)
        if X.ndim != 2 or X.shape[1] != dim:
            raise ContractViolation(f"{what}: state batch must be (N, {dim}), got {X.shape}")
        if C.shape[-1] != control_dim:
            raise ContractViolation(f"{what}: control dim must be {control_dim}, got {C.shape}")
        out = np.asarray(fn(X, C, *rest), dtype=float)
        if out.shape != X.shape:
            raise ContractViolation(f"{what}: output shape {out.shape} != state shape {X.shape}")
        return out

    return wrapped


def generic_dynamics(
    drift: Callable,
    jump: Callable,
    claims: ClaimLaw,
    lam: float,
    h: float,
    dim: int,
    control_dim: int = 1,
    controls=None,
    invariant_violation=None,
    project=None,
    label: str = "generic",
) -> Dynamics:
    """Wrap arbitrary batched coefficients so the solvers can run on non-SIR models.

    Shapes are validated on every invocation; a mismatch raises
    ContractViolation at the first call.
    """
    if dim < 0:
        raise ConfigError("state dimension must be >= 0")
    return Dynamics(
        dim=dim,
        control_dim=control_dim,
        drift=_checked(drift, dim, control_dim, "drift", False),
        jump=_checked(jump, dim, control_dim, "jump", True),
        claims=claims,
        lam=lam,
        h=h,
        controls=controls,
        invariant_violation=invariant_violation,
        project=project,
        label=label,
    )


def frozen_dynamics(dim: int, h: float = 1.0, lam: float = 0.5, claims: ClaimLaw | None = None) -> Dynamics:
    """Zero drift, zero jump: every trajectory is constant in xbar."""
    claims = claims or ClaimLaw.degenerate(1.0)
    zero = lambda X, C, *rest: np.zeros_like(X)
    return generic_dynamics(zero, zero, claims, lam, h, dim, control_dim=1, label="frozen")


def pure_discount_dynamics(h: float = 1.0, lam: float = 0.5) -> Dynamics:
    """State dimension zero: only the adjoined discount coordinate evolves."""
    return frozen_dynamics(0, h=h, lam=lam)


def control_grid(params: SirParams, n_u: int = 3) -> np.ndarray:
    """Finite control grid: n_u exposure levels crossed with the protection set."""
    us = np.linspace(params.u_min, params.u_max, n_u) if n_u > 1 else np.array([params.u_max])
    rows = [np.concatenate([[u], p]) for u in us for p in params.prev_levels]
    return np.asarray(rows)


def sir_dynamics(
    params: SirParams,
    claims: ClaimLaw,
    truncation: Truncation | None = None,
    n_u: int = 3,
) -> Dynamics:
    """SIR/capital dynamics as a Dynamics object, optionally capital-tapered.

    With a truncation, the whole drift and the capital component of the jump
    are multiplied by the window cutoff, so the coefficients vanish outside a
    compact set while staying Lipschitz.
    """
    n = params.n

    def drift(X, C):
        out = _sir_drift_batch(X, C, params, claims)
        if truncation is not None:
            out = out * truncation.taper(X[:, 2 * n])[:, None]
        return out

    def jump(X, C, y):
        out = _sir_jump_batch(X, C, y, params)
        if truncation is not None:
            out[:, 2 * n] *= truncation.taper(X[:, 2 * n])
        return out

    def invariant_violation(X):
        S, I, _ = _split_state(X, n)
        v = np.maximum(np.maximum(-S, -I), S + I - 1.0)
        return np.maximum(v.max(axis=-1), 0.0)

    def project(X):
        # clip float-level excursions only; larger ones are integration failures
        S, I, Xc = X[:, :n], X[:, n : 2 * n], X[:, 2 * n :]
        S = np.clip(S, 0.0, 1.0)
        I = np.clip(I, 0.0, 1.0)
        tot = S + I
        scale = np.where(tot > 1.0, 1.0 / np.maximum(tot, 1e-300), 1.0)
        return np.concatenate([S * scale, I * scale, Xc], axis=1)

    return generic_dynamics(
        drift,
        jump,
        claims,
        params.lam,
        params.h,
        dim=params.state_dim,
        control_dim=params.control_dim,
        controls=control_grid(params, n_u=n_u),
        invariant_violation=invariant_violation,
        project=project,
        label=f"sir(n={n})",
    )


# ---------------------------------------------------------------------------
# Lipschitz profile
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzProfile:
    """Sampled coefficient bounds over the truncated state box.

    All entries are sampled-supremum estimates (upper estimates of difference
    quotients on a dense cloud), not exact suprema.  ``g_bound``/``g_lip``
    hold one value per claim-support point.  Constants derived for the
    fourth-moment bound follow the shifted-jump convention: the bound used
    there is ``1 + sup|g|``.
    """

    f_bound: float
    f_lip: float
    g_bound: np.ndarray
    g_lip: np.ndarray
    claims: ClaimLaw
    lam: float

    def g_bound_fn(self, y) -> np.ndarray:
        return np.interp(np.abs(y), np.abs(self.claims.support), self.g_bound)

    def g_lip_fn(self, y) -> np.ndarray:
        return np.interp(np.abs(y), np.abs(self.claims.support), self.g_lip)

    # --- moment-estimate constants -------------------------------------
    @property
    def pairwise_rate(self) -> float:
        """Exponential rate of the squared-gap estimate between two starts."""
        w, gl = self.claims.weights, self.g_lip
        return 2.0 * self.f_lip + self.lam * float(np.dot(w, 2.0 * gl + gl**2))

    @property
    def shaken_prefactor(self) -> float:
        w, gl = self.claims.weights, self.g_lip
        return self.f_lip + 2.0 * self.lam * float(np.dot(w, (1.0 + gl) ** 2))

    @property
    def shaken_rate(self) -> float:
        w, gl = self.claims.weights, self.g_lip
        return 3.0 * self.f_lip + self.lam * float(np.dot(w, 1.0 + 4.0 * gl + 2.0 * gl**2))

    @property
    def moment4_coef(self) -> float:
        """||f||_0^4 plus the fourth claim moment of the shifted jump bound."""
        w = self.claims.weights
        return self.f_bound**4 + float(np.dot(w, (1.0 + self.g_bound) ** 4))

    def fourth_moment_bound(self, x0_norm: float, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.exp(0.5 * (self.lam + 1.0) * t) * (
            x0_norm**4 + 625.0 * max(self.lam, 1.0) * self.moment4_coef * t
        )

    def theta_moment_bound(self, x0_norm: float) -> float:
        """Fourth-moment cap of the occupation-measure constraint set."""
        return (2.0 / (1.0 - self.lam)) ** 2 * (x0_norm**4 + 625.0 * self.moment4_coef)

    def lq_gap_rate(self, q: float) -> float:
        return q * self.f_lip

    def lq_shaken_prefactor(self, q: float) -> float:
        return self.f_lip + self.lam * q

    def lq_shaken_rate(self, q: float) -> float:
        return (2.0 * q - 1.0) * self.f_lip + self.lam * q

    # --- discount-rate lower bounds -------------------------------------
    @property
    def h_min_expectation(self) -> float:
        return 1.0 + self.shaken_rate / 4.0

    @property
    def h_min_sup(self) -> float:
        return 2.0 * self.f_lip + self.lam


def _sample_states(dyn: Dynamics, box: Sequence[tuple[float, float]], n_samples: int, rng) -> np.ndarray:
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    X = lo + (hi - lo) * rng.random((n_samples, len(box)))
    if dyn.project is not None:
        X = dyn.project(X)
    return X


def lipschitz_profile(
    dyn: Dynamics,
    box: Sequence[tuple[float, float]],
    n_samples: int = 4000,
    seed: int = 0,
) -> LipschitzProfile:
    """Estimate coefficient bounds and Lipschitz constants over a compact box.

    Pairs a random cloud with small-offset perturbations so local slopes are
    probed as well as long-range quotients.
    """
    if len(box) != dyn.dim:
        raise ConfigError(f"truncation box must have {dyn.dim} intervals")
    if any(b[1] <= b[0] for b in box):
        raise ConfigError("truncation box must have positive volume")
    rng = np.random.default_rng(seed)
    if dyn.dim == 0:
        zero = np.zeros(dyn.claims.support.shape)
        return LipschitzProfile(0.0, 0.0, zero, zero, dyn.claims, dyn.lam)
    X1 = _sample_states(dyn, box, n_samples, rng)
    scale = max(b[1] - b[0] for b in box)
    X2 = X1 + rng.normal(scale=0.02 * scale, size=X1.shape)
    X2 = np.clip(X2, [b[0] for b in box], [b[1] for b in box])
    if dyn.project is not None:
        X2 = dyn.project(X2)
    gap = np.linalg.norm(X1 - X2, axis=1)
    ok = gap > 1e-12

    f_bound, f_lip = 0.0, 0.0
    g_bound = np.zeros(dyn.claims.support.size)
    g_lip = np.zeros(dyn.claims.support.size)
    for c in dyn.controls:
        f1, f2 = dyn.drift(X1, c), dyn.drift(X2, c)
        f_bound = max(f_bound, float(np.linalg.norm(f1, axis=1).max()))
        if ok.any():
            f_lip = max(f_lip, float((np.linalg.norm(f1 - f2, axis=1)[ok] / gap[ok]).max()))
        for k, y in enumerate(dyn.claims.support):
            g1, g2 = dyn.jump(X1, c, y), dyn.jump(X2, c, y)
            g_bound[k] = max(g_bound[k], float(np.linalg.norm(g1, axis=1).max()))
            if ok.any():
                g_lip[k] = max(g_lip[k], float((np.linalg.norm(g1 - g2, axis=1)[ok] / gap[ok]).max()))
    return LipschitzProfile(f_bound, f_lip, g_bound, g_lip, dyn.claims, dyn.lam)


def post_jump_lipschitz(dyn: Dynamics, box, n_samples: int = 2000, seed: int = 0) -> float:
    """Sampled Lipschitz constant of x -> x + g(x, u, y) over controls and claims."""
    rng = np.random.default_rng(seed)
    if dyn.dim == 0:
        return 0.0
    X1 = _sample_states(dyn, box, n_samples, rng)
    X2 = _sample_states(dyn, box, n_samples, rng)
    gap = np.linalg.norm(X1 - X2, axis=1)
    ok = gap > 1e-9
    worst = 0.0
    for c in dyn.controls:
        for y in dyn.claims.support:
            d = np.linalg.norm(dyn.post_jump(X1, c, y) - dyn.post_jump(X2, c, y), axis=1)
            if ok.any():
                worst = max(worst, float((d[ok] / gap[ok]).max()))
    return worst


def check_discount_rate(
    params: SirParams,
    profile: LipschitzProfile,
    strict: bool = False,
    safety: float = 1.10,
) -> dict:
    """Check h against both sampled lower bounds (estimates inflated by 10%).

    In strict mode a violation raises ConfigError; otherwise it only warns.
    """
    need_exp = safety * profile.h_min_expectation
    need_sup = safety * profile.h_min_sup
    report = {
        "h": params.h,
        "h_min_expectation": need_exp,
        "h_min_sup": need_sup,
        "ok_expectation": params.h >= need_exp,
        "ok_sup": params.h >= need_sup,
    }
    if strict and not (report["ok_expectation"] and report["ok_sup"]):
        raise ConfigError(
            f"discount rate h={params.h} below the strict lower bound "
            f"max({need_exp:.4g}, {need_sup:.4g})"
        )
    if not report["ok_expectation"] or not report["ok_sup"]:
        warnings.warn(
            f"h={params.h} below estimated lower bound "
            f"max({need_exp:.4g}, {need_sup:.4g}); continuing (permissive mode)",
            stacklevel=2,
        )
    return report


# ---------------------------------------------------------------------------
# model configuration (JSON)
# ---------------------------------------------------------------------------


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return d[key]


def parse_model(doc: dict, where: str = "model") -> tuple[SirParams, ClaimLaw, Truncation]:
    """Validate and build (SirParams, ClaimLaw, Truncation) from a JSON document."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    n = _require(doc, "n", where)
    if not isinstance(n, int) or n < 1:
        raise ConfigError(f"{where}.n: expected integer >= 1, got {n!r}")
    beta = _require(doc, "beta", where)
    gamma = _require(doc, "gamma", where)
    for name, arr in (("beta", beta), ("gamma", gamma)):
        if not isinstance(arr, list) or len(arr) != n:
            raise ConfigError(f"{where}.{name}: expected a list of {n} numbers")
        for j, v in enumerate(arr):
            if not isinstance(v, (int, float)) or v < 0:
                raise ConfigError(f"{where}.{name}[{j}]: expected a number >= 0, got {v!r}")
    lam = _require(doc, "lambda", where)
    u_min = _require(doc, "u_min", where)
    prev = _require(doc, "prev_levels", where)
    if not isinstance(prev, list) or not prev:
        raise ConfigError(f"{where}.prev_levels: expected a nonempty list of vectors")
    h = _require(doc, "h", where)

    claims_doc = _require(doc, "claims", where)
    support = _require(claims_doc, "support", f"{where}.claims")
    weights = _require(claims_doc, "weights", f"{where}.claims")
    claims = ClaimLaw(np.asarray(support, dtype=float), np.asarray(weights, dtype=float))

    prem_doc = doc.get("premium", "net")
    if prem_doc == "net":
        premium = PremiumSpec("net")
    elif isinstance(prem_doc, dict) and "constant" in prem_doc:
        premium = PremiumSpec("constant", value=float(prem_doc["constant"]))
    elif isinstance(prem_doc, dict) and "net_offset" in prem_doc:
        premium = PremiumSpec("net_offset", value=float(prem_doc["net_offset"]))
    elif isinstance(prem_doc, dict) and "table" in prem_doc:
        tdoc = prem_doc["table"]
        table = PremiumTable(
            axes=tuple(np.asarray(ax, dtype=float) for ax in _require(tdoc, "axes", f"{where}.premium.table")),
            values=np.asarray(_require(tdoc, "values", f"{where}.premium.table"), dtype=float),
            scale_by_u=bool(tdoc.get("scale_by_u", True)),
        )
        if len(table.axes) != 2 * n:
            raise ConfigError(f"{where}.premium.table: needs 2n={2*n} axes (premium may not depend on x)")
        premium = PremiumSpec("table", table=table)
    else:
        raise ConfigError(f'{where}.premium: expected "net" or an object with constant/net_offset/table')

    trunc_doc = doc.get("truncation", {})
    truncation = Truncation(
        x_lo=float(trunc_doc.get("x_lo", -5.0)),
        x_hi=float(trunc_doc.get("x_hi", 5.0)),
        margin=float(trunc_doc.get("margin", 1.0)),
    )

    params = SirParams(
        n=n,
        beta=np.asarray(beta, dtype=float),
        gamma=np.asarray(gamma, dtype=float),
        lam=float(lam),
        u_min=float(u_min),
        u_max=float(doc.get("u_max", 1.0)),
        prev_levels=tuple(tuple(p) for p in prev),
        h=float(h),
        premium=premium,
    )
    return params, claims, truncation


def load_model(path: str) -> tuple[SirParams, ClaimLaw, Truncation]:
    """Load a model JSON file; syntax errors are reported with line/column."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    return parse_model(doc, where=f"{path}#model")
