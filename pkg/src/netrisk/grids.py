"""Rectangular grids with feasibility masks and multilinear interpolation.

Both grid solvers share this machinery: a BoxGrid discretizes the truncated
state box, flags nodes outside the per-edge simplex as infeasible, and builds
sparse interpolation operators whose weights are renormalized over feasible
cell corners (mass never lands on excluded nodes).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .model import ConfigError, ContractViolation, SirParams, Truncation


class AssemblyError(RuntimeError):
    """Grid assembly failed (point escaped the box, empty feasible cell, ...)."""


@dataclass(frozen=True)
class BoxGrid:
    """Product grid over a box, with a feasibility mask over the full grid.

    ``axes`` may be empty (dimension-zero grid with a single node), which the
    pure-discount model uses.
    """

    axes: tuple[np.ndarray, ...]
    feasible: np.ndarray = None

    def __post_init__(self):
        axes = tuple(np.asarray(ax, dtype=float) for ax in self.axes)
        for ax in axes:
            if ax.ndim != 1 or ax.size < 2 or np.any(np.diff(ax) <= 0):
                raise ConfigError("grid axes must be strictly increasing with >= 2 nodes")
        object.__setattr__(self, "axes", axes)
        size = int(np.prod([ax.size for ax in axes])) if axes else 1
        feas = self.feasible
        if feas is None:
            feas = np.ones(size, dtype=bool)
        feas = np.asarray(feas, dtype=bool).reshape(size)
        if not feas.any():
            raise ConfigError("grid has no feasible nodes")
        feas.setflags(write=False)
        object.__setattr__(self, "feasible", feas)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape)) if self.axes else 1

    @property
    def n_feasible(self) -> int:
        return int(self.feasible.sum())

    def nodes(self) -> np.ndarray:
        """All grid nodes as an (size, dim) array, C-order flattened."""
        if not self.axes:
            return np.zeros((1, 0))
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def feasible_nodes(self) -> np.ndarray:
        return self.nodes()[self.feasible]

    def strides(self) -> np.ndarray:
        sh = self.shape
        return np.array([int(np.prod(sh[d + 1 :])) for d in range(len(sh))], dtype=np.int64)

    def clamp(self, pts: np.ndarray, margin: float | None) -> np.ndarray:
        """Clamp points into the box; beyond ``margin`` outside it, raise."""
        if not self.axes:
            return np.zeros((len(pts), 0))
        pts = np.asarray(pts, dtype=float)
        lo = np.array([ax[0] for ax in self.axes])
        hi = np.array([ax[-1] for ax in self.axes])
        if margin is not None:
            over = np.maximum(lo - pts, pts - hi).max(axis=1)
            bad = over > margin
            if bad.any():
                k = int(np.argmax(bad))
                raise AssemblyError(
                    f"point {pts[k]} leaves the grid box by {over[k]:.4g} "
                    f"(> margin {margin:.4g}); enlarge the truncation box"
                )
        return np.clip(pts, lo, hi)

    def interp_weights(self, pts: np.ndarray, margin: float | None = None):
        """Multilinear weights of each point, renormalized over feasible corners.

        Returns (idx, w): integer (M, 2^dim) flat node indices and matching
        nonnegative weights summing to 1 per row.
        """
        pts = np.asarray(pts, dtype=float)
        M = pts.shape[0]
        if not self.axes:
            return np.zeros((M, 1), dtype=np.int64), np.ones((M, 1))
        pts = self.clamp(pts, margin)
        d = self.dim
        lo_idx = np.empty((M, d), dtype=np.int64)
        frac = np.empty((M, d))
        for k, ax in enumerate(self.axes):
            j = np.searchsorted(ax, pts[:, k], side="right") - 1
            j = np.clip(j, 0, ax.size - 2)
            lo_idx[:, k] = j
            frac[:, k] = (pts[:, k] - ax[j]) / (ax[j + 1] - ax[j])
        frac = np.clip(frac, 0.0, 1.0)
        corners = np.array(np.meshgrid(*([[0, 1]] * d), indexing="ij")).reshape(d, -1).T  # (2^d, d)
        strides = self.strides()
        idx = np.zeros((M, corners.shape[0]), dtype=np.int64)
        w = np.ones((M, corners.shape[0]))
        for k in range(d):
            idx += (lo_idx[:, k, None] + corners[None, :, k]) * strides[k]
            w *= np.where(corners[None, :, k] == 1, frac[:, k, None], 1.0 - frac[:, k, None])
        w = np.where(self.feasible[idx], w, 0.0)
        tot = w.sum(axis=1)
        dead = tot <= 1e-13
        if dead.any():
            k = int(np.argmax(dead))
            raise AssemblyError(f"point {pts[k]} falls in a cell with no feasible corner")
        return idx, w / tot[:, None]

    def interp_matrix(self, pts: np.ndarray, margin: float | None = None) -> sp.csr_matrix:
        """Sparse (M, size) operator mapping node values to point values."""
        idx, w = self.interp_weights(pts, margin)
        M, K = idx.shape
        rows = np.repeat(np.arange(M), K)
        return sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(M, self.size))

    def interp(self, values: np.ndarray, pts: np.ndarray, margin: float | None = None) -> np.ndarray:
        idx, w = self.interp_weights(pts, margin)
        return np.sum(np.asarray(values)[idx] * w, axis=1)

    def max_spacing(self) -> float:
        return max(float(np.diff(ax).max()) for ax in self.axes) if self.axes else 0.0


def sir_feasible_mask(axes: Sequence[np.ndarray], n: int) -> np.ndarray:
    """Feasibility of [s_1..s_n, i_1..i_n, x] nodes: s_j + i_j <= 1 per edge."""
    axes = [np.asarray(ax, dtype=float) for ax in axes]
    if len(axes) != 2 * n + 1:
        raise ConfigError(f"expected {2 * n + 1} axes for n={n}")
    mesh = np.meshgrid(*axes, indexing="ij")
    ok = np.ones(mesh[0].shape, dtype=bool)
    for j in range(n):
        ok &= mesh[j] + mesh[n + j] <= 1.0 + 1e-12
    return ok.ravel()


def geometric_a_axis(n_nodes: int = 25, a_min: float = 1e-3) -> np.ndarray:
    """Ascending discount axis [0, a_min, ..., 1]: geometric spacing plus a sink at 0.

    Geometric spacing matches the exponential discount flow, so nodes are not
    wasted near a = 1.
    """
    if n_nodes < 3:
        raise ConfigError("a-axis needs at least 3 nodes")
    if not (0.0 < a_min < 1.0):
        raise ConfigError("a_min must lie in (0, 1)")
    geo = np.geomspace(a_min, 1.0, n_nodes - 1)
    return np.concatenate([[0.0], geo])


@dataclass(frozen=True)
class StateGrid:
    """Discretization carrier: discount axis, truncated state box, control grid."""

    a_axis: np.ndarray
    box: BoxGrid
    controls: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_axis, dtype=float)
        if a.ndim != 1 or a.size < 3 or np.any(np.diff(a) <= 0):
            raise ConfigError("a_axis must be strictly increasing with >= 3 nodes")
        if abs(a[-1] - 1.0) > 1e-12 or a[0] < 0:
            raise ConfigError("a_axis must start at >= 0 and end at a0 = 1")
        ctrls = np.asarray(self.controls, dtype=float)
        if ctrls.ndim != 2 or ctrls.shape[0] == 0:
            raise ConfigError("control grid must be a nonempty (n_controls, control_dim) array")
        a.setflags(write=False)
        object.__setattr__(self, "a_axis", a)
        object.__setattr__(self, "controls", ctrls)

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]


def sir_state_grid(
    params: SirParams,
    truncation: Truncation,
    si_nodes: int = 9,
    x_nodes: int = 9,
    a_nodes: int = 25,
    a_min: float = 1e-3,
    controls: np.ndarray | None = None,
    n_u: int = 3,
    x_pad: float = 0.0,
) -> StateGrid:
    """Grid over [0,1]^{2n} x capital window (plus margin and jump padding)."""
    from .model import control_grid

    n = params.n
    si = np.linspace(0.0, 1.0, si_nodes)
    x_axis = np.linspace(truncation.x_lo - truncation.margin - x_pad, truncation.x_hi + truncation.margin, x_nodes)
    axes = [si] * (2 * n) + [x_axis]
    box = BoxGrid(tuple(axes), sir_feasible_mask(axes, n))
    if controls is None:
        controls = control_grid(params, n_u=n_u)
    return StateGrid(geometric_a_axis(a_nodes, a_min), box, controls)
