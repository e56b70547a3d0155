import math

import numpy as np
import pytest

import netrisk as nr
from netrisk.model import ConfigError, ContractViolation
from netrisk.simulate import (
    ConstantControl,
    FeedbackTable,
    IntegrationError,
    PiecewiseConstant,
    affine_fn,
    bump_fn,
    constant_fn,
    draw_events,
    estimate_occupation,
    generator_residuals,
    hat_fn,
    moment_inequality_harness,
    premium_drift_check,
    simulate_batch,
    simulate_path,
)


def rk4_reference(dyn, x0, ctrl, horizon, dt):
    """Independent fixed-step integrator for the no-jump ODE path."""
    X = x0[None, :].copy()
    t = 0.0
    while t < horizon - 1e-12:
        h = min(dt, horizon - t)
        k1 = dyn.drift(X, ctrl)
        k2 = dyn.drift(X + 0.5 * h * k1, ctrl)
        k3 = dyn.drift(X + 0.5 * h * k2, ctrl)
        k4 = dyn.drift(X + h * k3, ctrl)
        X = X + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return X[0]


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


def test_zero_rate_gives_deterministic_ode_path(params1, claims2, trunc):
    params = nr.SirParams(n=1, beta=params1.beta, gamma=params1.gamma, lam=0.0,
                          u_min=0.5, prev_levels=((1.0,),), h=1.0)
    dyn = nr.sir_dynamics(params, claims2, trunc)
    x0 = nr.NetworkState(np.array([0.7]), np.array([0.2]), 0.0)
    ctrl = np.array([0.8, 1.0])
    traj = simulate_path(dyn, x0, ctrl, horizon=2.0, dt=0.01, seed=5)
    assert traj.n_jumps == 0
    ref = rk4_reference(dyn, x0.vector(), ctrl, 2.0, 0.002)
    assert np.abs(traj.states[-1] - ref).max() < 1e-8


def test_single_edge_jumps_are_identity(dyn1, params1):
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.5)
    n_jumps = 0
    for seed in range(100):
        traj = simulate_path(dyn1, x0, dyn1.controls[0], horizon=3.0, dt=0.02, seed=seed)
        if traj.n_jumps:
            n_jumps += traj.n_jumps
            at = np.nonzero(traj.jump_flag)[0]
            assert np.abs(traj.states[at] - traj.pre_jump_states).max() == 0.0
    assert n_jumps > 50  # jumps do occur, they are just degenerate


def test_frozen_dynamics_constant_path():
    dyn = nr.frozen_dynamics(3, h=1.0, lam=0.5)
    x0 = np.array([0.3, -0.7, 2.0])
    traj = simulate_path(dyn, x0, dyn.controls[0], horizon=4.0, dt=0.05, seed=9)
    assert np.abs(traj.states - x0).max() == 0.0


def test_trajectory_validity_and_discount(dyn2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    traj = simulate_path(dyn2, x0, dyn2.controls[0], horizon=5.0, dt=0.01, seed=2)
    assert np.all(np.diff(traj.times) > 0)
    s, i = traj.states[:, :2], traj.states[:, 2:4]
    assert s.min() >= 0 and i.min() >= 0 and (s + i).max() <= 1 + 1e-12
    # a is integrated in closed form
    assert np.abs(traj.a_values - np.exp(-traj.times)).max() == 0.0


def test_simulate_determinism_and_csv(dyn2, tmp_path):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    t1 = simulate_path(dyn2, x0, dyn2.controls[1], horizon=2.0, dt=0.01, seed=11)
    t2 = simulate_path(dyn2, x0, dyn2.controls[1], horizon=2.0, dt=0.01, seed=11)
    assert np.array_equal(t1.times, t2.times) and np.array_equal(t1.states, t2.states)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    t1.to_csv(str(p1), n_edges=2)
    t2.to_csv(str(p2), n_edges=2)
    assert p1.read_bytes() == p2.read_bytes()


def test_integration_failure_is_reported():
    claims = nr.ClaimLaw.degenerate(1.0)
    dyn = nr.generic_dynamics(
        lambda X, C: np.ones_like(X), lambda X, C, y: np.zeros_like(X),
        claims, 0.0, 1.0, dim=1,
        invariant_violation=lambda X: np.maximum(X[:, 0] - 0.5, 0.0),
    )
    with pytest.raises(IntegrationError, match="t="):
        simulate_path(dyn, np.array([0.0]), dyn.controls[0], horizon=2.0, dt=0.1, seed=0)


def test_bad_horizon_rejected(dyn1):
    with pytest.raises(ConfigError):
        simulate_path(dyn1, np.array([0.5, 0.2, 0.0]), dyn1.controls[0], horizon=-1.0)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def test_piecewise_policy_switches(params1, claims2, trunc):
    params = nr.SirParams(n=1, beta=params1.beta, gamma=params1.gamma, lam=0.0,
                          u_min=0.5, prev_levels=((1.0,),), h=1.0)
    dyn = nr.sir_dynamics(params, claims2, trunc)
    x0 = np.array([0.7, 0.2, 0.0])
    pol = PiecewiseConstant(np.array([0.0, 1.0]), np.array([[1.0, 1.0], [0.5, 1.0]]))
    traj = simulate_path(dyn, x0, pol, horizon=2.0, dt=0.01, seed=0)
    mid = rk4_reference(dyn, x0, np.array([1.0, 1.0]), 1.0, 0.002)
    ref = rk4_reference(dyn, mid, np.array([0.5, 1.0]), 1.0, 0.002)
    assert np.abs(traj.states[-1] - ref).max() < 1e-7


def test_feedback_table_constant_matches(dyn1):
    from netrisk.grids import BoxGrid, sir_feasible_mask
    axes = (np.linspace(0, 1, 5), np.linspace(0, 1, 5), np.linspace(-3, 3, 5))
    box = BoxGrid(axes, sir_feasible_mask(axes, 1))
    table = np.tile(dyn1.controls[0], (box.size, 1))
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    ta = simulate_path(dyn1, x0, FeedbackTable(box, table), horizon=2.0, dt=0.01, seed=4)
    tb = simulate_path(dyn1, x0, ConstantControl(dyn1.controls[0]), horizon=2.0, dt=0.01, seed=4)
    assert np.abs(ta.states - tb.states).max() == 0.0


# ---------------------------------------------------------------------------
# occupation measures
# ---------------------------------------------------------------------------


def test_occupation_frozen_dirac_and_a_marginal():
    dyn = nr.frozen_dynamics(2, h=1.0, lam=0.5)
    x0 = np.array([0.4, -0.2])
    occ = estimate_occupation(dyn, x0, dyn.controls[0], 400, horizon=16.0, dt=0.02, seed=1)
    assert np.abs(occ.states - x0).max() == 0.0
    # int a dgamma = a0 / (1 + h), exact integral of e^{-t} e^{-ht}
    assert abs(occ.integrate(occ.a) - 0.5) < 1e-3
    assert abs(occ.weights.sum() - 1.0) < 1e-9


def test_occupation_weights_track_discounted_time(dyn1):
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    occ = estimate_occupation(dyn1, x0, dyn1.controls[0], 50, horizon=14.0, dt=0.02, seed=3)
    t = -np.log(occ.a) / dyn1.h
    for tau in (0.5, 1.0, 3.0):
        got = occ.weights[t >= tau].sum()
        want = (math.exp(-tau) - math.exp(-14.0)) / (1.0 - math.exp(-14.0))
        assert abs(got - want) < 2e-3


def test_occupation_determinism(dyn1):
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    a = estimate_occupation(dyn1, x0, dyn1.controls[0], 64, horizon=14.0, dt=0.02, seed=7)
    b = estimate_occupation(dyn1, x0, dyn1.controls[0], 64, horizon=14.0, dt=0.02, seed=7)
    assert np.array_equal(a.states, b.states) and np.array_equal(a.weights, b.weights)


def test_occupation_fourth_moment_within_theta_bound(dyn2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    occ = estimate_occupation(dyn2, x0, dyn2.controls[0], 200, horizon=14.0, dt=0.02, seed=5)
    prof = nr.lipschitz_profile(dyn2, [(0, 1)] * 4 + [(-3.6, 3.0)], n_samples=800, seed=0)
    assert occ.fourth_moment() <= prof.theta_moment_bound(float(np.linalg.norm(x0.vector())))


def test_occupation_warns_on_short_horizon(dyn1):
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    with pytest.warns(UserWarning, match="unsampled"):
        estimate_occupation(dyn1, x0, dyn1.controls[0], 4, horizon=3.0, dt=0.02, seed=0)


# ---------------------------------------------------------------------------
# generator identity
# ---------------------------------------------------------------------------


def test_generator_constant_in_kernel(dyn1):
    x0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    occ = estimate_occupation(dyn1, x0, dyn1.controls[0], 32, horizon=14.0, dt=0.05, seed=2)
    res = generator_residuals(occ, dyn1, x0, dyn1.h, [constant_fn(3.0)])
    assert abs(res[0]["residual"]) < 1e-12


def test_generator_pure_discount_affine():
    dyn = nr.pure_discount_dynamics(h=1.0, lam=0.0)
    occ = estimate_occupation(dyn, np.zeros(0), dyn.controls[0], 100, horizon=16.0, dt=0.02, seed=0)
    res = generator_residuals(occ, dyn, np.zeros(0), 1.0, [affine_fn(np.array([1.0]))])
    tol = 3.0 * res[0]["se"] + 1e-4
    assert abs(res[0]["residual"]) <= tol


def test_generator_residuals_within_3se(dyn2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    occ = estimate_occupation(dyn2, x0, dyn2.controls[0], 2000, horizon=14.0, dt=0.01, seed=6)
    rng = np.random.default_rng(3)
    pick = rng.integers(0, occ.n_atoms, 4)
    fns = []
    for k in pick[:3]:
        c = np.concatenate([[occ.a[k]], occ.states[k]])
        fns.append(hat_fn([np.array([v - 0.4, v, v + 0.4]) for v in c], [1] * 6))
    fns.append(bump_fn(np.concatenate([[occ.a[pick[3]]], occ.states[pick[3]]]), radius=0.7))
    res = generator_residuals(occ, dyn2, x0, dyn2.h, fns)
    for r in res:
        assert abs(r["residual"]) <= 3.0 * r["se"] + 1e-9, r


def test_generator_empty_measure_rejected(dyn1):
    with pytest.raises(ContractViolation):
        generator_residuals(
            nr.OccupationMeasure(np.ones(1), np.zeros((1, 3)), np.zeros((1, 2)),
                                 np.ones(1), None, {}),
            dyn1, np.zeros(3), 1.0, [],
        )


# ---------------------------------------------------------------------------
# moment-bound harness
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def profile2(dyn2):
    return nr.lipschitz_profile(dyn2, [(0, 1)] * 4 + [(-3.6, 3.0)], n_samples=2000, seed=1)


def test_harness_identical_starts_trivial(dyn2, profile2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    rep = moment_inequality_harness(dyn2, profile2, 1, x0=x0, x0_b=x0,
                                    t_grid=(0.5, 1.0), n_paths=500, seed=0)
    assert rep.passed
    # common random numbers make the coupled gap exactly zero
    assert all(r["estimate"] == 0.0 for r in rep.rows)


def test_harness_zero_perturbation_trivial(dyn2, profile2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    rep = moment_inequality_harness(dyn2, profile2, 2, x0=x0, perturbation=np.zeros(5),
                                    t_grid=(0.5, 1.0), n_paths=500, seed=0)
    assert rep.passed and all(r["estimate"] == 0.0 for r in rep.rows)


def test_harness_gap_bound(dyn2, profile2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    x0b = nr.NetworkState(np.array([0.65, 0.55]), np.array([0.25, 0.35]), 0.1)
    rep = moment_inequality_harness(dyn2, profile2, 1, x0=x0, x0_b=x0b,
                                    t_grid=(0.5, 1.0, 2.0), n_paths=3000, seed=1)
    assert rep.passed, rep.rows
    assert rep.worst_margin >= 0.0


def test_harness_shaken_and_moment4(dyn2, profile2):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    e = np.zeros(5); e[-1] = 0.4
    rep2 = moment_inequality_harness(dyn2, profile2, 2, x0=x0, perturbation=e,
                                     t_grid=(0.5, 1.0), n_paths=3000, seed=2)
    assert rep2.passed, rep2.rows
    rep3 = moment_inequality_harness(dyn2, profile2, 3, x0=x0,
                                     t_grid=(0.5, 1.0, 2.0), n_paths=3000, seed=3)
    assert rep3.passed, rep3.rows


def test_harness_lq_needs_one_lipschitz_jumps(dyn2, profile2, dyn1, params1, claims2, trunc):
    x0 = nr.NetworkState(np.array([0.7, 0.6]), np.array([0.2, 0.3]), 0.0)
    box2 = [(0, 1)] * 4 + [(-3.6, 3.0)]
    with pytest.raises(ContractViolation, match="1-Lipschitz"):
        moment_inequality_harness(dyn2, profile2, 4, x0=x0, x0_b=x0, n_paths=100,
                                  box=box2, seed=0)
    # single-edge jumps are identities, so the L^q bounds apply
    prof1 = nr.lipschitz_profile(dyn1, [(0, 1), (0, 1), (-3.6, 3.0)], n_samples=1500, seed=0)
    y0 = nr.NetworkState(np.array([0.6]), np.array([0.3]), 0.0)
    y0b = nr.NetworkState(np.array([0.55]), np.array([0.35]), 0.1)
    e = np.array([0.0, 0.0, 0.4])
    rep = moment_inequality_harness(dyn1, prof1, 4, x0=y0, x0_b=y0b, perturbation=e,
                                    t_grid=(0.5, 1.0), n_paths=2000, q=4.0,
                                    box=[(0, 1), (0, 1), (-3.6, 3.0)], seed=4)
    assert rep.passed, rep.rows


# ---------------------------------------------------------------------------
# net-premium drift check
# ---------------------------------------------------------------------------


def test_premium_drift_net_consistent_with_zero(params2, claims2):
    x0 = nr.NetworkState(np.array([0.6, 0.5]), np.array([0.1, 0.4]), 0.0)
    ctrl = nr.ControlPoint(1.0, (1.0, 1.0))
    rows = premium_drift_check(params2, claims2, x0, ctrl, t_values=(0.2, 0.1),
                               n_paths=20000, seed=0)
    for r in rows:
        assert r["ratio"] <= 3.0 * r["se_ratio"], r


def test_premium_drift_detects_offset(params2, claims2):
    bumped = nr.SirParams(
        n=2, beta=params2.beta, gamma=params2.gamma, lam=params2.lam,
        u_min=params2.u_min, prev_levels=params2.prev_levels, h=params2.h,
        premium=nr.PremiumSpec("net_offset", value=0.5),
    )
    x0 = nr.NetworkState(np.array([0.6, 0.5]), np.array([0.1, 0.4]), 0.0)
    ctrl = nr.ControlPoint(1.0, (1.0, 1.0))
    rows = premium_drift_check(bumped, claims2, x0, ctrl, t_values=(0.2, 0.1),
                               n_paths=20000, seed=0)
    for r in rows:
        assert abs(r["ratio"] - 0.5) <= 3.0 * r["se_ratio"] + 1e-3, r


def test_premium_drift_equal_infection_trivial(params2, claims2):
    x0 = nr.NetworkState(np.array([0.5, 0.5]), np.array([0.2, 0.2]), 0.0)
    ctrl = nr.ControlPoint(1.0, (1.0, 1.0))
    rows = premium_drift_check(params2, claims2, x0, ctrl, t_values=(0.05,),
                               n_paths=5000, seed=1)
    assert rows[0]["ratio"] <= 3.0 * rows[0]["se_ratio"] + 2e-3


# ---------------------------------------------------------------------------
# event streams
# ---------------------------------------------------------------------------


def test_draw_events_reproducible_and_bounded(claims2):
    jt1, jy1 = draw_events(0.5, 10.0, claims2, 100, seed=3)
    jt2, jy2 = draw_events(0.5, 10.0, claims2, 100, seed=3)
    assert np.array_equal(jt1, jt2) and np.array_equal(jy1, jy2)
    finite = jt1[np.isfinite(jt1)]
    assert finite.size > 0 and finite.max() <= 10.0
    assert set(np.unique(jy1)) <= {0.5, 1.0}


def test_zero_rate_no_events(claims2):
    jt, jy = draw_events(0.0, 10.0, claims2, 5, seed=0)
    assert not np.isfinite(jt).any()
