import json
import math

import numpy as np
import pytest

import netrisk as nr
from netrisk.model import ConfigError, ContractViolation, parse_model

from conftest import random_simplex_states


def ctrl(u, p):
    return nr.ControlPoint(u, tuple(p))


# ---------------------------------------------------------------------------
# parameter validation
# ---------------------------------------------------------------------------


def test_params_reject_bad_inputs():
    ok = dict(n=1, beta=np.array([1.0]), gamma=np.array([1.0]), lam=0.5,
              u_min=0.5, prev_levels=((1.0,),), h=1.0)
    nr.SirParams(**ok)
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "lam": 1.0})  # normalization requires lam < 1
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "lam": -0.1})
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "prev_levels": ((0.5,),)})
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "beta": np.array([-1.0])})
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "u_min": 0.0})
    with pytest.raises(ConfigError):
        nr.SirParams(**{**ok, "h": 0.0})


def test_claim_law_validation():
    with pytest.raises(ConfigError):
        nr.ClaimLaw(np.array([1.0, -0.5]), np.array([0.5, 0.5]))
    with pytest.raises(ConfigError):
        nr.ClaimLaw(np.array([1.0, 2.0]), np.array([0.6, 0.5]))
    law = nr.ClaimLaw(np.array([2.0]), np.array([1.0]))
    assert law.mean == 2.0 and law.moment4 == 16.0


def test_claim_quantization_uniform():
    law = nr.ClaimLaw.from_quantiles(lambda u: u, 32)
    assert law.support.size == 32
    assert abs(law.mean - 0.5) < 1e-12
    assert abs(law.moment(2) - 1.0 / 3.0) < 1e-3


def test_network_state_invariants():
    with pytest.raises(ContractViolation):
        nr.NetworkState(np.array([0.7]), np.array([0.4]), 0.0)
    with pytest.raises(ContractViolation):
        nr.NetworkState(np.array([-0.1]), np.array([0.4]), 0.0)
    st = nr.NetworkState(np.array([0.6]), np.array([0.4]), 1.0, a=0.5)
    assert st.vector().tolist() == [0.6, 0.4, 1.0]


# ---------------------------------------------------------------------------
# drift
# ---------------------------------------------------------------------------


def test_drift_disease_free_has_zero_epidemic_terms(params1, claims2):
    st = nr.NetworkState(np.array([0.8]), np.array([0.0]), 0.0)
    v = nr.sir_drift(st, ctrl(1.0, (1.0,)), params1, claims2)
    assert v[0] == 0.0 and v[1] == 0.0


def test_drift_hand_value(params1, claims2):
    st = nr.NetworkState(np.array([0.5]), np.array([0.2]), 0.0)
    v = nr.sir_drift(st, ctrl(1.0, (1.0,)), params1, claims2)
    assert abs(v[0] - (-0.2)) < 1e-15          # -beta*u*s*i = -2*0.5*0.2
    assert abs(v[1] - 0.0) < 1e-15              # (beta*u*s - gamma)*i = (1-1)*0.2


def test_drift_net_premium_vanishes_at_equal_infection(params2, claims2):
    st = nr.NetworkState(np.array([0.5, 0.4]), np.array([0.3, 0.3]), 0.0)
    for p in params2.prev_levels:
        v = nr.sir_drift(st, ctrl(0.8, p), params2, claims2)
        assert v[-1] == 0.0


def test_drift_dimension_mismatch(params2, claims2):
    st = nr.NetworkState(np.array([0.5]), np.array([0.2]), 0.0)
    with pytest.raises(ContractViolation):
        nr.sir_drift(st, ctrl(1.0, (1.0, 1.0)), params2, claims2)


def test_drift_conservation_per_edge(params2, claims2):
    # ds + di + gamma*i = 0 on every edge (the recovered pool absorbs gamma*i)
    X = random_simplex_states(2, 200, seed=5)
    for k in range(0, 200, 37):
        st = nr.NetworkState(X[k, :2], X[k, 2:4], X[k, 4])
        v = nr.sir_drift(st, ctrl(0.8, (1.0, 1.0)), params2, claims2)
        resid = v[:2] + v[2:4] + params2.gamma * st.i
        assert np.abs(resid).max() < 1e-14


# ---------------------------------------------------------------------------
# jumps
# ---------------------------------------------------------------------------


def test_jump_single_edge_is_identity(params1):
    st = nr.NetworkState(np.array([0.5]), np.array([0.3]), 1.0)
    for p in ((1.0,), (2.0,)):
        post = nr.sir_jump(st, ctrl(1.0, p), 2.0, params1)
        assert post.s[0] == st.s[0] and post.i[0] == st.i[0] and post.x == st.x


def test_jump_hand_value(params2):
    st = nr.NetworkState(np.array([0.5, 0.2]), np.array([0.2, 0.4]), 0.0)
    post = nr.sir_jump(st, ctrl(1.0, (1.0, 1.0)), 1.0, params2)
    assert np.allclose(post.i, [0.3, 0.4])
    assert np.allclose(post.s, [0.5, 0.2])
    assert abs(post.x - (-0.1)) < 1e-15


def test_jump_below_threshold_no_change(params2):
    st = nr.NetworkState(np.array([0.5, 0.2]), np.array([0.2, 0.4]), 0.7)
    post = nr.sir_jump(st, ctrl(1.0, (10.0, 10.0)), 1.0, params2)
    assert np.allclose(post.i, st.i) and np.allclose(post.s, st.s) and post.x == st.x


def test_jump_preserves_simplex_and_positivity(params2):
    X = random_simplex_states(2, 2000, seed=7)
    rng = np.random.default_rng(8)
    for k in range(0, 2000, 17):
        st = nr.NetworkState(X[k, :2], X[k, 2:4], X[k, 4])
        u = rng.uniform(params2.u_min, 1.0)
        p = params2.prev_levels[rng.integers(2)]
        y = rng.uniform(0.0, 3.0)
        post = nr.sir_jump(st, ctrl(u, p), y, params2)
        assert np.all(post.s >= 0) and np.all(post.i >= 0)
        assert np.all(post.s + post.i <= 1.0 + 1e-12)


def test_jump_monotone_protection(params2):
    # raising every protection level never increases |dx| or any post-jump i
    st = nr.NetworkState(np.array([0.5, 0.2]), np.array([0.1, 0.5]), 0.0)
    lo = nr.sir_jump(st, ctrl(1.0, (1.0, 1.0)), 1.0, params2)
    hi = nr.sir_jump(st, ctrl(1.0, (2.0, 2.0)), 1.0, params2)
    assert abs(hi.x) <= abs(lo.x) + 1e-15
    assert np.all(hi.i <= lo.i + 1e-15)


def test_jump_rejects_negative_claim(params1):
    st = nr.NetworkState(np.array([0.5]), np.array([0.3]), 0.0)
    with pytest.raises(ContractViolation):
        nr.sir_jump(st, ctrl(1.0, (1.0,)), -1.0, params1)


# ---------------------------------------------------------------------------
# premium
# ---------------------------------------------------------------------------


def test_net_premium_examples(params2, claims2):
    # equal infection levels: zero regardless of protections
    for p in params2.prev_levels:
        assert nr.net_premium(np.array([0.3, 0.3]), np.array([0.25, 0.25]),
                              ctrl(0.7, p), params2, claims2) == 0.0
    # hand value with E[C1] = 2
    params = nr.SirParams(n=2, beta=np.array([1.0, 1.0]), gamma=np.array([1.0, 1.0]),
                          lam=0.5, u_min=0.5, prev_levels=((1.0, 1.0),), h=1.0)
    law = nr.ClaimLaw(np.array([2.0]), np.array([1.0]))
    c0 = nr.net_premium(np.array([0.5, 0.2]), np.array([0.1, 0.5]), ctrl(1.0, (1.0, 1.0)), params, law)
    assert abs(c0 - 0.2) < 1e-15


def test_net_premium_single_edge_zero(params1, claims2):
    for p in ((1.0,), (2.0,)):
        assert nr.net_premium(np.array([0.4]), np.array([0.3]), ctrl(1.0, p), params1, claims2) == 0.0


def test_premium_matches_capital_jump_at_unit_claim(params2, claims2):
    # c0 = lam * E[C1] * |x-decrement of the jump at y = 1|
    X = random_simplex_states(2, 50, seed=11)
    for k in range(50):
        st = nr.NetworkState(X[k, :2], X[k, 2:4], 0.0)
        c = ctrl(0.8, params2.prev_levels[k % 2])
        c0 = nr.net_premium(st.s, st.i, c, params2, claims2)
        post = nr.sir_jump(st, c, 1.0, params2)
        assert abs(c0 - params2.lam * claims2.mean * abs(post.x - st.x)) < 1e-13


# ---------------------------------------------------------------------------
# truncation and dynamics wrappers
# ---------------------------------------------------------------------------


def test_taper_shape():
    tr = nr.Truncation(-1.0, 1.0, 0.5)
    x = np.array([-2.0, -1.5, -1.25, -1.0, 0.0, 1.0, 1.25, 1.5, 2.0])
    t = tr.taper(x)
    assert t[0] == 0.0 and t[-1] == 0.0
    assert t[3] == 1.0 and t[4] == 1.0 and t[5] == 1.0
    assert 0.0 < t[2] < 1.0


def test_sir_dynamics_delegates_to_coefficients(params2, claims2):
    dyn = nr.sir_dynamics(params2, claims2, truncation=None)
    st = nr.NetworkState(np.array([0.5, 0.4]), np.array([0.2, 0.3]), 0.5)
    c = nr.ControlPoint(0.8, (1.0, 1.0))
    f = dyn.drift(st.vector()[None, :], c.vector())
    assert np.allclose(f[0], nr.sir_drift(st, c, params2, claims2))
    g = dyn.jump(st.vector()[None, :], c.vector(), 1.5)
    post = nr.sir_jump(st, c, 1.5, params2)
    assert np.allclose(st.vector() + g[0], post.vector())


def test_capital_taper_zeroes_jump_outside_window(params2, claims2, trunc):
    dyn = nr.sir_dynamics(params2, claims2, trunc)
    st = np.array([[0.5, 0.2, 0.2, 0.4, trunc.x_lo - trunc.margin - 0.5]])
    g = dyn.jump(st, dyn.controls[0], 1.0)
    assert g[0, -1] == 0.0
    assert np.any(g[0, :-1] != 0.0)  # the (s, i) block still jumps


def test_generic_dynamics_shape_checking():
    claims = nr.ClaimLaw.degenerate(1.0)
    dyn = nr.frozen_dynamics(3, claims=claims)
    X = np.zeros((4, 3))
    assert np.allclose(dyn.drift(X, dyn.controls[0]), 0.0)
    with pytest.raises(ContractViolation):
        dyn.drift(np.zeros((4, 2)), dyn.controls[0])
    bad = nr.generic_dynamics(lambda X, C: np.zeros((X.shape[0], 1)), lambda X, C, y: np.zeros_like(X),
                              claims, 0.5, 1.0, dim=3)
    with pytest.raises(ContractViolation):
        bad.drift(X, bad.controls[0])


def test_pure_discount_dynamics_valid():
    dyn = nr.pure_discount_dynamics(h=2.0)
    assert dyn.dim == 0
    X = np.zeros((5, 0))
    assert dyn.drift(X, dyn.controls[0]).shape == (5, 0)


# ---------------------------------------------------------------------------
# Lipschitz profile
# ---------------------------------------------------------------------------


def test_profile_zero_model():
    claims = nr.ClaimLaw.degenerate(1.0)
    dyn = nr.frozen_dynamics(2, claims=claims)
    prof = nr.lipschitz_profile(dyn, [(-1, 1), (-1, 1)], n_samples=500, seed=0)
    assert prof.f_bound == 0.0 and prof.f_lip == 0.0
    assert np.all(prof.g_bound == 0.0)


def test_profile_zero_claims_zero_capital_jump(params2, trunc):
    claims = nr.ClaimLaw.degenerate(0.0)
    dyn = nr.sir_dynamics(params2, claims, trunc)
    X = random_simplex_states(2, 100, seed=3)
    g = dyn.jump(X, dyn.controls[0], 0.0)
    assert np.all(g[:, -1] == 0.0)


def test_profile_matches_dense_grid_oracle(params1, claims2, trunc):
    # independent oracle: sup |f| and difference quotients on a dense lattice
    dyn = nr.sir_dynamics(params1, claims2, trunc, n_u=3)
    prof = nr.lipschitz_profile(dyn, [(0, 1), (0, 1), (-3, 3)], n_samples=6000, seed=2)
    s = np.linspace(0, 1, 50)
    pts = np.array([(a, b) for a in s for b in s if a + b <= 1.0])
    X = np.column_stack([pts, np.zeros(len(pts))])
    worst_bound, worst_lip = 0.0, 0.0
    for c in dyn.controls:
        f = dyn.drift(X, c)
        worst_bound = max(worst_bound, float(np.linalg.norm(f, axis=1).max()))
        for shift in (1, 50):
            A, B = X[:-shift], X[shift:]
            gap = np.linalg.norm(A - B, axis=1)
            ok = gap > 1e-12
            d = np.linalg.norm(dyn.drift(A, c) - dyn.drift(B, c), axis=1)
            worst_lip = max(worst_lip, float((d[ok] / gap[ok]).max()))
    assert prof.f_bound >= 0.95 * worst_bound
    assert prof.f_lip >= 0.9 * worst_lip
    # sampled estimates stay within a sane factor of the oracle
    assert prof.f_lip <= 1.5 * worst_lip + 1e-9


def test_discount_rate_check(params1, claims2, trunc):
    dyn = nr.sir_dynamics(params1, claims2, trunc)
    prof = nr.lipschitz_profile(dyn, [(0, 1), (0, 1), (-3, 3)], n_samples=1000, seed=0)
    with pytest.raises(ConfigError):
        nr.check_discount_rate(params1, prof, strict=True)  # h = 1 is far below the bound
    with pytest.warns(UserWarning):
        rep = nr.check_discount_rate(params1, prof, strict=False)
    assert not rep["ok_expectation"]


def test_post_jump_lipschitz_single_edge(params1, claims2):
    dyn = nr.sir_dynamics(params1, claims2, truncation=None)
    lip = nr.post_jump_lipschitz(dyn, [(0, 1), (0, 1), (-2, 2)], seed=0)
    assert lip <= 1.0 + 1e-9  # n = 1 jumps are the identity


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------


def model_doc(**over):
    doc = {
        "n": 2,
        "beta": [1.8, 1.2],
        "gamma": [0.6, 0.9],
        "lambda": 0.5,
        "u_min": 0.6,
        "prev_levels": [[1.0, 1.0], [2.0, 2.0]],
        "h": 1.0,
        "claims": {"support": [0.5, 1.0], "weights": [0.5, 0.5]},
        "premium": "net",
        "truncation": {"x_lo": -2.0, "x_hi": 2.0, "margin": 0.8},
    }
    doc.update(over)
    return doc


def test_parse_model_roundtrip():
    params, claims, trunc = parse_model(model_doc())
    assert params.n == 2 and params.u_max == 1.0
    assert claims.mean == 0.75
    assert trunc.x_lo == -2.0


def test_parse_model_missing_field_named():
    doc = model_doc()
    del doc["beta"]
    with pytest.raises(ConfigError, match="beta"):
        parse_model(doc)


def test_parse_model_bad_entry_named():
    with pytest.raises(ConfigError, match=r"gamma\[1\]"):
        parse_model(model_doc(gamma=[0.5, -1.0]))


def test_parse_model_premium_modes():
    params, _, _ = parse_model(model_doc(premium={"constant": 0.3}))
    assert params.premium.kind == "constant" and params.premium.value == 0.3
    params, _, _ = parse_model(model_doc(premium={"net_offset": 0.5}))
    assert params.premium.kind == "net_offset"
    with pytest.raises(ConfigError, match="premium"):
        parse_model(model_doc(premium={"bogus": 1}))


def test_load_model_reports_json_line(tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text('{\n  "n": 1,\n  "beta": [1.0],,\n}')
    with pytest.raises(ConfigError, match=r"m\.json:3:"):
        nr.load_model(str(bad))


def test_load_model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(model_doc()))
    params, claims, trunc = nr.load_model(str(path))
    assert params.n == 2
