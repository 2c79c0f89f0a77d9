import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from invfeas import optimizer
from invfeas.model import P, PAIRS, Q, V2, output_triple, pair_maps, pair_outputs
from invfeas.optimizer import (
    GramMatrix,
    NotConverged,
    TrackingObjective,
    brute_force,
    build_moment_matrix,
    extract_current,
    leading_eigenvector_fit,
    objective_scale,
    rank1_residual,
    solve,
    solve_frank_wolfe,
    solve_sdp,
)
from invfeas.projections import GramProjector, is_psd3, project_gram, project_psd
from invfeas.region import support

from conftest import disk_current, inverter_params


def test_gamma_must_be_nonnegative():
    with pytest.raises(ValueError):
        TrackingObjective(1.0, 2.0, -0.5)


def test_value_and_grad_matches_finite_difference():
    obj = TrackingObjective(3.0, -2.0, 2.5)
    s = np.array([1.0, 4.0])
    f, g = obj.value_and_grad(s)
    h = 1e-6
    fd = [(obj.value(*(s + h * e)) - obj.value(*(s - h * e))) / (2 * h) for e in np.eye(2)]
    assert f == obj.value(*s)
    assert g == pytest.approx(fd, rel=1e-6)


@given(inverter_params(), st.data())
def test_lift_reproduces_outputs(params, data):
    i = data.draw(disk_current(params.i_max))
    w = GramMatrix.from_current(i)
    assert w.violations(params.i_max) == []
    for q, want in zip((P, Q, V2), output_triple(params, i)):
        m = build_moment_matrix(params, q)
        assert m.value(w.w) == pytest.approx(want, rel=1e-10, abs=1e-9 * params.e_mag**2)


def test_gram_violations_reported():
    w = np.diag([30.0, 30.0, 2.0])
    msgs = GramMatrix(w).violations(i_max=5.0)
    assert "W33 != 1" in msgs and "trace cap exceeded" in msgs
    assert "not PSD" in GramMatrix(np.diag([1.0, -1.0, 1.0])).violations(5.0)


def test_projection_is_psd_and_nearest(rng):
    for _ in range(20):
        a = rng.normal(size=(3, 3))
        a = a + a.T
        p = project_psd(a)
        assert is_psd3(p, tol=1e-12)
        vals = np.linalg.eigvalsh(a)
        assert np.linalg.norm(a - p) == pytest.approx(np.linalg.norm(np.minimum(vals, 0)), rel=1e-10)


def test_gram_projector_variational_inequality(rng):
    """<A - P(A), X - P(A)> <= 0 for feasible X: P is the Euclidean projection."""
    feas = []
    for _ in range(30):
        x = rng.uniform(-0.7, 0.7, 2)
        feas.append(GramMatrix.from_current(x).w)
    feas.append(np.diag([0.5, 0.5, 1.0]))
    for _ in range(10):
        a = rng.normal(size=(3, 3))
        a = a + a.T
        p = project_gram(a)
        assert abs(p[2, 2] - 1) < 1e-9
        assert p[0, 0] + p[1, 1] <= 1 + 1e-9
        assert np.linalg.eigvalsh(p)[0] >= -1e-9
        for x in feas:
            assert np.sum((a - p) * (x - p)) <= 1e-7 * max(1.0, np.linalg.norm(a))


def test_warm_started_projector_matches_cold(rng):
    proj = GramProjector()
    a = rng.normal(size=(3, 3))
    a = a + a.T
    for _ in range(5):
        a = a + 0.01 * (lambda b: b + b.T)(rng.normal(size=(3, 3)))
        assert proj(a) == pytest.approx(project_gram(a), abs=1e-9)


def test_extract_and_eigen_fit_on_rank_one():
    w = GramMatrix.from_current((2.0, -1.5))
    cur, res = extract_current(w)
    assert (cur.d, cur.q) == (2.0, -1.5)
    assert res == 0.0
    fit = leading_eigenvector_fit(w.w)
    assert fit.to_array() == pytest.approx([2.0, -1.5], abs=1e-12)
    assert rank1_residual(np.diag([1.0, 1.0, 1.0])) > 0.1


def test_lift_to_rank1_preserves_outputs(base_params):
    # a rank-2 feasible W: average of two lifted currents
    i1, i2 = np.array([3.0, 1.0]), np.array([-2.0, 4.0])
    w = 0.5 * (GramMatrix.from_current(i1).w + GramMatrix.from_current(i2).w)
    for pair in PAIRS.values():
        i = optimizer._lift_to_rank1(base_params, pair, w)
        want = [build_moment_matrix(base_params, q).value(w) for q in pair]
        assert np.hypot(*i) <= base_params.i_max * (1 + 1e-12)
        assert pair_outputs(base_params, pair, i) == pytest.approx(want, rel=1e-10)


def test_infeasible_pv2_example_three_way(base_params):
    obj = TrackingObjective(850.0, 14400.0)
    sdp = solve_sdp(base_params, PAIRS["pv2"], obj)
    fw = solve_frank_wolfe(base_params, PAIRS["pv2"], obj)
    bf = brute_force(base_params, PAIRS["pv2"], obj, grid_n=201)
    assert sdp.objective > 1000
    for other in (fw, bf):
        assert other.objective == pytest.approx(sdp.objective, rel=5e-3)
    # the optimum of an infeasible target is on the current limit
    assert sdp.i_star.magnitude == pytest.approx(base_params.i_max, rel=1e-6)
    assert sdp.rank1_residual <= 1e-6


def test_optimum_not_beaten_by_boundary_samples(base_params):
    obj = TrackingObjective(850.0, 14400.0)
    best = solve_sdp(base_params, PAIRS["pv2"], obj).objective
    a = np.linspace(0, 2 * np.pi, 2000, endpoint=False)
    cur = base_params.i_max * np.column_stack([np.cos(a), np.sin(a)])
    s = pair_outputs(base_params, PAIRS["pv2"], cur)
    assert np.min(obj.value(s[:, 0], s[:, 1])) >= best - 1e-9 * best


@pytest.mark.parametrize("method", ["sdp", "fw", "grid"])
def test_feasible_pq_example(base_params, method):
    obj = TrackingObjective(1100.0, 0.0)
    rep = solve(base_params, PAIRS["pq"], obj, method)
    assert rep.objective <= 1e-6 * objective_scale(base_params, PAIRS["pq"], 1.0)
    assert rep.s1 == pytest.approx(1100.0, rel=1e-6)


@pytest.mark.parametrize("method", ["sdp", "fw", "grid"])
def test_zero_current_target(base_params, method):
    obj = TrackingObjective(0.0, 120.0**2)
    rep = solve(base_params, PAIRS["pv2"], obj, method)
    assert rep.objective <= 1e-9


@settings(max_examples=25)
@given(inverter_params(), st.sampled_from(sorted(PAIRS)), st.data(), st.floats(0.1, 10.0))
def test_feasible_targets_reach_zero_gradient(params, name, data, gamma):
    pair = PAIRS[name]
    i = data.draw(disk_current(params.i_max))
    s = pair_outputs(params, pair, i)
    obj = TrackingObjective(float(s[0]), float(s[1]), gamma)
    rep = solve_sdp(params, pair, obj)
    _, g = obj.value_and_grad(np.array([rep.s1, rep.s2]))
    # gradient in current space: J^T grad_s f
    m1, m2 = pair_maps(params, pair)
    ii = rep.i_star.to_array()
    jac = np.array([2 * m1.alpha * ii + m1.a_vec.to_array(), 2 * m2.alpha * ii + m2.a_vec.to_array()])
    assert np.linalg.norm(jac.T @ g) <= 1e-6 * math.sqrt(objective_scale(params, pair, gamma)) * params.i_max
    assert rep.i_star.magnitude <= params.i_max * (1 + 1e-6)


def test_regularized_fallback_gives_rank_one(base_params):
    # interior target: the unpenalised lift has a segment of optimal W
    s = pair_outputs(base_params, PAIRS["pq"], np.array([2.0, 1.0]))
    rep = solve_sdp(base_params, PAIRS["pq"], TrackingObjective(*s))
    assert rep.rank1_residual <= 1e-6 or rep.degraded
    assert rep.objective <= 1e-12 * objective_scale(base_params, PAIRS["pq"], 1.0)
    assert rep.w_star.violations(base_params.i_max, tol=1e-6) == []


def test_sdp_iteration_cap_raises(base_params):
    with pytest.raises(NotConverged) as exc:
        solve_sdp(base_params, PAIRS["pv2"], TrackingObjective(850.0, 14400.0), max_iter=2)
    assert exc.value.report.converged is False


def test_frank_wolfe_iteration_cap_raises(base_params):
    with pytest.raises(NotConverged):
        solve_frank_wolfe(base_params, PAIRS["qv2"], TrackingObjective(-2000.0, 20000.0), max_iter=2, step="open-loop")


class LinearObjective:
    """f(s) = -theta . s, minimised at the support point."""

    def __init__(self, theta):
        self.theta = np.array([math.cos(theta), math.sin(theta)])

    def value_and_grad(self, s):
        return float(-self.theta @ s), -self.theta


def test_frank_wolfe_generic_objective(base_params):
    theta = 0.7
    rep = solve_frank_wolfe(base_params, PAIRS["pq"], LinearObjective(theta), max_iter=2000, gap_tol=1e-6, abs_gap_tol=1e-6)
    h = support(base_params, PAIRS["pq"], theta).value
    assert -rep.objective == pytest.approx(h, rel=1e-9)


def test_frank_wolfe_step_rules_agree(base_params):
    obj = TrackingObjective(850.0, 14400.0)
    ref = solve_frank_wolfe(base_params, PAIRS["pv2"], obj).objective
    rep = solve_frank_wolfe(base_params, PAIRS["pv2"], obj, step="line", max_iter=200_000, gap_tol=1e-6)
    assert rep.objective == pytest.approx(ref, rel=5e-3)
    with pytest.raises(ValueError):
        solve_frank_wolfe(base_params, PAIRS["pv2"], LinearObjective(0.0), step="line")


def test_brute_force_refinement_never_worse(base_params):
    obj = TrackingObjective(900.0, 15000.0, 0.5)
    coarse = brute_force(base_params, PAIRS["pv2"], obj, grid_n=101)
    fine = brute_force(base_params, PAIRS["pv2"], obj, grid_n=401)
    assert fine.objective <= coarse.objective * (1 + 1e-9) + 1e-12
    with pytest.raises(ValueError):
        brute_force(base_params, PAIRS["pv2"], obj, grid_n=50)


def test_objective_scale_positive(base_params):
    for pair in PAIRS.values():
        assert objective_scale(base_params, pair, 1.0) > 0
