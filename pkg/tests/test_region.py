import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invfeas import oracles
from invfeas.model import PAIRS, InverterParams, lemma_form, pair_outputs
from invfeas.region import (
    DomainError,
    _stable_positive_root,
    boundary,
    contains,
    convex_combination_preimage,
    midpoint_witness,
    midpoint_witness_batch,
    root_bracket_residual,
    support,
    support_batch,
)

from conftest import disk_current, inverter_params

pairs = st.sampled_from(sorted(PAIRS))
unit_point = st.tuples(st.floats(0, 1), st.floats(0, 2 * math.pi)).map(
    lambda ra: np.array([math.sqrt(ra[0]) * math.cos(ra[1]), math.sqrt(ra[0]) * math.sin(ra[1])])
)


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_support_matches_exhaustive_grid(base_params, name):
    pair = PAIRS[name]
    thetas = np.linspace(0, 2 * np.pi, 48, endpoint=False)
    closed, _ = support_batch(base_params, pair, thetas)
    grid = oracles.grid_support(base_params, pair, thetas, n_r=401, n_a=401)
    scale = np.max(np.abs(grid))
    # the grid can only under-estimate a maximum
    assert np.all(closed >= grid - 1e-12 * scale)
    assert np.max(closed - grid) <= 1e-4 * scale


@given(inverter_params(), pairs, st.floats(0, 2 * math.pi))
def test_support_maximizer_attains_value(params, name, theta):
    pair = PAIRS[name]
    res = support(params, pair, theta)
    i = res.maximizer_current.to_array()
    assert np.hypot(*i) <= params.i_max * (1 + 1e-12)
    s = pair_outputs(params, pair, i)
    assert math.cos(theta) * s[0] + math.sin(theta) * s[1] == pytest.approx(res.value, rel=1e-12, abs=1e-9)


@given(inverter_params(), pairs, st.floats(0, 2 * math.pi), st.data())
def test_support_bounds_random_currents(params, name, theta, data):
    pair = PAIRS[name]
    h = support(params, pair, theta).value
    i = data.draw(disk_current(params.i_max))
    s = pair_outputs(params, pair, i)
    assert math.cos(theta) * s[0] + math.sin(theta) * s[1] <= h + 1e-9 * max(1.0, abs(h))


def test_support_batch_matches_scalar(base_params):
    thetas = np.linspace(0, 2 * np.pi, 37)
    for pair in PAIRS.values():
        vals, cur = support_batch(base_params, pair, thetas)
        for k, th in enumerate(thetas):
            res = support(base_params, pair, th)
            assert vals[k] == pytest.approx(res.value, rel=1e-13, abs=1e-10)
            assert cur[k] == pytest.approx(res.maximizer_current.to_array(), abs=1e-12)


def test_support_accepts_vector_direction(base_params):
    a = support(base_params, PAIRS["pq"], 0.3)
    b = support(base_params, PAIRS["pq"], np.array([math.cos(0.3), math.sin(0.3)]) * 7.0)
    assert b.maximizer_current.to_array() == pytest.approx(a.maximizer_current.to_array())


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_boundary_is_convex_counterclockwise(base_params, name):
    poly = boundary(base_params, PAIRS[name], 360)
    assert 4 <= len(poly) <= 360
    assert poly.is_convex()
    x, y = poly.s1, poly.s2
    area = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area > 0


def test_boundary_row_count_and_minimum(base_params):
    assert len(boundary(base_params, PAIRS["pq"], 360)) == 360
    with pytest.raises(ValueError):
        boundary(base_params, PAIRS["pq"], 3)


def test_figure_examples(base_params):
    assert not contains(base_params, PAIRS["pv2"], (850.0, 14400.0))
    assert contains(base_params, PAIRS["pq"], (1100.0, 0.0))


@pytest.mark.parametrize("name", sorted(PAIRS))
def test_contains_every_image_point(base_params, rng, name):
    pair = PAIRS[name]
    r = base_params.i_max * np.sqrt(rng.uniform(0, 1, 50))
    a = rng.uniform(0, 2 * np.pi, 50)
    pts = pair_outputs(base_params, pair, np.column_stack([r * np.cos(a), r * np.sin(a)]))
    for pt in pts:
        assert contains(base_params, pair, pt, tol=1e-6)


def test_contains_rejects_nonpositive_tol(base_params):
    with pytest.raises(ValueError):
        contains(base_params, PAIRS["pq"], (0.0, 0.0), tol=0.0)


@given(st.floats(0.0, 10.0), st.floats(-10.0, 10.0), st.floats(-10.0, 0.0))
def test_stable_root_solves_quadratic(a, b, c):
    if a < 1e-14 and b <= 1e-6:
        return
    mu = _stable_positive_root(a, b, c)
    assert mu >= 0
    resid = a * mu * mu + b * mu + c
    assert abs(resid) <= 1e-9 * max(1.0, abs(c), a * mu * mu, abs(b * mu))


@given(inverter_params(), pairs, unit_point, unit_point, st.floats(0, 1))
def test_preimage_identity(params, name, x1, x2, lam):
    lf = lemma_form(params, *PAIRS[name])
    y = convex_combination_preimage(lf, x1, x2, lam).to_array()
    c = lf.c_vec.to_array()
    z = lam * x1 + (1 - lam) * x2
    zeta = lam * (x1 @ x1) + (1 - lam) * (x2 @ x2)
    assert np.hypot(*y) <= 1 + 1e-9
    assert (y @ y) * c + y == pytest.approx(zeta * c + z, abs=1e-9 * max(1.0, np.linalg.norm(c)))
    assert root_bracket_residual(lf, x1, x2, lam) <= 1e-9


@given(inverter_params(), pairs, st.data(), st.floats(0, 1))
def test_midpoint_witness_hits_combination(params, name, data, lam):
    pair = PAIRS[name]
    i1 = data.draw(disk_current(params.i_max))
    i2 = data.draw(disk_current(params.i_max))
    y = midpoint_witness(params, pair, i1, i2, lam).to_array()
    want = lam * pair_outputs(params, pair, i1) + (1 - lam) * pair_outputs(params, pair, i2)
    assert np.hypot(*y) <= params.i_max * (1 + 1e-9)
    assert pair_outputs(params, pair, y) == pytest.approx(want, rel=1e-8, abs=1e-8 * max(1.0, np.max(np.abs(want))))


def test_witness_endpoints_exact(base_params):
    lf = lemma_form(base_params, *PAIRS["pq"])
    x1, x2 = np.array([0.2, 0.1]), np.array([-0.5, 0.4])
    assert convex_combination_preimage(lf, x1, x2, 1.0).to_array() == pytest.approx(x1, abs=0)
    assert convex_combination_preimage(lf, x1, x2, 0.0).to_array() == pytest.approx(x2, abs=0)


@pytest.mark.parametrize("x1,lam", [((1.2, 0.0), 0.5), ((0.1, 0.0), -0.1), ((0.1, 0.0), 1.5)])
def test_witness_domain_errors(base_params, x1, lam):
    lf = lemma_form(base_params, *PAIRS["qv2"])
    with pytest.raises(DomainError):
        convex_combination_preimage(lf, x1, (0.0, 0.0), lam)


def test_batch_witness_matches_scalar(rng):
    params = InverterParams(r=2.0, l=20e-3, e_mag=230.0, i_max=12.0)
    for pair in PAIRS.values():
        r = params.i_max * np.sqrt(rng.uniform(0, 1, (2, 200)))
        a = rng.uniform(0, 2 * np.pi, (2, 200))
        i1 = np.column_stack([r[0] * np.cos(a[0]), r[0] * np.sin(a[0])])
        i2 = np.column_stack([r[1] * np.cos(a[1]), r[1] * np.sin(a[1])])
        lam = rng.uniform(0, 1, 200)
        lam[:3] = [0.0, 1.0, 0.5]
        batch = midpoint_witness_batch(params, pair, i1, i2, lam)
        single = np.array([midpoint_witness(params, pair, i1[k], i2[k], lam[k]).to_array() for k in range(200)])
        assert batch == pytest.approx(single, abs=1e-12 * params.i_max)
