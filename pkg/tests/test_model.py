import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from invfeas.model import (
    P,
    PAIRS,
    Q,
    V2,
    DqVector,
    InverterParams,
    SingularPair,
    check_pair,
    lemma_form,
    output_triple,
    pair_outputs,
    quadratic_map,
    rl_rate,
    steady_state_voltage,
    system_matrix,
)
from invfeas.oracles import pair_triple

from conftest import disk_current, inverter_params


def phasor_outputs(params, i):
    """Oracle: V = E + (R + j w L) I as complex numbers, S = 3/2 V conj(I)."""
    cur = complex(*i)
    v = params.e_mag + complex(params.r, params.omega * params.l) * cur
    s = 1.5 * v * cur.conjugate()
    return s.real, s.imag, abs(v) ** 2


def test_default_parameters(base_params):
    assert base_params.r == 0.8
    assert base_params.l == 1.5e-3
    assert base_params.e_mag == 120.0
    assert base_params.i_max == pytest.approx(6.667, abs=1e-3)
    assert base_params.omega == pytest.approx(2 * math.pi * 60)


@pytest.mark.parametrize("field", ["r", "l", "omega", "e_mag", "i_max"])
def test_params_reject_nonpositive(field):
    with pytest.raises(ValueError):
        InverterParams(**{field: 0.0})
    with pytest.raises(ValueError):
        InverterParams(**{field: float("nan")})


def test_zero_current_outputs(base_params):
    p, q, v2 = output_triple(base_params, (0.0, 0.0))
    assert (p, q) == (0.0, 0.0)
    assert v2 == pytest.approx(120.0**2)


@given(inverter_params(), st.data())
def test_steady_state_is_equilibrium(params, data):
    i = data.draw(disk_current(params.i_max))
    v = steady_state_voltage(params, i).to_array()
    rate = rl_rate(params, i, v)
    assert np.max(np.abs(rate)) <= 1e-9 * (params.e_mag / params.l)


@given(inverter_params(), st.data())
def test_quadratic_maps_match_phasor_circuit(params, data):
    i = data.draw(disk_current(params.i_max))
    want = phasor_outputs(params, i)
    got = [quadratic_map(params, q)(i) for q in (P, Q, V2)]
    direct = output_triple(params, i)
    for g, d, w in zip(got, direct, want):
        tol = 1e-9 * max(1.0, abs(w), params.e_mag**2)
        assert g == pytest.approx(w, abs=tol)
        assert d == pytest.approx(w, abs=tol)


def test_pair_outputs_batch_shape(base_params, rng):
    cur = rng.uniform(-3, 3, size=(4, 5, 2))
    out = pair_outputs(base_params, PAIRS["pv2"], cur)
    assert out.shape == (4, 5, 2)
    assert out[2, 3, 0] == pytest.approx(pair_triple(base_params, PAIRS["pv2"], cur[2, 3])[0])


def test_system_matrix_eigenvalues(base_params):
    ev = np.linalg.eigvals(system_matrix(base_params))
    assert np.allclose(ev.real, -base_params.r / base_params.l, rtol=1e-12)
    assert sorted(np.abs(ev.imag)) == pytest.approx([base_params.omega] * 2)


def test_check_pair_rejects_duplicates():
    with pytest.raises(ValueError):
        check_pair((P, P))


@given(inverter_params())
def test_lemma_form_image_matches_outputs(params):
    for pair in PAIRS.values():
        lf = lemma_form(params, *pair)
        x = np.array([0.3, -0.55])
        assert lf.image(x) == pytest.approx(pair_outputs(params, pair, x * params.i_max), rel=1e-10, abs=1e-9)
        # c solves [a_n; b_n] c = (alpha_n, beta_n)
        c = lf.c_vec.to_array()
        assert lf.basis @ c == pytest.approx([lf.alpha_n, lf.beta_n], rel=1e-10)


def test_singular_pair_detected(monkeypatch):
    import invfeas.model as m

    real = m.quadratic_map

    def parallel(params, q):
        qm = real(params, q)
        return m.QuadraticOutputMap(qm.alpha, DqVector(1.0, 2.0), qm.offset)

    monkeypatch.setattr(m, "quadratic_map", parallel)
    with pytest.raises(SingularPair):
        lemma_form(InverterParams(), P, Q)


def test_dq_vector_roundtrip():
    v = DqVector(3.0, -4.0)
    assert v.magnitude == 5.0
    assert tuple(v) == (3.0, -4.0)
    assert DqVector.from_array(v.to_array()) == v
