import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twinphoton.elements import (
    Arm,
    ElementKind,
    ElementOperator,
    apply_arm,
    compose,
    identity,
    kraus_pair,
    polaroid,
    quarter_wave_plate,
    waveplate,
)
from twinphoton.states import (
    BellKind,
    Handedness,
    PolarizationState,
    TwoPhotonState,
    bell_state,
    circular_state,
    linear_state,
    projection_probability,
    tensor,
)

angles = st.floats(min_value=-7, max_value=7, allow_nan=False)
R, L = Handedness.RIGHT, Handedness.LEFT


def test_polaroid_zero_keeps_x_component():
    s = PolarizationState((0.6, 0.8j))
    np.testing.assert_allclose(polaroid(0).apply(s), (0.6, 0))


@given(angles)
def test_polaroid_projector_and_malus(theta):
    p = polaroid(theta)
    assert p.kind is ElementKind.PROJECTOR
    np.testing.assert_allclose(p.m @ p.m, p.m, atol=1e-12)
    assert p.pass_probability(linear_state(0)) == pytest.approx(math.cos(theta) ** 2, abs=1e-12)


def test_polaroid_is_pass_probability_of_state():
    s = circular_state(R)
    for t in np.linspace(0, math.pi, 7):
        assert polaroid(t).pass_probability(s) == pytest.approx(projection_probability(s, t), abs=1e-15)


def test_qwp_turns_circular_into_diagonal_linear():
    q = quarter_wave_plate(0)
    out_r = PolarizationState(q.apply(circular_state(R)))
    out_l = PolarizationState(q.apply(circular_state(L)))
    assert out_r.equals_up_to_phase(linear_state(math.pi / 4))
    assert out_l.equals_up_to_phase(linear_state(-math.pi / 4))


@given(angles)
def test_qwp_relative_to_rotated_axis(axis):
    out = PolarizationState(quarter_wave_plate(axis).apply(circular_state(R)))
    assert out.equals_up_to_phase(linear_state(axis + math.pi / 4), tol=1e-12)


@given(angles, angles)
def test_waveplate_unitary(ret, axis):
    u = waveplate(ret, axis).m
    np.testing.assert_allclose(u.conj().T @ u, np.eye(2), atol=1e-12)


def test_half_wave_plate_reflects_linear():
    out = PolarizationState(waveplate(math.pi, 0.2).apply(linear_state(0.5)))
    assert out.equals_up_to_phase(linear_state(2 * 0.2 - 0.5))


def test_compose():
    assert np.allclose(compose([identity()]).m, np.eye(2))
    with pytest.raises(ValueError):
        compose([])
    det_r = compose([quarter_wave_plate(0), polaroid(math.pi / 4)])
    det_l = compose([quarter_wave_plate(0), polaroid(-math.pi / 4)])
    assert det_r.pass_probability(circular_state(R)) == pytest.approx(1.0, abs=1e-12)
    assert det_l.pass_probability(circular_state(R)) == pytest.approx(0.0, abs=1e-12)


def test_compose_order_last_leftmost():
    a, b = polaroid(0.3), waveplate(0.7, 0.1)
    np.testing.assert_allclose(compose([a, b]).m, b.m @ a.m)


@given(st.lists(st.tuples(angles, angles), min_size=1, max_size=5))
def test_composition_of_unitaries_stays_unitary(params):
    op = compose([waveplate(r, a) for r, a in params])
    assert op.kind is ElementKind.UNITARY
    np.testing.assert_allclose(op.m.conj().T @ op.m, np.eye(2), atol=1e-12)


def test_tag_validation():
    with pytest.raises(ValueError):
        ElementOperator(np.array([[1, 1], [0, 1]]), ElementKind.UNITARY)
    with pytest.raises(ValueError):
        ElementOperator(np.array([[1, 1], [0, 0]]), ElementKind.PROJECTOR)
    with pytest.raises(ValueError):
        ElementOperator(np.array([[math.nan, 0], [0, 1]]))


def test_apply_arm_collapse_phi_plus():
    a = 0.61
    res = apply_arm(bell_state(BellKind.PHI_PLUS), Arm.NU1, polaroid(a))
    assert res.weight == pytest.approx(0.5, abs=1e-12)
    assert res.state.equals_up_to_phase(tensor(linear_state(a), linear_state(a)))


def test_apply_arm_identity():
    s = bell_state(BellKind.PSI_MINUS)
    res = apply_arm(s, Arm.NU2, identity())
    assert res.weight == pytest.approx(1.0)
    np.testing.assert_allclose(res.state.amps, s.amps)


def test_apply_arm_psi_plus_collapses_twin_perpendicular():
    res = apply_arm(bell_state(BellKind.PSI_PLUS), Arm.NU1, polaroid(0))
    assert res.weight == pytest.approx(0.5)
    assert res.state.equals_up_to_phase(tensor(linear_state(0), linear_state(math.pi / 2)))


def test_apply_arm_zero_weight_flag():
    s = TwoPhotonState(tensor(linear_state(0), linear_state(0)).amps)
    res = apply_arm(s, Arm.NU1, polaroid(math.pi / 2))
    assert res.is_zero and res.state is None and res.weight == 0.0


@given(angles, angles, angles, angles)
def test_local_commutation(r1, a1, r2, a2):
    s = bell_state(BellKind.PSI_MINUS)
    op1 = compose([waveplate(r1, a1), polaroid(a2)])
    op2 = waveplate(r2, a2)
    x = apply_arm(apply_arm(s, Arm.NU1, op1).state, Arm.NU2, op2)
    y = apply_arm(apply_arm(s, Arm.NU2, op2).state, Arm.NU1, op1)
    np.testing.assert_allclose(x.state.amps, y.state.amps, atol=1e-12)


@given(angles, angles)
def test_weight_in_unit_interval(a, b):
    s = tensor(linear_state(a), circular_state(R))
    w = apply_arm(s, Arm.NU1, polaroid(b)).weight
    assert 0 <= w <= 1
    assert w == pytest.approx(projection_probability(linear_state(a), b), abs=1e-12)


def test_kraus_pair_complete():
    op = compose([polaroid(0.2), waveplate(0.9, 1.1), polaroid(1.4)])
    k_pass, k_abs = kraus_pair(op)
    total = k_pass.conj().T @ k_pass + k_abs.conj().T @ k_abs
    np.testing.assert_allclose(total, np.eye(2), atol=1e-12)
