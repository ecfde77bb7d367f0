import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpicture.errors import InvalidParameter
from mfpicture.freespace import (
    FreeFlow,
    FreeSolutionPoint,
    MTangentVector,
    free_flow_forward,
    free_flow_inverse,
    rechart,
    same_point,
    tangent_free_flow,
    tau_map,
)
from mfpicture.numeric import jacobian_fd
from mfpicture.systems import PhasePoint, SystemSpec, load_system


def rotation(q0, p0, t, w=1.0):
    """Harmonic oscillator solution, independent of the library."""
    return q0 * math.cos(w * t) + p0 * math.sin(w * t) / w, -w * q0 * math.sin(w * t) + p0 * math.cos(w * t)


def mf(q, p, t_ref=0.0):
    return FreeSolutionPoint(PhasePoint(np.atleast_1d(q), np.atleast_1d(p)), t_ref)


coord = st.floats(-2, 2, allow_nan=False)


@pytest.fixture(scope="module")
def hnum(harmonic):
    return FreeFlow(harmonic, "numeric")


def test_forward_examples(hflow, hnum, pflow):
    x = free_flow_forward(hflow, mf(1, 0), math.pi / 2)
    np.testing.assert_allclose(x.as_array(), [0, -1], atol=1e-9)
    np.testing.assert_allclose(free_flow_forward(hnum, mf(1, 0), math.pi / 2).as_array(), [0, -1], atol=1e-9)
    m = mf(0.3, -0.7, 2.5)
    assert free_flow_forward(hflow, m, 2.5) == m.coords
    np.testing.assert_array_equal(free_flow_forward(pflow, mf(0, 1), 3.0).as_array(), [3.0, 1.0])


def test_inverse_examples(hflow):
    m = free_flow_inverse(hflow, PhasePoint([0.0], [-1.0]), math.pi / 2, 0.0)
    assert m.t_ref == 0.0
    np.testing.assert_allclose(m.y, [1, 0], atol=1e-12)
    x = PhasePoint([0.2], [0.4])
    assert free_flow_inverse(hflow, x, 1.0, 1.0).coords == x


@pytest.mark.parametrize("mode", ["closed-form", "numeric"])
def test_forward_inverse_round_trip(harmonic, mode, rng):
    flow = FreeFlow(harmonic, mode)
    for _ in range(100 if mode == "closed-form" else 20):
        y = rng.uniform(-2, 2, 2)
        t = rng.uniform(-5, 5)
        m = FreeSolutionPoint.from_array(y, 0.0)
        back = flow.inverse(flow.forward(m, t), t, 0.0)
        assert np.max(np.abs(back.y - y)) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(coord, coord, st.floats(-10, 10))
def test_closed_form_is_the_rotation(q, p, t):
    flow = FreeFlow(load_system(SystemSpec("harmonic+quartic", {"omega": 1.7})))
    np.testing.assert_allclose(flow.forward(mf(q, p), t).as_array(), rotation(q, p, t, 1.7), atol=1e-12)


def test_general_quadratic_uses_matrix_exponential():
    # H0 = p^2/2 + q p / 2: not a diagonal oscillator; q(t) = q0 e^{t/2} + ..., checked numerically
    s = load_system(SystemSpec(n=1, free_terms=((0.5, (0, 2)), (0.5, (1, 1)), (0.25, (2, 0)))))
    closed, numeric_ = FreeFlow(s, "closed-form"), FreeFlow(s, "numeric")
    assert closed._omega is None
    for t in (-2.0, 0.7, 3.0):
        np.testing.assert_allclose(closed.forward(mf(0.4, -0.3), t).as_array(),
                                   numeric_.forward(mf(0.4, -0.3), t).as_array(), atol=1e-9)


def test_closed_form_requires_quadratic():
    s = load_system(SystemSpec(n=1, free_terms=((0.5, (0, 2)), (0.25, (4, 0)))))
    with pytest.raises(InvalidParameter):
        FreeFlow(s, "closed-form")
    assert FreeFlow(s).mode == "numeric"


def test_closed_and_numeric_agree(harmonic, hflow, hnum):
    m = mf(0.8, -0.4)
    times = np.linspace(-10, 10, 41)
    np.testing.assert_allclose(hnum.flow_samples(m, times), hflow.flow_samples(m, times), atol=1e-7)


def test_tau_map_examples(hflow, pflow):
    x = tau_map(hflow, mf(1, 0), 0.0)
    assert x.q[0] == 1.0 and x.qdot[0] == pytest.approx(0.0, abs=1e-12)
    x = tau_map(pflow, mf(0, 1), 2.0)
    assert x.q[0] == pytest.approx(2.0) and x.qdot[0] == pytest.approx(1.0)
    x = tau_map(hflow, mf(1, 0), math.pi)
    assert x.q[0] == pytest.approx(-1.0, abs=1e-12) and x.qdot[0] == pytest.approx(0.0, abs=1e-12)


def test_tau_map_matches_lagrangian_equation(hflow, harmonic):
    from mfpicture.systems import euler_lagrange_residual

    t = np.arange(0, 3, 1e-3)
    q = np.array([tau_map(hflow, mf(0.5, 0.9), s).q[0] for s in t])
    assert np.max(np.abs(euler_lagrange_residual(harmonic.free_lagrangian, t, q))) <= 1e-5


def test_tangent_examples(hflow, hnum, quartic):
    u = MTangentVector([1.0], [0.0])
    for flow in (hflow, hnum):
        np.testing.assert_allclose(tangent_free_flow(flow, mf(1, 0), u, math.pi / 2).as_array(), [0, -1], atol=1e-9)
    m = mf(0.3, 0.1, 1.0)
    assert tangent_free_flow(hflow, m, u, 1.0) == u


@pytest.mark.parametrize("mode", ["closed-form", "numeric"])
def test_tangent_matches_fd_jacobian(harmonic, mode, rng):
    flow = FreeFlow(harmonic, mode)
    eps = 1e-5
    for _ in range(10):
        y, u = rng.normal(size=2), rng.normal(size=2)
        t = rng.uniform(-4, 4)
        m = FreeSolutionPoint.from_array(y)
        fd = (flow.forward_array(y + eps * u, 0, t) - flow.forward_array(y - eps * u, 0, t)) / (2 * eps)
        np.testing.assert_allclose(flow.tangent(m, MTangentVector.from_array(u), t).as_array(), fd, atol=1e-5)


def test_numeric_tangent_on_nonlinear_free_flow(rng):
    # a quartic free Hamiltonian exercises the non-trivial variational equations
    s = load_system(SystemSpec(n=1, free_terms=((0.5, (0, 2)), (0.25, (4, 0)))))
    flow = FreeFlow(s, "numeric")
    eps = 1e-5
    for _ in range(5):
        y, u = rng.normal(size=2), rng.normal(size=2)
        fd = (flow.forward_array(y + eps * u, 0, 2.0) - flow.forward_array(y - eps * u, 0, 2.0)) / (2 * eps)
        tan = flow.tangent(FreeSolutionPoint.from_array(y), MTangentVector.from_array(u), 2.0).as_array()
        np.testing.assert_allclose(tan, fd, atol=1e-5)
        np.testing.assert_allclose(flow.jacobian(FreeSolutionPoint.from_array(y), 2.0) @ u, tan, atol=1e-10)


def test_group_property(aniso, rng):
    flow = FreeFlow(aniso, "numeric")
    for _ in range(3):
        y = rng.normal(size=4)
        t1, t2 = rng.uniform(-10, 10, 2)
        via = flow.forward_array(flow.forward_array(y, 0.0, t1), t1, t2)
        np.testing.assert_allclose(via, flow.forward_array(y, 0.0, t2), atol=1e-7)


def test_symplecticity_and_liouville(aniso, rng):
    flow = FreeFlow(aniso)
    J = np.block([[np.zeros((2, 2)), np.eye(2)], [-np.eye(2), np.zeros((2, 2))]])
    for _ in range(10):
        y = rng.normal(size=4)
        t = rng.uniform(-10, 10)
        D = flow.jacobian(FreeSolutionPoint.from_array(y), t)
        np.testing.assert_allclose(D.T @ J @ D, J, atol=1e-6)
        Dfd = jacobian_fd(lambda z: flow.forward_array(z, 0.0, t), y, h=1e-5)
        assert abs(np.linalg.det(Dfd) - 1.0) <= 1e-5


def test_rechart_examples(hflow):
    m = mf(1, 0)
    assert rechart(hflow, m, 0.0) is m
    moved = rechart(hflow, m, math.pi / 2)
    assert moved.t_ref == math.pi / 2
    np.testing.assert_allclose(moved.y, [0, -1], atol=1e-12)
    np.testing.assert_allclose(rechart(hflow, rechart(hflow, m, 1.0), 0.0).y, m.y, atol=1e-8)


def test_same_point_examples(hflow):
    a = mf(1, 0)
    assert same_point(hflow, a, a, 1e-12)
    assert same_point(hflow, a, mf(0, -1, math.pi / 2), 1e-9)
    # the time-translated solution is a different point of M_F
    assert not same_point(hflow, a, mf(1, 0, 1.0), 1e-6)


def test_tangent_vector_validation():
    with pytest.raises(InvalidParameter):
        MTangentVector([1.0, 2.0], [1.0])
    with pytest.raises(InvalidParameter):
        MTangentVector([math.inf], [0.0])
