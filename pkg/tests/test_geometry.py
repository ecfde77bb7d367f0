import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpicture.errors import NonFiniteValue
from mfpicture.freespace import FreeFlow, FreeSolutionPoint, MTangentVector
from mfpicture.geometry import (
    ObservableOnMF,
    action_exactness_check,
    action_free,
    chart_coordinate,
    function_observable,
    hamiltonian_vector_field,
    omega_chart_independence,
    omega_eval,
    omega_from_theta_fd,
    poisson_bracket,
    pullback_observable,
    pushed_coordinate,
    theta_eval,
)
from mfpicture.systems import SystemSpec, load_system

M0 = FreeSolutionPoint.from_array([1.0, 0.0])
DQ = MTangentVector([1.0], [0.0])
DP = MTangentVector([0.0], [1.0])
small = st.floats(-3, 3, allow_nan=False)


def vec(*c):
    return MTangentVector.from_array(np.array(c, dtype=float))


def test_theta_examples(hflow):
    assert theta_eval(hflow, M0, DQ, 0.0) == 0.0
    assert theta_eval(hflow, FreeSolutionPoint.from_array([0.0, 1.0]), DQ, 0.0) == 1.0
    assert theta_eval(hflow, M0, DQ, math.pi / 2) == pytest.approx(0.0, abs=1e-12)


def test_theta_free_particle(pflow):
    # delta q(t) = dq + t dp, p(t) = p
    m = FreeSolutionPoint.from_array([0.3, -0.8])
    assert theta_eval(pflow, m, vec(0.5, 2.0), 3.0) == pytest.approx(-0.8 * (0.5 + 6.0))


def test_omega_examples():
    assert omega_eval(M0, DQ, DP) == -1.0
    assert omega_eval(M0, vec(2, 3), vec(5, 7)) == 1.0
    assert omega_eval(M0, vec(2, 3), vec(2, 3)) == 0.0


@given(st.lists(small, min_size=8, max_size=8), small, small)
def test_omega_antisymmetric_and_bilinear(c, a, b):
    m = FreeSolutionPoint.from_array([0.0] * 2 + [0.0] * 2)
    u, v, w = vec(*c[:4]), vec(*c[4:]), vec(*c[2:6])
    assert omega_eval(m, u, v) == -omega_eval(m, v, u)
    au_bw = vec(*(a * u.as_array() + b * w.as_array()))
    lhs = omega_eval(m, au_bw, v)
    rhs = a * omega_eval(m, u, v) + b * omega_eval(m, w, v)
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1 + abs(lhs)))


def test_omega_nondegenerate():
    m = FreeSolutionPoint.from_array(np.zeros(4))
    basis = [vec(*e) for e in np.eye(4)]
    for e in basis:
        assert max(abs(omega_eval(m, e, f)) for f in basis) == 1.0


def test_omega_chart_independence_examples(hflow, pflow, rng):
    assert omega_chart_independence(hflow, M0, DQ, DP, [0.0]) == 0.0
    for _ in range(10):
        m, u, v = (rng.normal(size=2) for _ in range(3))
        args = FreeSolutionPoint.from_array(m), vec(*u), vec(*v)
        assert omega_chart_independence(hflow, *args, [0.0, 1.0, 2.0, math.pi]) <= 1e-8
        assert omega_chart_independence(pflow, *args, [0.0, 5.0]) <= 1e-10


def test_omega_chart_independence_numeric_2d(aniso, rng):
    flow = FreeFlow(aniso, "numeric")
    m, u, v = (rng.normal(size=4) for _ in range(3))
    dev = omega_chart_independence(flow, FreeSolutionPoint.from_array(m), vec(*u), vec(*v),
                                   [0.0, 1.0, 2.0, math.pi])
    assert dev <= 1e-6


def test_omega_from_theta(hflow, pflow):
    assert omega_from_theta_fd(hflow, M0, DQ, DP, 0.0) == pytest.approx(omega_eval(M0, DQ, DP), abs=1e-6)
    assert omega_from_theta_fd(hflow, M0, DQ, DQ, 0.0) == 0.0
    m = FreeSolutionPoint.from_array([0.4, 1.2])
    u, v = vec(1.0, 0.5), vec(-0.3, 2.0)
    pushed = omega_eval(pflow.rechart(m, 3.0), pflow.tangent(m, u, 3.0), pflow.tangent(m, v, 3.0))
    assert omega_from_theta_fd(pflow, m, u, v, 3.0) == pytest.approx(pushed, abs=1e-6)


def test_omega_from_theta_quartic_free_flow(rng):
    # non-linear free flow: d theta_t must still equal omega
    flow = FreeFlow(load_system(SystemSpec(n=1, free_terms=((0.5, (0, 2)), (0.25, (4, 0))))))
    m, u, v = FreeSolutionPoint.from_array([0.5, 0.2]), vec(1.0, 0.3), vec(0.2, -1.0)
    assert omega_from_theta_fd(flow, m, u, v, 1.5) == pytest.approx(omega_eval(m, u, v), abs=1e-5)


def test_action_examples(hflow, pflow):
    assert action_free(hflow, M0, 0.0, 2 * math.pi) == pytest.approx(0.0, abs=1e-8)
    assert action_free(hflow, M0, 1.3, 1.3) == 0.0
    assert action_free(pflow, FreeSolutionPoint.from_array([0.0, 1.0]), 0.0, 2.0) == pytest.approx(1.0, abs=1e-10)
    # L0 = -cos(2t)/2 on this orbit, so the integral over [0, pi/4] is -1/4
    assert action_free(hflow, M0, 0.0, math.pi / 4) == pytest.approx(-0.25, abs=1e-10)


def test_exactness_examples(hflow, pflow, rng):
    lhs, rhs = action_exactness_check(hflow, M0, DQ, 0.0, math.pi / 2)
    assert lhs == pytest.approx(rhs, abs=1e-6)
    # on [0, pi/2] the harmonic action is I0 = -q p in the t=0 chart
    assert rhs == pytest.approx(0.0, abs=1e-12)
    assert action_exactness_check(hflow, M0, vec(0.0, 0.0), 0.0, 1.0) == (0.0, 0.0)
    for _ in range(5):
        m, u = rng.normal(size=2), rng.normal(size=2)
        lhs, rhs = action_exactness_check(pflow, FreeSolutionPoint.from_array(m), vec(*u), 0.0, 1.0)
        assert lhs == pytest.approx(rhs, abs=1e-8)


def test_exactness_dp_direction(hflow):
    # derivative of -q p along dp at (1, 0) is -1
    lhs, rhs = action_exactness_check(hflow, M0, DP, 0.0, math.pi / 2)
    assert lhs == pytest.approx(-1.0, abs=1e-6)
    assert rhs == pytest.approx(-1.0, abs=1e-12)


def test_hamiltonian_vector_field_examples():
    q, p = chart_coordinate("q"), chart_coordinate("p")
    np.testing.assert_array_equal(hamiltonian_vector_field(q, M0).as_array(), [0, -1])
    np.testing.assert_array_equal(hamiltonian_vector_field(p, M0).as_array(), [1, 0])
    h = function_observable("h", lambda y: 0.5 * (y[0] ** 2 + y[1] ** 2))
    np.testing.assert_allclose(hamiltonian_vector_field(h, M0).as_array(), [0, -1], atol=1e-8)


def test_hamiltonian_vector_field_compatibility(hflow, quartic, rng):
    observables = [
        chart_coordinate("q"), chart_coordinate("p"),
        function_observable("cubic", lambda y: y[0] ** 3 - y[0] * y[1]),
        pushed_coordinate(hflow, "q"), pullback_observable(hflow, quartic.interaction),
    ]
    for k in range(50):
        f = observables[k % len(observables)]
        m = FreeSolutionPoint.from_array(rng.uniform(-1, 1, 2))
        v = rng.normal(size=2)
        t = float(rng.uniform(0, 3))
        X = hamiltonian_vector_field(f, m, t)
        eps = 1e-5
        dfv = (f(FreeSolutionPoint.from_array(m.y + eps * v), t)
               - f(FreeSolutionPoint.from_array(m.y - eps * v), t)) / (2 * eps)
        assert omega_eval(m, vec(*v), X) == pytest.approx(dfv, abs=1e-5)


def test_hamiltonian_vector_field_rejects_nonfinite():
    bad = ObservableOnMF("bad", lambda m, t: 0.0, lambda m, t: np.array([np.nan, 0.0]))
    with pytest.raises(NonFiniteValue):
        hamiltonian_vector_field(bad, M0)
    with pytest.raises(NonFiniteValue):
        poisson_bracket(bad, chart_coordinate("q"), M0)


def test_poisson_examples():
    q, p = chart_coordinate("q"), chart_coordinate("p")
    m = FreeSolutionPoint.from_array([3.0, -2.0])
    assert poisson_bracket(q, p, m) == 1.0
    assert poisson_bracket(q, q, m) == 0.0
    q2 = function_observable("q2", lambda y: y[0] ** 2)
    assert poisson_bracket(q2, p, m) == pytest.approx(6.0, abs=1e-6)


def test_poisson_antisymmetry(rng):
    f = function_observable("f", lambda y: np.sin(y[0]) * y[1] ** 2)
    g = function_observable("g", lambda y: y[0] * y[1] + y[1] ** 3)
    for _ in range(10):
        m = FreeSolutionPoint.from_array(rng.normal(size=2))
        assert poisson_bracket(f, g, m) == pytest.approx(-poisson_bracket(g, f, m), abs=1e-10)


@pytest.mark.parametrize("mode", ["closed-form", "numeric"])
def test_pushed_coordinates_stay_canonical(harmonic, mode):
    flow = FreeFlow(harmonic, mode)
    q, p = pushed_coordinate(flow, "q"), pushed_coordinate(flow, "p")
    m = FreeSolutionPoint.from_array([0.7, -0.2])
    for t in (0.0, 1.0, 5.0):
        assert poisson_bracket(q, p, m, t) == pytest.approx(1.0, abs=1e-6)


def test_pullback_gradient_matches_fd(qflow, quartic, rng):
    f = pullback_observable(qflow, quartic.interaction)
    fd = ObservableOnMF("fd", f.evaluator)
    for _ in range(5):
        m = FreeSolutionPoint.from_array(rng.normal(size=2))
        np.testing.assert_allclose(f.grad(m, 2.0), fd.grad(m, 2.0), atol=1e-7)


@settings(max_examples=25, deadline=None)
@given(small, small, small, small)
def test_symplectic_pairing_of_tangent_flow(a, b, c, d):
    # omega is preserved by the tangent flow of the harmonic oscillator
    flow = FreeFlow(load_system("free+harmonic"))
    m = FreeSolutionPoint.from_array([a, b])
    u, v = vec(a, c), vec(b, d)
    moved = omega_eval(m, flow.tangent(m, u, 2.0), flow.tangent(m, v, 2.0))
    assert moved == pytest.approx(omega_eval(m, u, v), abs=1e-10)
