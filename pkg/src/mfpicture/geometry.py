"""Geometric objects on M_F: the one-forms theta_t, the symplectic form,
the free action, Hamiltonian vector fields and Poisson brackets.

Conventions: in a canonical chart omega = dp ^ dq, so
``omega(u, v) = u.dp . v.dq - v.dp . u.dq``.  Hamiltonian vector fields are
``X_f = (df/dp, -df/dq)``, which makes ``omega(v, X_f) = df(v)`` and gives
Hamilton's equations their usual signs.  The Poisson bracket is the standard
``{f, g} = f_q g_p - f_p g_q = omega(X_g, X_f)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np

from . import numeric
from .errors import InvalidParameter, NonFiniteValue
from .freespace import FreeFlow, FreeSolutionPoint, MTangentVector
from .systems import HamiltonianFn

FD_REL_STEP = 1e-5


@dataclass(frozen=True)
class ObservableOnMF:
    """A possibly time-dependent function f(m, t) on M_F.

    ``gradient(m, t)``, when given, returns df in m's chart as a flat
    ``(df/dq, df/dp)`` array.
    """

    name: str
    evaluator: Callable[[FreeSolutionPoint, float], float]
    gradient: Optional[Callable[[FreeSolutionPoint, float], np.ndarray]] = None

    def __call__(self, m: FreeSolutionPoint, t: float = 0.0) -> float:
        return float(self.evaluator(m, t))

    def grad(self, m: FreeSolutionPoint, t: float = 0.0) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(m, t), dtype=float)
        return numeric.gradient_fd(
            lambda y: self.evaluator(FreeSolutionPoint.from_array(y, m.t_ref), t), m.y)


# observables -----------------------------------------------------------------


def chart_coordinate(kind: str, index: int = 0) -> ObservableOnMF:
    """The coordinate function q^a or p_a of the chart itself."""
    if kind not in ("q", "p"):
        raise InvalidParameter("kind must be 'q' or 'p'")

    def ev(m, t):
        return (m.coords.q if kind == "q" else m.coords.p)[index]

    def grad(m, t):
        g = np.zeros(2 * m.n)
        g[index if kind == "q" else m.n + index] = 1.0
        return g

    return ObservableOnMF(f"{kind}{index + 1}", ev, grad)


def function_observable(name: str, func: Callable[[np.ndarray], float]) -> ObservableOnMF:
    """f(m, t) = func(chart coordinates); gradient by finite differences."""
    return ObservableOnMF(name, lambda m, t: func(m.y))


def pushed_coordinate(flow: FreeFlow, kind: str, index: int = 0) -> ObservableOnMF:
    """q^a o Pi_t or p_a o Pi_t: the observable read off the solution at time t."""
    if kind not in ("q", "p"):
        raise InvalidParameter("kind must be 'q' or 'p'")
    slot = index if kind == "q" else flow.n + index

    def ev(m, t):
        return flow.forward_array(m.y, m.t_ref, t)[slot]

    def grad(m, t):
        return flow.jacobian(m, t)[slot].copy()

    return ObservableOnMF(f"{kind}{index + 1}oPi_t", ev, grad)


def pullback_observable(flow: FreeFlow, H: HamiltonianFn, name: str = "") -> ObservableOnMF:
    """H o Pi_t with the chain-rule gradient (D Pi_t)^T grad H."""

    def ev(m, t):
        return H.value(flow.forward_array(m.y, m.t_ref, t))

    def grad(m, t):
        x, D = flow.flow_and_jacobian(m, t)
        return D.T @ H.gradient(x)

    return ObservableOnMF(name or f"{H.name}oPi_t", ev, grad)


# forms -------------------------------------------------------------------------


def theta_eval(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector, t: float) -> float:
    """theta_t(U) = p(t) . delta q(t); the momentum equals dL0/dqdot on the
    free solution."""
    x = flow.forward(m, t)
    w = flow.tangent(m, u, t)
    return float(np.dot(x.p, w.dq))


def omega_eval(m: FreeSolutionPoint, u: MTangentVector, v: MTangentVector) -> float:
    if u.dq.size != m.n or v.dq.size != m.n:
        raise InvalidParameter("tangent vectors do not match the point's dimension")
    return float(np.dot(u.dp, v.dq) - np.dot(v.dp, u.dq))


def omega_values_across_charts(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector,
                               v: MTangentVector, t_refs: Sequence[float]) -> list[float]:
    values = []
    for tr in t_refs:
        mk = flow.rechart(m, tr)
        values.append(omega_eval(mk, flow.tangent(m, u, tr), flow.tangent(m, v, tr)))
    return values


def omega_chart_independence(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector,
                             v: MTangentVector, t_refs: Sequence[float]) -> float:
    """Max pairwise deviation of omega(u, v) evaluated in each chart time."""
    values = omega_values_across_charts(flow, m, u, v, t_refs)
    return max((abs(a - b) for a, b in combinations(values, 2)), default=0.0)


def _fd_eps(m: FreeSolutionPoint, eps: Optional[float]) -> float:
    if eps is not None:
        return eps
    return FD_REL_STEP * max(1.0, float(np.max(np.abs(m.y))))


def _directional(f: Callable[[np.ndarray], float], y: np.ndarray, w: np.ndarray, eps: float) -> float:
    return (f(y + eps * w) - f(y - eps * w)) / (2.0 * eps)


def omega_from_theta_fd(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector,
                        v: MTangentVector, t: float, eps: Optional[float] = None) -> float:
    """d(theta_t)(u, v) = u[theta_t(v)] - v[theta_t(u)] with u, v extended as
    constant-coefficient fields (their bracket vanishes)."""
    eps = _fd_eps(m, eps)

    def theta_along(w):
        def f(y):
            return theta_eval(flow, FreeSolutionPoint.from_array(y, m.t_ref), w, t)
        return f

    y = m.y
    return (_directional(theta_along(v), y, u.as_array(), eps)
            - _directional(theta_along(u), y, v.as_array(), eps))


def action_free(flow: FreeFlow, m: FreeSolutionPoint, t1: float, t2: float,
                tol: float = 1e-12) -> float:
    """I0(t2, t1): integral of L0 along the free solution through m."""
    L0 = flow.system.free_lagrangian
    if L0 is None:
        raise InvalidParameter("the free action needs a free Lagrangian")
    if t1 == t2:
        return 0.0

    def integrand(t):
        x = flow.tau(m, t)
        return L0.value(x.q, x.qdot)

    return numeric.quadrature(integrand, t1, t2, tol)


def action_exactness_check(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector,
                           t1: float, t2: float, eps: Optional[float] = None,
                           tol: float = 1e-12) -> tuple[float, float]:
    """(dI0(U), theta_t2(U) - theta_t1(U)); the two agree on free solutions."""
    eps = _fd_eps(m, eps)
    w = u.as_array()
    if not np.any(w):
        lhs = 0.0
    else:
        lhs = _directional(
            lambda y: action_free(flow, FreeSolutionPoint.from_array(y, m.t_ref), t1, t2, tol),
            m.y, w, eps)
    rhs = theta_eval(flow, m, u, t2) - theta_eval(flow, m, u, t1)
    return lhs, rhs


# Hamiltonian vector fields and brackets ----------------------------------------


def hamiltonian_vector_field(f: ObservableOnMF, m: FreeSolutionPoint, t: float = 0.0) -> MTangentVector:
    g = f.grad(m, t)
    if not np.all(np.isfinite(g)):
        raise NonFiniteValue(f"gradient of {f.name} is not finite")
    n = m.n
    return MTangentVector(g[n:], -g[:n])


def poisson_bracket(f: ObservableOnMF, g: ObservableOnMF, m: FreeSolutionPoint, t: float = 0.0) -> float:
    df, dg = f.grad(m, t), g.grad(m, t)
    if not (np.all(np.isfinite(df)) and np.all(np.isfinite(dg))):
        raise NonFiniteValue("observable gradient is not finite")
    n = m.n
    return float(np.dot(df[:n], dg[n:]) - np.dot(df[n:], dg[:n]))
