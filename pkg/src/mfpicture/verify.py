"""Invariant suites run by ``mfpicture verify`` against one configured system.

Each suite returns a ``SuiteResult``; an exception inside a suite is a
failure of that suite, never of the runner.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry as geo
from .errors import MFPictureError
from .freespace import FreeFlow, FreeSolutionPoint, MTangentVector
from .numeric import IntegratorConfig, jacobian_fd
from .pictures import (
    derivative_residual,
    equivalence_report,
    evolve_interaction,
    interaction_field_paths,
)
from .systems import (
    PhasePoint,
    SplitSystem,
    TangentPoint,
    hamiltonian_from_lagrangian,
    inverse_legendre,
    is_regular,
    legendre_map,
    regularity_check,
)


DERIVATIVE_SAMPLES = 2001


@dataclass
class SuiteResult:
    name: str
    passed: bool
    value: float = 0.0       # the worst observed metric
    tolerance: float = 0.0
    detail: str = ""
    skipped: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "skipped": self.skipped,
                "value": self.value, "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class VerifyContext:
    system: SplitSystem
    flow: FreeFlow
    x0: np.ndarray
    t0: float
    t_end: float
    cfg: IntegratorConfig
    samples: int
    tolerance: float
    rng: np.random.Generator

    def phase_points(self, count, scale=1.0):
        return [self.rng.uniform(-scale, scale, 2 * self.system.n) for _ in range(count)]


def _check(name, value, tol, detail=""):
    return SuiteResult(name, bool(value <= tol), float(value), tol, detail)


def _skip(name, why):
    return SuiteResult(name, True, detail=why, skipped=True)


def suite_regularity(ctx: VerifyContext) -> SuiteResult:
    L0 = ctx.system.free_lagrangian
    if L0 is None:
        return _skip("regularity", "no free Lagrangian")
    n = ctx.system.n
    dets = []
    for y in ctx.phase_points(20):
        x = TangentPoint(y[:n], y[n:])
        dets.append(abs(regularity_check(L0, x)))
        if not is_regular(L0, x):
            return SuiteResult("regularity", False, min(dets), 0.0,
                               "velocity Hessian of L0 is degenerate")
    return SuiteResult("regularity", True, min(dets), 0.0, "min |det| over samples")


def suite_legendre(ctx: VerifyContext) -> SuiteResult:
    L0, L = ctx.system.free_lagrangian, ctx.system.lagrangian
    if L0 is None:
        return _skip("legendre", "no free Lagrangian")
    n = ctx.system.n
    worst = 0.0
    for y in ctx.phase_points(20):
        x = PhasePoint(y[:n], y[n:])
        back = legendre_map(L0, inverse_legendre(L0, x))
        worst = max(worst, float(np.max(np.abs(back.p - x.p))))
        v = TangentPoint(y[:n], y[n:])
        again = inverse_legendre(L0, legendre_map(L0, v))
        worst = max(worst, float(np.max(np.abs(again.qdot - v.qdot))))
        if L is not None:
            h = hamiltonian_from_lagrangian(L, v)
            worst = max(worst, abs(h - ctx.system.total(legendre_map(L, v))))
    return _check("legendre", worst, 1e-8, "round trips and energy identity")


def suite_split_additivity(ctx: VerifyContext) -> SuiteResult:
    s = ctx.system
    worst = 0.0
    for y in ctx.phase_points(100):
        worst = max(worst, abs(s.total.value(y) - (s.free.value(y) + s.interaction.value(y))))
    return SuiteResult("split-additivity", worst == 0.0, worst, 0.0, "exact")


def suite_gradients(ctx: VerifyContext) -> SuiteResult:
    worst = 0.0
    for H in (ctx.system.free, ctx.system.interaction):
        if not H.has_analytic_gradient:
            continue
        for y in ctx.phase_points(100):
            g, gfd = H.gradient(y), H.gradient_fd(y)
            worst = max(worst, float(np.max(np.abs(g - gfd) / np.maximum(1.0, np.abs(g)))))
    return _check("gradients", worst, 1e-6, "analytic vs central differences (relative)")


def suite_flow(ctx: VerifyContext) -> SuiteResult:
    flow = ctx.flow
    worst_inv = worst_jvp = worst_det = 0.0
    for y in ctx.phase_points(10):
        m = FreeSolutionPoint.from_array(y, 0.0)
        t = float(ctx.rng.uniform(-3, 3))
        x = flow.forward(m, t)
        worst_inv = max(worst_inv, float(np.max(np.abs(flow.inverse(x, t, 0.0).y - m.y))))
        u = ctx.rng.normal(size=y.size)
        eps = 1e-5
        fd = (flow.forward_array(y + eps * u, 0.0, t) - flow.forward_array(y - eps * u, 0.0, t)) / (2 * eps)
        tan = flow.tangent(m, MTangentVector.from_array(u), t).as_array()
        worst_jvp = max(worst_jvp, float(np.max(np.abs(fd - tan))))
        J = jacobian_fd(lambda z: flow.forward_array(z, 0.0, t), y, h=1e-5)
        worst_det = max(worst_det, abs(np.linalg.det(J) - 1.0))
    worst = max(worst_inv / 1e-8, worst_jvp / 1e-5, worst_det / 1e-5)
    return SuiteResult("free-flow", worst <= 1.0, worst, 1.0,
                       f"inverse {worst_inv:.2e}, tangent {worst_jvp:.2e}, det-1 {worst_det:.2e}")


def suite_omega(ctx: VerifyContext) -> SuiteResult:
    worst = 0.0
    for _ in range(20):
        y, u, v = (ctx.rng.normal(size=2 * ctx.system.n) for _ in range(3))
        worst = max(worst, geo.omega_chart_independence(
            ctx.flow, FreeSolutionPoint.from_array(y), MTangentVector.from_array(u),
            MTangentVector.from_array(v), [0.0, 1.0, 2.0, math.pi]))
    return _check("omega-chart-independence", worst, 1e-6)


def suite_exactness(ctx: VerifyContext) -> SuiteResult:
    if ctx.system.free_lagrangian is None:
        return _skip("action-exactness", "no free Lagrangian")
    worst = 0.0
    for _ in range(5):
        y, u = (ctx.rng.normal(size=2 * ctx.system.n) for _ in range(2))
        lhs, rhs = geo.action_exactness_check(ctx.flow, FreeSolutionPoint.from_array(y),
                                              MTangentVector.from_array(u), 0.0, math.pi / 2)
        worst = max(worst, abs(lhs - rhs))
    return _check("action-exactness", worst, 1e-5)


def suite_field_paths(ctx: VerifyContext) -> SuiteResult:
    worst = 0.0
    for y in ctx.phase_points(20):
        t = float(ctx.rng.uniform(0, 10))
        chain, fd = interaction_field_paths(ctx.flow, ctx.system, FreeSolutionPoint.from_array(y), t)
        worst = max(worst, float(np.max(np.abs(chain - fd))))
    return _check("field-paths", worst, 1e-6, "chain rule vs finite differences")


def suite_equivalence(ctx: VerifyContext) -> SuiteResult:
    rep = equivalence_report(ctx.system, ctx.x0, ctx.t0, ctx.t_end, ctx.cfg, ctx.samples,
                             ctx.tolerance, flow=ctx.flow)
    if rep.errors:
        return SuiteResult("three-picture-equivalence", False, math.inf, ctx.tolerance,
                           "; ".join(f"{k}: {v}" for k, v in rep.errors.items()))
    return _check("three-picture-equivalence", rep.max_deviation, ctx.tolerance)


def suite_derivative(ctx: VerifyContext) -> SuiteResult:
    m0 = ctx.flow.inverse(PhasePoint.from_array(ctx.x0), ctx.t0, ctx.t0)
    # central differences need a fine grid regardless of the requested output sampling
    samples = max(ctx.samples, DERIVATIVE_SAMPLES)
    tr = evolve_interaction(ctx.flow, ctx.system, m0, ctx.t0, ctx.t_end, ctx.cfg, samples)
    idx = np.unique(np.linspace(1, tr.times.size - 2, 20).astype(int))
    return _check("derivative-level", derivative_residual(ctx.system, tr, idx), 1e-4)


SUITES: list[tuple[str, Callable[[VerifyContext], SuiteResult]]] = [
    ("regularity", suite_regularity),
    ("legendre", suite_legendre),
    ("split-additivity", suite_split_additivity),
    ("gradients", suite_gradients),
    ("free-flow", suite_flow),
    ("omega-chart-independence", suite_omega),
    ("action-exactness", suite_exactness),
    ("field-paths", suite_field_paths),
    ("three-picture-equivalence", suite_equivalence),
    ("derivative-level", suite_derivative),
]


def run_suites(ctx: VerifyContext) -> list[SuiteResult]:
    results = []
    for name, suite in SUITES:
        try:
            results.append(suite(ctx))
        except (MFPictureError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            results.append(SuiteResult(name, False, math.inf, detail=f"{type(exc).__name__}: {exc}"))
    return results
