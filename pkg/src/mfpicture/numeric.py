"""Numerical kernels: ODE integration, quadrature, finite differences, small
linear solves.

Everything here is a pure function of its arguments.  Hamiltonian vector
fields of polynomial Hamiltonians get a compiled fast path (``PolyField``);
any other right-hand side runs through the generic numpy loop.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

from .errors import (
    MaxDepthExceeded,
    MaxStepsExceeded,
    MethodMismatch,
    NonFiniteState,
    NonFiniteValue,
    SingularMatrix,
)

EPS = np.finfo(float).eps
BLOWUP_LIMIT = 1e12
METHODS = ("rk4-fixed", "rk45-adaptive", "stormer-verlet")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4-fixed"
    dt: float = 1e-3
    atol: float = 1e-10
    rtol: float = 1e-10
    max_steps: int = 100_000_000

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown integration method {self.method!r}")
        if not (self.dt > 0 and self.atol > 0 and self.rtol > 0):
            raise ValueError("dt and tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass(frozen=True)
class PolyField:
    """Hamiltonian vector field J·grad(H) of a polynomial H, optionally
    carrying ``ncols`` tangent columns propagated by J·Hess(H).

    State layout: the 2n phase coordinates followed by the 2n x ncols tangent
    matrix in row-major order.
    """

    coeffs: np.ndarray
    exps: np.ndarray
    ncols: int = 0


@dataclass(frozen=True)
class OdeProblem:
    rhs: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    y0: np.ndarray
    poly: Optional[PolyField] = None
    # (dT/dp(p), dV/dq(q)) for Stormer-Verlet on H = T(p) + V(q)
    separable: Optional[tuple] = None
    # whether ``poly`` is separable in (q, p); enables the compiled Verlet path
    poly_separable: bool = False

    @property
    def dim(self) -> int:
        return len(self.y0)


@dataclass
class SolutionSamples:
    times: np.ndarray
    states: np.ndarray
    steps: int = field(default=0)


# ---------------------------------------------------------------------------
# polynomial kernels


@njit(cache=True)
def poly_value(coeffs, exps, y):
    total = 0.0
    for k in range(coeffs.shape[0]):
        term = coeffs[k]
        for i in range(y.shape[0]):
            e = exps[k, i]
            if e > 0:
                term *= y[i] ** e
        total += term
    return total


@njit(cache=True)
def poly_grad(coeffs, exps, y, out):
    m = y.shape[0]
    for j in range(m):
        out[j] = 0.0
    for k in range(coeffs.shape[0]):
        for j in range(m):
            ej = exps[k, j]
            if ej == 0:
                continue
            term = coeffs[k] * ej
            for i in range(m):
                e = exps[k, i]
                if i == j:
                    e -= 1
                if e > 0:
                    term *= y[i] ** e
            out[j] += term


@njit(cache=True)
def poly_hess(coeffs, exps, y, out):
    m = y.shape[0]
    for a in range(m):
        for b in range(m):
            out[a, b] = 0.0
    for k in range(coeffs.shape[0]):
        for a in range(m):
            ea = exps[k, a]
            if ea == 0:
                continue
            for b in range(a, m):
                eb = exps[k, b]
                if a == b:
                    if ea < 2:
                        continue
                    term = coeffs[k] * ea * (ea - 1)
                else:
                    if eb == 0:
                        continue
                    term = coeffs[k] * ea * eb
                for i in range(m):
                    e = exps[k, i]
                    if i == a:
                        e -= 1
                    if i == b:
                        e -= 1
                    if e > 0:
                        term *= y[i] ** e
                out[a, b] += term
                if a != b:
                    out[b, a] += term


@njit(cache=True)
def _ham_rhs(coeffs, exps, n2, ncols, y, out, g, hm):
    n = n2 // 2
    x = y[:n2]
    poly_grad(coeffs, exps, x, g)
    for a in range(n):
        out[a] = g[n + a]
        out[n + a] = -g[a]
    if ncols > 0:
        poly_hess(coeffs, exps, x, hm)
        for r in range(n2):
            # row r of J·Hess: +Hess[r+n] for q rows, -Hess[r-n] for p rows
            if r < n:
                src = r + n
                sgn = 1.0
            else:
                src = r - n
                sgn = -1.0
            for c in range(ncols):
                s = 0.0
                for k in range(n2):
                    s += hm[src, k] * y[n2 + k * ncols + c]
                out[n2 + r * ncols + c] = sgn * s


@njit(cache=True)
def _rk4_poly(coeffs, exps, n2, ncols, t0, y0, times, dt, max_steps, limit):
    m = y0.shape[0]
    out = np.empty((times.shape[0], m))
    y = y0.copy()
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    tmp = np.empty(m)
    g = np.empty(n2)
    hm = np.empty((n2, n2))
    t = t0
    steps = 0
    for s in range(times.shape[0]):
        target = times[s]
        span = target - t
        nsub = int(math.ceil(abs(span) / dt - 1e-9))
        if nsub < 1 and span != 0.0:
            nsub = 1
        if nsub > 0:
            h = span / nsub
            for _ in range(nsub):
                _ham_rhs(coeffs, exps, n2, ncols, y, k1, g, hm)
                for i in range(m):
                    tmp[i] = y[i] + 0.5 * h * k1[i]
                _ham_rhs(coeffs, exps, n2, ncols, tmp, k2, g, hm)
                for i in range(m):
                    tmp[i] = y[i] + 0.5 * h * k2[i]
                _ham_rhs(coeffs, exps, n2, ncols, tmp, k3, g, hm)
                for i in range(m):
                    tmp[i] = y[i] + h * k3[i]
                _ham_rhs(coeffs, exps, n2, ncols, tmp, k4, g, hm)
                for i in range(m):
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
                    if not (abs(y[i]) <= limit):
                        return out, 1, steps
                steps += 1
                if steps > max_steps:
                    return out, 2, steps
        t = target
        out[s, :] = y
    return out, 0, steps


@njit(cache=True)
def _verlet_poly(coeffs, exps, n2, t0, y0, times, dt, max_steps, limit):
    n = n2 // 2
    out = np.empty((times.shape[0], n2))
    y = y0.copy()
    g = np.empty(n2)
    t = t0
    steps = 0
    for s in range(times.shape[0]):
        target = times[s]
        span = target - t
        nsub = int(math.ceil(abs(span) / dt - 1e-9))
        if nsub < 1 and span != 0.0:
            nsub = 1
        if nsub > 0:
            h = span / nsub
            poly_grad(coeffs, exps, y, g)
            for _ in range(nsub):
                for a in range(n):
                    y[n + a] -= 0.5 * h * g[a]
                poly_grad(coeffs, exps, y, g)
                for a in range(n):
                    y[a] += h * g[n + a]
                poly_grad(coeffs, exps, y, g)
                for a in range(n):
                    y[n + a] -= 0.5 * h * g[a]
                for i in range(n2):
                    if not (abs(y[i]) <= limit):
                        return out, 1, steps
                steps += 1
                if steps > max_steps:
                    return out, 2, steps
        t = target
        out[s, :] = y
    return out, 0, steps


# ---------------------------------------------------------------------------
# integration


def _check_state(y, t):
    if not np.all(np.abs(y) <= BLOWUP_LIMIT):
        raise NonFiniteState(f"state left the finite region at t={t:.6g}")


def _substeps(span, dt):
    nsub = math.ceil(abs(span) / dt - 1e-9)
    if nsub < 1 and span != 0.0:
        nsub = 1
    return nsub


def _normalize_samples(t0, t_end, sample_times):
    if sample_times is None:
        sample_times = [t_end]
    times = np.asarray(sample_times, dtype=float).ravel()
    if times.size == 0:
        raise ValueError("at least one sample time is required")
    lo, hi = min(t0, t_end), max(t0, t_end)
    if np.any(times < lo - 1e-12) or np.any(times > hi + 1e-12):
        raise ValueError("sample times must lie between t0 and t_end")
    direction = 1.0 if t_end >= t0 else -1.0
    if times.size > 1 and np.any(direction * np.diff(times) <= 0):
        raise ValueError("sample times must be strictly monotone in the integration direction")
    return times


def _raise_status(status, t):
    if status == 1:
        raise NonFiniteState(f"state left the finite region before t={t:.6g}")
    if status == 2:
        raise MaxStepsExceeded("step budget exhausted")


def _rk4(problem, times, cfg):
    f = problem.rhs
    y = np.array(problem.y0, dtype=float)
    t = float(problem.t0)
    out = np.empty((len(times), len(y)))
    steps = 0
    for s, target in enumerate(times):
        nsub = _substeps(target - t, cfg.dt)
        if nsub:
            h = (target - t) / nsub
            for i in range(nsub):
                tc = t + i * h
                k1 = f(tc, y)
                k2 = f(tc + 0.5 * h, y + 0.5 * h * k1)
                k3 = f(tc + 0.5 * h, y + 0.5 * h * k2)
                k4 = f(tc + h, y + h * k3)
                y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                _check_state(y, tc + h)
                steps += 1
                if steps > cfg.max_steps:
                    raise MaxStepsExceeded("step budget exhausted")
        t = float(target)
        out[s] = y
    return out, steps


def _verlet(problem, times, cfg):
    dT_dp, dV_dq = problem.separable
    y = np.array(problem.y0, dtype=float)
    n = len(y) // 2
    q, p = y[:n].copy(), y[n:].copy()
    t = float(problem.t0)
    out = np.empty((len(times), 2 * n))
    steps = 0
    for s, target in enumerate(times):
        nsub = _substeps(target - t, cfg.dt)
        if nsub:
            h = (target - t) / nsub
            force = dV_dq(q)
            for _ in range(nsub):
                p = p - 0.5 * h * force
                q = q + h * np.asarray(dT_dp(p))
                force = np.asarray(dV_dq(q))
                p = p - 0.5 * h * force
                steps += 1
                if steps > cfg.max_steps:
                    raise MaxStepsExceeded("step budget exhausted")
            _check_state(np.concatenate([q, p]), target)
        t = float(target)
        out[s, :n] = q
        out[s, n:] = p
    return out, steps


# Dormand-Prince 5(4) tableau
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_E = _DP_B - np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)


def _rk45(problem, times, cfg):
    f = problem.rhs
    y = np.array(problem.y0, dtype=float)
    t = float(problem.t0)
    out = np.empty((len(times), len(y)))
    direction = 1.0 if times[-1] >= t else -1.0
    h = min(cfg.dt, abs(times[-1] - t)) or cfg.dt
    k = np.empty((7, len(y)))
    k[0] = f(t, y)
    steps = 0
    for s, target in enumerate(times):
        while direction * (target - t) > 0:
            step = min(h, abs(target - t))
            hs = direction * step
            for i in range(1, 7):
                yi = y + hs * np.dot(_DP_A[i], k[:i])
                k[i] = f(t + _DP_C[i] * hs, yi)
            y_new = yi  # FSAL: stage 7 input is the 5th-order solution
            err_vec = hs * np.dot(_DP_E, k)
            scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
            err = math.sqrt(np.mean((err_vec / scale) ** 2))
            steps += 1
            if steps > cfg.max_steps:
                raise MaxStepsExceeded("step budget exhausted")
            if err <= 1.0:
                t = target if step == abs(target - t) else t + hs
                y = y_new
                k[0] = k[6]
                _check_state(y, t)
                factor = 5.0 if err == 0 else min(5.0, 0.9 * err ** -0.2)
                # keep the nominal step when clipped to land on a sample
                h = max(h, step * factor) if step < h else step * factor
            else:
                h = step * max(0.2, 0.9 * err ** -0.2)
            if h < 1e-14 * max(1.0, abs(t)):
                raise NonFiniteState(f"step size underflow at t={t:.6g}")
        out[s] = y
    return out, steps


def integrate(problem: OdeProblem, t_end: float, cfg: IntegratorConfig = IntegratorConfig(),
              sample_times: Optional[Sequence[float]] = None) -> SolutionSamples:
    """Integrate ``problem`` from its t0 to ``t_end`` and return the states at
    ``sample_times`` (default: just ``t_end``).  Backward integration
    (``t_end < t0``) is supported; sample times must then decrease.
    """
    times = _normalize_samples(problem.t0, t_end, sample_times)
    y0 = np.asarray(problem.y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")
    method = cfg.method
    if method == "stormer-verlet":
        if problem.poly is not None and problem.poly_separable and problem.poly.ncols == 0:
            pf = problem.poly
            states, status, steps = _verlet_poly(pf.coeffs, pf.exps, len(y0), float(problem.t0),
                                                 y0, times, cfg.dt, cfg.max_steps, BLOWUP_LIMIT)
            _raise_status(status, times[-1])
        elif problem.separable is not None:
            states, steps = _verlet(problem, times, cfg)
        else:
            raise MethodMismatch("stormer-verlet requires a separable Hamiltonian problem")
    elif method == "rk4-fixed":
        if problem.poly is not None:
            pf = problem.poly
            # len(y0) = 2n + 2n*ncols
            n2 = len(y0) // (1 + pf.ncols)
            states, status, steps = _rk4_poly(pf.coeffs, pf.exps, n2, pf.ncols, float(problem.t0),
                                              y0, times, cfg.dt, cfg.max_steps, BLOWUP_LIMIT)
            _raise_status(status, times[-1])
        else:
            states, steps = _rk4(problem, times, cfg)
    else:
        states, steps = _rk45(problem, times, cfg)
    return SolutionSamples(times=times, states=states, steps=steps)


# ---------------------------------------------------------------------------
# quadrature


def quadrature(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10,
               max_depth: int = 40) -> float:
    """Adaptive Simpson estimate of the signed integral of f over [a, b]."""
    if a == b:
        return 0.0
    if a > b:
        return -quadrature(f, b, a, tol, max_depth)

    def simpson(fa, fm, fb, lo, hi):
        return (hi - lo) / 6.0 * (fa + 4.0 * fm + fb)

    def recurse(lo, hi, fa, fm, fb, whole, eps, depth):
        mid = 0.5 * (lo + hi)
        lm, rm = 0.5 * (lo + mid), 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        left = simpson(fa, flm, fm, lo, mid)
        right = simpson(fm, frm, fb, mid, hi)
        delta = left + right - whole
        if abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise MaxDepthExceeded(f"adaptive Simpson exceeded depth {max_depth} near t={mid:.6g}")
        return (recurse(lo, mid, fa, flm, fm, left, 0.5 * eps, depth + 1)
                + recurse(mid, hi, fm, frm, fb, right, 0.5 * eps, depth + 1))

    fa, fb = f(a), f(b)
    fm = f(0.5 * (a + b))
    vals = (fa, fm, fb)
    if not all(math.isfinite(v) for v in vals):
        raise NonFiniteValue("integrand is not finite")
    return recurse(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, 0)


# ---------------------------------------------------------------------------
# finite differences


def fd_step(x: np.ndarray, order: int = 1) -> np.ndarray:
    """Central-difference steps: cbrt(eps) scaling for first derivatives,
    eps**(1/4) for second derivatives."""
    base = EPS ** (1.0 / 3.0) if order == 1 else EPS ** 0.25
    return base * np.maximum(1.0, np.abs(x))


def gradient_fd(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    g = np.empty_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h[i]
        xm[i] -= h[i]
        g[i] = (f(xp) - f(xm)) / (xp[i] - xm[i])
    if not np.all(np.isfinite(g)):
        raise NonFiniteValue("finite-difference gradient is not finite")
    return g


def jacobian_fd(F: Callable[[np.ndarray], np.ndarray], x, h=None) -> np.ndarray:
    """Central-difference Jacobian of a vector function, columns = d/dx_j."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x) if h is None else np.broadcast_to(np.asarray(h, dtype=float), x.shape)
    cols = []
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += h[j]
        xm[j] -= h[j]
        cols.append((np.asarray(F(xp)) - np.asarray(F(xm))) / (xp[j] - xm[j]))
    J = np.column_stack(cols)
    if not np.all(np.isfinite(J)):
        raise NonFiniteValue("finite-difference Jacobian is not finite")
    return J


def hessian_fd(f: Callable[[np.ndarray], float], x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = fd_step(x, order=2)
    m = x.size
    H = np.empty((m, m))
    f0 = f(x)
    for i in range(m):
        ei = np.zeros(m)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, m):
            ej = np.zeros(m)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej)
                                 + f(x - ei - ej)) / (4.0 * h[i] * h[j])
    if not np.all(np.isfinite(H)):
        raise NonFiniteValue("finite-difference Hessian is not finite")
    return H


# ---------------------------------------------------------------------------
# linear algebra


def solve_linear(A, b, threshold: float = 1e-12) -> np.ndarray:
    """Solve A x = b for small dense A.

    Raises SingularMatrix when |det A| is below ``threshold`` times the
    Hadamard bound (product of row norms).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("A must be square")
    hadamard = float(np.prod(np.linalg.norm(A, axis=1)))
    det = np.linalg.det(A)
    if hadamard == 0.0 or not abs(det) > threshold * hadamard:
        raise SingularMatrix(f"matrix is singular to working precision (det={det:.3g})")
    x = np.linalg.solve(A, b)
    # one step of iterative refinement
    r = b - A @ x
    x = x + np.linalg.solve(A, r)
    return x
