"""The space of free solutions M_F.

A free solution is stored in a chart: its phase coordinates at a reference
time ``t_ref``.  ``FreeFlow`` evaluates a solution at any time t (the map
Pi_t into T*Q, or tau_t into TQ through the inverse Legendre map), moves
points between charts and propagates tangent vectors with the variational
equations of the free Hamiltonian flow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import expm

from . import numeric
from .errors import InvalidParameter
from .numeric import IntegratorConfig, OdeProblem, PolyField
from .systems import PhasePoint, SplitSystem, TangentPoint, inverse_legendre

MODES = ("auto", "closed-form", "numeric")


@dataclass(frozen=True)
class FreeSolutionPoint:
    coords: PhasePoint
    t_ref: float = 0.0

    @classmethod
    def from_array(cls, y, t_ref: float = 0.0) -> "FreeSolutionPoint":
        return cls(PhasePoint.from_array(y), float(t_ref))

    @property
    def y(self) -> np.ndarray:
        return self.coords.as_array()

    @property
    def n(self) -> int:
        return self.coords.n


@dataclass(frozen=True)
class MTangentVector:
    """Tangent vector to M_F, components in a canonical chart."""

    dq: np.ndarray
    dp: np.ndarray

    def __post_init__(self):
        dq = np.atleast_1d(np.asarray(self.dq, dtype=float))
        dp = np.atleast_1d(np.asarray(self.dp, dtype=float))
        if dq.shape != dp.shape or dq.ndim != 1:
            raise InvalidParameter("dq and dp must be vectors of equal length")
        if not (np.all(np.isfinite(dq)) and np.all(np.isfinite(dp))):
            raise InvalidParameter("tangent vector has non-finite entries")
        object.__setattr__(self, "dq", dq)
        object.__setattr__(self, "dp", dp)

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.dq, self.dp])

    @classmethod
    def from_array(cls, w) -> "MTangentVector":
        w = np.asarray(w, dtype=float)
        n = w.size // 2
        return cls(w[:n], w[n:])


def _oscillator_frequencies(S, g, n):
    """omega_a for H0 = sum (p_a^2 + omega_a^2 q_a^2)/2, else None."""
    if np.any(g != 0.0):
        return None
    D = np.diag(np.diag(S))
    if np.any(S != D):
        return None
    kq, kp = np.diag(S)[:n], np.diag(S)[n:]
    if np.any(kp != 1.0) or np.any(kq < 0.0):
        return None
    return np.sqrt(kq)


class FreeFlow:
    """The family of maps Pi_t : M_F -> T*Q generated by the free Hamiltonian.

    ``mode="closed-form"`` requires H0 to be a polynomial of degree <= 2, in
    which case the flow is affine and evaluated exactly (matrix exponential,
    or explicit rotations/shears for diagonal oscillators).  ``"numeric"``
    integrates the free Hamilton equations with ``cfg``; ``"auto"`` picks the
    closed form whenever it exists.
    """

    def __init__(self, system: SplitSystem, mode: str = "auto",
                 cfg: IntegratorConfig = IntegratorConfig()):
        if mode not in MODES:
            raise InvalidParameter(f"unknown flow mode {mode!r}")
        if mode == "auto":
            mode = "closed-form" if system.free_is_quadratic else "numeric"
        if mode == "closed-form" and not system.free_is_quadratic:
            raise InvalidParameter("closed-form free flow needs a quadratic free Hamiltonian")
        if cfg.method == "rk45-adaptive":
            # tangent and base flows must share one deterministic step sequence
            cfg = IntegratorConfig("rk4-fixed", cfg.dt, cfg.atol, cfg.rtol, cfg.max_steps)
        self.system = system
        self.n = system.n
        self.mode = mode
        self.cfg = cfg
        self.H0 = system.free
        if mode == "closed-form":
            zero = np.zeros(2 * self.n)
            S = self.H0.hessian(zero)
            g = self.H0.gradient(zero)
            self._omega = _oscillator_frequencies(S, g, self.n)
            n = self.n
            A = np.zeros((2 * n + 1, 2 * n + 1))
            # y' = J (S y + g), J(a, b) = (b, -a)
            A[:n, :2 * n] = S[n:]
            A[n:2 * n, :2 * n] = -S[:n]
            A[:n, -1] = g[n:]
            A[n:2 * n, -1] = -g[:n]
            self._generator = A
        self._transition = lru_cache(maxsize=256)(self._transition_uncached)

    # closed form ------------------------------------------------------------

    def _transition_uncached(self, tau: float):
        n = self.n
        if tau == 0.0:
            return np.eye(2 * n), np.zeros(2 * n)
        if self._omega is not None:
            Phi = np.zeros((2 * n, 2 * n))
            for a, w in enumerate(self._omega):
                if w == 0.0:
                    c, s_over_w, w_s = 1.0, tau, 0.0
                else:
                    c, s = math.cos(w * tau), math.sin(w * tau)
                    s_over_w, w_s = s / w, w * s
                Phi[a, a] = c
                Phi[a, n + a] = s_over_w
                Phi[n + a, a] = -w_s
                Phi[n + a, n + a] = c
            return Phi, np.zeros(2 * n)
        E = expm(tau * self._generator)
        return E[:2 * n, :2 * n], E[:2 * n, -1]

    def transition(self, tau: float):
        """(Phi, psi) with Pi_{t_ref + tau}(m) = Phi @ m.y + psi (closed form)."""
        if self.mode != "closed-form":
            raise InvalidParameter("transition matrices exist only in closed-form mode")
        return self._transition(float(tau))

    # numeric ----------------------------------------------------------------

    def _problem(self, t0, y0, ncols):
        H0 = self.H0
        n2 = 2 * self.n
        if H0.poly is not None:
            coeffs, exps = H0.poly
            return OdeProblem(None, t0, y0, poly=PolyField(coeffs, exps, ncols),
                              poly_separable=H0.is_separable)

        def rhs(t, y):
            x = y[:n2]
            dx = H0.vector_field(x)
            if not ncols:
                return dx
            Hm = H0.hessian(x)
            JH = np.vstack([Hm[self.n:], -Hm[:self.n]])
            return np.concatenate([dx, (JH @ y[n2:].reshape(n2, ncols)).ravel()])

        return OdeProblem(rhs, t0, y0)

    def _integrate(self, y0, t0, t1, ncols=0):
        if t1 == t0:
            return np.array(y0, dtype=float)
        cfg = self.cfg
        if ncols and cfg.method == "stormer-verlet":
            cfg = IntegratorConfig("rk4-fixed", cfg.dt, cfg.atol, cfg.rtol, cfg.max_steps)
        sol = numeric.integrate(self._problem(t0, np.asarray(y0, dtype=float), ncols), t1, cfg)
        return sol.states[-1]

    def flow_samples(self, m: FreeSolutionPoint, times) -> np.ndarray:
        """Pi_t(m) for many t at once (one integration pass per direction)."""
        times = np.asarray(times, dtype=float)
        out = np.empty((times.size, 2 * self.n))
        if self.mode == "closed-form":
            for i, t in enumerate(times):
                out[i] = self.forward_array(m.y, m.t_ref, t)
            return out
        out[times == m.t_ref] = m.y
        for sign in (1.0, -1.0):
            idx = np.nonzero(sign * (times - m.t_ref) > 0)[0]
            if idx.size == 0:
                continue
            order = idx[np.argsort(sign * times[idx], kind="stable")]
            sol = numeric.integrate(self._problem(m.t_ref, m.y, 0), times[order[-1]],
                                    self.cfg, times[order])
            out[order] = sol.states
        return out

    # maps -------------------------------------------------------------------

    def forward_array(self, y, t_ref: float, t: float) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if t == t_ref:
            return y.copy()
        if self.mode == "closed-form":
            Phi, psi = self._transition(float(t - t_ref))
            return Phi @ y + psi
        return self._integrate(y, t_ref, t)

    def forward(self, m: FreeSolutionPoint, t: float) -> PhasePoint:
        return PhasePoint.from_array(self.forward_array(m.y, m.t_ref, t))

    def inverse(self, x: PhasePoint, t: float, t_ref: float = 0.0) -> FreeSolutionPoint:
        return FreeSolutionPoint.from_array(self.forward_array(x.as_array(), t, t_ref), t_ref)

    def jacobian(self, m: FreeSolutionPoint, t: float) -> np.ndarray:
        """D Pi_t at m, as a 2n x 2n matrix in m's chart."""
        n2 = 2 * self.n
        if t == m.t_ref:
            return np.eye(n2)
        if self.mode == "closed-form":
            return self._transition(float(t - m.t_ref))[0].copy()
        y0 = np.concatenate([m.y, np.eye(n2).ravel()])
        return self._integrate(y0, m.t_ref, t, ncols=n2)[n2:].reshape(n2, n2)

    def flow_and_jacobian(self, m: FreeSolutionPoint, t: float):
        n2 = 2 * self.n
        if t == m.t_ref:
            return m.y.copy(), np.eye(n2)
        if self.mode == "closed-form":
            Phi, psi = self._transition(float(t - m.t_ref))
            return Phi @ m.y + psi, Phi
        y0 = np.concatenate([m.y, np.eye(n2).ravel()])
        y = self._integrate(y0, m.t_ref, t, ncols=n2)
        return y[:n2], y[n2:].reshape(n2, n2)

    def tangent(self, m: FreeSolutionPoint, u: MTangentVector, t: float) -> MTangentVector:
        w = u.as_array()
        n2 = 2 * self.n
        if w.size != n2:
            raise InvalidParameter("tangent vector dimension does not match the system")
        if t == m.t_ref:
            return MTangentVector.from_array(w.copy())
        if self.mode == "closed-form":
            return MTangentVector.from_array(self._transition(float(t - m.t_ref))[0] @ w)
        y = self._integrate(np.concatenate([m.y, w]), m.t_ref, t, ncols=1)
        return MTangentVector.from_array(y[n2:])

    def tau(self, m: FreeSolutionPoint, t: float) -> TangentPoint:
        L0 = self.system.free_lagrangian
        if L0 is None:
            raise InvalidParameter("tau_t needs a free Lagrangian")
        return inverse_legendre(L0, self.forward(m, t))

    def rechart(self, m: FreeSolutionPoint, new_t_ref: float) -> FreeSolutionPoint:
        if new_t_ref == m.t_ref:
            return m
        return FreeSolutionPoint.from_array(self.forward_array(m.y, m.t_ref, new_t_ref), new_t_ref)

    def same_point(self, a: FreeSolutionPoint, b: FreeSolutionPoint, tol: float = 1e-8) -> bool:
        moved = self.rechart(a, b.t_ref).y
        return bool(np.max(np.abs(moved - b.y)) <= tol)


# operation-level entry points ----------------------------------------------


def free_flow_forward(flow: FreeFlow, m: FreeSolutionPoint, t: float) -> PhasePoint:
    return flow.forward(m, t)


def free_flow_inverse(flow: FreeFlow, x: PhasePoint, t: float, t_ref: float = 0.0) -> FreeSolutionPoint:
    return flow.inverse(x, t, t_ref)


def tau_map(flow: FreeFlow, m: FreeSolutionPoint, t: float) -> TangentPoint:
    return flow.tau(m, t)


def tangent_free_flow(flow: FreeFlow, m: FreeSolutionPoint, u: MTangentVector, t: float) -> MTangentVector:
    return flow.tangent(m, u, t)


def rechart(flow: FreeFlow, m: FreeSolutionPoint, new_t_ref: float) -> FreeSolutionPoint:
    return flow.rechart(m, new_t_ref)


def same_point(flow: FreeFlow, a: FreeSolutionPoint, b: FreeSolutionPoint, tol: float = 1e-8) -> bool:
    return flow.same_point(a, b, tol)
