"""Lagrangian and Hamiltonian systems, the free/interaction split, Legendre
transform machinery and the catalog of built-in systems.

States are stored as flat arrays ``y = (q_1..q_n, p_1..p_n)`` internally;
``PhasePoint`` and ``TangentPoint`` are the user-facing wrappers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from . import numeric
from .errors import (
    InsufficientSamples,
    InvalidParameter,
    NoConvergence,
    NonFiniteDerivative,
    NonFiniteValue,
    SingularJacobian,
    SingularMatrix,
    UnknownCatalogId,
)

REGULARITY_THRESHOLD = 1e-10


def _vector(values, name):
    arr = np.atleast_1d(np.asarray(values, dtype=float)).copy()
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidParameter(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameter(f"{name} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class TangentPoint:
    """A point (q, qdot) of the velocity phase space TQ."""

    q: np.ndarray
    qdot: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _vector(self.q, "q"))
        object.__setattr__(self, "qdot", _vector(self.qdot, "qdot"))
        if self.q.size != self.qdot.size:
            raise InvalidParameter("q and qdot must have equal length")

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class PhasePoint:
    """A point (q, p) of the momentum phase space T*Q."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", _vector(self.q, "q"))
        object.__setattr__(self, "p", _vector(self.p, "p"))
        if self.q.size != self.p.size:
            raise InvalidParameter("q and p must have equal length")

    @property
    def n(self) -> int:
        return self.q.size

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.q, self.p])

    @classmethod
    def from_array(cls, y) -> "PhasePoint":
        y = np.asarray(y, dtype=float)
        n = y.size // 2
        return cls(y[:n], y[n:])


def _flat(x) -> np.ndarray:
    if isinstance(x, PhasePoint):
        return x.as_array()
    return np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# Hamiltonians


class HamiltonianFn:
    """A function H(q, p) on T*Q, evaluated on flat states ``(q, p)``.

    ``grad`` returns ``(dH/dq, dH/dp)`` as one flat array; ``hess`` the
    2n x 2n Hessian.  Missing derivatives fall back to finite differences.
    Polynomial Hamiltonians additionally carry ``poly = (coeffs, exps)``,
    which unlocks the compiled integration kernels.
    """

    def __init__(self, n: int, func: Callable[[np.ndarray], float], grad=None, hess=None,
                 poly=None, name: str = ""):
        if n < 1:
            raise InvalidParameter("arity must be >= 1")
        self.n = n
        self._func = func
        self._grad = grad
        self._hess = hess
        self.poly = poly
        self.name = name

    def __call__(self, x) -> float:
        return self.value(_flat(x))

    def value(self, y: np.ndarray) -> float:
        return float(self._func(y))

    @property
    def has_analytic_gradient(self) -> bool:
        return self._grad is not None

    def gradient(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(y), dtype=float)
        return numeric.gradient_fd(self.value, y)

    def gradient_fd(self, y: np.ndarray) -> np.ndarray:
        return numeric.gradient_fd(self.value, np.asarray(y, dtype=float))

    def hessian(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._hess is not None:
            return np.asarray(self._hess(y), dtype=float)
        if self._grad is not None:
            Hm = numeric.jacobian_fd(self.gradient, y)
            return 0.5 * (Hm + Hm.T)
        return numeric.hessian_fd(self.value, y)

    def vector_field(self, y: np.ndarray) -> np.ndarray:
        """X_H = (dH/dp, -dH/dq)."""
        g = self.gradient(y)
        return np.concatenate([g[self.n:], -g[:self.n]])

    # polynomial structure -------------------------------------------------

    @property
    def degree(self) -> Optional[int]:
        if self.poly is None:
            return None
        coeffs, exps = self.poly
        live = exps[coeffs != 0.0]
        return int(live.sum(axis=1).max()) if len(live) else 0

    @property
    def is_zero(self) -> bool:
        return self.poly is not None and not np.any(self.poly[0] != 0.0)

    @property
    def is_separable(self) -> bool:
        """True when H = T(p) + V(q) (no term mixes q and p)."""
        if self.poly is None:
            return False
        coeffs, exps = self.poly
        n = self.n
        for c, e in zip(coeffs, exps):
            if c != 0.0 and e[:n].any() and e[n:].any():
                return False
        return True

    @property
    def depends_on_momenta(self) -> bool:
        if self.poly is None:
            return True
        coeffs, exps = self.poly
        return bool(np.any(exps[coeffs != 0.0][:, self.n:]))

    def __add__(self, other: "HamiltonianFn") -> "HamiltonianFn":
        return sum_hamiltonian(self, other)


def polynomial_hamiltonian(n: int, terms, name: str = "") -> HamiltonianFn:
    """Build H from ``terms = [(coef, [e_q1..e_qn, e_p1..e_pn]), ...]``."""
    terms = list(terms)
    if any(len(e) != 2 * n for _, e in terms):
        raise InvalidParameter(f"each exponent list must have length {2 * n}")
    coeffs = np.array([float(c) for c, _ in terms], dtype=np.float64)
    exps = np.array([list(e) for _, e in terms], dtype=np.int64).reshape(len(terms), 2 * n)
    if len(terms) == 0:
        coeffs = np.zeros(1)
        exps = np.zeros((1, 2 * n), dtype=np.int64)
    if np.any(exps < 0):
        raise InvalidParameter("exponents must be non-negative")
    if not np.all(np.isfinite(coeffs)):
        raise InvalidParameter("coefficients must be finite")
    coeffs = np.ascontiguousarray(coeffs)
    exps = np.ascontiguousarray(exps)

    def func(y):
        return numeric.poly_value(coeffs, exps, np.ascontiguousarray(y, dtype=float))

    def grad(y):
        out = np.empty(2 * n)
        numeric.poly_grad(coeffs, exps, np.ascontiguousarray(y, dtype=float), out)
        return out

    def hess(y):
        out = np.empty((2 * n, 2 * n))
        numeric.poly_hess(coeffs, exps, np.ascontiguousarray(y, dtype=float), out)
        return out

    return HamiltonianFn(n, func, grad, hess, poly=(coeffs, exps), name=name)


def sum_hamiltonian(a: HamiltonianFn, b: HamiltonianFn, name: str = "") -> HamiltonianFn:
    if a.n != b.n:
        raise InvalidParameter("cannot add Hamiltonians of different arity")
    poly = None
    if a.poly is not None and b.poly is not None:
        poly = (np.ascontiguousarray(np.concatenate([a.poly[0], b.poly[0]])),
                np.ascontiguousarray(np.vstack([a.poly[1], b.poly[1]])))
    grad = hess = None
    if a.has_analytic_gradient and b.has_analytic_gradient:
        def grad(y):
            return a.gradient(y) + b.gradient(y)

        if a._hess is not None and b._hess is not None:
            def hess(y):
                return a.hessian(y) + b.hessian(y)

    return HamiltonianFn(a.n, lambda y: a.value(y) + b.value(y), grad, hess, poly=poly,
                         name=name or f"{a.name}+{b.name}")


# ---------------------------------------------------------------------------
# Lagrangians


class LagrangianFn:
    """A function L(q, qdot) on TQ with optional analytic gradient.

    ``grad(q, qdot)`` returns the pair (dL/dq, dL/dqdot).
    """

    def __init__(self, n: int, func: Callable[[np.ndarray, np.ndarray], float], grad=None,
                 name: str = ""):
        if n < 1:
            raise InvalidParameter("arity must be >= 1")
        self.n = n
        self._func = func
        self._grad = grad
        self.name = name

    def __call__(self, x: TangentPoint) -> float:
        return self.value(x.q, x.qdot)

    def value(self, q, qdot) -> float:
        return float(self._func(np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)))

    @property
    def has_analytic_gradient(self) -> bool:
        return self._grad is not None

    def _split(self, f, z):
        return f(z[:self.n], z[self.n:])

    def gradient(self, q, qdot):
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if self._grad is not None:
            dq, dv = self._grad(q, qdot)
            return np.asarray(dq, dtype=float), np.asarray(dv, dtype=float)
        return self.gradient_fd(q, qdot)

    def gradient_fd(self, q, qdot):
        z = np.concatenate([np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)])
        g = numeric.gradient_fd(lambda w: self.value(w[:self.n], w[self.n:]), z)
        return g[:self.n], g[self.n:]

    def momentum(self, q, qdot) -> np.ndarray:
        """dL/dqdot."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if self._grad is not None:
            return np.asarray(self._grad(q, qdot)[1], dtype=float)
        return numeric.gradient_fd(lambda v: self.value(q, v), qdot)

    def velocity_hessian(self, q, qdot) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if self._grad is not None:
            W = numeric.jacobian_fd(lambda v: self.momentum(q, v), qdot)
            return 0.5 * (W + W.T)
        return numeric.hessian_fd(lambda v: self.value(q, v), qdot)


def mechanical_lagrangian(n: int, potential: HamiltonianFn, masses=None, name: str = "") -> LagrangianFn:
    """L = sum_a m_a qdot_a^2 / 2 - U(q), with U given as a function of the
    flat phase state (its momentum slots are ignored)."""
    m = np.ones(n) if masses is None else np.asarray(masses, dtype=float)
    zeros = np.zeros(n)

    def func(q, v):
        return 0.5 * float(np.dot(m * v, v)) - potential.value(np.concatenate([q, zeros]))

    def grad(q, v):
        return -potential.gradient(np.concatenate([q, zeros]))[:n], m * v

    return LagrangianFn(n, func, grad, name=name)


# ---------------------------------------------------------------------------
# Legendre machinery


def legendre_map(L: LagrangianFn, x: TangentPoint) -> PhasePoint:
    if L.n != x.n:
        raise InvalidParameter("Lagrangian arity does not match the point")
    try:
        p = L.momentum(x.q, x.qdot)
    except NonFiniteValue as exc:
        raise NonFiniteDerivative(str(exc)) from exc
    if not np.all(np.isfinite(p)):
        raise NonFiniteDerivative("momentum dL/dqdot is not finite")
    return PhasePoint(x.q, p)


def _regularity_scale(W) -> float:
    return max(1.0, float(np.prod(np.linalg.norm(W, axis=1))))


def regularity_check(L: LagrangianFn, x: TangentPoint) -> float:
    """det of the velocity Hessian d2L/dqdot dqdot at x."""
    if L.n != x.n:
        raise InvalidParameter("Lagrangian arity does not match the point")
    return float(np.linalg.det(L.velocity_hessian(x.q, x.qdot)))


def is_regular(L: LagrangianFn, x: TangentPoint, threshold: float = REGULARITY_THRESHOLD) -> bool:
    W = L.velocity_hessian(x.q, x.qdot)
    return abs(np.linalg.det(W)) >= threshold * _regularity_scale(W)


def inverse_legendre(L: LagrangianFn, x: PhasePoint, guess=None, tol: float = 1e-12,
                     max_iter: int = 50, threshold: float = REGULARITY_THRESHOLD) -> TangentPoint:
    """Solve dL/dqdot(q, qdot) = p for qdot by damped Newton iteration."""
    if L.n != x.n:
        raise InvalidParameter("Lagrangian arity does not match the point")
    q, p = x.q, x.p
    v = np.array(p if guess is None else guess, dtype=float)
    target = tol * max(1.0, float(np.max(np.abs(p))))

    def residual(v):
        try:
            r = L.momentum(q, v) - p
        except NonFiniteValue as exc:
            raise NonFiniteDerivative(str(exc)) from exc
        if not np.all(np.isfinite(r)):
            raise NonFiniteDerivative("momentum dL/dqdot is not finite")
        return r

    def checked(v):
        W = L.velocity_hessian(q, v)
        if abs(np.linalg.det(W)) < threshold * _regularity_scale(W):
            raise SingularJacobian(f"velocity Hessian is degenerate (det={np.linalg.det(W):.3g})")
        return W

    r = residual(v)
    rnorm = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        W = checked(v)
        if rnorm <= target:
            return TangentPoint(q, v)
        try:
            dv = numeric.solve_linear(W, -r)
        except SingularMatrix as exc:
            raise SingularJacobian(str(exc)) from exc
        alpha = 1.0
        while True:
            v_try = v + alpha * dv
            r_try = residual(v_try)
            n_try = float(np.max(np.abs(r_try)))
            if n_try < rnorm or alpha < 1e-6:
                break
            alpha *= 0.5
        if n_try >= rnorm:
            # stuck at the noise floor of the derivative evaluation
            if rnorm <= 1e3 * target:
                return TangentPoint(q, v)
            raise NoConvergence(f"Newton stalled with residual {rnorm:.3g}")
        v, r, rnorm = v_try, r_try, n_try
    if rnorm <= target:
        checked(v)
        return TangentPoint(q, v)
    raise NoConvergence(f"Newton did not converge in {max_iter} iterations (residual {rnorm:.3g})")


def hamiltonian_from_lagrangian(L: LagrangianFn, x: TangentPoint) -> float:
    """h = qdot . dL/dqdot - L."""
    p = legendre_map(L, x).p
    return float(np.dot(x.qdot, p)) - L(x)


def euler_lagrange_residual(L: LagrangianFn, times, q) -> np.ndarray:
    """Residual d/dt(dL/dqdot) - dL/dq along a sampled configuration path.

    Velocities and the time derivative of the momentum both use second-order
    central differences, so the residual of a true solution is O(dt^2).
    Returns an array of shape (len(times) - 4, n) for samples 2..N-3.
    """
    t = np.asarray(times, dtype=float)
    Q = np.asarray(q, dtype=float)
    if Q.ndim == 1:
        Q = Q[:, None]
    if t.size < 5 or Q.shape[0] != t.size:
        raise InsufficientSamples("need at least 5 uniformly spaced samples")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.ptp(dt) > 1e-9 * abs(dt[0]):
        raise InsufficientSamples("samples must be uniformly spaced and increasing")
    h = dt[0]
    V = (Q[2:] - Q[:-2]) / (2 * h)          # velocities at samples 1..N-2
    P = np.array([L.momentum(Q[i + 1], V[i]) for i in range(len(V))])
    dP = (P[2:] - P[:-2]) / (2 * h)          # samples 2..N-3
    dLdq = np.array([L.gradient(Q[i + 2], V[i + 1])[0] for i in range(len(dP))])
    return dP - dLdq


# ---------------------------------------------------------------------------
# split systems and catalog


@dataclass(frozen=True)
class SplitSystem:
    """H = H0 + H1 (and optionally L0, L) for one dynamical system."""

    name: str
    n: int
    free: HamiltonianFn
    interaction: HamiltonianFn
    free_lagrangian: Optional[LagrangianFn] = None
    lagrangian: Optional[LagrangianFn] = None
    params: Mapping[str, float] = field(default_factory=dict)
    default_x0: Optional[tuple] = None
    description: str = ""
    fixture: bool = False
    total: HamiltonianFn = field(init=False, repr=False)

    def __post_init__(self):
        if self.free.n != self.n or self.interaction.n != self.n:
            raise InvalidParameter("free and interaction arity must equal n")
        object.__setattr__(self, "total", sum_hamiltonian(self.free, self.interaction, name=self.name))

    @property
    def free_is_quadratic(self) -> bool:
        d = self.free.degree
        return d is not None and d <= 2


@dataclass(frozen=True)
class SystemSpec:
    """Either a catalog id (with parameter overrides) or explicit polynomial
    coefficient tables for H0 and H1."""

    id: Optional[str] = None
    params: Mapping[str, float] = field(default_factory=dict)
    n: Optional[int] = None
    free_terms: Optional[tuple] = None
    interaction_terms: Optional[tuple] = None


def _e(n, q=(), p=()):
    """Exponent row with given (index, power) pairs on q and p."""
    row = [0] * (2 * n)
    for i, k in q:
        row[i] = k
    for i, k in p:
        row[n + i] = k
    return row


def _oscillator_terms(omegas):
    n = len(omegas)
    terms = []
    for a, w in enumerate(omegas):
        terms.append((0.5, _e(n, p=[(a, 2)])))
        if w != 0.0:
            terms.append((0.5 * w * w, _e(n, q=[(a, 2)])))
    return terms


def _mechanical(name, n, free_terms, interaction_terms, params, **kw):
    H0 = polynomial_hamiltonian(n, free_terms, name="H0")
    H1 = polynomial_hamiltonian(n, interaction_terms, name="H1")
    L0 = L = None
    kinetic, U0 = _split_kinetic(n, free_terms)
    if kinetic and not H1.depends_on_momenta:
        L0 = mechanical_lagrangian(n, U0, name="L0")
        L = mechanical_lagrangian(n, sum_hamiltonian(U0, H1), name="L")
    return SplitSystem(name=name, n=n, free=H0, interaction=H1, free_lagrangian=L0,
                       lagrangian=L, params=dict(params), **kw)


def _split_kinetic(n, terms):
    """Return (True, U) when terms are sum_a p_a^2/2 + U(q)."""
    kin = set()
    pot = []
    for c, e in terms:
        e = list(e)
        if any(e[n:]):
            pe = e[n:]
            if any(e[:n]) or c != 0.5 or sorted(pe) != [0] * (n - 1) + [2]:
                return False, None
            kin.add(pe.index(2))
        else:
            pot.append((c, e))
    if kin != set(range(n)):
        return False, None
    return True, polynomial_hamiltonian(n, pot, name="U0")


def _param(params, key, default, positive=False):
    val = float(params.get(key, default))
    if not math.isfinite(val) or (positive and val <= 0):
        raise InvalidParameter(f"parameter {key!r} is invalid: {val}")
    return val


def _harmonic_quartic(params):
    w = _param(params, "omega", 1.0, positive=True)
    eps = _param(params, "epsilon", 0.1)
    return _mechanical("harmonic+quartic", 1, _oscillator_terms([w]), [(eps / 4.0, _e(1, q=[(0, 4)]))],
                       {"omega": w, "epsilon": eps}, default_x0=(1.0, 0.0),
                       description="H0 = (p^2 + omega^2 q^2)/2, H1 = epsilon q^4/4")


def _free_harmonic(params):
    w = _param(params, "omega", 1.0, positive=True)
    return _mechanical("free+harmonic", 1, _oscillator_terms([0.0]), [(0.5 * w * w, _e(1, q=[(0, 2)]))],
                       {"omega": w}, default_x0=(1.0, 0.0),
                       description="H0 = p^2/2, H1 = omega^2 q^2/2")


def _anisotropic(params):
    w1 = _param(params, "omega1", 1.0, positive=True)
    w2 = _param(params, "omega2", math.sqrt(2.0), positive=True)
    eps = _param(params, "epsilon", 0.1)
    return _mechanical("anisotropic-2d", 2, _oscillator_terms([w1, w2]),
                       [(eps, _e(2, q=[(0, 2), (1, 2)]))],
                       {"omega1": w1, "omega2": w2, "epsilon": eps}, default_x0=(1.0, 1.0, 0.0, 0.0),
                       description="H0 = sum (p_a^2 + omega_a^2 q_a^2)/2, H1 = epsilon q1^2 q2^2")


def _degenerate(params):
    w = _param(params, "omega", 1.0, positive=True)
    sys = _mechanical("degenerate-lagrangian", 1, _oscillator_terms([w]), [], {"omega": w},
                      default_x0=(1.0, 0.0), fixture=True,
                      description="test fixture: harmonic H0 paired with the degenerate L0 = q qdot")

    def func(q, v):
        return float(np.dot(q, v))

    def grad(q, v):
        return np.array(v, dtype=float), np.array(q, dtype=float)

    L0 = LagrangianFn(1, func, grad, name="L0 (degenerate)")
    return SplitSystem(name=sys.name, n=1, free=sys.free, interaction=sys.interaction,
                       free_lagrangian=L0, lagrangian=L0, params=sys.params,
                       default_x0=sys.default_x0, description=sys.description, fixture=True)


CATALOG: dict[str, Callable[[Mapping], SplitSystem]] = {
    "harmonic+quartic": _harmonic_quartic,
    "free+harmonic": _free_harmonic,
    "anisotropic-2d": _anisotropic,
    "degenerate-lagrangian": _degenerate,
}


def load_system(spec: SystemSpec | str) -> SplitSystem:
    if isinstance(spec, str):
        spec = SystemSpec(id=spec)
    if spec.id is not None:
        try:
            factory = CATALOG[spec.id]
        except KeyError:
            raise UnknownCatalogId(f"unknown catalog system {spec.id!r}") from None
        return factory(dict(spec.params))
    n = spec.n
    if n is None or int(n) != n or n <= 0:
        raise InvalidParameter(f"dimension n must be a positive integer, got {n!r}")
    if not spec.free_terms:
        raise InvalidParameter("explicit systems need a free Hamiltonian table")
    return _mechanical("custom", int(n), spec.free_terms, spec.interaction_terms or [],
                       dict(spec.params))
