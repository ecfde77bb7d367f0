"""The three evolution engines and the cross-picture equivalence harness.

* direct (phase space): integrate Hamilton's equations for H = H0 + H1.
* heisenberg (space of motions): the state is the fixed point x0 at t0;
  what evolves are the observables q o tau_t, p o tau_t.
* interaction (space of free motions): the state m(t) moves on M_F along the
  Hamiltonian vector field of the pulled-back interaction H1 o Pi_t, and
  measured values are recovered as Pi_t m(t).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import numeric
from .errors import MethodMismatch, MFPictureError, PathDisagreement
from .freespace import FreeFlow, FreeSolutionPoint, MTangentVector
from .numeric import IntegratorConfig, OdeProblem, PolyField
from .systems import PhasePoint, SplitSystem

log = logging.getLogger(__name__)

PICTURES = ("direct", "heisenberg", "interaction")
REFERENCE_DT = 1e-5
PATH_TOLERANCE = 1e-4


@dataclass
class Trajectory:
    picture: str
    times: np.ndarray
    states: np.ndarray                      # (samples, 2n) phase values q, p
    mf_coords: Optional[np.ndarray] = None  # (samples, 2n) chart coordinates of m(t)
    mf_t_ref: Optional[float] = None
    diagnostics: dict = field(default_factory=dict)
    # heisenberg picture: the fixed state (x0, t0)
    fixed_state: Optional[tuple] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.size:
            raise ValueError("times and states differ in length")
        if self.mf_coords is not None and len(self.mf_coords) != self.times.size:
            raise ValueError("times and mf_coords differ in length")

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    @property
    def q(self) -> np.ndarray:
        return self.states[:, :self.n]

    @property
    def p(self) -> np.ndarray:
        return self.states[:, self.n:]

    def phase_point(self, i: int) -> PhasePoint:
        return PhasePoint.from_array(self.states[i])

    def mf_point(self, i: int) -> FreeSolutionPoint:
        return FreeSolutionPoint.from_array(self.mf_coords[i], self.mf_t_ref)


def sample_grid(t0: float, t_end: float, samples) -> np.ndarray:
    """``samples`` is either a count (uniform grid incl. endpoints) or explicit times."""
    if t_end == t0:
        return np.array([float(t0)])
    if np.isscalar(samples):
        count = int(samples)
        if count < 2:
            raise ValueError("need at least two samples")
        return np.linspace(t0, t_end, count)
    times = np.atleast_1d(np.asarray(samples, dtype=float))
    if times.size > 1 and np.any(np.diff(times) * np.sign(t_end - t0) <= 0):
        raise ValueError("sample times must be strictly monotone towards t_end")
    return times


def _diagnostics(system: SplitSystem, states: np.ndarray) -> dict:
    H0 = np.array([system.free.value(y) for y in states])
    H1 = np.array([system.interaction.value(y) for y in states])
    H = np.array([system.total.value(y) for y in states])
    return {"H": H, "H0": H0, "H1": H1}


def _flat_x0(x0) -> np.ndarray:
    return x0.as_array() if isinstance(x0, PhasePoint) else np.asarray(x0, dtype=float)


def full_problem(system: SplitSystem, t0: float, y0: np.ndarray) -> OdeProblem:
    H = system.total
    n = system.n
    separable = None
    if H.is_separable:
        zeros = np.zeros(n)
        separable = (lambda p: H.gradient(np.concatenate([zeros, p]))[n:],
                     lambda q: H.gradient(np.concatenate([q, zeros]))[:n])
    poly = PolyField(*H.poly) if H.poly is not None else None
    return OdeProblem(lambda t, y: H.vector_field(y), t0, y0, poly=poly, separable=separable,
                      poly_separable=H.is_separable)


def _full_flow(system, x0, t0, times, cfg):
    y0 = _flat_x0(x0)
    if times.size == 1 and times[0] == t0:
        return y0[None, :].copy()
    sol = numeric.integrate(full_problem(system, t0, y0), times[-1], cfg, times)
    return sol.states


def evolve_direct(system: SplitSystem, x0, t0: float, t_end: float,
                  cfg: IntegratorConfig = IntegratorConfig(), samples=1001) -> Trajectory:
    times = sample_grid(t0, t_end, samples)
    states = _full_flow(system, x0, t0, times, cfg)
    return Trajectory("direct", times, states, diagnostics=_diagnostics(system, states))


def evolve_heisenberg(system: SplitSystem, x0, t0: float, sample_times,
                      cfg: IntegratorConfig = IntegratorConfig()) -> Trajectory:
    """The state stays at the point of M charted by (x0, t0); each sample is
    the value of the time-dependent observables q o tau_t, p o tau_t there."""
    times = np.atleast_1d(np.asarray(sample_times, dtype=float))
    y0 = _flat_x0(x0)
    t_last = times[-1]
    values = _full_flow(system, y0, t0, times, cfg) if t_last != t0 or times.size > 1 \
        else y0[None, :].copy()
    return Trajectory("heisenberg", times, values, diagnostics=_diagnostics(system, values),
                      fixed_state=(tuple(y0), float(t0)))


# interaction picture ---------------------------------------------------------


def pullback_interaction(flow: FreeFlow, system: SplitSystem, m: FreeSolutionPoint, t: float) -> float:
    """(Pi_t^* H1)(m) = H1(Pi_t m)."""
    return system.interaction.value(flow.forward_array(m.y, m.t_ref, t))


def _symplectic_dual(g: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([g[n:], -g[:n]])


def _chain_gradient(flow, system, y, t_ref, t):
    m = FreeSolutionPoint.from_array(y, t_ref)
    x, D = flow.flow_and_jacobian(m, t)
    return D.T @ system.interaction.gradient(x)


def interaction_field_paths(flow: FreeFlow, system: SplitSystem, m: FreeSolutionPoint,
                            t: float) -> tuple[np.ndarray, np.ndarray]:
    """X_{Pi_t^* H1}(m) by the chain rule and by finite differences."""
    n = system.n
    chain = _symplectic_dual(_chain_gradient(flow, system, m.y, m.t_ref, t), n)
    fd = _symplectic_dual(numeric.gradient_fd(
        lambda y: pullback_interaction(flow, system, FreeSolutionPoint.from_array(y, m.t_ref), t),
        m.y), n)
    return chain, fd


def interaction_vector_field(flow: FreeFlow, system: SplitSystem, m: FreeSolutionPoint, t: float,
                             check: bool = False) -> MTangentVector:
    """X_{Pi_t^* H1}(m) = J (D Pi_t)^T grad H1(Pi_t m).

    With ``check=True`` the finite-difference path is evaluated as well and a
    PathDisagreement is raised if the two differ by more than 1e-4.
    """
    if check:
        chain, fd = interaction_field_paths(flow, system, m, t)
        gap = float(np.max(np.abs(chain - fd)))
        if gap > PATH_TOLERANCE:
            raise PathDisagreement(f"chain-rule and finite-difference fields differ by {gap:.3g} at t={t}")
        return MTangentVector.from_array(chain)
    return MTangentVector.from_array(
        _symplectic_dual(_chain_gradient(flow, system, m.y, m.t_ref, t), system.n))


def evolve_interaction(flow: FreeFlow, system: SplitSystem, m0: FreeSolutionPoint, t0: float,
                       t_end: float, cfg: IntegratorConfig = IntegratorConfig(), samples=1001,
                       probes: int = 5) -> Trajectory:
    """Integrate dm/dt = X_{Pi_t^* H1}(m) in the fixed chart t_ref = t0."""
    if cfg.method == "stormer-verlet":
        raise MethodMismatch("the interaction-picture field is time dependent and not separable")
    if m0.t_ref != t0:
        m0 = flow.rechart(m0, t0)
    times = sample_grid(t0, t_end, samples)
    n = system.n

    if system.interaction.is_zero:
        coords = np.tile(m0.y, (times.size, 1))
    else:
        def rhs(t, y):
            return _symplectic_dual(_chain_gradient(flow, system, y, t0, t), n)

        if times.size == 1:
            coords = m0.y[None, :].copy()
        else:
            sol = numeric.integrate(OdeProblem(rhs, t0, m0.y), times[-1], cfg, times)
            coords = sol.states
        for i in np.unique(np.linspace(0, times.size - 1, probes).astype(int)) if probes else ():
            interaction_vector_field(flow, system, FreeSolutionPoint.from_array(coords[i], t0),
                                     times[i], check=True)

    traj = Trajectory("interaction", times, np.empty_like(coords), mf_coords=coords, mf_t_ref=float(t0))
    return reconstruct(flow, traj, system)


def reconstruct(flow: FreeFlow, interaction_traj: Trajectory,
                system: Optional[SplitSystem] = None) -> Trajectory:
    """Measured values (q(t), p(t)) = Pi_t m(t) at each sample."""
    tr = interaction_traj
    if tr.mf_coords is None:
        raise ValueError("trajectory carries no M_F coordinates")
    states = np.array([flow.forward_array(y, tr.mf_t_ref, t) for y, t in zip(tr.mf_coords, tr.times)])
    system = system or flow.system
    return Trajectory("interaction", tr.times, states, mf_coords=tr.mf_coords, mf_t_ref=tr.mf_t_ref,
                      diagnostics=_diagnostics(system, states))


# theorem-level checks --------------------------------------------------------


def derivative_residual(system: SplitSystem, traj: Trajectory, indices: Sequence[int]) -> float:
    """Max |central-difference dx/dt - X_H(x)| at interior sample indices."""
    worst = 0.0
    t, X = traj.times, traj.states
    for i in indices:
        if i <= 0 or i >= t.size - 1:
            raise ValueError("derivative check needs interior samples")
        dxdt = (X[i + 1] - X[i - 1]) / (t[i + 1] - t[i - 1])
        worst = max(worst, float(np.max(np.abs(dxdt - system.total.vector_field(X[i])))))
    return worst


def vector_field_decomposition(flow: FreeFlow, system: SplitSystem, m: FreeSolutionPoint, t: float,
                               h: float = 1e-4) -> tuple[float, float]:
    """Split d/dt (Pi_t m(t)) into its free and interaction parts.

    Returns the deviations |d/dt Pi_t(m) - X_H0(Pi_t m)| (free drift at fixed m,
    by central differences in t) and |D Pi_t X_{Pi_t^* H1}(m) - X_H1(Pi_t m)|
    (the conjugated interaction field).
    """
    x, D = flow.flow_and_jacobian(m, t)
    dPi = (flow.forward_array(m.y, m.t_ref, t + h) - flow.forward_array(m.y, m.t_ref, t - h)) / (2 * h)
    free_dev = float(np.max(np.abs(dPi - system.free.vector_field(x))))
    Xm = interaction_vector_field(flow, system, m, t).as_array()
    int_dev = float(np.max(np.abs(D @ Xm - system.interaction.vector_field(x))))
    return free_dev, int_dev


# equivalence harness ---------------------------------------------------------


@dataclass
class Comparison:
    picture: str
    dq: np.ndarray  # per-sample max_a |q_a - q_a^ref|
    dp: np.ndarray
    passed: bool

    @property
    def max_deviation(self) -> float:
        return float(max(self.dq.max(initial=0.0), self.dp.max(initial=0.0)))


@dataclass
class EquivalenceReport:
    system: str
    times: np.ndarray
    tolerance: float
    comparisons: dict = field(default_factory=dict)
    energy_drift: dict = field(default_factory=dict)
    trajectories: dict = field(default_factory=dict)
    errors: dict = field(default_factory=dict)
    skipped: bool = False

    @property
    def max_deviation(self) -> float:
        return max((c.max_deviation for c in self.comparisons.values()), default=0.0)

    @property
    def passed(self) -> bool:
        return not self.errors and all(c.passed for c in self.comparisons.values())

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "tolerance": self.tolerance,
            "t0": float(self.times[0]),
            "t_end": float(self.times[-1]),
            "samples": int(self.times.size),
            "comparisons": {
                name: {
                    "against": "direct-reference",
                    "max_deviation": c.max_deviation,
                    "max_dq": float(c.dq.max(initial=0.0)),
                    "max_dp": float(c.dp.max(initial=0.0)),
                    "argmax_time": float(self.times[int(np.argmax(np.maximum(c.dq, c.dp)))]),
                    "passed": c.passed,
                }
                for name, c in self.comparisons.items()
            },
            "comparisons_skipped": self.skipped,
            "max_energy_drift": {k: float(np.max(np.abs(v))) for k, v in self.energy_drift.items()},
            "engine_errors": dict(self.errors),
            "max_deviation": self.max_deviation,
            "passed": self.passed,
        }


def equivalence_report(system: SplitSystem, x0, t0: float, t_end: float,
                       cfg: IntegratorConfig = IntegratorConfig(), samples=1001, tol: float = 1e-6,
                       flow: Optional[FreeFlow] = None, pictures: Sequence[str] = PICTURES,
                       reference_dt: float = REFERENCE_DT) -> EquivalenceReport:
    """Run the requested engines from the same initial state and compare the
    Heisenberg samples and the reconstructed interaction-picture samples with
    a fine-step RK4 integration of the direct equations."""
    y0 = _flat_x0(x0)
    times = sample_grid(t0, t_end, samples)
    report = EquivalenceReport(system.name, times, tol)
    flow = flow or FreeFlow(system)

    runners = {
        "direct": lambda: evolve_direct(system, y0, t0, t_end, cfg, times),
        "heisenberg": lambda: evolve_heisenberg(system, y0, t0, times, cfg),
        "interaction": lambda: evolve_interaction(
            flow, system, flow.inverse(PhasePoint.from_array(y0), t0, t0), t0, t_end, cfg, times),
    }
    for name in PICTURES:
        if name not in pictures:
            continue
        try:
            report.trajectories[name] = runners[name]()
        except MFPictureError as exc:
            log.warning("%s engine failed: %s", name, exc)
            report.errors[name] = f"{type(exc).__name__}: {exc}"

    H_start = system.total.value(y0)
    for name, tr in report.trajectories.items():
        report.energy_drift[name] = tr.diagnostics["H"] - H_start

    compared = [p for p in ("heisenberg", "interaction") if p in report.trajectories]
    if not compared:
        report.skipped = True
        return report
    ref_cfg = IntegratorConfig("rk4-fixed", reference_dt, max_steps=cfg.max_steps)
    try:
        reference = _full_flow(system, y0, t0, times, ref_cfg)
    except MFPictureError as exc:
        report.errors["reference"] = f"{type(exc).__name__}: {exc}"
        return report
    n = system.n
    for name in compared:
        diff = np.abs(report.trajectories[name].states - reference)
        dq, dp = diff[:, :n].max(axis=1), diff[:, n:].max(axis=1)
        passed = bool(max(dq.max(), dp.max()) <= tol)
        report.comparisons[name] = Comparison(name, dq, dp, passed)
    return report
