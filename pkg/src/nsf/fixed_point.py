"""Picard iteration of the map (m, xi, pi) -> (rho u, theta, p_M).

One application freezes the iterate, solves the velocity problem, reads
the density off the new velocity, solves the temperature problem with the
old ``(m, xi)`` and forms the truncated pressure ``T_M(rho) R theta`` at
quadrature points.  The damped iteration ``s <- (1 - alpha) s + alpha T(s)``
stops once the relative change in every component is below ``tol``.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .audit import EstimateAudit
from .coefficients import BoundaryData, BoundedLaw, check_viscosity_pair
from .density import (DensityField, ScalarPotential, audit_momentum_norm, recover_density,
                      solve_scalar_potential, verify_weak_continuity)
from .mesh import DIRICHLET_TAGS, NEUMANN_TAGS, BoundaryTag, Mesh
from .momentum import MomentumProblem, MomentumSolution, audit_momentum_estimate, dual_exponent, solve_momentum, v_norm
from .temperature import (TemperatureProblem, TemperatureSolution, audit_min_max, audit_temperature_estimate,
                          energy_norm, solve_temperature)

log = logging.getLogger(__name__)

STAGES = ("momentum", "potential", "density", "temperature", "pressure")


class StageError(RuntimeError):
    """Sub-solver failure tagged with the pipeline stage."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


class DivergenceError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def truncate(z, M: float):
    """``z`` on ``[0, M]`` and ``M`` everywhere else (negative values included)."""
    if not M > 0:
        raise ValueError("truncation level must be positive")
    z = np.asarray(z, dtype=float)
    out = np.where((z >= 0.0) & (z <= M), z, M)
    return float(out) if out.ndim == 0 else out


def relation_r(p: float) -> float:
    """Density exponent tied to the velocity exponent: ``r = 2p / (p - 4)``."""
    if not p > 4:
        raise ValueError("p must exceed 4")
    return 2.0 * p / (p - 4.0)


@dataclass
class Numerics:
    q: float = 3.0
    r: float = 10.0
    M: float = 11.84
    alpha: float = 0.5
    tol: float = 1e-8
    max_iter: int = 100
    solver: str = "direct"
    scheme: str = "centered"
    eps_stag: float | None = None
    eps_align: float = 1e-8
    divergence_factor: float = 1e6

    def __post_init__(self):
        if not self.q > 2:
            raise ValueError("q must exceed 2")
        if not self.r > 2:
            raise ValueError("r must exceed 2")
        if not 0 < self.alpha <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.tol > 0:
            raise ValueError("tolerance must be positive")
        if not self.M > 0:
            raise ValueError("truncation level must be positive")

    @property
    def p(self) -> float:
        return dual_exponent(self.q)


@dataclass
class Setup:
    """Everything one fixed-point run needs."""

    mesh: Mesh
    data: BoundaryData
    mu: BoundedLaw
    lam: BoundedLaw
    gamma: BoundedLaw
    k: BoundedLaw
    h_wall: BoundedLaw
    h_out: BoundedLaw
    numerics: Numerics = field(default_factory=Numerics)
    _potential: ScalarPotential | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        check_viscosity_pair(self.mu, self.lam)

    def potential(self) -> ScalarPotential:
        if self._potential is None:
            self._potential = solve_scalar_potential(self.mesh, self.data.g)
        return self._potential

    def with_numerics(self, **changes) -> "Setup":
        return dataclasses.replace(self, numerics=dataclasses.replace(self.numerics, **changes))

    def clamp_events(self) -> dict:
        return {name: getattr(self, name).clamp_events for name in ("mu", "lam", "gamma", "k", "h_wall", "h_out")}

    @property
    def theta0_sup(self) -> float:
        return self.data.theta0_bounds[1]


@dataclass
class FieldState:
    m: np.ndarray  # (T, 3, 2)
    xi: np.ndarray  # (N,)
    pi: np.ndarray  # (N,)

    def __post_init__(self):
        for name in ("m", "xi", "pi"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"iterate component {name} is not finite")
            setattr(self, name, arr)

    def blend(self, other: "FieldState", alpha: float) -> "FieldState":
        if alpha == 1.0:
            return FieldState(other.m.copy(), other.xi.copy(), other.pi.copy())
        a, b = 1.0 - alpha, alpha
        return FieldState(a * self.m + b * other.m, a * self.xi + b * other.xi, a * self.pi + b * other.pi)


def initial_state(setup: Setup) -> FieldState:
    """Zero momentum, inlet temperature, reference pressure."""
    mesh, d = setup.mesh, setup.data
    m = np.zeros((mesh.n_triangles, fem.TRIANGLE_RULE.size, 2))
    xi = np.full(mesh.n_vertices, d.theta_in)
    pi = np.full(mesh.n_vertices, truncate(d.rho0, setup.numerics.M) * d.R_specific * d.theta_in)
    return FieldState(m, xi, pi)


@dataclass
class Derived:
    u: np.ndarray
    w: np.ndarray
    density: DensityField
    theta: np.ndarray
    pressure_q: np.ndarray
    momentum: MomentumSolution
    temperature: TemperatureSolution

    @property
    def rho(self) -> np.ndarray:
        return self.density.rho


def state_norms(mesh: Mesh, s: FieldState, numerics: Numerics) -> np.ndarray:
    return np.array([fem.lp_norm(mesh, s.m, numerics.q), energy_norm(mesh, s.xi),
                     fem.lp_norm(mesh, fem.at_quad(mesh, s.pi), numerics.r)])


def difference_norms(mesh: Mesh, a: FieldState, b: FieldState, numerics: Numerics) -> tuple:
    """Absolute and relative component-wise distances."""
    diff = FieldState(a.m - b.m, a.xi - b.xi, a.pi - b.pi)
    absolute = state_norms(mesh, diff, numerics)
    scale = np.maximum(state_norms(mesh, a, numerics), state_norms(mesh, b, numerics))
    relative = np.where(scale > 0, absolute / np.where(scale > 0, scale, 1.0), 0.0)
    return absolute, relative


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (StageError, KeyboardInterrupt):
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise StageError(name, exc) from exc


def apply_T(state: FieldState, setup: Setup):
    """One application of the map; returns the new state, derived fields and a report row."""
    mesh, data, num = setup.mesh, setup.data, setup.numerics
    mp = MomentumProblem(mesh, state.m, state.xi, state.pi, setup.mu, setup.lam, setup.gamma, data)
    msol = _stage("momentum", solve_momentum, mp, num.solver)
    mom_audit = audit_momentum_estimate(msol, mp, num.q)
    potential = _stage("potential", setup.potential)
    dens = _stage("density", recover_density, mesh, msol.u, potential, data.rho0, num.eps_stag, num.eps_align,
                  num.solver)
    tp = TemperatureProblem(mesh, state.m, state.xi, setup.k, setup.h_wall, setup.h_out, data)
    tsol = _stage("temperature", solve_temperature, tp, num.scheme, num.solver)
    temp_audit = audit_temperature_estimate(tsol, tp)
    minmax = audit_min_max(tsol, data.theta0_bounds)

    u_q = fem.at_quad(mesh, msol.u)
    theta_q = fem.at_quad(mesh, tsol.theta)
    m_new = dens.rho[..., None] * u_q
    p_q = truncate(dens.rho, num.M) * data.R_specific * theta_q
    pi_new = fem.lumped_projection(mesh, p_q)
    new = _stage("pressure", FieldState, m_new, tsol.theta.copy(), pi_new)
    derived = Derived(msol.u, msol.w, dens, tsol.theta, p_q, msol, tsol)
    row = {
        "momentum_audit": mom_audit,
        "temperature_audit": temp_audit,
        "minmax": minmax,
        "momentum_residual": msol.residual,
        "temperature_residual": tsol.residual,
        "anomalies": dens.anomalies,
        "corrected_fraction": float(np.mean(dens.corrected)),
        "stagnation_fraction": float(np.mean(dens.stagnation)),
        "truncation_fraction": truncation_activity(mesh, dens.rho, num.M),
        "max_rho": float(dens.rho.max()),
        "min_rho": float(dens.rho.min()),
    }
    return new, derived, row


def truncation_activity(mesh: Mesh, rho: np.ndarray, M: float) -> float:
    """Measure of ``{rho > M}`` relative to the domain, by quadrature."""
    w = fem.quad_weights(mesh)
    return float(np.sum(w[rho > M]) / mesh.area)


# ----------------------------------------------------------------------
@dataclass
class IterationReport:
    rows: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    radii: dict | None = None
    clamp_events: dict = field(default_factory=dict)

    @property
    def update_history(self) -> np.ndarray:
        return np.array([r["relative_update"] for r in self.rows]) if self.rows else np.zeros((0, 3))

    def monotone_after(self, start: int = 3) -> bool:
        """Strict decrease of every update norm from iteration ``start`` onward."""
        h = np.array([r["absolute_update"] for r in self.rows])
        if len(h) <= start:
            return True
        tail = h[start - 1:]
        return bool(np.all(np.diff(tail, axis=0) < 0))

    @property
    def audits_passed(self) -> bool:
        final = self.rows[-1] if self.rows else None
        if final is None:
            return True
        audits = [final["momentum_audit"], final["temperature_audit"]]
        ok = all(a.passed for a in audits if a.asserted)
        if self.radii:
            ok = ok and all(a.passed for a in self.radii.values() if isinstance(a, EstimateAudit) and a.asserted)
        return bool(ok)


def iterate(setup: Setup, initial: FieldState | None = None, alpha: float | None = None,
            tol: float | None = None, max_iter: int | None = None):
    """Damped Picard iteration; returns ``(state, derived, report)``.

    ``state`` is the last evaluated iterate and ``derived`` the fields
    computed from it, so at convergence ``state`` is (to ``tol``) a fixed
    point and ``derived`` holds the corresponding solution.
    """
    num = setup.numerics
    alpha = num.alpha if alpha is None else alpha
    tol = num.tol if tol is None else tol
    max_iter = num.max_iter if max_iter is None else max_iter
    if not 0 < alpha <= 1:
        raise ValueError("damping must lie in (0, 1]")
    mesh = setup.mesh
    state = initial if initial is not None else initial_state(setup)
    report = IterationReport()
    first = None
    derived = None
    for it in range(1, max_iter + 1):
        image, derived, row = apply_T(state, setup)
        absolute, relative = difference_norms(mesh, image, state, num)
        row.update(iteration=it, absolute_update=absolute, relative_update=relative,
                   radii=check_radii(state, derived, setup),
                   continuity=verify_weak_continuity(mesh, derived.rho, derived.u, setup.data.g))
        report.rows.append(row)
        report.iterations = it
        if first is None:
            first = np.where(absolute > 0, absolute, np.inf)
        grown = it > 1 and np.any(absolute > num.divergence_factor * first)
        if not np.all(np.isfinite(absolute)) or grown:
            raise DivergenceError(f"update norms {absolute} diverged at iteration {it}", report)
        log.debug("iteration %d relative update %s", it, relative)
        if np.all(relative <= tol):
            report.converged = True
            break
        if it < max_iter:
            state = state.blend(image, alpha)
    report.radii = report.rows[-1]["radii"]
    report.clamp_events = setup.clamp_events()
    return state, derived, report


# ----------------------------------------------------------------------
def temperature_radius(setup: Setup) -> float:
    mesh, d = setup.mesh, setup.data
    h_hi = max(setup.h_wall.upper, setup.h_out.upper)
    h_lo = setup.h_wall.lower
    data2 = fem.boundary_l2_norm(mesh, d.theta_in + d.theta_e, NEUMANN_TAGS) ** 2
    return float(np.sqrt(h_hi / min(2.0 * setup.k.lower, h_lo) * data2))


def pressure_radius(setup: Setup) -> float:
    num, d = setup.numerics, setup.data
    return float(num.M * setup.mesh.area ** (1.0 / num.r) * d.R_specific * setup.theta0_sup)


def check_radii(state: FieldState, derived: Derived, setup: Setup) -> dict:
    """Ball membership of the image ``(rho u, theta, p_M)``."""
    mesh, num, d = setup.mesh, setup.numerics, setup.data
    out = {}
    ratio = audit_momentum_norm(mesh, derived.rho, derived.u, d.g, num.q)
    out["momentum"] = ratio
    out["temperature"] = EstimateAudit("temperature_radius", energy_norm(mesh, derived.theta),
                                       temperature_radius(setup), True)
    out["pressure"] = EstimateAudit("pressure_radius", fem.lp_norm(mesh, derived.pressure_q, num.r),
                                    pressure_radius(setup), True)
    rho_r = fem.lp_norm(mesh, derived.rho, num.r)
    out["density_r"] = rho_r
    out["R4"] = rho_r * d.R_specific * setup.theta0_sup
    # the momentum bound with |pi|_2 replaced by R4 |Omega|^(1/2 - 1/r); reported, not asserted
    msol = derived.momentum
    kept = msol.audit
    mp = MomentumProblem(mesh, state.m, state.xi, state.pi, setup.mu, setup.lam, setup.gamma, d)
    both = audit_momentum_estimate(msol, mp, num.q, out["R4"] * mesh.area ** (0.5 - 1.0 / num.r))
    msol.audit = kept
    out["momentum_forms"] = {"pi_l2": both.rhs, "pressure_bound": both.details["rhs_alternative"],
                             "tighter": both.details["tighter"]}
    return out


def audit_velocity_bound(state: FieldState, derived: Derived, setup: Setup) -> EstimateAudit:
    """``|u - u_lift|_V`` against the bound built from the measured radii.

    The unknown domain constant in the momentum radius is replaced by the
    measured ``|m|_q`` and the density bound by the measured ``|rho|_r``.
    """
    mesh, num, d = setup.mesh, setup.numerics, setup.data
    n = 2
    p = num.p
    mu_lo, mu_hi = setup.mu.lower, setup.mu.upper
    g_lo, g_hi = setup.gamma.lower, setup.gamma.upper
    lift = d.lifting
    R1 = fem.lp_norm(mesh, state.m, num.q)
    R4 = fem.lp_norm(mesh, derived.rho, num.r) * d.R_specific * setup.theta0_sup
    s = (R4 * mesh.area ** (0.5 - 1.0 / num.r) + R1 * fem.lp_norm(mesh, fem.at_quad(mesh, lift), p)
         + mu_hi * fem.symgrad_l2(mesh, lift) + setup.lam.sup * fem.div_l2(mesh, lift))
    wall = fem.boundary_l2_norm(mesh, fem.at_edges(mesh, lift), (BoundaryTag.WALL,))
    coerc = min((n - 1) / n * mu_lo, g_lo)
    rhs = max(n / ((n - 1) * mu_lo), 1.0 / g_lo) * s + np.sqrt(g_hi / coerc) * wall
    lhs = v_norm(mesh, derived.u - lift)
    return EstimateAudit("velocity_bound", lhs, float(rhs), True, {"R1": R1, "R4": R4})


@dataclass
class SweepEntry:
    M: float
    state: FieldState
    derived: Derived
    report: IterationReport
    max_rho: float
    activity: float
    pressure_identity: float
    velocity_audit: EstimateAudit
    difference: np.ndarray | None = None


def m_sweep(setup: Setup, M_list, **iterate_kw) -> list:
    """Run the iteration for each truncation level and compare neighbours."""
    M_list = [float(M) for M in M_list]
    if M_list != sorted(M_list):
        raise ValueError("truncation levels must be ascending")
    entries = []
    for M in M_list:
        s = setup.with_numerics(M=M)
        s._potential = setup._potential
        state, derived, report = iterate(s, **iterate_kw)
        setup._potential = s._potential
        theta_q = fem.at_quad(s.mesh, derived.theta)
        exact = derived.rho * s.data.R_specific * theta_q
        scale = np.max(np.abs(exact)) or 1.0
        ident = float(np.max(np.abs(derived.pressure_q - exact)) / scale)
        entry = SweepEntry(M, state, derived, report, float(derived.rho.max()),
                           truncation_activity(s.mesh, derived.rho, M), ident,
                           audit_velocity_bound(state, derived, s))
        if entries:
            _, entry.difference = difference_norms(s.mesh, state, entries[-1].state, s.numerics)
        entries.append(entry)
    return entries
