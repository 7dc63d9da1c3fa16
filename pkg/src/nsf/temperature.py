"""Temperature sub-problem: prescribed inlet value, Newton cooling on the rest.

The unknown is the offset ``u = theta - theta_in`` (zero on the inlet); it
solves

    c_v adv(m; u, v) + ∫ k grad u · grad v + ∫_{outlet ∪ wall} h_c u v
        = ∫_{outlet ∪ wall} h_c (theta_e - theta_in) v.

Two advection forms are available.  ``centered`` is the antisymmetrized
Galerkin form plus half the Dirichlet boundary flux, whose quadratic form
equals ``½∫ g u²`` exactly.  ``upwind`` adds discrete upwind diffusion to
the one-sided form and lumps the Robin mass, which yields an M-matrix on
non-obtuse meshes and hence a discrete minimum-maximum principle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .audit import EstimateAudit
from .coefficients import BoundaryData, BoundedLaw
from .mesh import DIRICHLET_TAGS, NEUMANN_TAGS, BoundaryTag, Mesh
from .momentum import as_quadrature_vector

SCHEMES = ("centered", "upwind")


@dataclass
class TemperatureProblem:
    mesh: Mesh
    m: np.ndarray
    xi: np.ndarray
    k: BoundedLaw
    h_wall: BoundedLaw
    h_out: BoundedLaw
    data: BoundaryData

    def __post_init__(self):
        self.m = as_quadrature_vector(self.mesh, self.m)
        self.xi = np.asarray(self.xi, dtype=float)
        if self.xi.shape != (self.mesh.n_vertices,):
            raise ValueError("temperature iterate must be a nodal field on the mesh")
        if not self.data.theta_in > 0:
            raise ValueError("inlet temperature must be positive")

    @property
    def c_v(self) -> float:
        return self.data.c_v

    def heat_transfer(self) -> np.ndarray:
        """``h_c(xi)`` on all boundary edge quadrature points (zero on the inlet)."""
        mesh = self.mesh
        xi_e = fem.at_edges(mesh, self.xi)
        pts = fem.edge_points(mesh)
        h = np.zeros(xi_e.shape)
        for tag, law in ((BoundaryTag.WALL, self.h_wall), (BoundaryTag.OUTLET, self.h_out)):
            mask = mesh.tag_mask(tag)
            h[mask] = law(xi_e[mask], pts[mask])
        return h

    @property
    def h_lower(self) -> float:
        return self.h_wall.lower

    @property
    def h_upper(self) -> float:
        return max(self.h_wall.upper, self.h_out.upper)


@dataclass
class TemperatureSolution:
    theta: np.ndarray
    scheme: str
    residual: float
    audit: EstimateAudit | None = None
    minmax: dict = field(default_factory=dict)

    @property
    def min(self) -> float:
        return float(self.theta.min())

    @property
    def max(self) -> float:
        return float(self.theta.max())


def energy_norm(mesh: Mesh, theta: np.ndarray) -> float:
    """``(|grad theta|_2^2 + |theta|_{2,wall}^2)^(1/2)``."""
    return fem.norm_12(mesh, theta)


def advection_matrix(mesh: Mesh, m_q: np.ndarray, g: np.ndarray, scheme: str) -> sp.csr_matrix:
    C = fem.assemble_convection(mesh, m_q)
    if scheme == "centered":
        return (0.5 * (C - C.T) + 0.5 * fem.assemble_boundary_mass(mesh, DIRICHLET_TAGS, g)).tocsr()
    if scheme == "upwind":
        return (C + fem.upwind_diffusion(C)).tocsr()
    raise ValueError(f"unknown advection scheme {scheme!r}; expected one of {SCHEMES}")


def temperature_operator(problem: TemperatureProblem, scheme: str = "centered"):
    mesh = problem.mesh
    xq = fem.quad_points(mesh)
    k_q = problem.k(fem.at_quad(mesh, problem.xi), xq)
    h = problem.heat_transfer()
    K = fem.assemble_stiffness(mesh, k_q)
    R = fem.assemble_boundary_mass(mesh, NEUMANN_TAGS, h, lumped=scheme == "upwind")
    A = problem.c_v * advection_matrix(mesh, problem.m, problem.data.g, scheme) + K + R
    return A.tocsr(), R, h


def solve_temperature(problem: TemperatureProblem, scheme: str = "centered", method: str = "direct",
                      tol: float = 1e-10) -> TemperatureSolution:
    mesh = problem.mesh
    A, R, h = temperature_operator(problem, scheme)
    theta_in = problem.data.theta_in
    load = fem.assemble_boundary_load(mesh, NEUMANN_TAGS, h * problem.data.theta_e)
    rhs = load - theta_in * (R @ np.ones(mesh.n_vertices))
    inlet = mesh.tagged_vertices(BoundaryTag.INLET)
    system = fem.SparseSystem(A, rhs, inlet, 0.0)
    offset = fem.solve(system, method if method != "cg" else "bicgstab", tol)
    free = np.setdiff1d(np.arange(mesh.n_vertices), inlet)
    r = (A @ offset - rhs)[free]
    bn = np.linalg.norm(rhs[free])
    residual = float(np.linalg.norm(r) / bn) if bn > 0 else float(np.linalg.norm(r))
    theta = offset + theta_in
    theta[inlet] = theta_in
    return TemperatureSolution(theta, scheme, residual)


def audit_temperature_estimate(solution: TemperatureSolution, problem: TemperatureProblem) -> EstimateAudit:
    mesh = problem.mesh
    theta = solution.theta
    grad2 = fem.h1_seminorm(mesh, theta) ** 2
    wall2 = fem.boundary_l2_norm(mesh, fem.at_edges(mesh, theta), (BoundaryTag.WALL,)) ** 2
    lhs = grad2 + wall2
    k_lo = problem.k.lower
    h_lo, h_hi = problem.h_lower, problem.h_upper
    data = problem.data.theta_in + problem.data.theta_e
    data2 = fem.boundary_l2_norm(mesh, data, NEUMANN_TAGS) ** 2
    rhs = h_hi / min(2.0 * k_lo, h_lo) * data2
    audit = EstimateAudit("temperature_energy", lhs, rhs, solution.scheme == "centered",
                          {"grad2": grad2, "wall2": wall2, "data2": data2, "scheme": solution.scheme})
    solution.audit = audit
    return audit


def audit_min_max(solution: TemperatureSolution, theta0_bounds: tuple, tol: float | None = None) -> dict:
    """Nodal extremes against the boundary data range.

    Default tolerance relative to the range: 1e-8 for the upwind scheme,
    5 % for the centered one.
    """
    lo, hi = (float(b) for b in theta0_bounds)
    span = hi - lo
    if tol is None:
        tol = 1e-8 if solution.scheme == "upwind" else 0.05
    undershoot = max(lo - solution.min, 0.0)
    overshoot = max(solution.max - hi, 0.0)
    allow = tol * span + 4 * np.finfo(float).eps * max(abs(lo), abs(hi))
    report = {"min": solution.min, "max": solution.max, "lower": lo, "upper": hi,
              "undershoot": undershoot, "overshoot": overshoot, "tolerance": tol,
              "relative_violation": max(undershoot, overshoot) / span if span > 0 else max(undershoot, overshoot),
              "passed": bool(undershoot <= allow and overshoot <= allow)}
    solution.minmax = report
    return report
