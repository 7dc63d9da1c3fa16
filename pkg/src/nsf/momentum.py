"""Velocity sub-problem with Dirichlet inflow/outflow and Navier slip walls.

Given the frozen iterate ``(m, xi, pi)`` the auxiliary velocity ``w``
vanishes on inlet/outlet, has zero normal component on walls and solves

    ½[c(m; v, w) - c(m; w, v)] + a_visc(w, v) + f_wall(w, v)
        = ∫ pi div v + c(m; v, u_lift) - f_wall(u_lift, v) - a_visc(u_lift, v)

for every admissible ``v``, with ``c(m; v, w) = ∫ (m·∇w_a) v_a`` written as
``C ⊗ I``.  The antisymmetric convection makes ``w ↦ c(w, w)`` vanish
identically, so the energy bound holds exactly at the discrete level.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .audit import EstimateAudit
from .coefficients import BoundaryData, BoundedLaw, check_viscosity_pair, vertex_normals
from .mesh import DIRICHLET_TAGS, BoundaryTag, Mesh

log = logging.getLogger(__name__)

PARALLEL_TOL = 1e-10


def as_quadrature_vector(mesh: Mesh, m: np.ndarray) -> np.ndarray:
    """Accept a nodal (N, 2) or quadrature (T, 3, 2) vector field."""
    m = np.asarray(m, dtype=float)
    if m.shape == (mesh.n_vertices, 2):
        return fem.at_quad(mesh, m)
    if m.shape != (mesh.n_triangles, fem.TRIANGLE_RULE.size, 2):
        raise ValueError(f"vector field has shape {m.shape}; expected nodal or quadrature layout")
    return m


# ----------------------------------------------------------------------
# slip constraints
@dataclass(frozen=True)
class WallFrames:
    """Per-vertex local frames for the velocity dofs.

    ``rotation`` maps local dofs to Cartesian ones (``w = Q @ w_local``);
    wall vertices use the columns (normal, tangent), all others identity.
    """

    rotation: sp.csr_matrix
    dirichlet_vertices: np.ndarray
    slip_vertices: np.ndarray
    corner_vertices: np.ndarray
    normals: dict

    @property
    def fixed_dofs(self) -> np.ndarray:
        d = self.dirichlet_vertices
        c = self.corner_vertices
        dofs = np.concatenate([2 * d, 2 * d + 1, 2 * self.slip_vertices, 2 * c, 2 * c + 1])
        return np.unique(dofs)


def wall_frames(mesh: Mesh) -> WallFrames:
    n = mesh.n_vertices
    dverts = mesh.tagged_vertices(DIRICHLET_TAGS)
    wall_mask = mesh.tag_mask(BoundaryTag.WALL)
    wverts = np.setdiff1d(mesh.tagged_vertices(BoundaryTag.WALL), dverts)
    incident: dict[int, list] = {}
    for e, nrm in zip(mesh.boundary_edges[wall_mask], mesh.edge_normals[wall_mask]):
        for v in e:
            incident.setdefault(int(v), []).append(nrm)
    avg = vertex_normals(mesh, BoundaryTag.WALL)
    blocks = [np.eye(2) for _ in range(n)]
    slip, corner, normals = [], [], {}
    for v in wverts.tolist():
        ref = incident[v][0]
        parallel = all(abs(ref[0] * e[1] - ref[1] * e[0]) <= PARALLEL_TOL and ref @ e > 0 for e in incident[v])
        if parallel:
            nv = avg[v]
            blocks[v] = np.array([[nv[0], -nv[1]], [nv[1], nv[0]]])
            slip.append(v)
            normals[v] = nv
        else:
            corner.append(v)
            log.info("wall vertex %d has two independent normals; both velocity components fixed", v)
    Q = sp.block_diag(blocks, format="csr")
    return WallFrames(Q, dverts, np.asarray(slip, dtype=np.int64), np.asarray(corner, dtype=np.int64), normals)


def apply_slip_constraints(mesh: Mesh, matrix, rhs, dirichlet_values=None, frames: WallFrames | None = None):
    """Rotate wall dofs into (normal, tangent) and constrain them.

    Inlet/outlet vertices are fully prescribed (``dirichlet_values`` there,
    zero by default), wall normal components are zero.  Returns the
    constrained system in local coordinates and the rotation ``Q`` that
    maps its solution back to Cartesian dofs.
    """
    frames = frames or wall_frames(mesh)
    Q = frames.rotation
    A = (Q.T @ sp.csr_matrix(matrix) @ Q).tocsr()
    b = Q.T @ np.asarray(rhs, dtype=float)
    fixed = frames.fixed_dofs
    values = np.zeros(2 * mesh.n_vertices)
    if dirichlet_values is not None:
        dv = np.asarray(dirichlet_values, dtype=float).reshape(-1, 2)
        d = frames.dirichlet_vertices
        values[2 * d] = dv[d, 0]
        values[2 * d + 1] = dv[d, 1]
    return fem.SparseSystem(A, b, fixed, values[fixed]), Q


# ----------------------------------------------------------------------
@dataclass
class MomentumProblem:
    mesh: Mesh
    m: np.ndarray
    xi: np.ndarray
    pi: np.ndarray
    mu: BoundedLaw
    lam: BoundedLaw
    gamma: BoundedLaw
    data: BoundaryData

    def __post_init__(self):
        self.m = as_quadrature_vector(self.mesh, self.m)
        self.xi = np.asarray(self.xi, dtype=float)
        self.pi = np.asarray(self.pi, dtype=float)
        n = self.mesh.n_vertices
        if self.xi.shape != (n,) or self.pi.shape != (n,):
            raise ValueError("temperature and pressure iterates must be nodal fields on the mesh")
        check_viscosity_pair(self.mu, self.lam)


@dataclass
class MomentumSolution:
    w: np.ndarray
    u: np.ndarray
    v_norm: float
    residual: float
    energy: dict = field(default_factory=dict)
    audit: EstimateAudit | None = None


def v_norm(mesh: Mesh, w: np.ndarray) -> float:
    """``(|Dw|_2^2 + |w|_{2,wall}^2)^(1/2)``."""
    wall = fem.boundary_l2_norm(mesh, fem.at_edges(mesh, w), (BoundaryTag.WALL,))
    return float(np.hypot(fem.symgrad_l2(mesh, w), wall))


def momentum_operators(problem: MomentumProblem):
    """Assembled pieces: skew convection, viscous, friction and one-sided C."""
    mesh = problem.mesh
    xq = fem.quad_points(mesh)
    xi_q = fem.at_quad(mesh, problem.xi)
    mu_q = problem.mu(xi_q, xq)
    lam_q = problem.lam(xi_q, xq)
    xi_e = fem.at_edges(mesh, problem.xi)
    gamma_e = problem.gamma(xi_e, fem.edge_points(mesh))
    C = fem.assemble_convection(mesh, problem.m)
    S = fem.vector_block(0.5 * (C - C.T))
    K = fem.assemble_symgrad(mesh, mu_q, lam_q)
    B = fem.vector_block(fem.assemble_boundary_mass(mesh, (BoundaryTag.WALL,), gamma_e))
    return S, K, B, fem.vector_block(C)


def solve_momentum(problem: MomentumProblem, method: str = "direct", tol: float = 1e-10) -> MomentumSolution:
    mesh = problem.mesh
    S, K, B, Cv = momentum_operators(problem)
    lift = problem.data.lifting.ravel()
    # a constant pressure shift is invisible to test fields in V
    pi = problem.pi
    shift = 0.5 * (pi.max() + pi.min()) if pi.size else 0.0
    load_p = fem.assemble_div_coupling(mesh, pi - shift)
    forcing = Cv.T @ lift - B @ lift - K @ lift
    A = (S + K + B).tocsr()
    system, Q = apply_slip_constraints(mesh, A, load_p + forcing)
    w_loc = fem.solve(system, method, tol)
    w = Q @ w_loc
    free = np.setdiff1d(np.arange(system.n), system.fixed_dofs)
    r = system.matrix @ w_loc - system.rhs
    bn = np.linalg.norm(system.rhs[free])
    residual = float(np.linalg.norm(r[free]) / bn) if bn > 0 else float(np.linalg.norm(r[free]))
    energy = {
        "viscous": float(w @ (K @ w)),
        "friction": float(w @ (B @ w)),
        "convective": float(w @ (S @ w)),
        "pressure": float(w @ load_p),
        "forcing": float(w @ forcing),
    }
    W = w.reshape(-1, 2)
    return MomentumSolution(W, W + problem.data.lifting, v_norm(mesh, W), residual, energy)


def dual_exponent(q: float) -> float:
    """``p`` with ``1/p = 1/2 - 1/q``."""
    if not q > 2:
        raise ValueError("q must exceed the dimension 2")
    return 1.0 / (0.5 - 1.0 / q)


def audit_momentum_estimate(solution: MomentumSolution, problem: MomentumProblem, q: float = 3.0,
                            pressure_bound: float | None = None) -> EstimateAudit:
    """Energy bound for the auxiliary velocity.

    ``pressure_bound`` optionally replaces ``|pi|_2`` (for instance by
    ``R4 |Omega|^(1/2 - 1/r)``); both right-hand sides are reported.
    """
    mesh = problem.mesh
    n = 2
    p = dual_exponent(q)
    mu_lo, mu_hi = problem.mu.lower, problem.mu.upper
    lam_hi = problem.lam.sup
    g_lo, g_hi = problem.gamma.lower, problem.gamma.upper
    lift = problem.data.lifting
    pi_l2 = fem.lp_norm(mesh, fem.at_quad(mesh, problem.pi), 2)
    m_q = fem.lp_norm(mesh, problem.m, q)
    lift_p = fem.lp_norm(mesh, fem.at_quad(mesh, lift), p)
    lift_D = fem.symgrad_l2(mesh, lift)
    lift_div = fem.div_l2(mesh, lift)
    lift_wall = fem.boundary_l2_norm(mesh, fem.at_edges(mesh, lift), (BoundaryTag.WALL,))
    coerc = min((n - 1) / n * mu_lo, g_lo)
    vn = v_norm(mesh, solution.w)
    lhs = coerc * vn ** 2

    def bound(pressure):
        s = pressure + m_q * lift_p + mu_hi * lift_D + lam_hi * lift_div
        return n / ((n - 1) * mu_lo) * s ** 2 + g_hi * lift_wall ** 2

    rhs = bound(pi_l2)
    details = {"v_norm": vn, "pi_l2": pi_l2, "m_q": m_q, "lift_p": lift_p, "lift_D": lift_D,
               "lift_div": lift_div, "lift_wall": lift_wall, "q": q, "p": p}
    if pressure_bound is not None:
        alt = bound(pressure_bound)
        details.update(rhs_alternative=alt, tighter="pi_l2" if rhs <= alt else "pressure_bound")
    audit = EstimateAudit("momentum_energy", lhs, rhs, True, details)
    solution.audit = audit
    return audit
