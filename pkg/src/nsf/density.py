"""Density recovery from a velocity field and the boundary mass flux.

The mass flux is split as ``rho u = grad(psi) + z`` with ``psi`` the
Neumann potential of the boundary flux.  Pointwise, ``rho`` is read off
the component of ``grad(psi)`` along ``u``: where the two are aligned the
magnitude ratio is used directly, elsewhere the misaligned remainder
``a = |grad psi| u/|u| - grad psi`` is corrected by its own gradient part.
The result is checked against the weak continuity equation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .audit import EstimateAudit
from .mesh import DIRICHLET_TAGS, Mesh

STAGNATION = 0
ALIGNED = 1
CORRECTED = 2

COMPATIBILITY_TOL = 1e-10


class CompatibilityError(ValueError):
    """Net boundary mass flux is not zero, so the Neumann problem has no solution."""


@dataclass
class ScalarPotential:
    psi: np.ndarray
    g: np.ndarray
    residual: float
    gradient: np.ndarray  # elementwise, (T, 2)


def _neumann_solve(mesh: Mesh, rhs: np.ndarray, method: str = "direct", tol: float = 1e-12) -> np.ndarray:
    K = fem.assemble_stiffness(mesh)
    weights = fem.assemble_volume_load(mesh, 1.0)
    return fem.solve(fem.SparseSystem(K, rhs, mean_weights=weights), method, tol)


def solve_scalar_potential(mesh: Mesh, g, method: str = "direct", tol: float = 1e-12,
                           check: bool = True, tags=DIRICHLET_TAGS) -> ScalarPotential:
    """Zero-mean ``psi`` with ``∫ grad psi · grad v = ∫_{inlet ∪ outlet} g v``.

    ``g`` vanishes on walls by construction; ``tags`` widens the flux
    support (used by manufactured-solution studies).
    """
    tags = tuple(tags)
    g_e = np.array(fem._edge_coefficient(mesh, g), dtype=float)
    g_e[~mesh.tag_mask(tags)] = 0.0
    if check:
        w = fem.edge_weights(mesh)
        defect = float(np.sum(g_e * w))
        scale = float(np.sum(np.abs(g_e) * w))
        if abs(defect) > COMPATIBILITY_TOL * scale:
            raise CompatibilityError(f"net boundary mass flux {defect:.3e} is not zero (|g|_1 = {scale:.3e})")
    rhs = fem.assemble_boundary_load(mesh, tags, g_e)
    psi = _neumann_solve(mesh, rhs, method, tol)
    K = fem.assemble_stiffness(mesh)
    bn = np.linalg.norm(rhs)
    res = float(np.linalg.norm(K @ psi - rhs) / bn) if bn > 0 else 0.0
    return ScalarPotential(psi, g_e, res, fem.gradient(mesh, psi))


@dataclass
class DensityField:
    rho: np.ndarray  # (T, 3) at quadrature points
    nodal: np.ndarray  # lumped projection, output only
    case: np.ndarray  # (T, 3) STAGNATION / ALIGNED / CORRECTED
    phi: np.ndarray | None
    anomalies: int
    eps_stag: float
    eps_align: float
    rho0: float

    @property
    def stagnation(self) -> np.ndarray:
        return self.case == STAGNATION

    @property
    def aligned(self) -> np.ndarray:
        return self.case == ALIGNED

    @property
    def corrected(self) -> np.ndarray:
        return self.case == CORRECTED


def default_stagnation_threshold(mesh: Mesh, u_q: np.ndarray) -> float:
    speed = np.linalg.norm(u_q, axis=-1)
    return 1e-6 * float(np.sum(speed * fem.quad_weights(mesh)) / mesh.area)


def recover_density(mesh: Mesh, u: np.ndarray, potential: ScalarPotential, rho0: float,
                    eps_stag: float | None = None, eps_align: float = 1e-8,
                    method: str = "direct") -> DensityField:
    u = np.asarray(u, dtype=float)
    u_q = fem.at_quad(mesh, u) if u.shape == (mesh.n_vertices, 2) else u
    if not np.all(np.isfinite(u_q)):
        raise FloatingPointError("non-finite velocity")
    gpsi = np.broadcast_to(potential.gradient[:, None, :], u_q.shape)
    if eps_stag is None:
        eps_stag = default_stagnation_threshold(mesh, u_q)
    speed = np.linalg.norm(u_q, axis=-1)
    gnorm = np.linalg.norm(gpsi, axis=-1)
    dot = np.einsum("tqd,tqd->tq", gpsi, u_q)
    # orientation of u_perp is irrelevant, only |grad psi . u_perp| enters
    cross = np.abs(gpsi[..., 1] * u_q[..., 0] - gpsi[..., 0] * u_q[..., 1])

    stag = speed <= eps_stag
    aligned = ~stag & (cross <= eps_align * gnorm * speed)
    corrected = ~stag & ~aligned
    case = np.where(stag, STAGNATION, np.where(aligned, ALIGNED, CORRECTED))

    safe = np.where(stag, 1.0, speed)
    rho1 = gnorm / safe
    rho = np.where(stag, float(rho0), rho1)
    anomalies = int(np.count_nonzero(aligned & (dot < 0)))
    phi = None
    if corrected.any():
        a = np.where(corrected[..., None], rho1[..., None] * u_q - gpsi, 0.0)
        phi = _neumann_solve(mesh, fem.assemble_flux_load(mesh, a), method)
        gphi = fem.gradient(mesh, phi)[:, None, :]
        along = np.einsum("tqd,tqd->tq", np.broadcast_to(gphi, u_q.shape), u_q) / safe ** 2
        rho = np.where(corrected, np.maximum(rho1 - along, 0.0), rho)
    rho = np.where(stag, float(rho0), rho)
    return DensityField(rho, fem.lumped_projection(mesh, rho), case, phi, anomalies,
                        float(eps_stag), float(eps_align), float(rho0))


def continuity_residual(mesh: Mesh, flux_q: np.ndarray, g) -> np.ndarray:
    """Vector ``r_i = ∫ F·grad phi_i - ∫_{inlet ∪ outlet} g phi_i``."""
    return fem.assemble_flux_load(mesh, flux_q) - fem.assemble_boundary_load(mesh, DIRICHLET_TAGS, g)


def verify_weak_continuity(mesh: Mesh, rho: np.ndarray, u: np.ndarray, g) -> dict:
    """Residual of the weak continuity equation over the nodal test basis.

    ``relative`` is the Euclidean norm of the residual vector scaled by the
    norm of the boundary load vector.  ``dual`` is the discrete H^-1 norm
    (energy norm of the Neumann solve driven by the residual) scaled by
    the same norm of the boundary load.
    """
    u = np.asarray(u, dtype=float)
    u_q = fem.at_quad(mesh, u) if u.shape == (mesh.n_vertices, 2) else u
    flux = np.asarray(rho)[..., None] * u_q
    load = fem.assemble_boundary_load(mesh, DIRICHLET_TAGS, g)
    r = fem.assemble_flux_load(mesh, flux) - load
    ln = np.linalg.norm(load)
    report = {"absolute": float(np.linalg.norm(r)), "load_norm": float(ln)}
    if ln == 0.0:
        report.update(relative=float(np.linalg.norm(r)), dual=0.0)
        return report
    r0 = r - r.mean()
    z = _neumann_solve(mesh, r0)
    zl = _neumann_solve(mesh, load - load.mean())
    report["relative"] = float(np.linalg.norm(r) / ln)
    report["dual"] = float(np.sqrt(max(r0 @ z, 0.0)) / np.sqrt(max((load - load.mean()) @ zl, 1e-300)))
    return report


def audit_momentum_norm(mesh: Mesh, rho: np.ndarray, u: np.ndarray, g, q: float = 3.0) -> EstimateAudit:
    """Monitored ratio ``|rho u|_q / |g|_{q, boundary}``; never asserted."""
    u = np.asarray(u, dtype=float)
    u_q = fem.at_quad(mesh, u) if u.shape == (mesh.n_vertices, 2) else u
    m_q = fem.lp_norm(mesh, np.asarray(rho)[..., None] * u_q, q)
    g_q = fem.boundary_lp_norm(mesh, fem._edge_coefficient(mesh, g), q, DIRICHLET_TAGS)
    ratio = m_q / g_q if g_q > 0 else float("nan")
    return EstimateAudit("momentum_norm_ratio", m_q, g_q, asserted=False,
                         details={"ratio": ratio, "applicable": g_q > 0, "q": q})
