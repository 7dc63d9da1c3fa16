"""P1 finite elements: quadrature, sparse assembly, norms and linear solves.

Conventions
-----------
* Scalar P1 fields are nodal arrays of shape ``(N,)``; vector fields are
  ``(N, 2)``.  Vector unknowns in linear systems are interleaved,
  dof ``2*i + a`` is component ``a`` at vertex ``i``.
* Quadrature-point fields live on the triangle rule, shape ``(T, 3)`` for
  scalars and ``(T, 3, 2)`` for vectors.
* Boundary quantities live on the edge rule over *all* boundary edges,
  shape ``(E, 2)``; entries on edges that are not involved are ignored.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import BoundaryTag, Mesh


class AssemblyError(ValueError):
    """Raised when a coefficient cannot be evaluated on an element."""


class HypothesisError(AssemblyError):
    """Raised when a coefficient violates its structural bounds."""


class SolverError(RuntimeError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric coordinates, (nq, 3) or (nq, 2)
    weights: np.ndarray  # sum to the reference measure

    @property
    def size(self) -> int:
        return self.weights.size


# Strang-Fix 3-point rule, exact for degree 2 on the reference triangle.
TRIANGLE_RULE = QuadratureRule(
    points=np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    weights=np.full(3, 1 / 6),
)
# 2-point Gauss-Legendre on [0, 1], exact for degree 3.
_s = 0.5 / np.sqrt(3.0)
EDGE_RULE = QuadratureRule(
    points=np.array([[0.5 + _s, 0.5 - _s], [0.5 - _s, 0.5 + _s]]),
    weights=np.full(2, 0.5),
)

Coefficient = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


# ----------------------------------------------------------------------
# quadrature geometry
def quad_points(mesh: Mesh) -> np.ndarray:
    """Physical triangle quadrature points, shape (T, 3, 2)."""
    return np.einsum("qa,tad->tqd", TRIANGLE_RULE.points, mesh.vertices[mesh.triangles])


def quad_weights(mesh: Mesh) -> np.ndarray:
    """Physical quadrature weights, shape (T, 3)."""
    return 2.0 * mesh.areas[:, None] * TRIANGLE_RULE.weights[None, :]


def edge_points(mesh: Mesh) -> np.ndarray:
    """Physical edge quadrature points for all boundary edges, (E, 2, 2)."""
    ends = mesh.vertices[mesh.boundary_edges]
    return np.einsum("qa,ead->eqd", EDGE_RULE.points, ends)


def edge_weights(mesh: Mesh) -> np.ndarray:
    return mesh.edge_lengths[:, None] * EDGE_RULE.weights[None, :]


def at_quad(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Interpolate a nodal P1 field to the triangle quadrature points."""
    values = np.asarray(values, dtype=float)
    return np.einsum("qa,ta...->tq...", TRIANGLE_RULE.points, values[mesh.triangles])


def at_edges(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Interpolate a nodal P1 field to the edge quadrature points."""
    values = np.asarray(values, dtype=float)
    return np.einsum("qa,ea...->eq...", EDGE_RULE.points, values[mesh.boundary_edges])


def gradient(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Elementwise gradient of a P1 field: (T, 2) or (T, 2, 2) [comp, deriv]."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return np.einsum("ta,tad->td", values[mesh.triangles], mesh.gradients)
    return np.einsum("tac,tad->tcd", values[mesh.triangles], mesh.gradients)


def _coefficient(mesh: Mesh, coeff: Coefficient) -> np.ndarray:
    if callable(coeff):
        pts = quad_points(mesh)
        vals = np.asarray(coeff(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    else:
        vals = np.broadcast_to(np.asarray(coeff, dtype=float), (mesh.n_triangles, TRIANGLE_RULE.size))
    bad = np.nonzero(~np.isfinite(vals).all(axis=1))[0]
    if bad.size:
        raise AssemblyError(f"coefficient is not finite on element {bad[0]}")
    return vals


def _edge_coefficient(mesh: Mesh, coeff: Coefficient) -> np.ndarray:
    if callable(coeff):
        pts = edge_points(mesh)
        vals = np.asarray(coeff(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    else:
        vals = np.broadcast_to(np.asarray(coeff, dtype=float), (mesh.n_boundary_edges, EDGE_RULE.size))
    return vals


def _scatter(mesh: Mesh, local: np.ndarray, n: int | None = None) -> sp.csr_matrix:
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    n = mesh.n_vertices if n is None else n
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


# ----------------------------------------------------------------------
# bilinear forms
def assemble_stiffness(mesh: Mesh, coeff: Coefficient = 1.0) -> sp.csr_matrix:
    """Matrix of ``int c grad(a) . grad(b) dx``."""
    c = _coefficient(mesh, coeff)
    cbar = (c * quad_weights(mesh)).sum(axis=1)
    g = mesh.gradients
    local = np.einsum("t,tid,tjd->tij", cbar, g, g)
    return _scatter(mesh, local)


def assemble_mass(mesh: Mesh, coeff: Coefficient = 1.0, lumped: bool = False) -> sp.csr_matrix:
    """Matrix of ``int c a b dx``."""
    c = _coefficient(mesh, coeff) * quad_weights(mesh)
    phi = TRIANGLE_RULE.points
    local = np.einsum("tq,qi,qj->tij", c, phi, phi)
    if lumped:
        diag = np.zeros(mesh.n_vertices)
        np.add.at(diag, mesh.triangles, local.sum(axis=2))
        return sp.diags(diag).tocsr()
    return _scatter(mesh, local)


def _vector_scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    """Scatter (T, 3, 2, 3, 2) element blocks into the interleaved matrix."""
    t = mesh.triangles
    dof = (2 * t[:, :, None] + np.arange(2)[None, None, :]).reshape(-1, 6)
    rows = np.repeat(dof, 6, axis=1).ravel()
    cols = np.tile(dof, (1, 6)).ravel()
    n = 2 * mesh.n_vertices
    return sp.csr_matrix((local.reshape(-1, 36).ravel(), (rows, cols)), shape=(n, n))


def assemble_symgrad(mesh: Mesh, mu: Coefficient, lam: Coefficient, check: bool = True) -> sp.csr_matrix:
    """Matrix of ``int mu D(a):D(b) + lam div(a) div(b) dx`` on vector dofs.

    With ``check`` the pointwise bounds ``mu > 0`` and ``2 lam + mu >= 0``
    are enforced at every quadrature point.
    """
    mu_q = _coefficient(mesh, mu)
    lam_q = _coefficient(mesh, lam)
    if check:
        bad = np.nonzero((mu_q <= 0).any(axis=1))[0]
        if bad.size:
            raise HypothesisError(f"viscosity mu must be positive; violated on element {bad[0]}")
        bad = np.nonzero((2.0 * lam_q + mu_q < -1e-14 * np.abs(mu_q)).any(axis=1))[0]
        if bad.size:
            raise HypothesisError(f"thermodynamic bound 2*lambda + mu >= 0 violated on element {bad[0]}")
    w = quad_weights(mesh)
    mbar = (mu_q * w).sum(axis=1)
    lbar = (lam_q * w).sum(axis=1)
    g = mesh.gradients
    eye = np.eye(2)
    gg = np.einsum("tid,tjd->tij", g, g)
    # D(phi_i e_a):D(phi_j e_b) = (delta_ab g_i.g_j + g_j[a] g_i[b]) / 2
    sym = 0.5 * (np.einsum("ab,tij->tiajb", eye, gg) + np.einsum("tja,tib->tiajb", g, g))
    div = np.einsum("tia,tjb->tiajb", g, g)
    local = mbar[:, None, None, None, None] * sym + lbar[:, None, None, None, None] * div
    return _vector_scatter(mesh, local)


def assemble_convection(mesh: Mesh, m: np.ndarray) -> sp.csr_matrix:
    """One-sided matrix ``C[i, j] = int (m . grad phi_j) phi_i dx``.

    ``m`` is given at the triangle quadrature points, shape (T, 3, 2).
    """
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise AssemblyError("non-finite transport field")
    wm = m * quad_weights(mesh)[:, :, None]
    # sum_q w_q phi_i(q) m(q) . g_j
    local = np.einsum("tqd,qi,tjd->tij", wm, TRIANGLE_RULE.points, mesh.gradients)
    return _scatter(mesh, local)


def assemble_boundary_mass(mesh: Mesh, tags: Iterable[BoundaryTag], coeff: Coefficient = 1.0,
                           lumped: bool = False) -> sp.csr_matrix:
    """Matrix of ``int_gamma c a b ds`` over edges carrying ``tags``."""
    tags = tuple(tags)
    n = mesh.n_vertices
    if not tags:
        return sp.csr_matrix((n, n))
    mask = mesh.tag_mask(tags)
    c = (_edge_coefficient(mesh, coeff) * edge_weights(mesh))[mask]
    phi = EDGE_RULE.points
    local = np.einsum("eq,qi,qj->eij", c, phi, phi)
    e = mesh.boundary_edges[mask]
    if lumped:
        diag = np.zeros(n)
        np.add.at(diag, e, local.sum(axis=2))
        return sp.diags(diag).tocsr()
    rows = np.repeat(e, 2, axis=1).ravel()
    cols = np.tile(e, (1, 2)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_advection_skew(mesh: Mesh, m: np.ndarray, dirichlet_flux: np.ndarray | None = None) -> sp.csr_matrix:
    """Antisymmetrized advection with boundary correction.

    ``A[i, j] = (C[i, j] - C[j, i]) / 2 + (1/2) int_{Gamma_D} g phi_i phi_j ds``,
    so ``v^T A v`` equals half the boundary flux integral of ``g v^2``
    for every ``v`` and every ``m``.
    """
    C = assemble_convection(mesh, m)
    A = 0.5 * (C - C.T)
    if dirichlet_flux is not None:
        A = A + 0.5 * assemble_boundary_mass(mesh, (BoundaryTag.INLET, BoundaryTag.OUTLET), dirichlet_flux)
    return A.tocsr()


def upwind_diffusion(C: sp.spmatrix) -> sp.csr_matrix:
    """Discrete upwinding: symmetric ``D`` with zero row sums such that
    ``C + D`` has non-positive off-diagonal entries."""
    C = sp.csr_matrix(C)
    Ct = C.T.tocsr()
    off = C - sp.diags(C.diagonal())
    offt = Ct - sp.diags(Ct.diagonal())
    d = off.maximum(offt).maximum(sp.csr_matrix(C.shape))
    d = -d
    d = d - sp.diags(np.asarray(d.sum(axis=1)).ravel())
    return d.tocsr()


def vector_block(A: sp.spmatrix) -> sp.csr_matrix:
    """Componentwise action on interleaved vector dofs."""
    return sp.kron(A, sp.identity(2), format="csr")


# ----------------------------------------------------------------------
# linear forms
def assemble_div_coupling(mesh: Mesh, pi: np.ndarray) -> np.ndarray:
    """Vector ``b[2i+a] = int pi d_a(phi_i) dx`` for nodal P1 ``pi``."""
    pi_q = at_quad(mesh, pi)
    mass = (pi_q * quad_weights(mesh)).sum(axis=1)
    local = mass[:, None, None] * mesh.gradients
    out = np.zeros((mesh.n_vertices, 2))
    np.add.at(out, mesh.triangles, local)
    return out.ravel()


def assemble_flux_load(mesh: Mesh, F: np.ndarray) -> np.ndarray:
    """Vector ``b[i] = int F . grad(phi_i) dx`` for quadrature-point ``F``."""
    Fbar = (np.asarray(F, dtype=float) * quad_weights(mesh)[:, :, None]).sum(axis=1)
    local = np.einsum("td,tid->ti", Fbar, mesh.gradients)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles, local)
    return out


def assemble_boundary_load(mesh: Mesh, tags: Iterable[BoundaryTag], f: Coefficient) -> np.ndarray:
    """Vector ``b[i] = int_gamma f phi_i ds`` over edges carrying ``tags``."""
    out = np.zeros(mesh.n_vertices)
    tags = tuple(tags)
    if not tags:
        return out
    mask = mesh.tag_mask(tags)
    fw = (_edge_coefficient(mesh, f) * edge_weights(mesh))[mask]
    local = fw @ EDGE_RULE.points
    np.add.at(out, mesh.boundary_edges[mask], local)
    return out


def assemble_volume_load(mesh: Mesh, f: Coefficient) -> np.ndarray:
    """Vector ``b[i] = int f phi_i dx``."""
    fw = _coefficient(mesh, f) * quad_weights(mesh)
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles, fw @ TRIANGLE_RULE.points)
    return out


def lumped_projection(mesh: Mesh, f_q: np.ndarray) -> np.ndarray:
    """Mass-lumped L2 projection of a quadrature field to P1 nodes.

    Nodal values are weighted averages of the quadrature values, so bounds
    are preserved.
    """
    num = assemble_volume_load(mesh, f_q)
    den = assemble_volume_load(mesh, 1.0)
    return num / den


# ----------------------------------------------------------------------
# norms
def lp_norm(mesh: Mesh, f_q: np.ndarray, p: float) -> float:
    """``L^p(Omega)`` norm of a quadrature-point scalar or vector field."""
    f_q = np.asarray(f_q, dtype=float)
    mag = np.abs(f_q) if f_q.ndim == 2 else np.linalg.norm(f_q, axis=-1)
    w = quad_weights(mesh)
    if np.isinf(p):
        return float(mag.max())
    return float(np.sum(w * mag ** p) ** (1.0 / p))


def boundary_l2_norm(mesh: Mesh, f_e: np.ndarray, tags: Iterable[BoundaryTag]) -> float:
    """``L^2`` norm over edges carrying ``tags`` of an edge-quadrature field."""
    f_e = np.asarray(f_e, dtype=float)
    mag2 = f_e ** 2 if f_e.ndim == 2 else np.sum(f_e ** 2, axis=-1)
    mask = mesh.tag_mask(tuple(tags))
    return float(np.sqrt(np.sum((edge_weights(mesh) * mag2)[mask])))


def boundary_lp_norm(mesh: Mesh, f_e: np.ndarray, p: float, tags: Iterable[BoundaryTag] | None = None) -> float:
    f_e = np.abs(np.asarray(f_e, dtype=float))
    w = edge_weights(mesh)
    if tags is not None:
        mask = mesh.tag_mask(tuple(tags))
        f_e, w = f_e[mask], w[mask]
    return float(np.sum(w * f_e ** p) ** (1.0 / p))


def h1_seminorm(mesh: Mesh, values: np.ndarray) -> float:
    g = gradient(mesh, values)
    sq = g ** 2
    return float(np.sqrt(np.sum(mesh.areas * sq.reshape(mesh.n_triangles, -1).sum(axis=1))))


def norm_12(mesh: Mesh, values: np.ndarray) -> float:
    """``(|grad v|_2^2 + |v|_{2,wall}^2)^(1/2)`` for a nodal scalar field."""
    wall = boundary_l2_norm(mesh, at_edges(mesh, values), (BoundaryTag.WALL,))
    return float(np.hypot(h1_seminorm(mesh, values), wall))


def symgrad_l2(mesh: Mesh, values: np.ndarray) -> float:
    """``|D v|_2`` for a nodal vector field."""
    G = gradient(mesh, values)
    D = 0.5 * (G + np.swapaxes(G, 1, 2))
    return float(np.sqrt(np.sum(mesh.areas * np.sum(D ** 2, axis=(1, 2)))))


def div_l2(mesh: Mesh, values: np.ndarray) -> float:
    G = gradient(mesh, values)
    return float(np.sqrt(np.sum(mesh.areas * (G[:, 0, 0] + G[:, 1, 1]) ** 2)))


# ----------------------------------------------------------------------
# linear systems
@dataclass
class SparseSystem:
    """Square sparse system with Dirichlet-type constraints.

    ``fixed_dofs``/``fixed_values`` are eliminated by row and column
    reduction.  ``mean_weights`` adds the single constraint
    ``mean_weights . x = 0`` (zero-mean Neumann problems).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_weights: np.ndarray | None = None

    def __post_init__(self):
        self.matrix = sp.csr_matrix(self.matrix)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.fixed_dofs = np.asarray(self.fixed_dofs, dtype=np.int64)
        self.fixed_values = np.broadcast_to(np.asarray(self.fixed_values, dtype=float), self.fixed_dofs.shape).copy()
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n) or self.rhs.shape != (n,):
            raise ValueError("matrix must be square and match the right-hand side")
        if self.mean_weights is not None and self.fixed_dofs.size:
            raise ValueError("mean-value constraint is only supported without fixed dofs")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


DIRECT_RESIDUAL_TOL = 1e-8


def _jacobi(A):
    d = A.diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    return spla.LinearOperator(A.shape, matvec=lambda x: x / d)


def solve(system: SparseSystem, method: str = "direct", tol: float = 1e-10, maxiter: int = 5000) -> np.ndarray:
    """Solve a constrained system; returns the full dof vector."""
    if method not in ("direct", "cg", "bicgstab"):
        raise ValueError(f"unknown solver method {method!r}")
    A, b = system.matrix, system.rhs
    n = system.n
    x = np.zeros(n)
    fixed = system.fixed_dofs
    x[fixed] = system.fixed_values
    free = np.setdiff1d(np.arange(n), fixed)
    Aff = A[free][:, free].tocsc()
    bf = b[free] - A[free][:, fixed] @ system.fixed_values if fixed.size else b[free].copy()
    c = None
    if system.mean_weights is not None:
        c = np.asarray(system.mean_weights, dtype=float)[free]
    bnorm = np.linalg.norm(bf)
    if bnorm == 0.0:
        return x
    if not np.all(np.isfinite(bf)) or not np.all(np.isfinite(Aff.data)):
        raise SolverError("non-finite entries in the linear system")

    history: list[float] = []
    if c is not None and method != "cg":
        K = sp.bmat([[Aff, sp.csc_matrix(c[:, None])], [sp.csr_matrix(c[None, :]), None]], format="csc")
        rhs = np.concatenate([bf, [0.0]])
        y = _solve_raw(K, rhs, method, tol, maxiter, history)
        xf = y[:-1]
    elif c is not None:
        # deflation: consistent singular system restricted to the zero-mean complement
        ones = np.ones_like(bf)
        rhs = bf - ones * (ones @ bf) / ones.size
        xf = _solve_raw(Aff, rhs, "cg", tol, maxiter, history)
        xf = xf - (c @ xf) / (c @ ones) * ones
    else:
        xf = _solve_raw(Aff, bf, method, tol, maxiter, history)
    x[free] = xf
    res = np.linalg.norm(Aff @ xf - bf) / bnorm
    if not np.isfinite(res):
        raise SolverError("singular constrained matrix", history)
    if method == "direct" and res > DIRECT_RESIDUAL_TOL:
        raise SolverError(f"direct solve left relative residual {res:.3e}; matrix is numerically singular")
    if method != "direct" and res > tol * 10:
        raise SolverError(f"relative residual {res:.3e} exceeds tolerance {tol:.1e}", history)
    return x


def _solve_raw(A, b, method, tol, maxiter, history):
    if method == "direct":
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                y = spla.spsolve(A.tocsc(), b)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise SolverError(f"singular constrained matrix ({exc})") from None
        if not np.all(np.isfinite(y)):
            raise SolverError("singular constrained matrix")
        return y
    bnorm = np.linalg.norm(b)

    def cb(xk):
        history.append(float(np.linalg.norm(b - A @ xk) / bnorm))

    solver = spla.cg if method == "cg" else spla.bicgstab
    y, info = solver(A, b, rtol=tol, atol=0.0, maxiter=maxiter, M=_jacobi(A), callback=cb)
    if info != 0:
        raise SolverError(f"{method} did not converge (info={info})", history)
    return y
