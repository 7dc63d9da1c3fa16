"""Bounded coefficient laws and boundary data.

Every law is clamped into a closed interval ``[lower, upper]`` after
evaluation.  The clamp interval doubles as the pair of structural bounds
used by the energy estimates (for instance ``mu_lo``/``mu_hi`` for the
viscosity), so the audits always use constants that provably hold.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fem
from .mesh import DIRICHLET_TAGS, NEUMANN_TAGS, BoundaryTag, Mesh

log = logging.getLogger(__name__)

LAW_KINDS = ("constant", "affine", "power")
#: roles whose lower clamp must be strictly positive
POSITIVE_ROLES = ("mu", "k", "gamma", "h_wall")

N_DIM = 2


class ConfigurationError(ValueError):
    """Inconsistent coefficient or boundary specification."""


class ClampError(ValueError):
    """A strict law had to clamp a value."""


@dataclass(frozen=True)
class PiecewiseModulation:
    """Multiplicative factor, piecewise constant in the x coordinate."""

    breaks: tuple = ()
    factors: tuple = (1.0,)

    def __post_init__(self):
        if len(self.factors) != len(self.breaks) + 1:
            raise ConfigurationError("modulation needs one more factor than breakpoints")
        if list(self.breaks) != sorted(self.breaks):
            raise ConfigurationError("modulation breakpoints must be ascending")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self.breaks, dtype=float), x[..., 0], side="right")
        return np.asarray(self.factors, dtype=float)[idx]


@dataclass(eq=False)
class BoundedLaw:
    kind: str
    params: dict
    lower: float
    upper: float
    modulation: Callable[[np.ndarray], np.ndarray] | None = None
    strict: bool = False
    role: str | None = None
    clamp_events: int = field(default=0, init=False)

    def raw(self, theta, x=None) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        p = self.params
        if self.kind == "constant":
            val = np.full(theta.shape, float(p["value"]))
        elif self.kind == "affine":
            val = p["value"] + p.get("slope", 0.0) * (theta - p.get("theta_ref", 300.0))
        else:
            ratio = np.maximum(theta, 1e-300) / p.get("theta_ref", 300.0)
            val = p["value"] * ratio ** p.get("exponent", 1.0)
        if self.modulation is not None and x is not None:
            val = val * self.modulation(np.asarray(x, dtype=float))
        return val

    def __call__(self, theta, x=None) -> np.ndarray:
        val = self.raw(theta, x)
        clipped = np.clip(val, self.lower, self.upper)
        events = int(np.count_nonzero(clipped != val))
        if events:
            if self.strict:
                raise ClampError(f"{self.role or 'coefficient'} law left [{self.lower}, {self.upper}] at {events} points")
            self.clamp_events += events
        return clipped

    @property
    def sup(self) -> float:
        """Bound on the absolute value of the law."""
        return max(abs(self.lower), abs(self.upper))


def make_law(kind: str, params: dict, clamps: tuple, modulation=None, role: str | None = None,
             strict: bool = False) -> BoundedLaw:
    if kind not in LAW_KINDS:
        raise ConfigurationError(f"unknown law kind {kind!r}; expected one of {LAW_KINDS}")
    lower, upper = (float(c) for c in clamps)
    if not lower <= upper:
        raise ConfigurationError(f"lower clamp {lower} exceeds upper clamp {upper}")
    if role in POSITIVE_ROLES and lower <= 0:
        raise ConfigurationError(f"{role} needs a strictly positive lower clamp")
    if role == "h_out" and lower < 0:
        raise ConfigurationError("outlet heat transfer coefficient must be non-negative")
    if "value" not in params:
        raise ConfigurationError(f"{kind} law needs a 'value' parameter")
    return BoundedLaw(kind, dict(params), lower, upper, modulation, strict, role)


def check_viscosity_pair(mu: BoundedLaw, lam: BoundedLaw) -> None:
    """Reject pairs for which ``2 lambda + mu >= 0`` can hold nowhere."""
    if N_DIM * lam.upper + mu.upper < 0:
        raise ConfigurationError("viscosity pair violates 2*lambda + mu >= 0 everywhere")


def default_air_constants() -> dict:
    """Dry air near 300 K at atmospheric pressure."""
    shear = 1.9e-5
    mu = 2.0 * shear
    bulk = 0.8 * shear
    return {
        "R_specific": 287.0,
        "c_v": 2.5 * 287.0,
        "rho0": 1.184,
        "mu": mu,
        "bulk_viscosity": bulk,
        "lambda": bulk - mu / N_DIM,
        "k": 2.6e-2,
    }


# ----------------------------------------------------------------------
# boundary data
def check_compatibility(g, mesh: Mesh) -> float:
    """Signed net mass flux ``int_{Gamma_D} g ds`` (edge quadrature)."""
    g_e = fem._edge_coefficient(mesh, g)
    mask = mesh.tag_mask(DIRICHLET_TAGS)
    return float(np.sum((g_e * fem.edge_weights(mesh))[mask]))


def flux_l1(g, mesh: Mesh) -> float:
    g_e = fem._edge_coefficient(mesh, g)
    mask = mesh.tag_mask(DIRICHLET_TAGS)
    return float(np.sum((np.abs(g_e) * fem.edge_weights(mesh))[mask]))


def vertex_normals(mesh: Mesh, tags) -> dict:
    """Averaged outward unit normals at vertices of the tagged edges."""
    mask = mesh.tag_mask(tags)
    acc = np.zeros((mesh.n_vertices, 2))
    for e, n in zip(mesh.boundary_edges[mask], mesh.edge_normals[mask]):
        acc[e] += n
    verts = np.unique(mesh.boundary_edges[mask].ravel())
    out = acc[verts]
    out /= np.linalg.norm(out, axis=1)[:, None]
    return dict(zip(verts.tolist(), out))


def _chain_coordinate(mesh: Mesh, tag: BoundaryTag) -> dict:
    """Normalized coordinate in [0, 1] along a straight tagged segment."""
    verts = mesh.tagged_vertices(tag)
    pts = mesh.vertices[verts]
    # endpoints: vertices incident to a single tagged edge
    e = mesh.boundary_edges[mesh.tag_mask(tag)]
    counts = np.bincount(e.ravel(), minlength=mesh.n_vertices)[verts]
    ends = pts[counts == 1]
    if len(ends) != 2:
        raise ConfigurationError(f"{tag.name.lower()} must be a single open chain of edges")
    d = ends[1] - ends[0]
    s = (pts - ends[0]) @ d / (d @ d)
    return dict(zip(verts.tolist(), s))


PROFILES = {
    "uniform": lambda s: np.ones_like(s),
    "parabolic": lambda s: 4.0 * s * (1.0 - s),
}


@dataclass
class BoundaryData:
    """Boundary data on one mesh.

    ``u_D`` is nodal (only Dirichlet vertices matter), ``g`` and
    ``theta_e`` are edge-quadrature fields over all boundary edges.
    """

    mesh: Mesh
    u_D: np.ndarray
    lifting: np.ndarray
    g: np.ndarray
    theta_in: float
    theta_e: np.ndarray
    theta0_bounds: tuple
    rho_inf: float
    rho0: float = 1.184
    R_specific: float = 287.0
    c_v: float = 717.5
    M: float = 11.84

    @property
    def dirichlet_vertices(self) -> np.ndarray:
        return self.mesh.tagged_vertices(DIRICHLET_TAGS)

    def compatibility_defect(self) -> float:
        return check_compatibility(self.g, self.mesh)


def lifting_field(mesh: Mesh, u_D: np.ndarray, kind: str = "harmonic") -> np.ndarray:
    """Extension of the Dirichlet velocity into the domain.

    ``harmonic``: componentwise Laplace problem with the Dirichlet values on
    inlet/outlet, zero normal component and free tangential component on
    walls.  ``zero_wall``: same, but the whole wall trace is set to zero.
    """
    from .momentum import apply_slip_constraints

    if kind not in ("harmonic", "zero_wall"):
        raise ConfigurationError(f"unknown lifting {kind!r}")
    dverts = mesh.tagged_vertices(DIRICHLET_TAGS)
    K = fem.vector_block(fem.assemble_stiffness(mesh))
    if kind == "zero_wall":
        fixed = np.union1d(dverts, mesh.tagged_vertices(BoundaryTag.WALL))
        values = np.zeros((mesh.n_vertices, 2))
        values[dverts] = u_D[dverts]
        dofs = np.concatenate([2 * fixed, 2 * fixed + 1])
        system = fem.SparseSystem(K, np.zeros(2 * mesh.n_vertices), dofs, values.ravel()[dofs])
        return fem.solve(system).reshape(-1, 2)
    system, Q = apply_slip_constraints(mesh, K, np.zeros(2 * mesh.n_vertices), u_D)
    return (Q @ fem.solve(system)).reshape(-1, 2)


def make_channel_data(mesh: Mesh, inlet_profile: str = "parabolic", inlet_velocity: float = 1.0,
                      outlet_profile: str = "uniform", outlet_velocity: float | None = None,
                      rho_inf: float = 1.184, theta_in: float = 300.0, theta_w=350.0, theta_out=300.0,
                      lifting: str = "harmonic", rho0: float = 1.184, R_specific: float = 287.0,
                      c_v: float = 717.5, M: float | None = None, check: bool = True) -> BoundaryData:
    """Normal inflow/outflow velocity profiles plus thermal data.

    ``outlet_velocity=None`` picks the outlet magnitude that balances the
    discrete mass flux exactly.  ``theta_w`` and ``theta_out`` may be
    constants or callables of the position.
    """
    for name in (inlet_profile, outlet_profile):
        if name not in PROFILES:
            raise ConfigurationError(f"unknown profile {name!r}")
    if not theta_in > 0:
        raise ConfigurationError("inlet temperature must be positive")
    u_D = np.zeros((mesh.n_vertices, 2))
    for tag, prof, speed, sign in ((BoundaryTag.INLET, inlet_profile, inlet_velocity, -1.0),
                                   (BoundaryTag.OUTLET, outlet_profile, 1.0, 1.0)):
        s = _chain_coordinate(mesh, tag)
        normals = vertex_normals(mesh, tag)
        for v, sv in s.items():
            u_D[v] = sign * speed * PROFILES[prof](np.asarray(sv)) * normals[v]

    def normal_flux(field_):
        ue = fem.at_edges(mesh, field_)
        return rho_inf * np.einsum("eqd,ed->eq", ue, mesh.edge_normals)

    outlet_mask = mesh.tag_mask(BoundaryTag.OUTLET)
    inlet_mask = mesh.tag_mask(BoundaryTag.INLET)
    g_unit = normal_flux(u_D)
    w = fem.edge_weights(mesh)
    q_in = float(np.sum((g_unit * w)[inlet_mask]))
    q_out_unit = float(np.sum((g_unit * w)[outlet_mask]))
    if outlet_velocity is None:
        outlet_velocity = -q_in / q_out_unit
    out_verts = mesh.tagged_vertices(BoundaryTag.OUTLET)
    only_out = np.setdiff1d(out_verts, mesh.tagged_vertices(BoundaryTag.INLET))
    u_D[only_out] *= outlet_velocity
    g = normal_flux(u_D)
    g[~mesh.tag_mask(DIRICHLET_TAGS)] = 0.0
    if check:
        defect = check_compatibility(g, mesh)
        if abs(defect) > 1e-10 * flux_l1(g, mesh):
            raise ConfigurationError(
                f"boundary mass flux is not balanced (compatibility condition): net flux {defect:.3e}")

    pts = fem.edge_points(mesh)
    theta_e = np.zeros(pts.shape[:2])
    for tag, val in ((BoundaryTag.WALL, theta_w), (BoundaryTag.OUTLET, theta_out)):
        mask = mesh.tag_mask(tag)
        theta_e[mask] = val(pts[mask]) if callable(val) else float(val)
    nmask = mesh.tag_mask(NEUMANN_TAGS)
    vals = np.concatenate([[theta_in], theta_e[nmask].ravel()])
    if callable(theta_w) or callable(theta_out):
        # extremes of the data at the boundary vertices as well
        for tag, val in ((BoundaryTag.WALL, theta_w), (BoundaryTag.OUTLET, theta_out)):
            if callable(val):
                vals = np.concatenate([vals, np.ravel(val(mesh.vertices[mesh.tagged_vertices(tag)]))])
    bounds = (float(vals.min()), float(vals.max()))
    lift = lifting_field(mesh, u_D, lifting)
    return BoundaryData(mesh, u_D, lift, g, float(theta_in), theta_e, bounds, float(rho_inf), float(rho0),
                        float(R_specific), float(c_v), float(M if M is not None else 10 * rho0))


def zero_data(mesh: Mesh, theta_in: float = 300.0, **kw) -> BoundaryData:
    """No-flow data: zero velocity and uniform temperature."""
    return make_channel_data(mesh, "uniform", 0.0, "uniform", 0.0, theta_in=theta_in,
                             theta_w=theta_in, theta_out=theta_in, **kw)
