"""Package solves against dense reference assemblies."""
import numpy as np
import pytest

import oracles
from nsf import fem
from nsf.coefficients import make_channel_data, make_law
from nsf.density import solve_scalar_potential
from nsf.mesh import DIRICHLET_TAGS, NEUMANN_TAGS, BoundaryTag, Mesh, build_rectangle_channel
from nsf.momentum import MomentumProblem, solve_momentum
from nsf.temperature import TemperatureProblem, solve_temperature

TOL = 1e-10
ALL_TAGS = tuple(BoundaryTag)


def rotated(mesh, angle):
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    return Mesh(mesh.vertices @ R.T, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags)


def laws():
    # affine in theta, no clamping in the tested range: both quadratures are exact
    return {
        "mu": make_law("affine", {"value": 2.0, "slope": 0.01, "theta_ref": 300.0}, (0.1, 10.0), role="mu"),
        "lam": make_law("affine", {"value": -0.4, "slope": -0.001, "theta_ref": 300.0}, (-1.0, 0.0)),
        "gamma": make_law("affine", {"value": 3.0, "slope": 0.02, "theta_ref": 300.0}, (0.1, 10.0), role="gamma"),
        "k": make_law("affine", {"value": 1.5, "slope": 0.005, "theta_ref": 300.0}, (0.1, 10.0), role="k"),
        "h_wall": make_law("affine", {"value": 4.0, "slope": 0.01, "theta_ref": 300.0}, (0.1, 10.0),
                           role="h_wall"),
        "h_out": make_law("constant", {"value": 0.7}, (0.0, 2.0), role="h_out"),
    }


def fields(mesh, seed):
    rng = np.random.default_rng(seed)
    n = mesh.n_vertices
    m = rng.normal(size=(n, 2))
    xi = 300.0 + 20.0 * rng.uniform(-1, 1, size=n)
    pi = rng.normal(size=n)
    return m, xi, pi


def data_for(mesh):
    return make_channel_data(mesh, "parabolic", 1.3, rho_inf=1.1, theta_in=300.0, theta_w=340.0,
                             theta_out=310.0, c_v=2.0)


MESHES = {
    "square": lambda: build_rectangle_channel(1.0, 1.0, 1, 1),
    "channel_4x2": lambda: build_rectangle_channel(1.0, 0.5, 4, 2),
    "channel_5x3": lambda: build_rectangle_channel(1.2, 0.6, 5, 3),
}


def test_square_has_two_triangles():
    assert MESHES["square"]().n_triangles == 2


@pytest.mark.parametrize("name", MESHES)
def test_potential_matches_dense(name):
    mesh = MESHES[name]()
    pts, normals = fem.edge_points(mesh), mesh.edge_normals

    def flux(x, n):
        return 2 * x[..., 0] * n[..., 0] - 2 * x[..., 1] * n[..., 1]

    g_e = flux(pts, normals[:, None, :])
    pkg = solve_scalar_potential(mesh, g_e, tags=ALL_TAGS).psi
    ref = oracles.dense_poisson_neumann(mesh, lambda x, n: flux(x, n[None, :]), ALL_TAGS)
    assert np.max(np.abs(pkg - ref)) <= TOL


@pytest.mark.parametrize("name", MESHES)
def test_channel_potential_matches_dense(name):
    mesh = MESHES[name]()
    data = data_for(mesh)
    pkg = solve_scalar_potential(mesh, data.g).psi

    # the flux is rho_inf * (linear interpolant of u_D) . n along each edge
    n = mesh.n_vertices
    K = np.zeros((n, n))
    b = np.zeros(n)
    mass = np.zeros(n)
    for _, tri, grads, phi, pts, w in oracles.element_loop(mesh):
        K[np.ix_(tri, tri)] += (grads @ grads.T) * w.sum()
        mass[tri] += phi.T @ w
    for (a, c), pts, vals, w, normal, _ in oracles.edge_loop(mesh, DIRICHLET_TAGS):
        g = data.rho_inf * (vals @ data.u_D[[a, c]]) @ normal
        b[[a, c]] += vals.T @ (w * g)
    A = np.block([[K, mass[:, None]], [mass[None, :], np.zeros((1, 1))]])
    ref = np.linalg.solve(A, np.append(b, 0.0))[:n]
    assert np.max(np.abs(pkg - ref)) <= TOL


@pytest.mark.parametrize("name", MESHES)
def test_temperature_matches_dense(name):
    mesh = MESHES[name]()
    data = data_for(mesh)
    L = laws()
    m, xi, _ = fields(mesh, 1)
    prob = TemperatureProblem(mesh, fem.at_quad(mesh, m), xi, L["k"], L["h_wall"], L["h_out"], data)
    pkg = solve_temperature(prob, "centered").theta

    def h_law(theta, x, tag):
        return (L["h_wall"] if tag == BoundaryTag.WALL else L["h_out"])(theta, x)

    def theta_e(x, tag):
        return np.full(len(x), 340.0 if tag == BoundaryTag.WALL else 310.0)

    ref = oracles.dense_temperature(mesh, m, xi, L["k"], h_law, theta_e, data.theta_in, data.c_v, data.u_D,
                                    data.rho_inf, mesh.tagged_vertices(BoundaryTag.INLET), NEUMANN_TAGS,
                                    DIRICHLET_TAGS)
    assert np.max(np.abs(pkg - ref)) <= TOL * max(1.0, np.max(np.abs(ref)))


def _wall_normals(mesh):
    """Unit normals at slip vertices, from the straight wall edges around each vertex."""
    dirichlet = set(mesh.tagged_vertices(DIRICHLET_TAGS).tolist())
    out = {}
    for (a, b), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        if tag != BoundaryTag.WALL:
            continue
        d = mesh.vertices[b] - mesh.vertices[a]
        nrm = np.array([d[1], -d[0]]) / np.linalg.norm(d)
        for v in (int(a), int(b)):
            if v not in dirichlet:
                out[v] = nrm
    return out


@pytest.mark.parametrize("angle", [0.0, 0.5])
@pytest.mark.parametrize("name", MESHES)
def test_momentum_matches_dense(name, angle):
    mesh = rotated(MESHES[name](), angle)
    data = data_for(mesh)
    L = laws()
    m, xi, pi = fields(mesh, 2)
    prob = MomentumProblem(mesh, fem.at_quad(mesh, m), xi, pi, L["mu"], L["lam"], L["gamma"], data)
    pkg = solve_momentum(prob).w
    ref = oracles.dense_momentum(mesh, m, xi, L["mu"], L["lam"], L["gamma"], pi, data.lifting,
                                 mesh.tagged_vertices(DIRICHLET_TAGS), _wall_normals(mesh))
    scale = max(1.0, np.max(np.abs(ref)))
    assert np.max(np.abs(pkg - ref)) <= TOL * scale
    if name != "square":
        assert np.max(np.abs(ref)) > 1e-3  # nontrivial comparison
