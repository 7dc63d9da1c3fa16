import numpy as np
import pytest

import oracles
from nsf import fem
from nsf.coefficients import make_channel_data, make_law, zero_data
from nsf.mesh import DIRICHLET_TAGS, BoundaryTag, Mesh, build_rectangle_channel
from nsf.momentum import (MomentumProblem, apply_slip_constraints, audit_momentum_estimate, dual_exponent,
                          solve_momentum, wall_frames)


def constant_laws(mu=2.0, lam=-0.5, gamma=5.0):
    return (make_law("constant", {"value": mu}, (mu, mu), role="mu"),
            make_law("constant", {"value": lam}, (lam, lam)),
            make_law("constant", {"value": gamma}, (gamma, gamma), role="gamma"))


def problem(mesh, data, m=None, pi=None, seed=0, laws=None):
    rng = np.random.default_rng(seed)
    n = mesh.n_vertices
    m = rng.normal(size=(n, 2)) if m is None else m
    pi = rng.normal(size=n) if pi is None else pi
    mu, lam, gamma = laws or constant_laws()
    return MomentumProblem(mesh, m, np.full(n, 300.0), pi, mu, lam, gamma, data)


@pytest.fixture(scope="module")
def mesh():
    return build_rectangle_channel(1.0, 0.25, 8, 4)


@pytest.fixture(scope="module")
def data(mesh):
    return make_channel_data(mesh, "parabolic", 1.0)


def test_zero_data_gives_zero_velocity(mesh):
    zd = zero_data(mesh)
    n = mesh.n_vertices
    sol = solve_momentum(problem(mesh, zd, np.zeros((n, 2)), np.zeros(n)))
    assert np.all(sol.w == 0.0)
    audit = audit_momentum_estimate(sol, problem(mesh, zd, np.zeros((n, 2)), np.zeros(n)))
    assert audit.lhs == 0.0 and audit.rhs == 0.0 and audit.passed


def test_solution_respects_constraints(mesh, data):
    sol = solve_momentum(problem(mesh, data))
    d = mesh.tagged_vertices(DIRICHLET_TAGS)
    np.testing.assert_array_equal(sol.w[d], 0.0)
    np.testing.assert_allclose(sol.u[d], data.u_D[d], atol=1e-13)
    wall = np.setdiff1d(mesh.tagged_vertices(BoundaryTag.WALL), d)
    assert np.max(np.abs(sol.w[wall, 1])) <= 1e-14  # horizontal walls: u_y eliminated
    assert np.max(np.abs(sol.w[wall, 0])) > 0  # tangential part free
    assert sol.residual <= 1e-10


def test_energy_identity(mesh, data):
    sol = solve_momentum(problem(mesh, data, seed=4))
    e = sol.energy
    assert abs(e["convective"]) <= 1e-12 * e["viscous"]
    lhs = e["viscous"] + e["friction"]
    rhs = e["pressure"] + e["forcing"]
    assert abs(lhs - rhs) <= 1e-10 * abs(lhs)


def test_pressure_constant_is_invisible(mesh, data):
    p = problem(mesh, data, seed=5)
    a = solve_momentum(p).w
    p.pi = p.pi + 1e4
    b = solve_momentum(p).w
    assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(a))


def test_stokes_like_case_matches_dense():
    mesh = build_rectangle_channel(1.0, 0.5, 2, 1)
    data = make_channel_data(mesh, "parabolic", 1.0)
    n = mesh.n_vertices
    laws = constant_laws(1.0, 0.0, 1e6)
    p = problem(mesh, data, np.zeros((n, 2)), np.zeros(n), laws=laws)
    pkg = solve_momentum(p).w
    frames = wall_frames(mesh)
    ref = oracles.dense_momentum(mesh, np.zeros((n, 2)), np.full(n, 300.0), laws[0], laws[1], laws[2],
                                 np.zeros(n), data.lifting, mesh.tagged_vertices(DIRICHLET_TAGS), frames.normals)
    assert np.max(np.abs(pkg - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def test_audit_passes_on_channel(mesh, data):
    p = problem(mesh, data, seed=7)
    sol = solve_momentum(p)
    audit = audit_momentum_estimate(sol, p)
    assert audit.passed
    assert audit.details["p"] == pytest.approx(6.0)


def test_audit_fails_for_scaled_solution(mesh, data):
    p = problem(mesh, data, seed=7)
    sol = solve_momentum(p)
    audit = audit_momentum_estimate(sol, p)
    factor = np.sqrt(audit.rhs / audit.lhs) * 1.5 if audit.lhs > 0 else 10.0
    sol.w = max(10.0, factor) * sol.w
    assert not audit_momentum_estimate(sol, p).passed


def test_audit_reports_alternative_pressure_bound(mesh, data):
    p = problem(mesh, data, seed=8)
    sol = solve_momentum(p)
    audit = audit_momentum_estimate(sol, p, pressure_bound=1e6)
    assert audit.details["rhs_alternative"] >= audit.rhs
    assert audit.details["tighter"] == "pi_l2"


def _rotate(mesh, angle):
    c, s = np.cos(angle), np.sin(angle)
    return Mesh(mesh.vertices @ np.array([[c, -s], [s, c]]).T, mesh.triangles, mesh.boundary_edges,
                mesh.boundary_tags)


def test_45_degree_wall_frame():
    mesh = _rotate(build_rectangle_channel(1.0, 0.5, 4, 2), -np.pi / 4)
    frames = wall_frames(mesh)
    assert len(frames.normals) > 0
    target = np.array([1.0, 1.0]) / np.sqrt(2.0)
    for nv in frames.normals.values():
        assert abs(abs(nv @ target) - 1.0) <= 1e-14
    data = make_channel_data(mesh, "parabolic", 1.0)
    sol = solve_momentum(problem(mesh, data, seed=1))
    for v in frames.slip_vertices:
        assert abs(sol.w[v] @ target) <= 1e-13
        assert abs(sol.u[v] @ target) <= 1e-12


def test_rotation_invariance():
    base = build_rectangle_channel(1.0, 0.5, 4, 2)
    angle = 0.3
    rot = _rotate(base, angle)
    c, s = np.cos(angle), np.sin(angle)
    R = np.array([[c, -s], [s, c]])
    n = base.n_vertices
    rng = np.random.default_rng(9)
    m = rng.normal(size=(n, 2))
    pi = rng.normal(size=n)
    a = solve_momentum(problem(base, make_channel_data(base, "parabolic", 1.0), m, pi)).u
    b = solve_momentum(problem(rot, make_channel_data(rot, "parabolic", 1.0), m @ R.T, pi)).u
    np.testing.assert_allclose(b, a @ R.T, atol=1e-11)


def test_corner_between_two_walls_is_fixed():
    mesh = build_rectangle_channel(1.0, 1.0, 2, 2)
    tags = mesh.boundary_tags.copy()
    mid = mesh.vertices[mesh.boundary_edges].mean(axis=1)
    lower_right = (tags == BoundaryTag.OUTLET) & (mid[:, 1] < 0.5)
    tags[lower_right] = BoundaryTag.WALL
    bent = Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, tags)
    frames = wall_frames(bent)
    assert [tuple(bent.vertices[v]) for v in frames.corner_vertices] == [(1.0, 0.0)]
    v = int(frames.corner_vertices[0])
    assert {2 * v, 2 * v + 1} <= set(frames.fixed_dofs.tolist())
    # the junction with the outlet stays a Dirichlet vertex
    junction = int(np.nonzero(np.all(np.isclose(bent.vertices, [1.0, 0.5]), axis=1))[0][0])
    assert junction in frames.dirichlet_vertices.tolist()
    assert junction not in frames.slip_vertices.tolist()


def test_apply_slip_constraints_dirichlet_values(mesh, data):
    K = fem.vector_block(fem.assemble_stiffness(mesh))
    system, Q = apply_slip_constraints(mesh, K, np.zeros(2 * mesh.n_vertices), data.u_D)
    x = (Q @ fem.solve(system)).reshape(-1, 2)
    d = mesh.tagged_vertices(DIRICHLET_TAGS)
    np.testing.assert_allclose(x[d], data.u_D[d], atol=1e-14)


def test_invalid_problem_shapes(mesh, data):
    mu, lam, gamma = constant_laws()
    with pytest.raises(ValueError):
        MomentumProblem(mesh, np.zeros((3, 2)), np.zeros(mesh.n_vertices), np.zeros(mesh.n_vertices),
                        mu, lam, gamma, data)
    with pytest.raises(ValueError):
        MomentumProblem(mesh, np.zeros((mesh.n_vertices, 2)), np.zeros(2), np.zeros(mesh.n_vertices),
                        mu, lam, gamma, data)


@pytest.mark.parametrize("q, p", [(3.0, 6.0), (4.0, 4.0), (10.0 / 3.0, 5.0)])
def test_dual_exponent(q, p):
    assert dual_exponent(q) == pytest.approx(p)


def test_dual_exponent_rejects_small_q():
    with pytest.raises(ValueError):
        dual_exponent(2.0)
