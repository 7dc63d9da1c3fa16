import numpy as np
import pytest

from nsf import fem
from nsf.coefficients import (ClampError, ConfigurationError, PiecewiseModulation, check_compatibility,
                              check_viscosity_pair, default_air_constants, flux_l1, lifting_field,
                              make_channel_data, make_law, vertex_normals, zero_data)
from nsf.mesh import DIRICHLET_TAGS, BoundaryTag, build_rectangle_channel


def test_air_constants():
    air = default_air_constants()
    assert air["R_specific"] == 287.0
    assert air["rho0"] == 1.184
    assert air["c_v"] == pytest.approx(717.5)
    assert air["mu"] == pytest.approx(3.8e-5)
    assert air["k"] == pytest.approx(2.6e-2)
    assert air["bulk_viscosity"] == pytest.approx(0.8 * 1.9e-5)
    assert air["lambda"] == pytest.approx(0.8 * 1.9e-5 - 1.9e-5)
    assert 2 * air["lambda"] + air["mu"] >= 0


def test_affine_conductivity_clamped_below_range():
    k = make_law("affine", {"value": 2.6e-2, "slope": 1e-4, "theta_ref": 300.0}, (0.9e-2, 6.8e-2), role="k")
    assert k(np.array([50.0]))[0] == pytest.approx(0.9e-2)
    assert k.clamp_events == 1
    assert k(np.array([300.0]))[0] == pytest.approx(2.6e-2)
    assert k.clamp_events == 1


def test_strict_law_raises_on_clamp():
    k = make_law("constant", {"value": 5.0}, (0.0, 1.0), strict=True)
    with pytest.raises(ClampError):
        k(np.ones(3))


def test_power_law():
    law = make_law("power", {"value": 2.0, "exponent": 0.5, "theta_ref": 100.0}, (0.0, 100.0))
    np.testing.assert_allclose(law(np.array([400.0])), [4.0])


def test_modulation_is_piecewise_in_x():
    mod = PiecewiseModulation((0.5,), (1.0, 3.0))
    law = make_law("constant", {"value": 1.0}, (0.0, 10.0), modulation=mod)
    x = np.array([[0.2, 0.0], [0.7, 0.1]])
    np.testing.assert_allclose(law(np.zeros(2), x), [1.0, 3.0])


@pytest.mark.parametrize("kwargs", [
    dict(kind="cubic", params={"value": 1.0}, clamps=(0, 1)),
    dict(kind="constant", params={"value": 1.0}, clamps=(2, 1)),
    dict(kind="constant", params={"value": 1.0}, clamps=(0, 1), role="mu"),
    dict(kind="constant", params={"value": 1.0}, clamps=(-1, 1), role="h_out"),
    dict(kind="constant", params={}, clamps=(0, 1)),
])
def test_inconsistent_laws_rejected(kwargs):
    with pytest.raises(ConfigurationError):
        make_law(**kwargs)


def test_h_out_may_vanish():
    law = make_law("constant", {"value": 0.0}, (0.0, 1.0), role="h_out")
    assert law(np.ones(1))[0] == 0.0


def test_viscosity_pair_check():
    mu = make_law("constant", {"value": 1.0}, (0.5, 1.0), role="mu")
    bad = make_law("constant", {"value": -2.0}, (-3.0, -1.0))
    with pytest.raises(ConfigurationError):
        check_viscosity_pair(mu, bad)
    ok = make_law("constant", {"value": -0.4}, (-0.5, -0.3))
    check_viscosity_pair(mu, ok)


def test_modulation_validation():
    with pytest.raises(ConfigurationError):
        PiecewiseModulation((0.5,), (1.0,))
    with pytest.raises(ConfigurationError):
        PiecewiseModulation((0.6, 0.2), (1.0, 1.0, 1.0))


@pytest.fixture(scope="module")
def mesh():
    return build_rectangle_channel(1.0, 0.25, 8, 4)


def test_channel_flux_is_balanced(mesh):
    data = make_channel_data(mesh, "parabolic", 1.0)
    assert abs(check_compatibility(data.g, mesh)) <= 1e-14 * flux_l1(data.g, mesh)
    # inflow through the inlet equals rho * (2/3) U * height for the interpolated parabola
    inflow = -np.sum((data.g * fem.edge_weights(mesh))[mesh.tag_mask(BoundaryTag.INLET)])
    assert inflow > 0
    assert np.all(data.g[mesh.tag_mask(BoundaryTag.WALL)] == 0.0)


def test_unbalanced_flux_rejected(mesh):
    with pytest.raises(ConfigurationError, match="not balanced"):
        make_channel_data(mesh, "uniform", 1.0, "uniform", 2.0)


def test_unbalanced_flux_allowed_without_check(mesh):
    data = make_channel_data(mesh, "uniform", 1.0, "uniform", 2.0, check=False)
    assert check_compatibility(data.g, mesh) > 0


def test_lifting_matches_dirichlet_and_slip(mesh):
    data = make_channel_data(mesh, "parabolic", 1.0)
    d = mesh.tagged_vertices(DIRICHLET_TAGS)
    np.testing.assert_allclose(data.lifting[d], data.u_D[d], atol=1e-13)
    normals = vertex_normals(mesh, BoundaryTag.WALL)
    wall_only = np.setdiff1d(mesh.tagged_vertices(BoundaryTag.WALL), d)
    for v in wall_only:
        assert abs(data.lifting[v] @ normals[v]) <= 1e-13


def test_zero_wall_lifting(mesh):
    data = make_channel_data(mesh, "parabolic", 1.0, lifting="zero_wall")
    wall_only = np.setdiff1d(mesh.tagged_vertices(BoundaryTag.WALL), mesh.tagged_vertices(DIRICHLET_TAGS))
    np.testing.assert_array_equal(data.lifting[wall_only], 0.0)
    with pytest.raises(ConfigurationError):
        lifting_field(mesh, data.u_D, "magic")


def test_theta0_bounds(mesh):
    data = make_channel_data(mesh, "parabolic", 1.0, theta_in=300.0, theta_w=350.0, theta_out=310.0)
    assert data.theta0_bounds == (300.0, 350.0)


def test_callable_wall_temperature(mesh):
    data = make_channel_data(mesh, theta_w=lambda x: 300.0 + 100.0 * x[..., 0])
    lo, hi = data.theta0_bounds
    assert lo == 300.0 and hi == pytest.approx(400.0)


def test_inlet_profile_values(mesh):
    data = make_channel_data(mesh, "parabolic", 2.0)
    inlet = mesh.tagged_vertices(BoundaryTag.INLET)
    y = mesh.vertices[inlet, 1] / 0.25
    np.testing.assert_allclose(data.u_D[inlet, 0], 2.0 * 4 * y * (1 - y), atol=1e-14)
    np.testing.assert_array_equal(data.u_D[inlet, 1], 0.0)


def test_zero_data(mesh):
    data = zero_data(mesh, 320.0)
    assert np.all(data.g == 0) and np.all(data.lifting == 0)
    assert data.theta0_bounds == (320.0, 320.0)


@pytest.mark.parametrize("bad", [dict(inlet_profile="cosine"), dict(theta_in=0.0)])
def test_invalid_channel_data(mesh, bad):
    with pytest.raises(ConfigurationError):
        make_channel_data(mesh, **bad)
