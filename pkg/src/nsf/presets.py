"""Ready-made configurations.

The channel baseline is a strongly viscous model regime.  With the dry-air
values the pressure feedback ``R theta`` dominates the viscous scale by
roughly eight orders of magnitude and plain Picard iteration diverges, so
the baseline raises the transport coefficients while keeping the air
values of ``R``, ``c_v`` and ``rho0``.
"""
from __future__ import annotations

from .coefficients import (BoundaryData, PiecewiseModulation, default_air_constants, make_channel_data,
                           make_law, zero_data)
from .fixed_point import Numerics, Setup
from .mesh import build_rectangle_channel

BASELINE = {
    "length": 1.0,
    "height": 0.25,
    "nx": 32,
    "ny": 8,
    "mu": 1.0e5,
    "lam_ratio": -0.1,
    "gamma": 1.0e5,
    "k": 50.0,
    "h_wall": 100.0,
    "h_out": 10.0,
    "inlet_profile": "parabolic",
    "inlet_velocity": 1.0,
    "theta_in": 300.0,
    "theta_w": 350.0,
    "theta_out": 300.0,
}


def baseline_laws(mu: float, lam_ratio: float, gamma: float, k: float, h_wall: float, h_out: float,
                  theta_ref: float = 300.0, modulation: PiecewiseModulation | None = None) -> dict:
    """Temperature-dependent laws with clamps at half and twice the reference value."""
    laws = {
        "mu": make_law("affine", {"value": mu, "slope": mu / 1000.0, "theta_ref": theta_ref},
                       (0.5 * mu, 2.0 * mu), modulation, role="mu"),
        "gamma": make_law("constant", {"value": gamma}, (0.5 * gamma, 2.0 * gamma), role="gamma"),
        "k": make_law("power", {"value": k, "exponent": 0.8, "theta_ref": theta_ref},
                      (0.5 * k, 2.0 * k), role="k"),
        "h_wall": make_law("constant", {"value": h_wall}, (0.5 * h_wall, 2.0 * h_wall), role="h_wall"),
        "h_out": make_law("constant", {"value": h_out}, (0.0, 2.0 * h_out), role="h_out"),
    }
    lam = lam_ratio * mu
    lo, hi = sorted((0.5 * lam, 2.0 * lam))
    laws["lam"] = make_law("affine", {"value": lam, "slope": lam / 1000.0, "theta_ref": theta_ref},
                           (lo, hi), modulation, role="lambda")
    return laws


def channel_setup(numerics: Numerics | None = None, **overrides) -> Setup:
    p = {**BASELINE, **overrides}
    air = default_air_constants()
    mesh = build_rectangle_channel(p["length"], p["height"], p["nx"], p["ny"])
    numerics = numerics or Numerics(M=10 * air["rho0"])
    data = make_channel_data(mesh, p["inlet_profile"], p["inlet_velocity"], "uniform", None,
                             rho_inf=air["rho0"], theta_in=p["theta_in"], theta_w=p["theta_w"],
                             theta_out=p["theta_out"], lifting=p.get("lifting", "harmonic"), rho0=air["rho0"],
                             R_specific=air["R_specific"], c_v=air["c_v"], M=numerics.M)
    laws = baseline_laws(p["mu"], p["lam_ratio"], p["gamma"], p["k"], p["h_wall"], p["h_out"], p["theta_in"])
    return Setup(mesh, data, numerics=numerics, **laws)


def zero_setup(nx: int = 8, ny: int = 2, numerics: Numerics | None = None) -> Setup:
    """No flow and one uniform temperature everywhere."""
    air = default_air_constants()
    mesh = build_rectangle_channel(1.0, 0.25, nx, ny)
    numerics = numerics or Numerics(M=10 * air["rho0"])
    data: BoundaryData = zero_data(mesh, 300.0, rho0=air["rho0"], R_specific=air["R_specific"],
                                   c_v=air["c_v"], M=numerics.M)
    laws = baseline_laws(BASELINE["mu"], BASELINE["lam_ratio"], BASELINE["gamma"], BASELINE["k"],
                         BASELINE["h_wall"], BASELINE["h_out"])
    return Setup(mesh, data, numerics=numerics, **laws)
