"""Steady 2D compressible Navier-Stokes-Fourier solver on P1 triangles.

The solution is sought as a fixed point of a map that chains three linear
problems (velocity, density, temperature) with a truncated pressure law.
"""
from .coefficients import BoundaryData, BoundedLaw, ConfigurationError, default_air_constants, make_law
from .fixed_point import FieldState, Numerics, Setup, apply_T, iterate, m_sweep, truncate
from .mesh import BoundaryTag, Mesh, MeshError, build_rectangle_channel, load_mesh
from .presets import channel_setup, zero_setup

__all__ = [
    "BoundaryData", "BoundaryTag", "BoundedLaw", "ConfigurationError", "FieldState", "Mesh", "MeshError",
    "Numerics", "Setup", "apply_T", "build_rectangle_channel", "channel_setup", "default_air_constants",
    "iterate", "load_mesh", "m_sweep", "make_law", "truncate", "zero_setup",
]
__version__ = "0.1.0"
