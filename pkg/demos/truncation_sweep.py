"""Truncation levels below and above the density range.

The pressure uses the truncated density ``min(rho, M)``.  When ``M`` is
below the largest density the truncation is active somewhere and changes
the solution; once ``M`` exceeds it the solutions stop depending on ``M``
and the pressure is the ideal-gas value ``rho R theta``.
"""
import numpy as np

from nsf.fixed_point import m_sweep
from nsf.presets import channel_setup

setup = channel_setup()
rho0 = setup.data.rho0
levels = [1.5 * rho0, 2 * rho0, 5 * rho0, 10 * rho0, 100 * rho0]
entries = m_sweep(setup, levels)

print("    M/rho0  iterations  max rho   active    |rho|_r   change vs previous   p - rho R theta")
for e in entries:
    change = "-" if e.difference is None else f"{np.max(e.difference):.2e}"
    print(f"{e.M / rho0:10.1f}  {e.report.iterations:10d}  {e.max_rho:7.4f}  {e.activity:7.3f}  "
          f"{e.report.radii['density_r']:9.4f}  {change:>19s}   {e.pressure_identity:.2e}")

print("\nvelocity bound with measured radii:")
for e in entries:
    a = e.velocity_audit
    print(f"  M/rho0 = {e.M / rho0:6.1f}: |u - lift|_V = {a.lhs:.4g} <= {a.rhs:.4g}  ({'pass' if a.passed else 'FAIL'})")

rho_r = [e.report.radii["density_r"] for e in entries]
print(f"\n|rho|_r across levels: {', '.join(f'{x:.4f}' for x in rho_r)}")
print("it plateaus once the truncation is inactive, as the M-independent density bound would require")
