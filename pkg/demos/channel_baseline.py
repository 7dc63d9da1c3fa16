"""Baseline channel: one damped Picard run, its audits and the output files.

A 1 x 0.25 channel with a parabolic inflow, a heated wall (350 K) and a
300 K inflow.  The transport coefficients are in the strongly viscous
model regime of ``nsf.presets``; the gas constants are those of dry air.

    python3 demos/channel_baseline.py [output directory]
"""
import sys
from pathlib import Path

import numpy as np

from nsf import fem
from nsf.fixed_point import iterate
from nsf.output import solution_fields, write_fields, write_report
from nsf.presets import channel_setup

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
setup = channel_setup()
mesh = setup.mesh
print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")

state, derived, report = iterate(setup)
print(f"converged: {report.converged} after {report.iterations} iterations")

print("\n it   rel. update (m, theta, p)              momentum lhs/rhs  temperature lhs/rhs")
for row in report.rows[:5] + report.rows[-3:]:
    rel = row["relative_update"]
    print(f"{row['iteration']:3d}   {rel[0]:.3e} {rel[1]:.3e} {rel[2]:.3e}   "
          f"{row['momentum_audit'].ratio:14.4f}  {row['temperature_audit'].ratio:18.4f}")
print(f"update norms strictly decreasing after iteration 3: {report.monotone_after(3)}")

# where the density came from
dens = derived.density
print(f"\ndensity range [{dens.rho.min():.4f}, {dens.rho.max():.4f}] kg/m^3")
print(f"quadrature points: stagnation {dens.stagnation.mean():.1%}, aligned {dens.aligned.mean():.1%}, "
      f"corrected {dens.corrected.mean():.1%}")

theta = derived.theta
print(f"temperature range [{theta.min():.3f}, {theta.max():.3f}] K (data range {setup.data.theta0_bounds})")

radii = report.radii
print(f"|theta|_(1,2) = {radii['temperature'].lhs:.4g} <= R2 = {radii['temperature'].rhs:.4g}")
print(f"|p_M|_r      = {radii['pressure'].lhs:.4g} <= R3 = {radii['pressure'].rhs:.4g}")
print(f"|rho u|_q / |g|_q = {radii['momentum'].details['ratio']:.4f}")

cont = report.rows[-1]["continuity"]
print(f"weak continuity residual (relative) = {cont['relative']:.4f}, dual norm = {cont['dual']:.4f}")

speed = np.linalg.norm(derived.u, axis=1)
outlet_p = fem.lumped_projection(mesh, derived.pressure_q)
print(f"max speed {speed.max():.4f} m/s, pressure range [{outlet_p.min():.6g}, {outlet_p.max():.6g}] Pa")

points, cells = solution_fields(setup, state, derived)
write_fields(mesh, out / "fields.vtk", points, cells)
write_report(report, out / "report.csv")
print(f"\nwrote {out / 'fields.vtk'} and {out / 'report.csv'}")
