"""Effect of the damping factor on the Picard iteration.

Every fixed point of the map is a fixed point of the damped map and
vice versa, so damping only changes the path.  On the baseline the
undamped iteration oscillates; the report flags this instead of failing.
"""
from nsf.fem import SolverError
from nsf.fixed_point import DivergenceError, iterate
from nsf.presets import channel_setup

setup = channel_setup()
print(" alpha  converged  iterations  monotone after 3  last relative update")
for alpha in (0.25, 0.5, 0.75, 1.0):
    try:
        _, _, report = iterate(setup, alpha=alpha, max_iter=150)
    except (DivergenceError, SolverError) as exc:
        print(f"{alpha:6.2f}  diverged: {exc}")
        continue
    last = report.update_history[-1].max()
    print(f"{alpha:6.2f}  {str(report.converged):>9s}  {report.iterations:10d}  {str(report.monotone_after(3)):>16s}"
          f"  {last:.2e}")
