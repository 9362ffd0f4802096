"""Fourth-order aircraft model with a switched parameter.

The lower bound needs level 3 (sixth-order polynomial Lyapunov function,
a 20-dimensional lifted system) and takes about half a minute.  The worst-case
signal then settles into a three-breakpoint periodic pattern.

Run:  python3 demos/example2_aircraft.py
"""

import time

import numpy as np

from switchmargin import (
    AlgorithmConfig,
    Indicator,
    certificate_level,
    find_switching_sequence,
    simulate_fixed_signal,
    under_approximate_margin,
    upper_bound_margin,
)
from switchmargin.fixtures import path
from switchmargin.io import load_problem

prob = load_problem(path("example2"))
sys = prob.system
print("A =\n", sys.a, "\nA0 =\n", sys.a0)

# %% lower bound
t0 = time.perf_counter()
rep = under_approximate_margin(sys, AlgorithmConfig(i_max=3))
cert = rep.certificate
print(f"\ndelta_lower = {rep.delta_lower:.4f} at level {cert.level} "
      f"({time.perf_counter() - t0:.0f} s)")

# %% upper bound from x0 = [1, 1, 1, 1] over 2 s
x0 = np.ones(4)
mr = upper_bound_margin(sys, cert, x0, 2.0, increment=0.01)
print(f"delta_upper = {mr.delta_upper:.4f}")
print("periodic run times", np.round(mr.periodic_signal.times, 4))
print(f"unit-circle residual {mr.witness.unit_eig_residual:.1e}")

# %% the indicator along the worst-case trajectory becomes periodic
level = certificate_level(sys, cert)
signal, _ = find_switching_sequence(
    sys, level, cert.p, mr.delta_upper, x0, 2.0, transform=cert.transform
)
ind = Indicator(level, cert.p, cert.transform)
# period of the settled pattern: the last two complete segments
m = signal.n_segments - 1
period = signal.times[m] - signal.times[m - 2]


def normalised(ts):
    xs = simulate_fixed_signal(sys, signal, x0, times=ts).x
    return ind(xs) / np.sum(ind.lift(xs) ** 2, axis=1)


ts = np.array([0.0, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0])
now, later = normalised(ts), normalised(ts + period)
print(f"\nperiod {period:.4f} s")
print("   t     I/|xi|^2   one period later")
for t, a, b in zip(ts, now, later):
    print(f"{t:5.2f}  {a:+10.2f}  {b:+10.2f}")
