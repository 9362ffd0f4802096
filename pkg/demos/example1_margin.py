"""Two-state switched system: lower and upper margin bounds.

    A  = [[0, 1], [-1, -0.5]]
    A0 = [[0, 0], [-1, 0]]

A common quadratic Lyapunov function only certifies about δ = 1.25.  Climbing
the hierarchy of lifted systems pushes the certified bound past 2.1, and the
worst-case switching sequence then finds a periodic orbit just above it.

Run:  python3 demos/example1_margin.py
"""

import numpy as np

from switchmargin import (
    AlgorithmConfig,
    SwitchedLinearSystem,
    certificate_level,
    find_switching_sequence,
    under_approximate_margin,
    upper_bound_margin,
)

A = np.array([[0.0, 1.0], [-1.0, -0.5]])
A0 = np.array([[0.0, 0.0], [-1.0, 0.0]])
sys = SwitchedLinearSystem(A, A0)

# %% lower bounds for increasing polynomial order
print("order  delta_lower  level")
for i_max in (1, 2, 4, 7):
    rep = under_approximate_margin(sys, AlgorithmConfig(epsilon=0.01, i_max=i_max))
    print(f"{2 * i_max:5d}  {rep.delta_lower:11.4f}  {rep.certificate.level:5d}")
cert = rep.certificate

# %% worst-case switching at δ = 2.21 from x0 = [1, 1]
level = certificate_level(sys, cert)
signal, traj = find_switching_sequence(
    sys, level, cert.p, 2.21, [1.0, 1.0], 20.0, transform=cert.transform
)
print("\nswitching times:", np.round(signal.times[:7], 3))
print("values:         ", signal.values[:6])
print(f"|x(20)| = {traj.norms()[-1]:.3g}")

# %% upper bound: sweep δ until some run of segments has a unit-modulus
# transition eigenvalue
mr = upper_bound_margin(sys, cert, [1.0, 1.0], 20.0, increment=0.01)
w = mr.witness
print(f"\ncertified lower bound {mr.delta_lower:.4f}")
print(f"upper bound           {mr.delta_upper:.4f}  (segments {w.j}..{w.k - 1})")
print("transition eigenvalues", np.round(w.spectrum, 5))
print("periodic run times    ", np.round(mr.periodic_signal.times, 4))
