"""Worst-case impulse response of the two-state system at δ = 1.

Starting from x0 = B and switching to maximise the rate of growth of the
Lyapunov function keeps the output ringing long after the unswitched
response has died away.

Run:  python3 demos/example3_impulse.py
"""

import numpy as np

from switchmargin import (
    AlgorithmConfig,
    ImpulseSetup,
    certificate_level,
    nominal_impulse,
    simulate_fixed_signal,
    under_approximate_margin,
    worst_case_impulse,
)
from switchmargin.fixtures import path
from switchmargin.io import load_problem

prob = load_problem(path("example3"))
sys, imp = prob.system, prob.impulse
assert isinstance(imp, ImpulseSetup)

rep = under_approximate_margin(sys, AlgorithmConfig(epsilon=0.01, i_max=7))
cert = rep.certificate
level = certificate_level(sys, cert)
print(f"certificate of order {cert.order}, delta_lower = {rep.delta_lower:.4f}")

signal, _, _ = worst_case_impulse(sys, imp, level, cert.p, 1.0, 20.0, transform=cert.transform)
print(f"{signal.n_segments} switching segments, first times", np.round(signal.times[:6], 3))

# %% compare on a uniform grid
ts = np.linspace(0, 20, 2001)
h_w = simulate_fixed_signal(sys, signal, imp.b, times=ts).x @ imp.c
h_n = nominal_impulse(sys, imp, ts)


def envelope(h):
    return np.maximum.accumulate(np.abs(h)[::-1])[::-1]


env_w, env_n = envelope(h_w), envelope(h_n)
print("\n   t    |h| envelope worst   unswitched")
for t in (0, 2, 5, 10, 15, 19):
    k = int(np.searchsorted(ts, t))
    print(f"{t:4d}    {env_w[k]:17.4f}   {env_n[k]:10.4f}")
print(f"\nworst-case envelope is larger on {np.mean(env_w > env_n):.0%} of the horizon")
