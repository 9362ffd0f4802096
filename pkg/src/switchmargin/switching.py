"""Worst-case bang-bang switching driven by a polynomial Lyapunov function.

For ``V(x) = ξ^T P ξ`` (``ξ = lift_state(x)``) the time derivative along
``x' = (A + Δ A0) x`` is affine in ``Δ``:

    V' = ξ^T (N0 + Δ N1) ξ,   N1 = cal_a0^T P + P cal_a0.

The coefficient ``ξ^T N1 ξ`` is the *indicator*; choosing ``Δ = δ`` whenever
it is non-negative and ``Δ = 0`` otherwise maximises ``V'`` pointwise.  The
construction below integrates the closed loop and switches at the zero
crossings of the indicator.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import IntegrationError
from .hierarchy import lift_state
from .linalg import as_matrix, expm, lyapunov_form

__all__ = [
    "IntegratorConfig",
    "SwitchingSignal",
    "Trajectory",
    "ImpulseSetup",
    "Indicator",
    "indicator",
    "worst_case_delta",
    "find_switching_sequence",
    "simulate_fixed_signal",
    "worst_case_impulse",
    "nominal_impulse",
]

log = logging.getLogger(__name__)


@dataclass
class IntegratorConfig:
    """Settings for the closed-loop simulations.

    ``min_dwell`` defaults to ``10 * event_tol``; no switch is accepted
    sooner than that after the previous one.  ``normalize`` rescales the
    state to unit norm at every switch (the dynamics and the indicator sign
    are homogeneous, so switching times are unaffected) which keeps long
    decaying or diverging runs inside floating-point range.
    """

    rtol: float = 1e-8
    atol: float = 1e-10
    event_tol: float = 1e-9
    min_dwell: float | None = None
    max_events: int = 1_000_000
    overflow: float = 1e12
    normalize: bool = True
    method: str = "RK45"
    max_step: float = math.inf
    sample_dt: float | None = None

    @property
    def dwell(self):
        return 10 * self.event_tol if self.min_dwell is None else self.min_dwell


@dataclass(frozen=True)
class SwitchingSignal:
    """Piecewise-constant ``Δ(t)``: value ``values[k]`` on ``[times[k], times[k+1])``.

    ``open_end`` marks a final breakpoint that is a simulation horizon rather
    than a switch, so the last segment is incomplete.
    """

    times: np.ndarray
    values: np.ndarray
    open_end: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        v = np.asarray(self.values, dtype=float).ravel()
        if len(t) != len(v) + 1 or len(v) == 0:
            raise ValueError("need len(times) == len(values) + 1 >= 2")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("signal has non-finite entries")
        if np.any(np.diff(t) <= 0):
            raise ValueError("switching times must be strictly increasing")
        if np.any(v < 0):
            raise ValueError("switching values must be non-negative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def durations(self):
        return np.diff(self.times)

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    @property
    def n_segments(self):
        return len(self.values)

    def is_bang_bang(self):
        """True if consecutive values differ (the alternation invariant)."""
        return bool(np.all(self.values[1:] != self.values[:-1]))

    def value_at(self, t):
        """Value active at time(s) `t`; right-continuous, last value held at the end."""
        k = np.searchsorted(self.times, t, side="right") - 1
        return self.values[np.clip(k, 0, self.n_segments - 1)]

    def segment(self, j, k):
        """Segments ``j..k-1`` as a new signal starting at time 0."""
        if not 0 <= j < k <= self.n_segments:
            raise IndexError(f"bad segment range ({j}, {k}) for {self.n_segments} segments")
        return SwitchingSignal(self.times[j : k + 1] - self.times[j], self.values[j:k])

    def repeated(self, cycles):
        """Concatenate `cycles` copies of this signal."""
        d = self.durations
        times = np.concatenate([[0.0], np.cumsum(np.tile(d, cycles))]) + self.times[0]
        return SwitchingSignal(times, np.tile(self.values, cycles))


@dataclass
class Trajectory:
    """Sampled solution of ``x' = (A + Δ(t) A0) x``.

    ``delta`` is the value of ``Δ`` active at each sample (right-continuous),
    ``indicator`` holds the indicator at each sample when one was supplied,
    and ``truncated`` is set when the overflow guard stopped the run.
    """

    t: np.ndarray
    x: np.ndarray
    delta: np.ndarray
    signal: SwitchingSignal
    indicator: np.ndarray | None = None
    truncated: bool = False

    def state_at(self, t):
        k = int(np.argmin(np.abs(self.t - t)))
        return self.x[k]

    def norms(self):
        return np.linalg.norm(self.x, axis=1)


@dataclass(frozen=True)
class ImpulseSetup:
    """Input column ``B`` and output row ``C`` of ``x' = A(t) x + B u, y = C x``."""

    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        c = np.asarray(self.c, dtype=float).ravel()
        if len(b) != len(c):
            raise ValueError(f"B has length {len(b)} but C has length {len(c)}")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise ValueError("B and C must be finite")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)


class Indicator:
    """Callable ``x -> ξ^T N1 ξ`` for a fixed level and ``P``.

    `transform` maps certificate coordinates to original ones
    (``x = transform @ z``); states passed in are always original.
    """

    def __init__(self, level, p, transform=None):
        self.level = level
        self.p = np.asarray(p, dtype=float)
        self.n1 = lyapunov_form(level.cal_a0, self.p)
        self.n0 = lyapunov_form(level.cal_a, self.p)
        self._tinv = None if transform is None else np.linalg.inv(transform)

    def lift(self, x):
        x = np.asarray(x, dtype=float)
        if self._tinv is not None:
            x = x @ self._tinv.T
        return lift_state(x, self.level.basis)

    def __call__(self, x):
        xi = self.lift(x)
        return np.einsum("...i,ij,...j->...", xi, self.n1, xi)

    def vdot(self, x, delta):
        """``V'`` at `x` under the constant perturbation value `delta`."""
        xi = self.lift(x)
        return np.einsum("...i,ij,...j->...", xi, self.n0 + delta * self.n1, xi)

    def value(self, x):
        xi = self.lift(x)
        return np.einsum("...i,ij,...j->...", xi, self.p, xi)

    def scale(self, x):
        """Magnitude ``||N1|| * ||ξ||^2`` against which indicator values are judged."""
        xi = self.lift(x)
        return np.linalg.norm(self.n1, 2) * np.sum(xi * xi, axis=-1)


def indicator(x, level, p, transform=None):
    """Indicator ``ξ^T (cal_a0^T P + P cal_a0) ξ`` with ``ξ = lift_state(x)``."""
    return Indicator(level, p, transform)(x)


def worst_case_delta(x, delta, level, p, transform=None):
    """``V'``-maximising value of ``Δ`` at state `x`: 0 if the indicator is
    negative, `delta` otherwise (ties go to `delta`)."""
    if delta < 0:
        raise ValueError("delta must be non-negative")
    return 0.0 if indicator(x, level, p, transform) < 0 else float(delta)


def _segment_solve(m, x, t0, t1, events, integ):
    """Integrate ``x' = m x`` on ``[t0, t1]``, stopping at the first event."""
    sol = solve_ivp(
        lambda t, y: m @ y,
        (t0, t1),
        x,
        method=integ.method,
        rtol=integ.rtol,
        atol=integ.atol,
        max_step=integ.max_step,
        events=events,
        dense_output=integ.sample_dt is not None,
    )
    if sol.status == -1:
        raise IntegrationError(sol.message)
    ts, ys = sol.t, sol.y.T
    if integ.sample_dt is not None and ts[-1] > t0:
        grid = np.arange(t0, ts[-1], integ.sample_dt)
        merged = np.union1d(grid, ts)
        ts, ys = merged, sol.sol(merged).T
        ys[-1] = sol.y[:, -1]
    return sol, ts, ys


def find_switching_sequence(sys, level, p, delta, x0, t_f, integ=None, transform=None):
    """Simulate the worst-case switching policy from `x0` up to `t_f`.

    Parameters
    ----------
    sys : SwitchedLinearSystem
    level : HierarchyLevel
        Level the certificate `p` belongs to (in certificate coordinates).
    p : (dim, dim) ndarray
    delta : float
        Upper value of ``Δ``; may exceed what `p` certifies.
    x0 : (n,) array_like
    t_f : float
        Horizon in seconds.
    integ : IntegratorConfig, optional
    transform : (n, n) ndarray, optional
        ``x = transform @ z`` where ``z`` are the certificate coordinates.

    Returns
    -------
    signal : SwitchingSignal
        Breakpoints ``0 = t_0 < ... < t_end`` and alternating values; the last
        breakpoint is the horizon (or the overflow time) and ``open_end`` is set.
    traj : Trajectory

    Raises
    ------
    IntegrationError
        On integrator failure or when more than ``integ.max_events`` switches
        occur.
    """
    integ = integ or IntegratorConfig()
    if not t_f > 0:
        raise ValueError("t_f must be positive")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    x = as_matrix(x0, name="x0").ravel()
    if len(x) != sys.n:
        raise ValueError(f"x0 has length {len(x)}, system has n = {sys.n}")
    ind = Indicator(level, p, transform)
    delta = float(delta)

    sigma = 0.0 if ind(x) < 0 else delta
    # an identically zero indicator would look like a root everywhere
    switching_possible = delta > 0 and bool(np.any(ind.n1))
    times, values = [0.0], [sigma]
    ts_all, xs_all = [np.array([0.0])], [x[None, :].copy()]
    log_scale = 0.0
    if integ.normalize and np.linalg.norm(x) > 0:
        log_scale = math.log(np.linalg.norm(x))
        x = x / np.linalg.norm(x)
    log_guard = math.log(integ.overflow)
    t = 0.0
    truncated = False
    n_events = 0

    while t < t_f:
        m = sys.mode(sigma)
        events = []
        if switching_possible:
            def switch(_t, y):
                return ind(y)

            switch.terminal = True
            # leaving the Δ = δ branch needs a negative indicator, and vice versa
            switch.direction = -1.0 if sigma == delta else 1.0
            events.append(switch)

        def blowup(_t, y, _ls=log_scale):
            return _ls + math.log(max(np.linalg.norm(y), 1e-300)) - log_guard

        blowup.terminal = True
        blowup.direction = 1.0
        events.append(blowup)

        # no switch within the dwell window after the previous one
        t_seg = t
        seg_ts, seg_xs = [], []
        if n_events > 0 and integ.dwell > 0:
            dwell = min(integ.dwell, t_f - t)
            x = expm(m, dwell) @ x
            t_seg = t + dwell
            seg_ts.append(np.array([t_seg]))
            seg_xs.append(x[None, :])
        if t_seg >= t_f:
            t = t_f
            ts_all.extend(seg_ts)
            xs_all.extend(np.exp(log_scale) * s for s in seg_xs)
            break

        sol, ts, ys = _segment_solve(m, x, t_seg, t_f, events, integ)
        seg_ts.append(ts[1:])
        seg_xs.append(ys[1:])
        ts_all.extend(seg_ts)
        xs_all.extend(np.exp(log_scale) * s for s in seg_xs)
        t = float(ts[-1])
        x = ys[-1].copy()

        if sol.status != 1:
            break
        if len(sol.t_events[-1]) > 0:
            truncated = True
            break
        n_events += 1
        if n_events > integ.max_events:
            raise IntegrationError(f"more than {integ.max_events} switches; chattering?")
        sigma = 0.0 if sigma == delta else delta
        if t > times[-1]:
            times.append(t)
            values.append(sigma)
        else:
            # the initial choice was corrected before any time elapsed
            values[-1] = sigma
        if integ.normalize:
            nx = np.linalg.norm(x)
            if nx > 0:
                log_scale += math.log(nx)
                x = x / nx

    t_end = t
    if times[-1] >= t_end:
        # a switch landed exactly on the horizon
        times.pop()
        values.pop()
    times.append(t_end)
    signal = SwitchingSignal(np.array(times), np.array(values), open_end=True)
    ts = np.concatenate(ts_all)
    xs = np.concatenate(xs_all)
    traj = Trajectory(ts, xs, signal.value_at(ts), signal, ind(xs), truncated)
    return signal, traj


def simulate_fixed_signal(
    sys, signal, x0, integ=None, *, mode="exact", samples_per_segment=32, indicator=None, times=None
):
    """Replay a given switching signal from `x0`.

    ``mode="exact"`` propagates each segment with the matrix exponential;
    ``mode="ode"`` uses the adaptive integrator.  The state is continuous
    across breakpoints.  `times`, if given, requests exact samples at those
    instants (within the signal span) instead of the default grid.
    `indicator`, if given, is evaluated at every sample.
    """
    integ = integ or IntegratorConfig()
    if mode not in ("exact", "ode"):
        raise ValueError(f"unknown mode {mode!r}")
    x = as_matrix(x0, name="x0").ravel()
    if len(x) != sys.n:
        raise ValueError(f"x0 has length {len(x)}, system has n = {sys.n}")
    if times is not None:
        return _sample_exact(sys, signal, x, np.asarray(times, dtype=float), indicator)
    ts_all, xs_all = [np.array([signal.times[0]])], [x[None, :].copy()]
    for k, sigma in enumerate(signal.values):
        t0, t1 = signal.times[k], signal.times[k + 1]
        m = sys.mode(sigma)
        if mode == "exact":
            if integ.sample_dt is not None:
                n_sub = max(1, int(math.ceil((t1 - t0) / integ.sample_dt)))
            else:
                n_sub = samples_per_segment
            grid = np.linspace(t0, t1, n_sub + 1)[1:]
            step = expm(m, (t1 - t0) / n_sub)
            seg = np.empty((n_sub, len(x)))
            for s in range(n_sub):
                x = step @ x
                seg[s] = x
            ts_all.append(grid)
            xs_all.append(seg)
        else:
            _, ts, ys = _segment_solve(m, x, t0, t1, None, integ)
            x = ys[-1].copy()
            ts_all.append(ts[1:])
            xs_all.append(ys[1:])
    ts = np.concatenate(ts_all)
    xs = np.concatenate(xs_all)
    ind_vals = None if indicator is None else indicator(xs)
    return Trajectory(ts, xs, signal.value_at(ts), signal, ind_vals)


def _sample_exact(sys, signal, x, times, indicator):
    if np.any(np.diff(times) < 0):
        raise ValueError("sample times must be non-decreasing")
    if len(times) and (times[0] < signal.times[0] or times[-1] > signal.times[-1]):
        raise ValueError("sample times outside the signal span")
    xs = np.empty((len(times), len(x)))
    seg = np.clip(np.searchsorted(signal.times, times, side="right") - 1, 0, signal.n_segments - 1)
    for k, sigma in enumerate(signal.values):
        m = sys.mode(sigma)
        t0 = signal.times[k]
        for r in np.flatnonzero(seg == k):
            xs[r] = expm(m, times[r] - t0) @ x
        x = expm(m, signal.times[k + 1] - t0) @ x
    ind_vals = None if indicator is None else indicator(xs)
    return Trajectory(times, xs, signal.value_at(times), signal, ind_vals)


def worst_case_impulse(sys, impulse, level, p, delta, t_f, integ=None, transform=None):
    """Worst-case switching for the impulse response: start from ``x0 = B``.

    Returns
    -------
    signal, traj
        As :func:`find_switching_sequence`.
    h : ndarray
        Output ``C φ(t)`` at the trajectory sample times.
    """
    if len(impulse.b) != sys.n:
        raise ValueError("impulse setup does not match the system dimension")
    signal, traj = find_switching_sequence(
        sys, level, p, delta, impulse.b, t_f, integ, transform
    )
    return signal, traj, traj.x @ impulse.c


def nominal_impulse(sys, impulse, times):
    """Unswitched impulse response ``C exp(A t) B`` at the given times."""
    return np.array([impulse.c @ expm(sys.a, t) @ impulse.b for t in np.asarray(times)])
