"""Periodic-orbit detection and the upper bound on the stability margin.

A run of switching segments ``j..k-1`` maps the state at ``t_j`` to the state
at ``t_k`` through the transition (monodromy) matrix

    A_d = exp((A + σ_{k-1} A0) τ_{k-1}) ... exp((A + σ_j A0) τ_j).

Repeating that run periodically gives a trajectory that neither decays nor
grows exactly when ``A_d`` has an eigenvalue of modulus one.  The sweep below
raises ``δ`` from the certified lower bound until the worst-case switching
sequence contains such a run.
"""

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import SweepExhaustedError
from .linalg import eigenvalues, expm, is_hurwitz
from .lyapunov import certificate_level
from .switching import IntegratorConfig, SwitchingSignal, find_switching_sequence

__all__ = [
    "PeriodicityWitness",
    "SegmentSearch",
    "MarginReport",
    "SweepStep",
    "transition_matrix",
    "search_segments",
    "find_periodic_segment",
    "upper_bound_margin",
]

log = logging.getLogger(__name__)

PERIODIC = "periodic"
TRIVIAL = "trivial"
DIVERGING = "diverging"


@dataclass(frozen=True)
class PeriodicityWitness:
    """Segments ``j..k-1`` of a signal and their transition matrix.

    ``kind`` is ``"periodic"`` (an eigenvalue within tolerance of the unit
    circle), ``"trivial"`` (``A + δ A0`` is not Hurwitz, so a constant
    signal already fails) or ``"diverging"`` (an eigenvalue strictly outside
    the unit circle; repeating the run gives an unbounded trajectory).
    """

    j: int
    k: int
    a_d: np.ndarray
    spectrum: np.ndarray
    kind: str = PERIODIC

    @property
    def unit_eig_residual(self):
        return float(np.min(np.abs(np.abs(self.spectrum) - 1.0)))

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(self.spectrum)))

    def orbit_state(self):
        """Unit state on the periodic orbit: the eigenvector of ``a_d`` whose
        eigenvalue is closest to the unit circle (real part if complex)."""
        w, v = np.linalg.eig(self.a_d)
        vec = v[:, int(np.argmin(np.abs(np.abs(w) - 1.0)))]
        # rotate so the real part carries the most weight
        k = int(np.argmax(np.abs(vec)))
        vec = vec * np.exp(-1j * np.angle(vec[k]))
        x = vec.real
        return x / np.linalg.norm(x)


class SegmentSearch(NamedTuple):
    witness: PeriodicityWitness | None
    max_radius: float
    radius_witness: PeriodicityWitness | None

    @property
    def diverging(self):
        return self.radius_witness is not None and self.radius_witness.kind == DIVERGING


class SweepStep(NamedTuple):
    delta: float
    max_radius: float
    outcome: str


@dataclass
class MarginReport:
    """Bounds ``delta_lower <= delta_upper`` with the evidence for each.

    ``periodic_signal`` is the witness run re-based to start at ``t = 0``;
    ``signal`` is the full worst-case sequence it was cut from.
    """

    delta_lower: float
    delta_upper: float
    witness: PeriodicityWitness
    periodic_signal: SwitchingSignal
    certificate: object
    signal: SwitchingSignal | None = None
    sweep: list = field(default_factory=list)

    def __post_init__(self):
        if self.delta_upper < self.delta_lower:
            raise ValueError(
                f"upper bound {self.delta_upper} below lower bound {self.delta_lower}"
            )


def _segment_exponentials(sys, signal):
    return [expm(sys.mode(s), d) for s, d in zip(signal.values, signal.durations)]


def transition_matrix(sys, signal, j, k):
    """Product of segment exponentials for segments ``j..k-1``, the earliest
    applied first (rightmost)."""
    if not 0 <= j < k <= signal.n_segments:
        raise IndexError(f"need 0 <= j < k <= {signal.n_segments}, got ({j}, {k})")
    out = np.eye(sys.n)
    for s, d in zip(signal.values[j:k], signal.durations[j:k]):
        out = expm(sys.mode(s), d) @ out
    return out


def _complete_segments(signal):
    return signal.n_segments - 1 if signal.open_end else signal.n_segments


def _span_order(values, m):
    """(j, k) pairs, shortest spans first, that end in the phase opposite to
    where they start, so the next segment repeats the phase of ``j``.  Within
    one span length, runs starting on the upper value come first."""
    if m == 0:
        return
    top = values[:m].max()
    constant = bool(np.all(values[:m] == values[0]))
    for span in range(1, m + 1):
        starts = [
            j for j in range(m - span + 1)
            if constant or values[j] != values[j + span - 1]
        ]
        starts.sort(key=lambda j: (values[j] != top, j))
        for j in starts:
            yield j, j + span


def search_segments(sys, signal, tol_unit=1e-3, max_span=None):
    """Scan runs of complete segments for a unit-modulus transition eigenvalue.

    Returns the first periodic witness in scan order (or ``None``), the
    largest spectral radius seen and the run attaining it.  Scanning stops
    at the first witness.
    """
    m = _complete_segments(signal)
    exps = _segment_exponentials(sys, signal)[:m]
    best, best_w = 0.0, None
    for j, k in _span_order(signal.values, m):
        if max_span is not None and k - j > max_span:
            break
        a_d = np.eye(sys.n)
        for e in exps[j:k]:
            a_d = e @ a_d
        spec = eigenvalues(a_d)
        resid = float(np.min(np.abs(np.abs(spec) - 1.0)))
        rad = float(np.max(np.abs(spec)))
        if resid <= tol_unit:
            w = PeriodicityWitness(j, k, a_d, spec, PERIODIC)
            return SegmentSearch(w, max(best, rad), w)
        if rad > best:
            kind = DIVERGING if rad > 1.0 + tol_unit else PERIODIC
            best, best_w = rad, PeriodicityWitness(j, k, a_d, spec, kind)
    return SegmentSearch(None, best, best_w)


def find_periodic_segment(sys, signal, tol_unit=1e-3):
    """First run of segments whose transition matrix has an eigenvalue within
    `tol_unit` of the unit circle, or ``None``."""
    return search_segments(sys, signal, tol_unit).witness


def upper_bound_margin(
    sys,
    cert,
    x0,
    t_f,
    increment=0.01,
    tol_unit=1e-3,
    integ=None,
    *,
    max_steps=1000,
    refine=True,
    max_refine=40,
):
    """Sweep ``δ`` upward from ``cert.delta_certified`` until the worst-case
    switching sequence generated with ``cert`` contains a periodic run.

    At each ``δ``: if ``A + δ A0`` is not Hurwitz the constant signal on
    ``[0, t_f]`` is returned as a trivial witness.  Otherwise the worst-case
    sequence from `x0` is searched for a run with a unit-modulus transition
    eigenvalue.  When a step jumps from "all runs decay" straight to "some run
    diverges", ``δ`` is bisected between the two to locate the crossing.

    Raises
    ------
    SweepExhaustedError
        After `max_steps` increments without a witness.
    """
    if not increment > 0:
        raise ValueError("increment must be positive")
    integ = integ or IntegratorConfig()
    level = certificate_level(sys, cert)
    delta_lower = float(cert.delta_certified)
    sweep = []

    def attempt(delta):
        m = sys.mode(delta)
        if not is_hurwitz(m):
            signal = SwitchingSignal(np.array([0.0, t_f]), np.array([delta]))
            a_d = expm(m, t_f)
            w = PeriodicityWitness(0, 1, a_d, eigenvalues(a_d), TRIVIAL)
            sweep.append(SweepStep(delta, w.spectral_radius, TRIVIAL))
            return w, signal, signal
        signal, _ = find_switching_sequence(
            sys, level, cert.p, delta, x0, t_f, integ, cert.transform
        )
        found = search_segments(sys, signal, tol_unit)
        if found.witness is not None:
            sweep.append(SweepStep(delta, found.max_radius, PERIODIC))
            w = found.witness
            return w, signal.segment(w.j, w.k), signal
        outcome = DIVERGING if found.diverging else "decaying"
        sweep.append(SweepStep(delta, found.max_radius, outcome))
        return found, None, signal

    def report(delta, w, periodic, signal):
        return MarginReport(delta_lower, delta, w, periodic, cert, signal, sweep)

    prev = None
    delta = delta_lower
    for _ in range(max_steps + 1):
        w, periodic, signal = attempt(delta)
        if periodic is not None:
            return report(delta, w, periodic, signal)
        if w.diverging:
            if refine and prev is not None:
                lo, hi = prev, delta
                best = (delta, w.radius_witness, signal)
                for _ in range(max_refine):
                    mid = 0.5 * (lo + hi)
                    wm, pm, sm = attempt(mid)
                    if pm is not None:
                        return report(mid, wm, pm, sm)
                    if wm.diverging:
                        hi, best = mid, (mid, wm.radius_witness, sm)
                    else:
                        lo = mid
                d, rw, sig = best
            else:
                d, rw, sig = delta, w.radius_witness, signal
            # no run on the unit circle was isolated; a diverging run still
            # shows the system is not stable at this δ
            log.info("no unit-modulus run isolated; reporting diverging run at %.6g", d)
            return report(d, rw, sig.segment(rw.j, rw.k), sig)
        prev = delta
        delta = delta + increment
    raise SweepExhaustedError(
        f"no periodic run found up to δ = {prev:.6g}", last_delta=prev
    )
