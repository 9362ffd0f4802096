"""Common quadratic Lyapunov certificates on hierarchy levels and the
lower-bound search on the stability margin.

A certificate at level ``i`` is a symmetric ``P >= I`` (in reduced
coordinates) with ``M^T P + P M <= -margin * I`` for both endpoint modes
``M = cal_a`` and ``M = cal_a + δ cal_a0``.  By convexity it then holds for
every ``Δ`` in ``[0, δ]``, and ``V(x) = ξ^T P ξ`` with ``ξ = lift_state(x)``
is a homogeneous polynomial Lyapunov function of degree ``2i``.

Certificates live in whitened coordinates ``z = T^{-1} x`` where ``T`` makes
the nominal quadratic Lyapunov matrix the identity; without this the reduced
problems inherit ``cond(P)**i`` and the solver breaks down on stiff systems.
``LyapunovCertificate.transform`` records ``T``.

The SDP is posed with cvxpy and solved by an interior-point conic solver
(Clarabel by default).  Every solution is re-checked with a dense symmetric
eigensolver before it is accepted.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import cvxpy as cp
import numpy as np
import scipy.linalg

from .exceptions import DimensionCapError, NotHurwitzError
from .hierarchy import DEFAULT_DIM_CAP, build_level, lift_state
from .linalg import (
    DEFAULT_DEFINITENESS_TOL,
    DEFAULT_HURWITZ_TOL,
    is_hurwitz,
    lyapunov_form,
    sym,
)

__all__ = [
    "LMISolution",
    "LyapunovCertificate",
    "AlgorithmConfig",
    "LowerBoundReport",
    "TraceEntry",
    "DeltaP",
    "LevelSolver",
    "find_common_lyapunov",
    "max_delta_fixed_p",
    "verify_certificate",
    "whitening_transform",
    "certificate_level",
    "under_approximate_margin",
    "certify_level",
]

log = logging.getLogger(__name__)

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
SOLVER_FAILURE = "solver_failure"
UNVERIFIED = "unverified"


@dataclass(frozen=True)
class LMISolution:
    """Outcome of one common-Lyapunov feasibility problem.

    ``status`` is ``"feasible"``, ``"infeasible"`` (the optimal margin is not
    positive), ``"solver_failure"`` (no convergence) or ``"unverified"`` (the
    solver reported a positive margin that the eigenvalue re-check did not
    confirm).  Only a feasible solution carries `p`, normalised so that its
    smallest eigenvalue is 1.
    """

    status: str
    p: np.ndarray | None = None
    margin: float = 0.0

    @property
    def feasible(self):
        return self.status == FEASIBLE


@dataclass(frozen=True)
class LyapunovCertificate:
    """Quadratic certificate ``P`` for hierarchy level `level`.

    ``V(x) = ξ^T P ξ`` with ``ξ = lift_state(inv(transform) @ x)``; `p` lives in
    the reduced symmetric coordinates of the transformed system.
    """

    level: int
    p: np.ndarray
    delta_certified: float
    feasibility_margin: float
    transform: np.ndarray | None = None

    @property
    def order(self):
        return 2 * self.level

    def to_working(self, x):
        """Map original states ``x`` (last axis) to certificate coordinates."""
        x = np.asarray(x, dtype=float)
        if self.transform is None:
            return x
        return np.linalg.solve(self.transform, x.T).T

    def value(self, x, basis):
        """Evaluate ``V`` at `x` (or at each row of a stack of states)."""
        xi = lift_state(self.to_working(x), basis)
        return np.einsum("...i,ij,...j->...", xi, self.p, xi)


@dataclass
class AlgorithmConfig:
    """Parameters of the lower-bound search.

    Attributes
    ----------
    epsilon : float or None
        Increment of the outer loop.  ``None`` selects ``0.01 * δ_P`` of a
        level-1 certificate of ``A`` alone, or 0.01 when that is unbounded.
    i_max : int
        Highest hierarchy level tried (polynomial order ``2 * i_max``).
    margin_rel : float
        Strictness margin relative to the largest lifted-operator norm.
    delta_max : float
        Sweep cap; the search stops once δ reaches it.
    whiten : bool
        Work in coordinates where the nominal Lyapunov matrix is ``I``.
    """

    epsilon: float | None = None
    i_max: int = 3
    sdp_tol: float = 1e-9
    definiteness_tol: float = DEFAULT_DEFINITENESS_TOL
    margin_rel: float = 1e-6
    delta_max: float = 1e6
    dim_cap: int = DEFAULT_DIM_CAP
    solver: str = "CLARABEL"
    whiten: bool = True
    max_iterations: int = 100_000

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.i_max < 1:
            raise ValueError("i_max must be >= 1")
        for name in ("sdp_tol", "definiteness_tol", "margin_rel", "delta_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class TraceEntry(NamedTuple):
    level: int
    delta_attempted: float
    status: str
    delta_p: float | None


@dataclass
class LowerBoundReport:
    delta_lower: float
    certificate: LyapunovCertificate | None
    epsilon: float
    trace: list = field(default_factory=list)


class DeltaP(NamedTuple):
    """Result of :func:`max_delta_fixed_p`.

    ``status`` is ``"bounded"``, ``"unbounded"`` (``delta`` is ``inf``) or
    ``"degenerate"`` (the nominal form is not negative definite, so
    ``delta`` is just the floor).
    """

    delta: float
    status: str


def _scale_of(modes):
    return max(max(np.linalg.norm(m, 2) for m in modes), 1e-300)


class _MarginSDP:
    """Maximise ``t`` subject to ``tr P = 1``, ``P >= t I`` and
    ``(B_k + δ D_k)^T P + P (B_k + δ D_k) <= -t I`` for every mode.

    Strict feasibility of the Lyapunov LMIs is equivalent to ``t* > 0``; the
    problem itself always has interior points, which keeps the interior-point
    solver well behaved right up to the feasibility boundary.  ``δ`` is a
    cvxpy parameter so the problem is compiled once per level.
    """

    def __init__(self, bases, directions, solver, tol):
        dim = bases[0].shape[0]
        self.delta = cp.Parameter(nonneg=True, value=0.0)
        self.p = cp.Variable((dim, dim), symmetric=True)
        self.t = cp.Variable()
        eye = np.eye(dim)
        cons = [cp.trace(self.p) == 1, self.p >> self.t * eye]
        for b, d in zip(bases, directions):
            lhs = b.T @ self.p + self.p @ b
            if d is not None:
                lhs = lhs + self.delta * (d.T @ self.p + self.p @ d)
            cons.append(0.5 * (lhs + lhs.T) << -self.t * eye)
        self.problem = cp.Problem(cp.Maximize(self.t), cons)
        self.solver = solver
        self.tol = tol

    def _options(self):
        if self.solver == "CLARABEL":
            return dict(tol_gap_abs=self.tol, tol_gap_rel=self.tol, tol_feas=self.tol)
        if self.solver == "SCS":
            return dict(eps_abs=self.tol, eps_rel=self.tol)
        if self.solver == "CVXOPT":
            return dict(abstol=self.tol, reltol=self.tol, feastol=self.tol)
        return {}

    def solve(self, delta=0.0):
        """Return ``(status, p)``; `p` is scaled to ``λ_min(p) = 1``."""
        self.delta.value = float(delta)
        try:
            with warnings.catch_warnings():
                # inaccurate solutions are re-checked by eigenvalues below
                warnings.filterwarnings("ignore", message="Solution may be inaccurate")
                self.problem.solve(solver=self.solver, **self._options())
        except cp.error.SolverError as exc:
            log.debug("solver error: %s", exc)
            return SOLVER_FAILURE, None
        if self.problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            return SOLVER_FAILURE, None
        if self.t.value is None or self.t.value <= 0:
            return INFEASIBLE, None
        p = sym(np.array(self.p.value))
        lam = np.linalg.eigvalsh(p)[0]
        if lam <= 0:
            return UNVERIFIED, None
        return FEASIBLE, p / lam


def _verify(p, modes, margin, tol):
    """Direct eigenvalue check of ``P >= I`` and ``M^T P + P M <= -margin/2``."""
    if np.linalg.eigvalsh(p)[0] < 1.0 - 1e-8:
        return False
    for m in modes:
        if np.linalg.eigvalsh(lyapunov_form(m, p))[-1] > -0.5 * margin + tol:
            return False
    return True


def find_common_lyapunov(
    modes,
    *,
    sdp_tol=1e-9,
    eps_margin=None,
    margin_rel=1e-6,
    definiteness_tol=DEFAULT_DEFINITENESS_TOL,
    solver="CLARABEL",
):
    """Search for ``P >= I`` with ``M^T P + P M <= -eps_margin * I`` for all `modes`.

    Parameters
    ----------
    modes : sequence of (d, d) ndarray
    eps_margin : float, optional
        Strictness margin; defaults to ``margin_rel * max ||M||_2``.

    Returns
    -------
    LMISolution
        A failed status means this relaxation found nothing; it is not a
        proof of instability.
    """
    modes = [np.asarray(m, dtype=float) for m in modes]
    if not modes:
        raise ValueError("need at least one mode")
    dim = modes[0].shape[0]
    for m in modes:
        if m.shape != (dim, dim):
            raise ValueError("all modes must be square of the same size")
    scale = _scale_of(modes)
    if eps_margin is None:
        eps_margin = margin_rel * scale
    sdp = _MarginSDP([m / scale for m in modes], [None] * len(modes), solver, sdp_tol)
    status, p = sdp.solve()
    if status != FEASIBLE:
        return LMISolution(status)
    if not _verify(p, modes, 2 * eps_margin, definiteness_tol):
        return LMISolution(UNVERIFIED)
    return LMISolution(FEASIBLE, p, eps_margin)


def max_delta_fixed_p(level, p, delta_floor=0.0, *, margin=0.0):
    """Largest ``δ >= delta_floor`` with ``N0 + δ N1 <= -margin * I``.

    Here ``N0 = cal_a^T P + P cal_a`` and ``N1 = cal_a0^T P + P cal_a0``.  With
    ``-N0 - margin*I = L L^T`` the condition reads ``δ λ_max(L^-1 N1 L^-T) <= 1``,
    so the answer is ``1 / λ_max`` of the symmetric-definite pencil
    ``(N1, -N0 - margin*I)``, or unbounded when that eigenvalue is not positive.
    """
    p = sym(np.asarray(p, dtype=float))
    if np.linalg.eigvalsh(p)[0] <= 0:
        raise ValueError("P must be positive definite")
    n0 = lyapunov_form(level.cal_a, p)
    n1 = lyapunov_form(level.cal_a0, p)
    rhs = -n0 - margin * np.eye(p.shape[0])
    try:
        lam = scipy.linalg.eigh(n1, rhs, eigvals_only=True)[-1]
    except np.linalg.LinAlgError:
        return DeltaP(float(delta_floor), "degenerate")
    if lam <= 0:
        return DeltaP(math.inf, "unbounded")
    return DeltaP(max(1.0 / float(lam), float(delta_floor)), "bounded")


def verify_certificate(level, cert, deltas=(), tol=DEFAULT_DEFINITENESS_TOL):
    """Re-check `cert` on `level` by direct eigenvalue computation.

    Checks ``P >= I`` and the Lyapunov inequality with margin
    ``feasibility_margin / 2`` at ``Δ = 0``, ``Δ = delta_certified`` and any
    extra `deltas`.  `level` must be built from the certificate's coordinates
    (see :func:`certificate_level`).
    """
    pts = [0.0, cert.delta_certified, *deltas]
    return _verify(cert.p, [level.mode(d) for d in pts], cert.feasibility_margin, tol)


def whitening_transform(a):
    """``T = P^{-1/2}`` for the solution of ``A^T P + P A = -I``.

    In ``z = T^{-1} x`` the nominal quadratic Lyapunov matrix is the identity.
    """
    p = scipy.linalg.solve_continuous_lyapunov(np.asarray(a).T, -np.eye(len(a)))
    w, v = np.linalg.eigh(sym(p))
    return (v / np.sqrt(w)) @ v.T


def certificate_level(sys, cert, *, dim_cap=DEFAULT_DIM_CAP):
    """Hierarchy level of `sys` in the coordinates `cert` was computed in."""
    work = sys if cert.transform is None else sys.transformed(cert.transform)
    return build_level(work, cert.level, dim_cap=dim_cap)


class LevelSolver:
    """Two-mode problem ``{cal_a, cal_a + δ cal_a0}`` for one level, compiled
    once and re-solved for each δ."""

    def __init__(self, level, cfg):
        self.level = level
        self.cfg = cfg
        self.scale = _scale_of([level.cal_a, level.cal_a0])
        self.margin = cfg.margin_rel * self.scale
        a = level.cal_a / self.scale
        a0 = level.cal_a0 / self.scale
        self._sdp = _MarginSDP([a, a], [None, a0], cfg.solver, cfg.sdp_tol)

    def solve(self, delta):
        status, p = self._sdp.solve(delta)
        if status != FEASIBLE:
            return LMISolution(status)
        modes = [self.level.cal_a, self.level.mode(delta)]
        # require the full margin so the δ_P leap below has room to spare
        if not _verify(p, modes, 2 * self.margin, self.cfg.definiteness_tol):
            return LMISolution(UNVERIFIED)
        return LMISolution(FEASIBLE, p, self.margin)

    def delta_p(self, p, delta_floor):
        # 0.75 sits between the accepted margin and the 0.5 used for
        # re-verification, so the leap target always re-verifies
        return max_delta_fixed_p(self.level, p, delta_floor, margin=0.75 * self.margin)


def _working_system(sys, cfg):
    if not is_hurwitz(sys.a, DEFAULT_HURWITZ_TOL):
        raise NotHurwitzError("nominal matrix A is not Hurwitz")
    if not cfg.whiten:
        return sys, None
    t = whitening_transform(sys.a)
    return sys.transformed(t), t


def under_approximate_margin(sys, cfg=None):
    """Certified lower bound on the stability margin of `sys`.

    Starting from ``δ = 0``: try ``δ' = δ + ε`` at levels ``1..i_max`` in
    order; at the first level with a certificate accept ``δ'``, then leap to
    the largest ``δ`` the same ``P`` certifies.  Stops when no level
    certifies ``δ + ε`` or when ``δ`` reaches ``cfg.delta_max``.

    Raises
    ------
    NotHurwitzError
        If ``A`` itself is not Hurwitz.
    """
    cfg = cfg or AlgorithmConfig()
    work, transform = _working_system(sys, cfg)
    solvers = {}

    def solver_for(i):
        if i not in solvers:
            solvers[i] = LevelSolver(build_level(work, i, dim_cap=cfg.dim_cap), cfg)
        return solvers[i]

    eps = cfg.epsilon
    if eps is None:
        eps = 0.01
        first = solver_for(1)
        sol = first.solve(0.0)
        if sol.feasible:
            dp = first.delta_p(sol.p, 0.0)
            if dp.status == "bounded" and dp.delta > 0:
                eps = 0.01 * dp.delta

    delta, cert, trace = 0.0, None, []
    for _ in range(cfg.max_iterations):
        trial = delta + eps
        if trial > cfg.delta_max:
            break
        found = None
        for i in range(1, cfg.i_max + 1):
            try:
                solver = solver_for(i)
            except DimensionCapError as exc:
                log.info("level %d skipped: %s", i, exc)
                trace.append(TraceEntry(i, trial, "dim_cap", None))
                continue
            sol = solver.solve(trial)
            if sol.feasible:
                found = (i, solver, sol)
                break
            trace.append(TraceEntry(i, trial, sol.status, None))
        if found is None:
            break
        i, solver, sol = found
        dp = solver.delta_p(sol.p, trial)
        if dp.status == "degenerate" or dp.delta < trial:
            raise AssertionError(f"δ_P = {dp.delta} below the certified δ = {trial}")
        delta = min(dp.delta, cfg.delta_max)
        trace.append(TraceEntry(i, trial, FEASIBLE, delta))
        cert = LyapunovCertificate(i, sol.p, delta, solver.margin, transform)
        log.debug("level %d certified %.6g, leapt to %.6g", i, trial, delta)
    return LowerBoundReport(delta, cert, eps, trace)


def certify_level(sys, i, cfg=None):
    """Run the same search restricted to the single level `i`.

    Gives a certificate of a prescribed polynomial order ``2i``, as needed
    to drive the worst-case switching construction with a chosen ``P``.
    """
    cfg = cfg or AlgorithmConfig()
    work, transform = _working_system(sys, cfg)
    solver = LevelSolver(build_level(work, i, dim_cap=cfg.dim_cap), cfg)
    eps = cfg.epsilon if cfg.epsilon is not None else 0.01
    delta, cert, trace = 0.0, None, []
    for _ in range(cfg.max_iterations):
        trial = delta + eps
        if trial > cfg.delta_max:
            break
        sol = solver.solve(trial)
        if not sol.feasible:
            trace.append(TraceEntry(i, trial, sol.status, None))
            break
        dp = solver.delta_p(sol.p, trial)
        delta = min(dp.delta, cfg.delta_max)
        trace.append(TraceEntry(i, trial, FEASIBLE, delta))
        cert = LyapunovCertificate(i, sol.p, delta, solver.margin, transform)
    return LowerBoundReport(delta, cert, eps, trace)
