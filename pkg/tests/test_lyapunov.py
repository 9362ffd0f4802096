import math

import numpy as np
import pytest

from switchmargin.exceptions import NotHurwitzError
from switchmargin.hierarchy import HierarchyLevel, SwitchedLinearSystem, build_level, symmetric_basis
from switchmargin.linalg import is_hurwitz, is_negative_semidefinite, lyapunov_form
from switchmargin.lyapunov import (
    AlgorithmConfig,
    LyapunovCertificate,
    certificate_level,
    certify_level,
    find_common_lyapunov,
    max_delta_fixed_p,
    under_approximate_margin,
    verify_certificate,
    whitening_transform,
)

from conftest import EX1_A, EX1_A0, random_hurwitz

# Largest δ with a common quadratic (level-1) certificate for the second-order
# example.  Frozen from a bisection over a plain feasibility SDP solved with SCS
# (1.2499995) and bracketed from below by a brute-force grid over P (1.2444).
QUADRATIC_MARGIN_EX1 = 1.25


def bisect_delta_p(level, p, hi=1e3, iters=200):
    """Largest δ with N0 + δ N1 ⪯ 0, by bisection on the definiteness test."""
    n0, n1 = lyapunov_form(level.cal_a, p), lyapunov_form(level.cal_a0, p)
    ok = lambda d: is_negative_semidefinite(n0 + d * n1, 0.0)
    if ok(hi):
        return math.inf
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def fake_level(n0_a, n1_a):
    """Level whose Lyapunov forms at P = I are exactly n0 and n1."""
    dim = len(n0_a)
    return HierarchyLevel(1, symmetric_basis(dim, 1), 0.5 * np.asarray(n0_a), 0.5 * np.asarray(n1_a))


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(epsilon=0.0), dict(i_max=0), dict(sdp_tol=-1.0)])
    def test_rejects_non_positive(self, kw):
        with pytest.raises(ValueError):
            AlgorithmConfig(**kw)


class TestFindCommonLyapunov:
    def test_negative_identity(self):
        sol = find_common_lyapunov([-np.eye(3)])
        assert sol.feasible
        np.testing.assert_allclose(sol.p, np.eye(3), atol=1e-6)

    def test_single_hurwitz_mode(self):
        sol = find_common_lyapunov([np.array(EX1_A)])
        assert sol.feasible
        assert np.linalg.eigvalsh(sol.p)[0] >= 1 - 1e-8
        assert np.linalg.eigvalsh(lyapunov_form(np.array(EX1_A), sol.p))[-1] <= -sol.margin / 2

    def test_above_quadratic_margin(self):
        a, a0 = np.array(EX1_A), np.array(EX1_A0)
        assert 3.0 > QUADRATIC_MARGIN_EX1
        assert not find_common_lyapunov([a, a + 3.0 * a0]).feasible

    def test_bracket_quadratic_margin(self):
        a, a0 = np.array(EX1_A), np.array(EX1_A0)
        assert find_common_lyapunov([a, a + (QUADRATIC_MARGIN_EX1 - 0.01) * a0]).feasible
        assert not find_common_lyapunov([a, a + (QUADRATIC_MARGIN_EX1 + 0.01) * a0]).feasible

    def test_status_labels_infeasible(self):
        sol = find_common_lyapunov([np.diag([1.0, -1.0])])
        assert not sol.feasible
        assert sol.status in ("infeasible", "unverified", "solver_failure")

    def test_lti_completeness(self):
        rng = np.random.default_rng(2024)
        hurwitz = unstable = 0
        while hurwitz < 50 or unstable < 50:
            a = rng.standard_normal((3, 3))
            if is_hurwitz(a):
                if hurwitz == 50:
                    continue
                hurwitz += 1
                assert find_common_lyapunov([a, a]).feasible
            elif np.max(np.linalg.eigvals(a).real) > 1e-6:
                if unstable == 50:
                    continue
                unstable += 1
                assert not find_common_lyapunov([a]).feasible

    def test_needs_modes(self):
        with pytest.raises(ValueError):
            find_common_lyapunov([])


class TestMaxDeltaFixedP:
    def test_unbounded(self):
        r = max_delta_fixed_p(fake_level(-np.eye(2), -np.eye(2)), np.eye(2))
        assert r.status == "unbounded" and r.delta == math.inf

    def test_unit(self):
        r = max_delta_fixed_p(fake_level(-np.eye(2), np.eye(2)), np.eye(2))
        assert r.status == "bounded"
        assert r.delta == pytest.approx(1.0, abs=1e-12)

    def test_degenerate_nominal(self):
        r = max_delta_fixed_p(fake_level(np.diag([-1.0, 0.5]), np.eye(2)), np.eye(2), 0.3)
        assert r.status == "degenerate" and r.delta == 0.3

    def test_rejects_indefinite_p(self):
        with pytest.raises(ValueError):
            max_delta_fixed_p(fake_level(-np.eye(2), np.eye(2)), np.diag([1.0, -1.0]))

    def test_example_level_seven_against_bisection(self, ex1):
        lv = build_level(ex1, 7)
        sol = find_common_lyapunov([lv.cal_a, lv.mode(2.0)])
        assert sol.feasible
        r = max_delta_fixed_p(lv, sol.p, 2.0)
        assert r.delta >= 2.0
        assert r.delta == pytest.approx(bisect_delta_p(lv, sol.p), abs=1e-6)

    def test_random_instances_against_bisection(self):
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 20:
            n = int(rng.integers(2, 4))
            sys_ = SwitchedLinearSystem(random_hurwitz(rng, n), rng.standard_normal((n, n)))
            lv = build_level(sys_, int(rng.integers(1, 4)))
            d = float(rng.uniform(0.0, 0.3))
            sol = find_common_lyapunov([lv.cal_a, lv.mode(d)])
            if not sol.feasible:
                continue
            r = max_delta_fixed_p(lv, sol.p, d)
            oracle = bisect_delta_p(lv, sol.p)
            if r.status == "unbounded":
                assert oracle == math.inf
            else:
                assert r.delta >= d - 1e-9
                assert r.delta == pytest.approx(oracle, abs=1e-6 * max(1.0, oracle))
            checked += 1


class TestWhitening:
    def test_nominal_form(self, ex2):
        # with P = T^-2 solving AᵀP + PA = -I, the identity form in z = T⁻¹x is -T²
        t = whitening_transform(ex2.a)
        z = ex2.transformed(t)
        np.testing.assert_allclose(lyapunov_form(z.a, np.eye(4)), -t @ t, atol=1e-9 * np.linalg.norm(t @ t))


class TestUnderApproximate:
    def test_not_hurwitz(self):
        with pytest.raises(NotHurwitzError):
            under_approximate_margin(SwitchedLinearSystem(np.diag([1.0, -1.0]), np.zeros((2, 2))))

    def test_example_order_fourteen(self, ex1_lower):
        assert 2.10 <= ex1_lower.delta_lower <= 2.20
        assert ex1_lower.certificate.level == 7
        assert ex1_lower.delta_lower == ex1_lower.certificate.delta_certified

    def test_level_one_matches_quadratic_oracle(self, ex1):
        r = under_approximate_margin(ex1, AlgorithmConfig(epsilon=0.01, i_max=1))
        assert QUADRATIC_MARGIN_EX1 - 0.01 <= r.delta_lower <= QUADRATIC_MARGIN_EX1 + 1e-6

    def test_zero_direction_hits_cap(self):
        s = SwitchedLinearSystem(EX1_A, np.zeros((2, 2)))
        r = under_approximate_margin(s, AlgorithmConfig(delta_max=1e6))
        assert r.delta_lower == 1e6
        assert r.certificate.level == 1

    def test_trace_monotone(self, ex1_lower):
        feasible = [e for e in ex1_lower.trace if e.status == "feasible"]
        assert feasible
        for e in feasible:
            assert e.delta_p >= e.delta_attempted
        leaps = [e.delta_p for e in feasible]
        assert leaps == sorted(leaps)

    def test_certificate_reverifies(self, ex1, ex1_cert):
        lv = certificate_level(ex1, ex1_cert)
        interior = np.linspace(0, ex1_cert.delta_certified, 7)[1:-1]
        assert verify_certificate(lv, ex1_cert, interior)

    def test_certificate_normalised(self, ex1_cert):
        p = ex1_cert.p
        np.testing.assert_array_equal(p, p.T)
        assert np.linalg.eigvalsh(p)[0] >= 1 - 1e-8

    def test_unwhitened_agrees(self, ex1):
        a = under_approximate_margin(ex1, AlgorithmConfig(epsilon=0.01, i_max=3))
        b = under_approximate_margin(ex1, AlgorithmConfig(epsilon=0.01, i_max=3, whiten=False))
        assert a.delta_lower == pytest.approx(b.delta_lower, abs=0.02)

    def test_hierarchy_monotone(self, ex1):
        cfg = AlgorithmConfig(epsilon=0.01)
        best = [certify_level(ex1, i, cfg).delta_lower for i in (1, 2, 3, 5, 7)]
        assert all(b2 >= b1 - 1e-9 for b1, b2 in zip(best, best[1:]))

    def test_certificate_value_homogeneous(self, ex1, ex1_cert):
        lv = certificate_level(ex1, ex1_cert)
        x = np.array([0.3, -0.7])
        assert ex1_cert.value(2.0 * x, lv.basis) == pytest.approx(2.0**14 * ex1_cert.value(x, lv.basis), rel=1e-10)
        assert ex1_cert.order == 14


def test_untransformed_certificate_coordinates():
    c = LyapunovCertificate(1, np.eye(2), 0.5, 1e-6)
    assert c.to_working(np.array([1.0, 2.0])).tolist() == [1.0, 2.0]
