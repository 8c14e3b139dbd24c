import math

import numpy as np
import pytest

from stabcert import onedim, spectral
from stabcert.errors import EvalDomainError, PreconditionError


def calibrated_ricker_g(prep, b, c=None):
    nm = prep("ricker-delay", {"b": b})
    v0 = spectral.gradient(nm)
    B = spectral.column_sums_B(spectral.companion(v0), 2)
    params = onedim.calibrate_mobius(v0, B, c=c)
    return nm, v0, B, params


class TestCalibrateMobius:
    def test_ricker_rules(self, prep):
        b = 0.4
        _, v0, B, params = calibrated_ricker_g(prep, b)
        c1 = c2 = 1.0
        assert params.b[0] == pytest.approx(c1 - (1 + c1) * abs(1 - 2 * b))
        assert params.b[1] == pytest.approx(c2 + (1 + c2) * abs(1 - b))

    def test_zero_column_sums(self):
        v = spectral.GradientVector(np.array([0.7, -0.2]))
        params = onedim.calibrate_mobius(v, np.zeros(2))
        assert params.b == pytest.approx([1.0, 1.0])
        assert params.slopes_at_fixed_point() == pytest.approx([0.0, 0.0])

    def test_epsilon_mode(self):
        v = spectral.GradientVector(np.array([1.0, -0.5]))
        params = onedim.calibrate_mobius(v, None, mode="epsilon", eps=1e-3)
        assert params.b == pytest.approx([1 - 1e-3, 1 + 1e-3])

    def test_degenerate_flag(self):
        v = spectral.GradientVector(np.array([0.9]))
        params = onedim.calibrate_mobius(v, np.array([0.8]))
        assert params.degenerate[0]

    def test_positive_c_required(self):
        v = spectral.GradientVector(np.array([0.5]))
        with pytest.raises(PreconditionError):
            onedim.calibrate_mobius(v, np.array([0.1]), c=np.array([0.0]))


class TestComposeG:
    def test_ricker_structure(self, prep):
        nm, v0, B, params = calibrated_ricker_g(prep, 0.5)
        g = onedim.compose_g(nm, params)
        assert g(1.0) == pytest.approx(1.0, abs=1e-12)
        # matches phi1(t) * exp(b (1 - phi2(t))) evaluated directly
        phi1 = onedim.mobius_phi(params.b[0], params.c[0])
        phi2 = onedim.mobius_phi(params.b[1], params.c[1])
        for t in (0.2, 0.7, 1.4, 3.1):
            want = phi1.eval([t]) * math.exp(0.5 * (1 - phi2.eval([t])))
            assert g(t) == pytest.approx(want, abs=1e-14)

    def test_diagonal_composition(self, prep):
        nm = prep("decdec", {"b": 0.5})
        params = onedim.MobiusParams(b=np.array([1.0, 1.0]),
                                     c=np.array([1e-9, 1e-9]))
        g = onedim.compose_g(nm, params)
        for t in (0.5, 1.0, 2.0):
            assert g(t) == pytest.approx(nm.value([t, t]), rel=1e-6)

    def test_canonical_phi1_slope(self):
        phi = onedim.canonical_phi1(2.0, (1e-3, 10.0))
        assert phi(1.0) == pytest.approx(1.0, abs=1e-14)
        assert phi.derivative_at(1.0) == pytest.approx(-0.25, abs=1e-14)

    def test_canonical_phi2_slope(self):
        phi = onedim.canonical_phi2(1.5, (1e-3, 10.0))
        assert phi.derivative_at(1.0) == pytest.approx(-1.5 / 2.5, abs=1e-14)


class TestGPrime:
    @pytest.mark.parametrize("b", [0.25, 0.5, 0.75])
    def test_ricker_closed_form(self, b, prep):
        nm, _, _, params = calibrated_ricker_g(prep, b)
        g = onedim.compose_g(nm, params)
        want = -b * abs(b - 1) - abs(2 * b - 1)
        assert onedim.g_prime_at_fixed_point(g) == pytest.approx(want, abs=1e-9)

    def test_identity(self):
        g = onedim.expr_map("u1", (0.0, 2.0))
        assert onedim.g_prime_at_fixed_point(g) == 1.0

    def test_nondifferentiable_raises(self):
        g = onedim.expr_map("abs(u1-1)+u1", (0.0, 2.0))
        with pytest.raises(EvalDomainError):
            onedim.g_prime_at_fixed_point(g)


class TestNegativeFeedback:
    def test_mobius_passes(self):
        g = onedim.expr_map("(b+1)/(b*u1+1)", (0.01, 10.0), {"b": 0.5})
        assert onedim.negative_feedback_check(g).passed

    def test_square_fails_above_one(self):
        g = onedim.expr_map("u1^2", (0.1, 3.0))
        result = onedim.negative_feedback_check(g)
        assert not result.passed
        assert any(t > 1 for t in result.witnesses)

    def test_reflection_passes(self):
        g = onedim.expr_map("2-u1", (0.0, 2.0))
        assert onedim.negative_feedback_check(g).passed

    def test_grid_floor(self):
        g = onedim.expr_map("2-u1", (0.0, 2.0))
        with pytest.raises(ValueError):
            onedim.negative_feedback_check(g, grid_n=10)


class TestTwoCycles:
    def test_mobius_has_none(self):
        for b in (0.3, 1.0, 2.5):
            g = onedim.expr_map("(b+1)/(b*u1+1)", (1e-4, 10.0), {"b": b})
            report = onedim.find_two_cycles(g)
            assert report.cycles == [] and not report.continuum

    def test_reflection_continuum(self):
        g = onedim.expr_map("max(2-u1, 0)", (0.0, 2.0))
        report = onedim.find_two_cycles(g)
        assert report.continuum
        assert report.near_fraction > 0.10

    def test_decdec_diagonal_bifurcation(self, prep):
        neutral = onedim.diagonal_map(prep("decdec", {"b": 1.0}))
        assert abs(onedim.g_prime_at_fixed_point(neutral)) == pytest.approx(
            1.0, abs=1e-12)
        g = onedim.diagonal_map(prep("decdec", {"b": 1.5}))
        report = onedim.find_two_cycles(g)
        assert len(report.cycles) == 1
        p, q = report.cycles[0]
        # independent residual check and the straddle property
        assert abs(g(g(p)) - p) < 1e-9
        assert abs(g(p) - q) < 1e-9
        assert p < 1.0 < q

    def test_cycle_straddles_fixed_point(self, prep):
        # decreasing maps only admit cycles straddling the fixed point
        for b in (1.2, 1.5, 2.5):
            g = onedim.diagonal_map(prep("decdec", {"b": b}))
            for p, q in onedim.find_two_cycles(g).cycles:
                assert p < 1.0 < q


class TestGas1d:
    def test_mobius_gas(self):
        g = onedim.expr_map("(b+1)/(b*u1+1)", (1e-3, 10.0), {"b": 0.5})
        verdict = onedim.gas_1d(g)
        assert verdict.gas
        assert verdict.n_fixed_points == 1
        assert abs(verdict.derivative_at_fp) == pytest.approx(1 / 3, abs=1e-12)

    def test_reflection_not_gas(self):
        g = onedim.expr_map("max(2-u1, 0)", (0.0, 3.0))
        verdict = onedim.gas_1d(g)
        assert not verdict.gas
        assert verdict.two_cycles.continuum

    def test_linear_contraction(self):
        g = onedim.expr_map("u1/2 + 1/2", (0.0, 10.0))
        assert onedim.gas_1d(g).gas

    def test_negative_domain_rejected(self):
        g = onedim.expr_map("2-u1", (-1.0, 2.0))
        with pytest.raises(PreconditionError):
            onedim.gas_1d(g)


class TestSelfInverseEnvelope:
    def test_ricker_k1(self):
        f = onedim.expr_map("u1*exp(b*(1-u1))", (0.01, 3.0), {"b": 1.5})
        g = onedim.self_inverse_mobius(0.4, (0.01, 3.0))
        result = onedim.self_inverse_envelope_check(f, g)
        assert result.passed

    def test_not_self_inverse(self):
        f = onedim.expr_map("1/u1", (0.2, 5.0))
        g = onedim.expr_map("1/u1^2", (0.2, 5.0))
        result = onedim.self_inverse_envelope_check(f, g)
        assert not result.passed
        assert "not self-inverse" in result.detail

    def test_equal_maps_fail_strictness(self):
        f = onedim.expr_map("1/u1", (0.2, 5.0))
        g = onedim.expr_map("1/u1", (0.2, 5.0))
        result = onedim.self_inverse_envelope_check(f, g)
        assert not result.passed


class TestCalibratedInvariants:
    def test_gprime_magnitude_equals_weighted_column_sums(self, prep):
        cases = [("ricker-delay", {"b": 0.3}), ("ricker-delay", {"b": 0.5}),
                 ("decdec", {"b": 0.5}), ("down-up-a", {"a": 3.0}),
                 ("mobius-rational-a", {"a": 3.0}),
                 ("ricker-stocking", {"h": 1.0, "xbar": 1.5})]
        for name, params in cases:
            nm = prep(name, params)
            v0 = spectral.gradient(nm)
            B = spectral.column_sums_B(spectral.companion(v0), 2)
            mob = onedim.calibrate_mobius(v0, B)
            g = onedim.compose_g(nm, mob)
            gp = onedim.g_prime_at_fixed_point(g)
            want = float((np.abs(v0.a) * B).sum())
            assert abs(gp) == pytest.approx(want, abs=1e-9), (name, params)
            assert gp <= 0.0

    def test_monotone_maps_give_decreasing_unique_g(self, prep):
        # per-argument monotone maps: the calibrated composition is
        # decreasing with a unique fixed point (scan evidence)
        cases = [("decdec", {"b": 0.5}), ("bh-product", {"a": 2.0}),
                 ("down-up-a", {"a": 3.0}),
                 ("ricker-stocking", {"h": 1.0, "xbar": 1.5})]
        for name, params in cases:
            nm = prep(name, params)
            v0 = spectral.gradient(nm)
            mob = onedim.calibrate_mobius(v0, None, mode="epsilon", eps=1e-2)
            g = onedim.compose_g(nm, mob)
            assert onedim.count_fixed_points(g) == 1, (name, params)
            xs = np.linspace(g.domain[0], g.domain[1], 512)
            roots = xs[np.abs(g.values(xs) - xs) < 1e-3]
            for r in ([1.0] if len(roots) == 0 else [1.0]):
                assert g.derivative_at(r) < 0.0


class TestMobiusIdentity:
    def test_phi_fixes_one_for_random_coefficients(self, rng):
        for _ in range(20):
            b = float(rng.uniform(0.01, 3.0))
            c = float(rng.uniform(0.05, 3.0))
            phi = onedim.mobius_phi(b, c)
            assert phi.eval([1.0]) == pytest.approx(1.0, abs=1e-14)
            slope = (b - c) / (1.0 + c)
            assert phi.eval_dual([1.0]).partials[0] == pytest.approx(
                slope, abs=1e-12)


class TestComposeDenominator:
    def test_vanishing_denominator_on_negative_domain(self):
        from stabcert import mapdef

        nm = mapdef.prepare(mapdef.get_map("linear-neg"))  # window (-4, 6)
        params = onedim.MobiusParams(b=np.array([1.0, 1.0]),
                                     c=np.array([1.0, 1.0]))
        with pytest.raises(EvalDomainError, match="denominator"):
            onedim.compose_g(nm, params)
