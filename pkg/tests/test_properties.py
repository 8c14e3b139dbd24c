"""Cross-module invariants tying the analysis pieces together."""

import numpy as np
import pytest

import helpers_stab as lib
from stabcert import embedding, envelope2d, mapdef, onedim, spectral


class TestSharedSuites:
    def test_dual_gradients_match_finite_differences(self):
        assert lib.check_dual_vs_fd(100) == 100

    def test_chain_rule_matches_matrix_recursion(self):
        assert lib.check_chain_rule_vs_recursion(6) > 0

    def test_omega_points_inside_region(self):
        assert lib.check_omega_inside_region(256) > 0

    def test_envelope_inherited_by_expansions(self):
        assert lib.check_envelope_inherited(seed=0) == 4

    def test_doubly_decreasing_equivalence(self):
        assert lib.check_decdec_pseudo_equivalence((0.5, 0.9, 1.1, 1.5)) == 4


class TestSlopeOrdering:
    def test_lemma_asserted_across_catalogue(self, prep, rng):
        cases = [("mobius-rational-a", {}), ("down-up-a", {}),
                 ("decdec", {}), ("decdec-exp1", {}), ("bh-product", {})]
        checked = 0
        for name, _ in cases:
            for _ in range(4):
                params = mapdef.sample_params(name, rng)
                nm = mapdef.prepare(mapdef.get_map(name, params))
                a1, a2 = spectral.gradient(nm).a
                if abs(a1) + abs(a2) >= 1.0 or a2 in (0.0, 1.0):
                    continue
                s = envelope2d.slopes_M1_M2(a1, a2)  # raises if ordering fails
                assert abs(s.M1) < 1.0 < abs(s.M2)
                checked += 1
        assert checked >= 8


class TestLasEqualsStrongLasWhenSecondArgIncreasing:
    @pytest.mark.parametrize("name,key,values", [
        ("down-up-a", "a", [2.2, 2.8, 3.0, 3.3, 3.35, 3.7, 4.5]),
        ("decdec-exp1", "b", [0.3, 0.8, 1.2, 2.0, 3.5]),
    ])
    def test_biconditional(self, name, key, values):
        for v in values:
            nm = mapdef.prepare(mapdef.get_map(name, {key: v}))
            profile = embedding.monotonicity_profile(nm)
            assert profile.signs[1] == "increasing"
            g0 = spectral.gradient(nm)
            eigs = spectral.eigenvalues(spectral.companion(g0))
            inside = all(abs(z) < 1.0 for z in eigs)
            assert (g0.one_norm < 1.0) == inside, (name, v)


class TestNecessityOfRegionMembership:
    def test_passing_envelopes_lie_in_region(self, prep):
        # wherever the definition check passes, the candidate is 2-cycle
        # free, and the norm condition holds, the graph sits strictly in R
        cases = [
            ("decdec-exp1", {"b": 0.5}, "(b+1)/(b*u1+1)"),
            ("decdec-exp1", {"b": 1.5}, "(b+1)/(b*u1+1)"),
            ("bh-product", {"a": 2.0}, "(1.5+1)/(1.5*u1+1)"),
        ]
        for name, params, g_text in cases:
            nm = prep(name, params)
            assert spectral.gradient(nm).one_norm < 1.0
            g = onedim.expr_map(g_text, envelope2d.envelope_window(nm),
                                nm.params, source="user")
            report = envelope2d.check_definition_envelope(nm, g,
                                                          n_samples=30_000)
            assert report.passed, (name, params)
            assert not onedim.find_two_cycles(g).has_cycles
            lo, hi = envelope2d.envelope_window(nm)
            xs = np.linspace(lo, hi, 2048)
            xs = xs[np.abs(xs - 1.0) > 1e-6]
            gv = g.values(xs)
            vals = nm.value_xy(xs, gv)
            assert ((vals > np.minimum(xs, gv))
                    & (vals < np.maximum(xs, gv))).all(), (name, params)

    def test_enveloping_does_not_imply_cycle_freeness(self, prep):
        # the reflection candidate envelopes this map yet every point is a
        # 2-cycle, so enveloping alone never upgrades to a certificate:
        # the cycle check is a separate, necessary clause
        nm = prep("mobius-rational-a", {"a": 3.0})
        g = onedim.expr_map("max(2-u1, 0)", envelope2d.envelope_window(nm))
        assert envelope2d.check_definition_envelope(nm, g,
                                                    n_samples=20_000).passed
        report = onedim.find_two_cycles(g)
        assert report.has_cycles and report.continuum
        assert not onedim.gas_1d(g).gas


class TestRegionPartition:
    def test_every_point_gets_exactly_one_label(self, prep):
        for name, params in [("decdec", {"b": 1.5}),
                             ("down-up-a", {"a": 3.0}),
                             ("ricker-stocking", {"h": 1.0, "xbar": 1.5})]:
            grid = envelope2d.region_grid(prep(name, params), n=96)
            assert sum(grid.counts().values()) == 96 * 96
            assert (grid.labels >= 0).all() and (grid.labels <= 6).all()


class TestIncrDecrEquivalenceChain:
    @pytest.mark.parametrize("xbar,expect_cycles", [(1.5, False), (1.7, True)])
    def test_pseudo_phi_and_composed_map_agree(self, xbar, expect_cycles, prep):
        nm = prep("ricker-stocking", {"h": 1.0, "xbar": xbar})
        pseudo = embedding.pseudo_fixed_points(nm)
        phi = envelope2d.phi_from_implicit(nm)
        phi_cycles = onedim.find_two_cycles(phi)
        g = onedim.implicit_compose_map(nm, phi)
        g_cycles = onedim.find_two_cycles(g)
        assert bool(pseudo) == expect_cycles
        assert phi_cycles.has_cycles == expect_cycles
        assert g_cycles.has_cycles == expect_cycles
        if expect_cycles:
            p, q = phi_cycles.cycles[0]
            assert pseudo[0].x == pytest.approx(p, abs=1e-6)
            assert pseudo[0].y == pytest.approx(q, abs=1e-6)
            p2, q2 = g_cycles.cycles[0]
            assert (p2, q2) == pytest.approx((p, q), abs=1e-6)


class TestNormalizeRoundTrip:
    def test_renormalized_fixed_point_is_one(self, rng):
        for name in ["decdec", "bh-product", "down-up-a", "ricker-stocking"]:
            params = mapdef.sample_params(name, rng)
            nm = mapdef.prepare(mapdef.get_map(name, params))
            m1 = mapdef.MapSpec(name="renorm", k=nm.k, f=nm.f,
                                params=nm.params, domain=(0.0, np.inf),
                                window=nm.window)
            assert mapdef.find_fixed_point(m1) == pytest.approx(1.0, abs=1e-9)


class TestRegionCurveSufficiency:
    def test_region_curve_pass_implies_definition_pass(self, prep):
        # the region-curve criterion is sufficient for the sampled
        # definition: same candidate, both checks must agree on pass
        cases = [("decdec-exp1", {"b": 0.5}), ("decdec-exp1", {"b": 1.5}),
                 ("bh-product", {"a": 2.0}), ("down-up-a", {"a": 3.0})]
        agreed = 0
        for name, params in cases:
            nm = prep(name, params)
            for a in (1.0, 1.5, 2.5):
                g = onedim.canonical_phi2(a, envelope2d.envelope_window(nm))
                try:
                    region = envelope2d.check_envelope_via_R(nm, g, grid_n=512)
                except Exception:
                    continue
                if not region.passed:
                    continue
                definition = envelope2d.check_definition_envelope(
                    nm, g, n_samples=30_000)
                assert definition.passed, (name, params, a)
                agreed += 1
        assert agreed >= 4


class TestDiagonalCaution:
    def test_unstable_map_with_stable_diagonal(self):
        # a x^2 e^{-y} with a = e^2/2: the fixed point at 2 is unstable for
        # the two-argument map (eigenvalues 1 +- i) yet the diagonal
        # one-dimensional map is locally stable there (derivative 0) -- the
        # naive diagonal reduction misleads without the strong local
        # condition
        import math

        a = math.e ** 2 / 2
        m = mapdef.MapSpec(
            name="sq-exp", k=2, f=mapdef.parse("a*u1^2*exp(-u2)", 2, ("a",)),
            params={"a": a}, domain=(0.0, np.inf), window=(0.05, 6.0),
            fixed_point=2.0,
        )
        nm = mapdef.normalize(m, 2.0)
        rep = spectral.slas_index(nm)
        assert rep.classification.value == "Unstable"
        assert rep.spectral_radius == pytest.approx(np.sqrt(2.0), abs=1e-9)
        diag = onedim.diagonal_map(nm)
        assert abs(diag.derivative_at(1.0)) < 1.0

    def test_strong_local_condition_forces_stable_diagonal(self, prep):
        # triangle inequality: |sum a_i| <= sum |a_i| < 1, so under the
        # strong local condition the diagonal map is always locally stable
        for name, params in [("decdec", {"b": 0.5}),
                             ("mobius-rational-a", {"a": 3.0}),
                             ("down-up-a", {"a": 3.0}),
                             ("bh-product", {"a": 2.0}),
                             ("ricker-stocking", {"h": 1.0, "xbar": 1.5})]:
            nm = prep(name, params)
            v0 = spectral.gradient(nm)
            assert v0.one_norm < 1.0, (name, params)
            diag = onedim.diagonal_map(nm)
            gp = diag.derivative_at(1.0)
            assert abs(gp) <= v0.one_norm + 1e-12
            assert abs(gp) < 1.0


class TestInvariantIntervalBound:
    def test_rational_map_bounded_by_corner_value(self, prep):
        # F(x, y) <= F(x, 0) <= F(2/(a-1), 0): the map's range enters a
        # compact interval after one step, justifying window truncation
        for a in (2.0, 3.0, 5.0):
            nm = prep("mobius-rational-a", {"a": a})
            bound = nm.value([2.0 / (a - 1.0), 0.0])
            lo, hi = nm.window
            xs = np.linspace(lo, hi, 256)
            X, Y = np.meshgrid(xs, xs, indexing="ij")
            values = nm.value_xy(X, Y)
            assert float(values.max()) <= bound + 1e-12, a
