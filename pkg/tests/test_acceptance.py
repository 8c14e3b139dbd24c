"""Acceptance gate: every stated criterion at its stated tolerance.

Each test prints one `[criterion N] PASS ...` line (visible with `pytest -s`
or in the verbose test listing) and enforces its runtime budget.
"""

import math
import time

import numpy as np
import pytest

import helpers_stab as lib
from stabcert import embedding, envelope2d, mapdef, onedim, orbit, spectral
from stabcert.spectral import Classification


class _Timer:
    def __init__(self, budget_s):
        self.budget = budget_s

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False

    def check(self):
        assert self.elapsed < self.budget, (
            f"runtime {self.elapsed:.2f}s exceeds budget {self.budget}s"
        )


def _report(n, timer, detail=""):
    timer.check()
    print(f"[criterion {n}] PASS ({timer.elapsed:.2f}s) {detail}".rstrip())


def test_criterion_1_linear_expansion_exact():
    with _Timer(1.0) as t:
        nm = mapdef.prepare(mapdef.get_map("linear-neg"))
        rep = spectral.slas_index(nm)
        assert abs(rep.norms[0] - 1.2) <= 1e-12
        assert abs(rep.norms[1] - 0.6) <= 1e-12
        assert rep.slas_index == 1
        coeffs = spectral.gradient(spectral.expand(nm, 1)).a
        assert abs(coeffs[0] - (-6 / 25)) <= 1e-12
        assert abs(coeffs[1] - (9 / 25)) <= 1e-12
    _report(1, t, f"norms=(1.2, 0.6), F1 coefficients "
                  f"({coeffs[0]:g}, {coeffs[1]:g})")


def test_criterion_2_delayed_ricker_closed_forms():
    with _Timer(1.0) as t:
        for b in (0.25, 0.5, 0.75):
            nm = mapdef.prepare(mapdef.get_map("ricker-delay", {"b": b}))
            v0 = spectral.gradient(nm)
            vs = spectral.v_sequence(v0, 2)
            assert np.abs(vs[1].a - np.array([1 - b, -b])).max() <= 1e-12
            assert np.abs(vs[2].a
                          - np.array([1 - 2 * b, -b * (1 - b)])).max() <= 1e-12
            rep = spectral.slas_index(nm)
            assert rep.slas_index == 2, b
            B = spectral.column_sums_B(spectral.companion(v0), 2)
            g = onedim.compose_g(nm, onedim.calibrate_mobius(v0, B))
            gp = onedim.g_prime_at_fixed_point(g)
            want = -b * abs(b - 1) - abs(2 * b - 1)
            assert abs(gp - want) <= 1e-9
            if b == 0.5:
                assert abs(gp - (-0.25)) <= 1e-9
    _report(2, t, "V1, V2 exact; slas index 2; g'(1) closed form at 3 values of b")


def test_criterion_3_slas_window():
    with _Timer(1.0) as t:
        for a, expect in [(2.5, True), (3.0, True), (3.3, True),
                          (3.4, False), (4.0, False)]:
            rep = spectral.slas_index(
                mapdef.prepare(mapdef.get_map("down-up-a", {"a": a})))
            assert (rep.slas_index == 0) == expect, a
            stable = rep.classification is Classification.SLAS
            assert stable == expect, a   # eigenvalues agree with the norm test
    _report(3, t, "norm window (2, 10/3) reproduced; eigenvalues agree at all a")


def test_criterion_4_enveloping_example():
    with _Timer(30.0) as t:
        for a in (2.0, 3.0, 5.0):
            nm = mapdef.prepare(mapdef.get_map("mobius-rational-a", {"a": a}))
            v0 = spectral.gradient(nm)
            norm_formula = (abs(a * a - 4 * a - 1) + a * a - 1) / (4 * a * a)
            assert abs(v0.one_norm - norm_formula) <= 1e-12
            s = envelope2d.slopes_M1_M2(*v0.a)
            assert abs(s.M1 - (a * a - 4 * a - 1) / (1 - 5 * a * a)) <= 1e-12
            assert abs(s.M2 - (-(5 * a + 1) / (a + 1))) <= 1e-12
            if a == 3.0:
                assert abs(v0.one_norm - 1 / 3) <= 1e-12
                assert abs(s.M1 - 1 / 11) <= 1e-12
                assert abs(s.M2 + 4.0) <= 1e-12
            g = onedim.expr_map("max(2-u1, 0)", envelope2d.envelope_window(nm),
                                source="user")
            rep = envelope2d.check_definition_envelope(nm, g,
                                                       n_samples=100_000)
            assert rep.passed and rep.n_witnesses == 0, a
    _report(4, t, "norm and slope formulas exact; reflection envelope: "
                  "0 witnesses at 1e5 samples for a in {2, 3, 5}")


def test_criterion_5_doubly_decreasing_pipeline():
    with _Timer(60.0) as t:
        # b = 0.5: strong local condition at the base map, clean embedding
        nm = mapdef.prepare(mapdef.get_map("decdec", {"b": 0.5}))
        rep = spectral.slas_index(nm)
        assert rep.slas_index == 0
        assert embedding.pseudo_fixed_points(nm) == []
        assert not onedim.find_two_cycles(onedim.diagonal_map(nm)).has_cycles

        # b = 1.5: norm test passes at the first expansion only
        nm = mapdef.prepare(mapdef.get_map("decdec", {"b": 1.5}))
        rep = spectral.slas_index(nm)
        assert rep.slas_index == 1
        pseudo = embedding.pseudo_fixed_points(nm)
        assert len(pseudo) == 1
        cyc = onedim.find_two_cycles(onedim.diagonal_map(nm)).cycles[0]
        assert abs(pseudo[0].x - cyc[0]) <= 1e-8
        assert abs(pseudo[0].y - cyc[1]) <= 1e-8
        emb = embedding.embedding_gas_verdict(nm)
        assert not emb.certified     # embedding route is inconclusive here
        f1 = spectral.expand(nm, 1)
        profile = embedding.monotonicity_profile(f1)
        assert profile.signs == ("decreasing", "increasing")
        g = onedim.expr_map("(b+1)/(b*u1+1)", envelope2d.envelope_window(f1),
                            nm.params, source="canonical")
        env = envelope2d.check_definition_envelope(f1, g, n_samples=100_000)
        assert env.passed
        verdict = envelope2d.gas_certificate(nm)
        assert verdict.level == "GAS-certified"
    _report(5, t, "b=0.5 clean; b=1.5: pseudo pair = diagonal 2-cycle, "
                  "embedding inconclusive, expansion enveloped, GAS-certified")


def test_criterion_6_stocking_threshold():
    with _Timer(60.0) as t:
        h = 1.0
        nm = mapdef.prepare(mapdef.get_map("ricker-stocking",
                                           {"h": h, "xbar": 1.5}))
        v0 = spectral.gradient(nm)
        assert abs(v0.one_norm - 5 / 6) <= 1e-9
        assert spectral.slas_index(nm).slas_index == 0
        phi = envelope2d.phi_from_implicit(nm)
        b = nm.params["b"]
        xs = np.linspace(phi.domain[0], phi.domain[1], 100)
        closed = h / (1.5 * (1.0 - np.exp(b - 1.5 * xs)))
        assert np.abs(phi.values(xs) - closed).max() <= 1e-7
        verdict = envelope2d.gas_certificate(nm)
        assert verdict.level == "GAS-certified"
        assert verdict.route == "incr-decr-phi"

        nm17 = mapdef.prepare(mapdef.get_map("ricker-stocking",
                                             {"h": h, "xbar": 1.7}))
        v17 = spectral.gradient(nm17)
        assert v17.one_norm > 1.0
        assert spectral.slas_index(nm17).slas_index != 0

        # the norm-test threshold in xbar equals (h + sqrt(h^2 + 4h))/2
        def norm_at(xbar):
            m = mapdef.prepare(mapdef.get_map("ricker-stocking",
                                              {"h": h, "xbar": xbar}))
            return spectral.gradient(m).one_norm - 1.0

        lo, hi = 1.5, 1.7
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if norm_at(mid) < 0:
                lo = mid
            else:
                hi = mid
        threshold = 0.5 * (lo + hi)
        want = 0.5 * (h + math.sqrt(h * h + 4 * h))
        assert abs(threshold - want) <= 1e-9
    _report(6, t, f"norm 5/6 exact; phi-route certified; threshold "
                  f"{threshold:.12f} = (1+sqrt(5))/2 within 1e-9")


def test_criterion_7_embedding_vacuous():
    with _Timer(10.0) as t:
        nm = mapdef.prepare(mapdef.get_map("bx-over-1py", {"b": 2.0}))
        omega = embedding.embedding_region_omega(nm, grid_n=256)
        assert omega.empty
        verdict = embedding.embedding_gas_verdict(nm, grid_n=256)
        assert not verdict.certified
        assert verdict.clause == "embedding inequality region is empty"
    _report(7, t, "inequality region empty on the 256^2 grid")


def test_criterion_8_property_suites():
    with _Timer(300.0) as t:
        n_fd = lib.check_dual_vs_fd(100)
        n_chain = lib.check_chain_rule_vs_recursion(6)
        n_omega = lib.check_omega_inside_region(256)
        n_env = lib.check_envelope_inherited(seed=0, n_samples=100_000)
        n_dd = lib.check_decdec_pseudo_equivalence((0.5, 0.9, 1.1, 1.5))
    _report(8, t, f"(i) {n_fd} dual-vs-FD cases; (ii) {n_chain} chain-rule "
                  f"checks; (iii) {n_omega} region containments; "
                  f"(iv) {n_env} inherited envelopes; (v) {n_dd} equivalences")


def test_criterion_9_basin_corroboration():
    with _Timer(120.0) as t:
        certified = [
            ("decdec", {"b": 0.5}),
            ("decdec", {"b": 1.5}),
            ("ricker-stocking", {"h": 1.0, "xbar": 1.5}),
            ("bh-product", {"a": 2.0}),
            ("down-up-a", {"a": 3.0}),
        ]
        fractions = {}
        for name, params in certified:
            nm = mapdef.prepare(mapdef.get_map(name, params))
            verdict = envelope2d.gas_certificate(nm, n_samples=20_000)
            assert verdict.level == "GAS-certified", (name, params)
            basin = orbit.basin_sample(nm, n_points=200, seed=0, tol=1e-6,
                                       n_max=100_000)
            assert basin.fraction == 1.0, (name, params, basin.failures[:3])
            fractions[name] = basin.fraction
    _report(9, t, f"basin fraction 1.0 for all {len(certified)} certified "
                  "configurations (200 orbits each)")
