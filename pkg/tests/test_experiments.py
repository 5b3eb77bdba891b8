import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbslab.dynamics import EvolutionSpec
from gibbslab.experiments import (
    BourgainInputs,
    InvarianceReport,
    LinearFit,
    ObservableComparison,
    bourgain_bound,
    bourgain_study,
    compare_ensembles,
    density_integrability_study,
    draw_ensemble,
    gaussian_tail_study,
    growth_study,
    integrand_log,
    invariance_test,
    observable,
    orlicz_tail_study,
    sample_steps,
    tail_probabilities,
    weighted_comparison,
    weighted_quantile,
)
from gibbslab.measures import GaussianLaw, GibbsSpec, gaussian_coefficients
from gibbslab.orlicz import YoungParams, indicator_tail_norm

P = YoungParams(0.5, 0.1)


class TestObservables:
    def test_known_names(self):
        c = gaussian_coefficients(GaussianLaw(3), 0, 0, 5)
        np.testing.assert_allclose(observable("mass")(c), np.sum(np.abs(c) ** 2, axis=1), rtol=1e-13)
        np.testing.assert_allclose(observable("l6_6")(c), 6 * observable("potential")(c), rtol=1e-13)
        np.testing.assert_allclose(observable("abs_c_-2")(c), np.abs(c[:, 1]))

    def test_mode_out_of_range(self):
        c = np.zeros((1, 5), complex)
        with pytest.raises(ValueError):
            observable("abs_c_3")(c)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            observable("entropy")


class TestWeightedQuantile:
    def test_equal_weights(self):
        v = np.arange(1.0, 11.0)
        assert weighted_quantile(v, np.ones(10), 0.5) == 5.0
        assert weighted_quantile(v, np.ones(10), 0.9) == 9.0
        assert weighted_quantile(v, np.ones(10), 1.0) == 10.0

    def test_heavy_weight(self):
        assert weighted_quantile(np.array([3.0, 1.0, 2.0]), np.array([0.8, 0.1, 0.1]), 0.5) == 3.0

    @given(st.integers(0, 2**31), st.floats(0.01, 0.99))
    @settings(max_examples=50, deadline=None)
    def test_matches_cdf_definition(self, seed, q):
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(30)
        w = rng.random(30) + 1e-3
        x = weighted_quantile(v, w, q)
        below = w[v < x].sum() / w.sum()
        upto = w[v <= x].sum() / w.sum()
        assert below < q + 1e-12 and upto >= q - 1e-12


class TestComparison:
    def test_identical_samples_overlap(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(500)
        comp = weighted_comparison("x", v, v, np.ones(500), seed=1, B=200)
        assert comp.passed
        assert comp.pre_mean == comp.post_mean
        assert comp.pre_mean_ci[0] <= comp.pre_mean <= comp.pre_mean_ci[1]

    def test_shifted_samples_fail(self):
        rng = np.random.default_rng(0)
        v = rng.standard_normal(2000)
        comp = weighted_comparison("x", v, v + 1.0, np.ones(2000), seed=1, B=200)
        assert not comp.mean_overlap and not comp.passed

    def test_deterministic_in_seed(self):
        v = np.random.default_rng(3).standard_normal(300)
        a = weighted_comparison("x", v, v, np.ones(300), seed=5, B=100)
        b = weighted_comparison("x", v, v, np.ones(300), seed=5, B=100)
        assert a == b

    def test_dead_members_dropped(self):
        c = gaussian_coefficients(GaussianLaw(2), 0, 0, 200)
        alive = np.ones(200, bool)
        alive[:50] = False
        comps, ess = compare_ensembles(c, c, np.zeros(200), ["mass"], seed=0, B=50, alive=alive)
        assert ess == pytest.approx(150)
        assert comps[0].pre_mean == pytest.approx(np.mean(np.sum(np.abs(c[50:]) ** 2, axis=1)))


def _comparison(passed=True):
    ci = (0.0, 1.0) if passed else (2.0, 3.0)
    return ObservableComparison("x", 0.5, 0.5, 0.5, 0.5, (0.0, 1.0), ci, (0.0, 1.0), (0.0, 1.0), 0.9)


class TestInvarianceReport:
    def test_low_ess_is_inconclusive(self):
        rep = InvarianceReport([_comparison(False)], ess=50.0, ensemble_size=1000, t_star=1.0,
                               sampler="smc", seed=0)
        assert rep.verdict == "inconclusive"
        assert rep.verdict_for("x") == "inconclusive"

    def test_pass_and_fail(self):
        ok = InvarianceReport([_comparison(True)], 500.0, 1000, 1.0, "smc", 0)
        bad = InvarianceReport([_comparison(True), _comparison(False)], 500.0, 1000, 1.0, "smc", 0)
        assert ok.verdict == "pass" and bad.verdict == "fail"
        with pytest.raises(KeyError):
            ok.verdict_for("y")

    def test_serialisation(self):
        rep = InvarianceReport([_comparison(True)], 500.0, 1000, 1.0, "smc", 0)
        d = rep.to_dict()
        assert d["verdict"] == "pass" and len(d["observables"]) == 1
        rows = rep.tables()["invariance"]
        assert rows[0][0] == "observable" and len(rows) == 3


class TestInvariance:
    spec = GibbsSpec(GaussianLaw(4), cutoff=1.5)

    def test_zero_time_is_trivial(self):
        rep = invariance_test(self.spec, EvolutionSpec("nls", 4, 0.01, 0.0), m=400, bootstrap=100,
                              sampler="importance")
        assert rep.verdict == "pass"
        for o in rep.observables:
            assert o.pre_mean == o.post_mean

    def test_linear_flow_keeps_mode_moduli(self):
        names = ("abs_c_0", "abs_c_3", "mass")
        rep = invariance_test(self.spec, EvolutionSpec("nls", 4, 0.01, 1.0, scheme="linear"),
                              observables=names, m=400, bootstrap=100, sampler="importance")
        assert rep.verdict == "pass"
        for o in rep.observables:
            assert o.post_mean == pytest.approx(o.pre_mean, rel=1e-12)

    def test_short_nonlinear_flow_passes(self):
        rep = invariance_test(self.spec, EvolutionSpec("nls", 4, 0.01, 0.1), m=1000, bootstrap=200,
                              sampler_options={"moves": 2})
        assert rep.verdict == "pass"
        assert rep.failed_trajectories == 0

    def test_mismatched_N(self):
        with pytest.raises(ValueError):
            invariance_test(self.spec, EvolutionSpec("nls", 5, 0.01, 0.1), m=10)

    def test_unknown_sampler(self):
        with pytest.raises(ValueError):
            draw_ensemble(self.spec, 10, 0, sampler="gibbs")


class TestLinearFit:
    def test_exact_line(self):
        x = np.linspace(0, 5, 20)
        fit = LinearFit.of(x, 3 * x - 2)
        assert fit.slope == pytest.approx(3) and fit.intercept == pytest.approx(-2)
        assert fit.r2 == pytest.approx(1.0) and fit.residual_norm < 1e-12

    def test_degenerate_inputs(self):
        assert math.isnan(LinearFit.of([1.0], [2.0]).slope)
        flat = LinearFit.of([2.0, 2.0], [1.0, 3.0])
        assert flat.slope == 0.0 and flat.intercept == 2.0


class TestTails:
    def test_tail_probabilities(self):
        p, hits = tail_probabilities(np.array([4.0, 1.0, 3.0, 2.0]), np.array([0.0, 2.5, 4.0, 5.0]))
        np.testing.assert_allclose(p, [1.0, 0.5, 0.25, 0.0])
        np.testing.assert_array_equal(hits, [4, 2, 1, 0])

    def test_single_mode_rate(self):
        # N = 0 complex: |c_0|^2 is exponential with mean 2, so P(|c_0| >= M) = exp(-M^2 / 2)
        rep = gaussian_tail_study(GaussianLaw(0), 0.25, count=200_000, seed=1)
        assert rep.fit.slope == pytest.approx(0.5, rel=0.05)
        assert rep.estimable.sum() >= 5

    def test_rejects_s_half(self):
        with pytest.raises(ValueError):
            gaussian_tail_study(GaussianLaw(2), 0.5, count=10)

    def test_orlicz_ledger(self):
        led = orlicz_tail_study(GaussianLaw(8), P, 0.25, count=20_000, seed=2)
        assert np.all(np.diff(led.p_hat) <= 0)
        assert np.all(np.diff(led.L) <= 0)
        for p, L in zip(led.p_hat[::7], led.L[::7]):
            assert L == pytest.approx(indicator_tail_norm(P, float(p)), rel=1e-12)
        assert led.fit.slope > 0
        model = led.indicator_model(np.array([0.0, 1.0, 100.0]))
        assert model[0] <= P.x0 and model[2] < model[1]
        assert led.tables()["orlicz_tail"][0] == ["M", "p_hat", "hits", "L", "estimable"]


class TestIntegrability:
    def test_integrand_cutoff(self):
        out = integrand_log(np.array([1.0, 1.0]), np.array([1.0, 3.0]), 2.0, P)
        assert out[0] == pytest.approx(1.0 + 0.1 * 6.0**0.5)
        assert out[1] == -math.inf
        assert integrand_log(np.array([2.0]), np.array([0.0]), 1.0, None)[0] == 2.0

    def test_small_N_is_stable(self):
        rep = density_integrability_study(GibbsSpec(GaussianLaw(2)), [P, YoungParams(0.3, 0.5)],
                                          m=20_000, seed=0)
        assert 0 < rep.acceptance_fraction <= 1
        for r in rep.results:
            assert r.verdict == "stable"
            assert r.density_norm > 0 and r.estimate_m > 1

    def test_bad_m(self):
        with pytest.raises(ValueError):
            density_integrability_study(GibbsSpec(GaussianLaw(2)), [P], m=0)


class TestBourgain:
    def test_bound_floor(self):
        # tau = 1/4, so 1 + 2 floor(4) = 9 windows
        assert bourgain_bound(BourgainInputs(2.0, 1.0, 3.0, 0.5)) == pytest.approx(9 * 2 * 3.0 * 0.5)
        # T just below a window boundary
        assert bourgain_bound(BourgainInputs(2.0, 0.2499, 1.0, 1.0)) == pytest.approx(2.0)

    @pytest.mark.parametrize("field", ["M", "T", "density_norm", "indicator_norm", "beta", "tau0"])
    def test_positive_inputs(self, field):
        kw = dict(M=1.0, T=1.0, density_norm=1.0, indicator_norm=1.0)
        kw[field] = 0.0 if field in kw else -1.0
        with pytest.raises(ValueError):
            BourgainInputs(**kw)

    @given(st.floats(0.5, 20), st.floats(1, 1e4), st.floats(1.0, 10.0))
    def test_monotone_in_T(self, M, T, k):
        a = bourgain_bound(BourgainInputs(M, T, 1.0, 0.1))
        b = bourgain_bound(BourgainInputs(M, T * k, 1.0, 0.1))
        assert a <= b

    def test_level_grows_with_T(self):
        led = orlicz_tail_study(GaussianLaw(8), P, 0.25, count=20_000, seed=2)
        rep = bourgain_study(1.5, led, T_values=(1e2, 1e3, 1e4, 1e5))
        assert rep.level_monotone
        assert rep.level_fit.slope > 0
        assert all(math.isfinite(r.level_M) for r in rep.rows)
        assert set(rep.curves) == {1e2, 1e3, 1e4, 1e5}


class TestGrowth:
    def test_sample_steps(self):
        s = sample_steps(1000, 0.01, 20)
        assert s[0] == 1 and s[-1] == 1000 and np.all(np.diff(s) > 0)
        assert sample_steps(0, 0.01).size == 0

    def test_frozen_flow_is_flat(self):
        rec = growth_study(GibbsSpec(GaussianLaw(4), cutoff=1.5), EvolutionSpec("nls", 4, 0.01, 0.5, scheme="frozen"),
                           s_list=(0.25,), ensemble_size=20, burn_in=50, points=10, bootstrap=50)
        env = rec.envelopes[0.25]
        assert rec.nondecreasing()
        np.testing.assert_array_equal(env, env[:, :1] * np.ones_like(env))
        assert rec.times[0] == 0.0 and rec.times[-1] == pytest.approx(0.5)

    def test_nonlinear_envelope_nondecreasing(self):
        rec = growth_study(GibbsSpec(GaussianLaw(4), cutoff=1.5), EvolutionSpec("nls", 4, 0.01, 1.0),
                           s_list=(0.0, 0.25), ensemble_size=20, burn_in=50, points=10, bootstrap=50)
        assert rec.nondecreasing() and rec.failed == 0
        # the H^0 norm is the conserved mass, so its envelope stays put
        env = rec.envelopes[0.0]
        np.testing.assert_allclose(env[:, -1], env[:, 0], rtol=1e-9)
        d = rec.to_dict()
        assert set(d["fits"]["0.25"]) == {"log", "sqrt_log", "sqrt_T"}

    def test_mismatched_N(self):
        with pytest.raises(ValueError):
            growth_study(GibbsSpec(GaussianLaw(4)), EvolutionSpec("nls", 3, 0.01, 0.1))
