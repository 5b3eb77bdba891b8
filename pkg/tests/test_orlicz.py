import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gibbslab.orlicz import (
    YoungParams,
    biconjugate_eval,
    c_alpha_q,
    conjugate_argmax,
    conjugate_eval,
    conjugate_upper_bound,
    constants,
    holder_check,
    indicator_tail_norm,
    intermediate_c,
    inverse_conjugate,
    log_conjugate_eval,
    log_indicator_tail_norm,
    luxemburg_norm,
    tail_bound_constants,
    y_threshold,
    young_eval,
)

P = YoungParams(0.5, 0.1)

# mpmath at 40 digits, from the definitions of G, F and F* (maximiser found by
# findroot on G'(x) = y) and an independent root search for the inverse.
F_AT_E2 = 6.742002780367830921
Y_THRESHOLD = 1.149162356448834413
F_STAR_AT_1_5 = 94791.81118525899585
F_STAR_AT_10 = 1.4477796776026255e228
INDICATOR_NORMS = {0.5: 0.8465034643248786721, 0.1: 0.7709041577721639260, 0.01: 0.7362337721006705858}

params_strategy = st.builds(YoungParams, st.floats(0.05, 0.95), st.floats(0.01, 2.0))


def log_grid_conjugate(params, y, points=10**6):
    """max over a log-spaced grid of x y - F(x), carried out in log space."""
    # on the curved branch F*(y) = e^t (y - e^{q t^a}) + G0 for t = log x
    t = np.linspace(1 - params.alpha, 2 * (math.log(y) / params.q) ** (1 / params.alpha), points)
    gap = y - np.exp(params.q * t**params.alpha)
    with np.errstate(invalid="ignore", divide="ignore"):
        phi = t + np.log(gap)
    return float(np.nanmax(phi))


class TestParams:
    @pytest.mark.parametrize("a,q", [(0.0, 0.1), (1.0, 0.1), (0.5, 0.0), (0.5, -1.0)])
    def test_rejects(self, a, q):
        with pytest.raises(ValueError):
            YoungParams(a, q)

    def test_constants(self):
        assert y_threshold(P) == pytest.approx(Y_THRESHOLD, rel=1e-14)
        assert c_alpha_q(P) == pytest.approx(101.0, rel=1e-14)
        assert intermediate_c(P) == pytest.approx(0.1 + math.log(1 + 0.05 * math.sqrt(2)) * math.sqrt(2), rel=1e-14)
        rep = constants(P)
        assert rep["tail_rate_c"] == pytest.approx(1 / math.sqrt(404), rel=1e-14)

    @given(params_strategy)
    def test_threshold_at_least_one(self, p):
        assert y_threshold(p) >= 1.0

    def test_threshold_small_q_limit(self):
        assert y_threshold(YoungParams(0.5, 1e-9)) == pytest.approx(1.0, abs=1e-8)


class TestYoung:
    def test_zero_and_flat_region(self):
        assert young_eval(P, 0.0) == 0.0
        assert young_eval(P, 1.0) == 0.0
        assert young_eval(P, -P.x0) == 0.0

    def test_high_precision_value(self):
        assert young_eval(P, math.e**2) == pytest.approx(F_AT_E2, rel=1e-13)

    @given(params_strategy, st.floats(-1e3, 1e3))
    def test_even(self, p, x):
        assert young_eval(p, x) == young_eval(p, -x)

    def test_nondecreasing(self):
        x = np.linspace(0, 1000, 100001)
        assert np.all(np.diff(young_eval(P, x)) >= 0)

    @pytest.mark.parametrize("p", [P, YoungParams(0.3, 1.0), YoungParams(0.5, 0.05)])
    def test_midpoint_convexity(self, p):
        rng = np.random.default_rng(7)
        x, y = rng.uniform(-1e3, 1e3, (2, 10_000))
        lhs = young_eval(p, 0.5 * (x + y))
        rhs = 0.5 * (young_eval(p, x) + young_eval(p, y))
        assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-12)

    def test_superlinear(self):
        ratios = [young_eval(P, 10.0**k) / 10.0**k for k in range(1, 7)]
        assert all(b > a for a, b in zip(ratios, ratios[1:]))

    def test_overflow_is_infinite(self):
        assert young_eval(YoungParams(0.5, 2.0), 1e300) == math.inf


class TestConjugate:
    def test_zero(self):
        assert conjugate_eval(P, 0.0) == 0.0
        assert log_conjugate_eval(P, 0.0) == -math.inf

    @given(st.floats(1e-6, Y_THRESHOLD))
    def test_linear_branch(self, y):
        assert conjugate_eval(P, y) == pytest.approx(y * P.x0, rel=1e-14)
        assert conjugate_argmax(P, y) == P.x0

    @pytest.mark.parametrize("y,want", [(1.5, F_STAR_AT_1_5), (10.0, F_STAR_AT_10)])
    def test_high_precision_values(self, y, want):
        assert conjugate_eval(P, y) == pytest.approx(want, rel=1e-12)

    def test_against_dense_grid(self):
        want = log_grid_conjugate(P, 10.0)
        # the grid misses the peak by at most a relative 1e-6
        assert log_conjugate_eval(P, 10.0) == pytest.approx(want, abs=1e-6)
        assert log_conjugate_eval(P, 10.0) >= want - 1e-12

    def test_even(self):
        assert conjugate_eval(P, -3.0) == conjugate_eval(P, 3.0)

    def test_vectorised(self):
        ys = np.array([[0.5, 2.0], [3.0, 0.0]])
        out = conjugate_eval(P, ys)
        assert out.shape == (2, 2)
        assert out[0, 1] == conjugate_eval(P, 2.0)

    @pytest.mark.parametrize("x", [0.0, 1.0, 2.0, 5.0, 17.3, 50.0, 100.0])
    def test_biconjugate(self, x):
        fx = young_eval(P, x)
        assert biconjugate_eval(P, x) == pytest.approx(fx, rel=1e-6, abs=1e-9)

    @given(params_strategy, st.floats(0, 50), st.floats(0, 50))
    @settings(max_examples=200, deadline=None)
    def test_fenchel_young(self, p, x, y):
        assert x * y <= young_eval(p, x) + conjugate_eval(p, y) * (1 + 1e-12) + 1e-12

    @pytest.mark.parametrize("p", [YoungParams(0.3, 1.0), YoungParams(0.5, 0.05)])
    def test_upper_bound_sweep(self, p):
        ys = np.geomspace(y_threshold(p), 1e6, 1000)
        for y in ys:
            assert conjugate_eval(p, y) <= conjugate_upper_bound(p, y)

    def test_upper_bound_domain(self):
        with pytest.raises(ValueError):
            conjugate_upper_bound(P, 1.0)

    @given(st.floats(Y_THRESHOLD, 1e6), st.floats(1.0, 10.0))
    def test_upper_bound_monotone(self, y, k):
        assert conjugate_upper_bound(P, y) <= conjugate_upper_bound(P, min(k * y, 1e7))


class TestInverse:
    @given(st.floats(1e-3, 1e30))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, v):
        y = inverse_conjugate(P, v)
        assert conjugate_eval(P, y) == pytest.approx(v, rel=1e-9)

    def test_positive_only(self):
        with pytest.raises(ValueError):
            inverse_conjugate(P, 0.0)


class TestIndicatorNorm:
    @pytest.mark.parametrize("p", sorted(INDICATOR_NORMS))
    def test_closed_form(self, p):
        assert indicator_tail_norm(P, p) == pytest.approx(INDICATOR_NORMS[p], rel=1e-12)

    @pytest.mark.parametrize("p", sorted(INDICATOR_NORMS))
    def test_bisection_matches(self, p):
        est = luxemburg_norm(P, [1.0, 0.0], [p, 1 - p], which="F*")
        assert est.lower <= INDICATOR_NORMS[p] <= est.upper
        assert est.value == pytest.approx(INDICATOR_NORMS[p], rel=1e-6)

    def test_certain_event(self):
        assert indicator_tail_norm(P, 1.0) == pytest.approx(math.sqrt(math.e), rel=1e-14)

    def test_impossible_event(self):
        assert indicator_tail_norm(P, 0.0) == 0.0

    @given(st.floats(1e-12, 1.0), st.floats(1e-12, 1.0))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert indicator_tail_norm(P, lo) <= indicator_tail_norm(P, hi)

    def test_log_version(self):
        assert math.exp(log_indicator_tail_norm(P, math.log(0.1))) == pytest.approx(indicator_tail_norm(P, 0.1))
        with pytest.raises(ValueError):
            log_indicator_tail_norm(P, 0.1)

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            indicator_tail_norm(P, 1.5)


class TestLuxemburg:
    def test_zero_function(self):
        est = luxemburg_norm(P, np.zeros(5))
        assert est.value == 0.0

    def test_bracket(self):
        est = luxemburg_norm(P, [3.0, 1.0, 0.5])
        assert est.lower <= est.value <= est.upper
        assert est.upper / est.lower - 1 <= 1e-8
        assert float(est) == est.value

    @given(st.integers(0, 2**31))
    @settings(max_examples=40, deadline=None)
    def test_homogeneous(self, seed):
        rng = np.random.default_rng(seed)
        f = rng.standard_normal(8) * 5
        a = luxemburg_norm(P, f).value
        b = luxemburg_norm(P, 2 * f).value
        assert b == pytest.approx(2 * a, rel=3e-8)

    @pytest.mark.parametrize("weights", [[0.5, 0.4], [-0.5, 1.5], [0.5]])
    def test_bad_weights(self, weights):
        with pytest.raises(ValueError):
            luxemburg_norm(P, [1.0, 2.0], weights)

    def test_unknown_function(self):
        with pytest.raises(ValueError):
            luxemburg_norm(P, [1.0], which="G")


class TestHolder:
    def test_zero(self):
        assert holder_check(P, np.zeros(4), np.ones(4)) == (0.0, 0.0)

    def test_half_indicators(self):
        f = np.array([1.0, 0.0])
        lhs, rhs = holder_check(P, f, f)
        assert lhs == 0.5 and lhs <= rhs

    @given(st.integers(0, 2**31))
    @settings(max_examples=100, deadline=None)
    def test_random_simple_functions(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.random(16)
        w /= w.sum()
        f, g = rng.standard_normal((2, 16)) * rng.uniform(0.1, 20, (2, 1))
        lhs, rhs = holder_check(P, f, g, w)
        assert lhs <= rhs

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            holder_check(P, np.ones(3), np.ones(4))


class TestTailConstants:
    def test_rate(self):
        assert tail_bound_constants(P, 1.0).c == pytest.approx(1 / math.sqrt(404), rel=1e-14)

    @pytest.mark.parametrize("c_s", [0.5, 1.0, 10.0, 1e4])
    def test_threshold_solves_equation(self, c_s):
        tc = tail_bound_constants(P, c_s)
        caq = c_alpha_q(P)
        val = c_s * math.exp(caq * math.log(y_threshold(P)) ** 2 - tc.M0**2 / 4)
        if tc.M0 > 0:
            assert val == pytest.approx(1.0, abs=1e-12)
        else:
            assert val <= 1.0

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_rate_decreasing_in_constant(self, q1, q2):
        lo, hi = sorted((q1, q2))
        # larger q means smaller c_{alpha,q}, hence a larger rate
        assert tail_bound_constants(YoungParams(0.5, lo), 1.0).c <= tail_bound_constants(YoungParams(0.5, hi), 1.0).c

    def test_bad_c_s(self):
        with pytest.raises(ValueError):
            tail_bound_constants(P, 0.0)
