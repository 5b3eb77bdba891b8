"""Young function F(x) = (G(|x|) - G(e^{1-alpha}))_+ with G(x) = x exp(q |log x|^alpha).

Besides F itself this module evaluates the Legendre conjugate F*, Luxemburg
norms over weighted finite samples, the Orlicz-Hoelder inequality and the
constants appearing in the Orlicz tail bound.

All exponentials are formed in log space.  Values beyond the double range are
returned as +inf, which is harmless inside the Luxemburg bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class YoungParams:
    alpha: float
    q: float

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie strictly inside (0, 1), got {self.alpha}")
        if not self.q > 0:
            raise ValueError(f"q must be positive, got {self.q}")

    @property
    def x0(self) -> float:
        """Edge of the flat region, e^{1 - alpha}."""
        return math.exp(1.0 - self.alpha)

    @property
    def g0(self) -> float:
        """G(e^{1 - alpha})."""
        return math.exp(_log_g_scalar(self, 1.0 - self.alpha))


def _log_g_scalar(params: YoungParams, t: float) -> float:
    """log G(e^t) = t + q |t|^alpha."""
    return t + params.q * abs(t) ** params.alpha


def log_g(params: YoungParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        t = np.log(x)
    return t + params.q * np.abs(t) ** params.alpha


def young_eval(params: YoungParams, x):
    """F(x); vectorised, even in x, zero on |x| <= e^{1-alpha}."""
    ax = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(ax)
    big = ax > params.x0
    if np.any(big):
        with np.errstate(over="ignore"):
            out[big] = np.exp(log_g(params, ax[big])) - params.g0
    return out if out.ndim else float(out)


def y_threshold(params: YoungParams) -> float:
    """Slope of F at the edge of the flat region, G'(e^{1-alpha})."""
    a, q = params.alpha, params.q
    return math.exp(q * (1 - a) ** a) * (1 + q * a * (1 - a) ** (a - 1))


def c_alpha_q(params: YoungParams) -> float:
    return 1.0 + params.q ** (-1.0 / params.alpha)


def intermediate_c(params: YoungParams) -> float:
    """The auxiliary constant q + log(1 + q a (1-a)^{a-1}) (1-a)^{-a}."""
    a, q = params.alpha, params.q
    return q + math.log(1 + q * a * (1 - a) ** (a - 1)) * (1 - a) ** (-a)


def _slope_log(params: YoungParams, t: float) -> float:
    """log G'(e^t) = q t^a + log(1 + q a t^{a-1}), increasing for t >= 1 - a."""
    a, q = params.alpha, params.q
    return q * t**a + math.log1p(q * a * t ** (a - 1))


def _stationary_t(params: YoungParams, log_y: float) -> float:
    """Solve G'(e^t) = y for t >= 1 - alpha, given log y > log y_threshold."""
    lo = 1.0 - params.alpha
    hi = max((log_y / params.q) ** (1.0 / params.alpha), lo * 2.0)
    while _slope_log(params, hi) < log_y:
        hi *= 2.0
    return optimize.brentq(lambda t: _slope_log(params, t) - log_y, lo, hi,
                           xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def log_conjugate_eval(params: YoungParams, y: float) -> float:
    """log F*(|y|), or -inf at y = 0.

    On |y| <= y_threshold the supremum of xy - F(x) sits at the edge of the
    flat region and F*(y) = |y| e^{1-alpha}.  Beyond it the maximiser solves
    G'(x) = y, which is found by a bracketed root search in t = log x; then
    F*(y) = x y - G(x) + G0 = G(x) q a t^{a-1} + G0.
    """
    y = abs(float(y))
    if y == 0.0:
        return -math.inf
    if y <= y_threshold(params):
        return math.log(y) + 1.0 - params.alpha
    a, q = params.alpha, params.q
    t = _stationary_t(params, math.log(y))
    log_main = _log_g_scalar(params, t) + math.log(q * a) + (a - 1) * math.log(t)
    return log_main + math.log1p(params.g0 * math.exp(-log_main))


def conjugate_eval(params: YoungParams, y):
    """F*(y) = sup_x (x y - F(x)); even, vectorised over y."""
    ys = np.asarray(y, dtype=float)
    flat = np.array([log_conjugate_eval(params, v) for v in ys.ravel()])
    with np.errstate(over="ignore"):
        out = np.where(flat > _LOG_MAX, np.inf, np.exp(np.minimum(flat, _LOG_MAX)))
    out = out.reshape(ys.shape)
    return out if out.ndim else float(out)


def conjugate_argmax(params: YoungParams, y: float) -> float:
    """The maximiser x(y) of x y - F(x) (e^{1-alpha} on the linear branch)."""
    y = abs(float(y))
    if y <= y_threshold(params):
        return params.x0
    return math.exp(_stationary_t(params, math.log(y)))


def log_conjugate_upper_bound(params: YoungParams, y: float) -> float:
    if y < y_threshold(params):
        raise ValueError(f"the conjugate bound needs y >= y_threshold = {y_threshold(params)}")
    return c_alpha_q(params) * math.log(y) ** (1.0 / params.alpha)


def conjugate_upper_bound(params: YoungParams, y: float) -> float:
    """exp(c_{alpha,q} (log y)^{1/alpha}), valid for y >= y_threshold."""
    lb = log_conjugate_upper_bound(params, y)
    return math.inf if lb > _LOG_MAX else math.exp(lb)


def legendre_transform(func: Callable[[float], float], x: float, y_max: float) -> float:
    """sup_{0 <= y <= y_max} (x y - func(y)) for convex ``func`` by bounded Brent.

    The endpoints are compared explicitly so a maximiser on the boundary is
    found exactly.
    """

    def neg(y: float) -> float:
        return -(x * y - func(y))

    res = optimize.minimize_scalar(neg, bounds=(0.0, y_max), method="bounded",
                                   options={"xatol": 1e-12 * max(1.0, y_max), "maxiter": 500})
    candidates = [-res.fun, -neg(0.0), -neg(y_max)]
    return max(candidates)


def biconjugate_eval(params: YoungParams, x: float) -> float:
    """(F*)*(x) computed numerically from conjugate_eval."""
    x = abs(float(x))
    if x <= params.x0:
        y_max = y_threshold(params)
    else:
        # the maximiser is F'(x) = G'(x); leave head room around it
        t = math.log(x)
        y_max = 2.0 * math.exp(_slope_log(params, t)) + 1.0
    return legendre_transform(lambda y: conjugate_eval(params, y), x, y_max)


def inverse_conjugate(params: YoungParams, value: float) -> float:
    """(F*)^{-1}(value) for value > 0, by monotone inversion in log space."""
    if value <= 0:
        raise ValueError("the inverse conjugate needs a positive argument")
    return math.exp(_inverse_conjugate_log(params, math.log(value)))


def _inverse_conjugate_log(params: YoungParams, log_value: float) -> float:
    """log y solving log F*(y) = log_value."""
    log_edge = math.log(y_threshold(params)) + 1.0 - params.alpha
    if log_value <= log_edge:
        return log_value - (1.0 - params.alpha)
    lo = math.log(y_threshold(params))
    hi = max(lo + 1.0, 2 * lo)
    while log_conjugate_eval(params, math.exp(hi)) < log_value:
        hi = 2 * hi + 1.0
    return optimize.brentq(lambda s: log_conjugate_eval(params, math.exp(s)) - log_value,
                           lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def indicator_tail_norm(params: YoungParams, p_hat: float) -> float:
    """F*-Luxemburg norm of the indicator of an event of probability p_hat.

    Equals 1 / (F*)^{-1}(1 / p_hat); p_hat = 0 gives 0.
    """
    if not 0 <= p_hat <= 1:
        raise ValueError(f"p_hat must lie in [0, 1], got {p_hat}")
    if p_hat == 0:
        return 0.0
    return math.exp(-_inverse_conjugate_log(params, -math.log(p_hat)))


def log_indicator_tail_norm(params: YoungParams, log_p: float) -> float:
    """log of indicator_tail_norm for probabilities given by their logarithm."""
    if log_p > 0:
        raise ValueError("log_p must be <= 0")
    return -_inverse_conjugate_log(params, -log_p)


@dataclass(frozen=True)
class OrliczNormEstimate:
    value: float
    lower: float
    upper: float
    sample_count: int

    def __float__(self) -> float:
        return self.value


def _young_function(params: YoungParams, which: str) -> Callable[[np.ndarray], np.ndarray]:
    if which == "F":
        return lambda v: np.asarray(young_eval(params, v))
    if which in ("F*", "conjugate"):
        return lambda v: np.asarray(conjugate_eval(params, v))
    raise ValueError(f"unknown Young function {which!r}; expected 'F' or 'F*'")


def luxemburg_norm(params: YoungParams, values, weights=None, which: str = "F",
                   rtol: float = 1e-8, max_iter: int = 200) -> OrliczNormEstimate:
    """inf{c > 0 : sum_i w_i Psi(|f_i| / c) <= 1} by geometric bisection on c.

    ``weights`` must be nonnegative and sum to 1; uniform weights are used
    when omitted.  The returned bracket certifies lower < norm <= upper.
    """
    f = np.abs(np.asarray(values, dtype=float)).ravel()
    if weights is None:
        w = np.full(f.size, 1.0 / max(f.size, 1))
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != f.shape:
            raise ValueError("values and weights must have the same length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not math.isclose(float(w.sum()), 1.0, rel_tol=1e-9):
            raise ValueError(f"weights must sum to 1, got {w.sum()}")
    psi = _young_function(params, which)
    keep = (f > 0) & (w > 0)
    f, w = f[keep], w[keep]
    if f.size == 0:
        return OrliczNormEstimate(0.0, 0.0, 0.0, int(keep.size))

    def modular(c: float) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.sum(w * psi(f / c)))

    top = float(f.max())
    hi = top
    while modular(hi) > 1.0:
        hi *= 2.0
    lo = hi / 2.0
    while modular(lo) <= 1.0:
        hi, lo = lo, lo / 2.0
        if lo < 1e-300:
            break
    it = 0
    while hi / lo - 1.0 > rtol and it < max_iter:
        mid = math.sqrt(lo * hi)
        if modular(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
        it += 1
    return OrliczNormEstimate(hi, lo, hi, int(keep.size))


def holder_check(params: YoungParams, f, g, weights=None) -> tuple[float, float]:
    """(lhs, rhs) of  sum w |f g|  <=  2 ||f||_F ||g||_{F*}."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError("f and g must live on the same finite space")
    w = np.full(f.size, 1.0 / f.size) if weights is None else np.asarray(weights, dtype=float)
    lhs = float(np.sum(w * np.abs(f * g)))
    nf = luxemburg_norm(params, f, w, "F").upper
    ng = luxemburg_norm(params, g, w, "F*").upper
    return lhs, 2.0 * nf * ng


@dataclass(frozen=True)
class TailBoundConstants:
    c: float
    M0: float


def tail_bound_constants(params: YoungParams, c_s: float) -> TailBoundConstants:
    """Decay rate c = (4 c_{alpha,q})^{-alpha} and the threshold M0.

    M0 solves c_s exp(c_{alpha,q} (log y_threshold)^{1/alpha} - M0^2 / 4) = 1
    and is clamped at 0 when that equation has no nonnegative root.
    """
    if c_s <= 0:
        raise ValueError(f"c_s must be positive, got {c_s}")
    caq = c_alpha_q(params)
    c = (4.0 * caq) ** (-params.alpha)
    arg = 4.0 * (math.log(c_s) + caq * math.log(y_threshold(params)) ** (1.0 / params.alpha))
    return TailBoundConstants(c, math.sqrt(arg) if arg > 0 else 0.0)


def constants(params: YoungParams) -> dict[str, float]:
    return {
        "alpha": params.alpha,
        "q": params.q,
        "x0": params.x0,
        "g0": params.g0,
        "y_threshold": y_threshold(params),
        "c_alpha_q": c_alpha_q(params),
        "intermediate_c": intermediate_c(params),
        "tail_rate_c": (4.0 * c_alpha_q(params)) ** (-params.alpha),
    }
