"""Ground state of the quintic NLS on the line and the quantities built from it.

The profile Q(x) = 3^{1/4} sech^{1/2}(2x) solves Q'' = Q - Q^5.  Its squared L2
norm is the critical mass threshold, and it saturates the sharp
Gagliardo-Nirenberg-Sobolev inequality ||u||_6^6 <= C ||u||_2^4 ||u'||_2^2.
A shooting solver is kept alongside the closed form purely as an oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .field import (
    Symmetry,
    TorusField,
    dealiased_grid_size,
    grid_to_coeffs,
    kinetic_of,
    lp_power_of,
    mass_of,
    next_pow2,
    symmetrize,
)

Q0 = 3.0**0.25


def q_profile(x):
    """Closed-form ground state, vectorised over ``x``."""
    x = np.asarray(x, dtype=float)
    # sech(2x) = 2 e^{-2|x|} / (1 + e^{-4|x|}) avoids overflow in cosh
    e = np.exp(-2.0 * np.abs(x))
    return Q0 * np.sqrt(2.0 * e / (1.0 + e * e))


def q_derivative(x):
    """Q'(x) = -Q(x) tanh(2x)."""
    x = np.asarray(x, dtype=float)
    return -q_profile(x) * np.tanh(2.0 * x)


@dataclass(frozen=True)
class ShootingTable:
    x: np.ndarray
    q: np.ndarray
    q0: float
    bisections: int


def q_shoot(tol: float = 1e-15, x_end: float = 15.0, max_bisections: int = 200) -> ShootingTable:
    """Solve Q'' = Q - Q^5, Q'(0) = 0 by bisection on the initial height.

    A trial height that is too large makes the orbit cross zero; one that is
    too small turns back (Q' > 0) before decaying.  Bisection between the two
    behaviours converges to the homoclinic orbit.  The returned table covers
    [0, x_end] up to the point where the best trial orbit leaves the
    separatrix, which is past x = 10 for the default tolerance.
    """

    def rhs(_x, y):
        return [y[1], y[0] - y[0] ** 5]

    def crosses_zero(_x, y):
        return y[0]

    crosses_zero.terminal = True
    crosses_zero.direction = -1

    def turns_back(_x, y):
        return y[1]

    turns_back.terminal = True
    turns_back.direction = 1

    def classify(a: float) -> tuple[int, object]:
        sol = integrate.solve_ivp(
            rhs, (0.0, x_end), [a, 0.0], method="DOP853", rtol=1e-13, atol=1e-15,
            events=(crosses_zero, turns_back), dense_output=True,
        )
        if sol.t_events[0].size:
            return 1, sol
        if sol.t_events[1].size and sol.t_events[1][0] > 1e-9:
            return -1, sol
        return 0, sol

    lo, hi = 1.1, 1.6
    if classify(lo)[0] != -1 or classify(hi)[0] != 1:
        raise RuntimeError("shooting bracket [1.1, 1.6] does not straddle the ground state")
    count = 0
    while hi - lo > tol * hi and count < max_bisections:
        mid = 0.5 * (lo + hi)
        kind, _ = classify(mid)
        if kind == 0:
            lo = hi = mid
            break
        if kind > 0:
            hi = mid
        else:
            lo = mid
        count += 1
    q0 = 0.5 * (lo + hi)
    # the converged orbit is followed until it peels off the separatrix
    _, sol = classify(q0)
    xs = np.linspace(0.0, sol.t[-1], 4001)
    return ShootingTable(xs, sol.sol(xs)[0], q0, count)


@dataclass(frozen=True)
class SolitonConstants:
    mass: float
    l6_power: float
    grad_sq: float

    @property
    def c_gns(self) -> float:
        """Sharp constant C_GNS(6) = ||Q||_6^6 / (||Q||_2^4 ||Q'||_2^2)."""
        return self.l6_power / (self.mass**2 * self.grad_sq)

    @property
    def l6_identity_residual(self) -> float:
        """Relative residual of ||Q||_6^6 = 3 ||Q'||_2^2."""
        return abs(self.l6_power / (3.0 * self.grad_sq) - 1.0)


def _line_integral(f) -> float:
    val, _ = integrate.quad(f, 0.0, np.inf, epsabs=1e-15, epsrel=1e-13, limit=400)
    return 2.0 * val


@lru_cache(maxsize=1)
def soliton_constants() -> SolitonConstants:
    """Norms of Q obtained by adaptive quadrature of the closed form."""
    return SolitonConstants(
        mass=_line_integral(lambda x: float(q_profile(x)) ** 2),
        l6_power=_line_integral(lambda x: float(q_profile(x)) ** 6),
        grad_sq=_line_integral(lambda x: float(q_derivative(x)) ** 2),
    )


def mass_threshold() -> float:
    """||Q||_{L^2(R)}^2, equal to sqrt(3) pi / 2."""
    return soliton_constants().mass


def c_gns() -> float:
    return soliton_constants().c_gns


def l_r_power(r: float) -> float:
    """||Q||_{L^r(R)}^r."""
    if r <= 0:
        raise ValueError("r must be positive")
    return _line_integral(lambda x: float(q_profile(x)) ** r)


def constants_report() -> dict[str, float]:
    sc = soliton_constants()
    return {
        "mass_threshold": sc.mass,
        "c_gns_6": sc.c_gns,
        "q0": float(q_profile(0.0)),
        "l6_identity_residual": sc.l6_identity_residual,
    }


# ---------------------------------------------------------------------------
# GNS deficit and the S_gamma test
# ---------------------------------------------------------------------------


def _project_low_coeffs(coeffs: np.ndarray, k: int) -> np.ndarray:
    N = (coeffs.shape[-1] - 1) // 2
    out = np.array(coeffs, dtype=complex)
    out[..., np.abs(np.arange(-N, N + 1)) > 2**k] = 0.0
    return out


def gns_deficit(field: TorusField, k: int) -> float:
    """C_GNS minus the GNS quotient of the dyadic projection P_{<=k} u.

    The quotient is ||P_{<=k} u_{!=0}||_6^6 / (||d/dx P_{<=k} u||_2^2 ||Q||_2^4).
    A vanishing denominator gives +inf.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    c = _project_low_coeffs(field.coeffs, k)
    grad_sq = 2.0 * float(kinetic_of(c))
    if grad_sq == 0.0:
        return math.inf
    c[field.N] = 0.0
    l6 = float(lp_power_of(c, 6))
    return c_gns() - l6 / (grad_sq * mass_threshold() ** 2)


def default_k_max(N: int) -> int:
    return max(1, math.ceil(math.log2(max(N, 1))))


def s_gamma_member(field: TorusField, gamma: float, k_max: int | None = None) -> bool:
    """Mass below threshold and deficit at least gamma on every scale 1..k_max."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if float(mass_of(field.coeffs)) > mass_threshold():
        return False
    k_max = default_k_max(field.N) if k_max is None else k_max
    return all(gns_deficit(field, k) >= gamma for k in range(1, k_max + 1))


# ---------------------------------------------------------------------------
# cutoff and scaled solitons on the torus
# ---------------------------------------------------------------------------


def _smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, built from e^{-1/t}."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def bump(x):
    """Cutoff equal to 1 on |x| <= 1/8 and supported in |x| <= 1/4."""
    x = np.abs(np.asarray(x, dtype=float))
    return _smooth_step((0.25 - x) / 0.125)


def min_modes_for(delta: float) -> int:
    return math.ceil(8.0 / delta)


@dataclass(frozen=True)
class ScaledCutoffSoliton:
    """e^{i theta} (1 - eps) chi(x - x0) delta^{-1/2} Q((x - x0)/delta) on the torus."""

    delta: float
    x0: float = 0.0
    theta: float = 0.0
    epsilon: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.delta < 0.25:
            raise ValueError(f"delta must lie in (0, 1/4), got {self.delta}")
        if not 0 <= self.epsilon < 1:
            raise ValueError(f"epsilon must lie in [0, 1), got {self.epsilon}")

    def values(self, x) -> np.ndarray:
        y = (np.asarray(x, dtype=float) - self.x0 + 0.5) % 1.0 - 0.5
        amp = (1.0 - self.epsilon) * bump(y) * q_profile(y / self.delta) / math.sqrt(self.delta)
        return np.exp(1j * self.theta) * amp

    def to_field(self, N: int | None = None) -> TorusField:
        """Fourier truncation to |n| <= N of the profile sampled on a fine grid."""
        need = min_modes_for(self.delta)
        N = need if N is None else N
        if N < need:
            raise ValueError(
                f"N={N} is too small to resolve delta={self.delta}; use N >= {need}"
            )
        G = next_pow2(4 * (2 * N + 1))
        x = np.arange(G) / G
        coeffs = grid_to_coeffs(self.values(x), N)
        if abs(math.sin(self.theta)) < 1e-15:
            # a real phase gives a real-valued profile
            return TorusField(symmetrize(coeffs), Symmetry.REAL)
        return TorusField(coeffs, Symmetry.COMPLEX)


def scaled_cutoff_soliton(params: ScaledCutoffSoliton, N: int | None = None) -> TorusField:
    return params.to_field(N)


@dataclass(frozen=True)
class QMCheck:
    computed: float
    predicted: float

    @property
    def ratio(self) -> float:
        return self.computed / self.predicted


def qm_estimates_check(delta: float, epsilon: float, r: float | str, N: int | None = None) -> QMCheck:
    """Compare norms of (1-eps) Q^chi_delta with their leading-order predictions.

    For numeric r the prediction is (1-eps)^r ||Q||_r^r delta^{(2-r)/2}.  For
    r = "grad" the second field is the upper bound
    (1-eps)^2 (1+eps) ||Q'||_2^2 delta^{-2} on ||d/dx Q~||_2^2.
    """
    u = ScaledCutoffSoliton(delta, epsilon=epsilon).to_field(N)
    if r == "grad":
        computed = 2.0 * float(kinetic_of(u.coeffs))
        bound = (1 - epsilon) ** 2 * (1 + epsilon) * soliton_constants().grad_sq / delta**2
        return QMCheck(computed, bound)
    r = float(r)
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    if r == 2:
        computed = float(mass_of(u.coeffs))
    else:
        G = max(dealiased_grid_size(u.N, r), next_pow2(int(r) * u.N + 2))
        computed = float(lp_power_of(u.coeffs, r, G))
    predicted = (1 - epsilon) ** r * l_r_power(r) * delta ** ((2 - r) / 2)
    return QMCheck(computed, predicted)


def density_blowup_exponent(p: float, epsilon: float) -> float:
    """Coefficient of delta^{-2} in the lower bound for E_mu[(drho/dmu)^p].

    Equals (1/2) ||Q'||^2 (p (1-eps)^6 - (1-eps)^2 (1+eps)).  A positive value
    means the integral diverges as delta -> 0.  p = 1 is accepted as the
    boundary case.
    """
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if not 0 <= epsilon < 1:
        raise ValueError(f"epsilon must lie in [0, 1), got {epsilon}")
    factor = p * (1 - epsilon) ** 6 - (1 - epsilon) ** 2 * (1 + epsilon)
    return 0.5 * soliton_constants().grad_sq * factor


def small_ball_probability(epsilon: float, N: int, count: int, seed: int = 0,
                           covariance: str = "h1") -> tuple[float, float]:
    """Monte Carlo estimate of mu(||v||_2 <= (eps/2) ||Q||_2) with its standard error."""
    from .measures import GaussianLaw, gaussian_coefficients

    if count < 1:
        raise ValueError("count must be >= 1")
    law = GaussianLaw(N, covariance=covariance)
    radius_sq = (0.5 * epsilon) ** 2 * mass_threshold()
    hits = 0
    for start in range(0, count, 10_000):
        block = gaussian_coefficients(law, seed, start, min(10_000, count - start))
        hits += int(np.count_nonzero(mass_of(block) <= radius_sq))
    p = hits / count
    return p, math.sqrt(max(p * (1 - p), 0.0) / count)
