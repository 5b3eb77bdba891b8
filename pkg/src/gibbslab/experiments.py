"""Statistical studies built on the sampling, dynamics and Orlicz modules.

Each study returns a report dataclass with ``to_dict`` (JSON-ready) and
``tables`` (CSV-ready rows) so the command line can persist it unchanged.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .dynamics import EvolutionSpec, evolve_ensemble
from .field import NormSpec, hamiltonian_of, lp_power_of, mass_of
from .measures import (
    GaussianLaw,
    GibbsSpec,
    annealed_ensemble,
    ess_from_log_weights,
    gaussian_coefficients,
    importance_ensemble,
    normalized_weights,
    potential_of,
    rng_stream,
    run_chains,
    smc_ensemble,
)
from .orlicz import YoungParams, indicator_tail_norm, luxemburg_norm

MIN_ESS = 100.0
LANE_BOOTSTRAP = 7


# ---------------------------------------------------------------------------
# observables and weighted statistics
# ---------------------------------------------------------------------------


def observable(name: str) -> Callable[[np.ndarray], np.ndarray]:
    """Batch functional by name.

    Recognised names: ``mass``, ``potential`` ((1/6) int |u|^6), ``l6_6``
    (int |u|^6), ``hamiltonian``, ``abs_c_<n>`` (|c_n|) and any norm label
    understood by :meth:`NormSpec.parse` (``h_0.25``, ``l_6``, ``fl_0.5_4``).
    """
    if name == "mass":
        return mass_of
    if name == "potential":
        return potential_of
    if name == "l6_6":
        return lambda c: lp_power_of(c, 6)
    if name == "hamiltonian":
        return lambda c: hamiltonian_of(c, "nls")
    if name.startswith("abs_c_"):
        n = int(name[len("abs_c_"):])

        def mode_abs(c: np.ndarray) -> np.ndarray:
            N = (c.shape[-1] - 1) // 2
            if abs(n) > N:
                raise ValueError(f"mode {n} outside |n| <= {N}")
            return np.abs(c[..., n + N])

        return mode_abs
    return NormSpec.parse(name).of_coeffs


def weighted_quantile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """Inverse of the weighted empirical CDF at level q."""
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    i = int(np.searchsorted(cum, q, side="left"))
    return float(values[order][min(i, values.size - 1)])


def _bootstrap(values: np.ndarray, weights: np.ndarray, q: float, B: int,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Bootstrap replicates of the weighted mean and weighted q-quantile."""
    m = values.size
    order = np.argsort(values, kind="stable")
    sv, sw = values[order], weights[order]
    means = np.empty(B)
    quants = np.empty(B)
    for b in range(B):
        counts = np.bincount(rng.integers(0, m, m), minlength=m)[order]
        w = sw * counts
        tot = w.sum()
        means[b] = np.dot(w, sv) / tot
        cum = np.cumsum(w)
        quants[b] = sv[min(int(np.searchsorted(cum, q * tot, side="left")), m - 1)]
    return means, quants


@dataclass
class ObservableComparison:
    name: str
    pre_mean: float
    post_mean: float
    pre_quantile: float
    post_quantile: float
    pre_mean_ci: tuple[float, float]
    post_mean_ci: tuple[float, float]
    pre_quantile_ci: tuple[float, float]
    post_quantile_ci: tuple[float, float]
    quantile_level: float

    @staticmethod
    def _overlap(a: tuple[float, float], b: tuple[float, float]) -> bool:
        return a[0] <= b[1] and b[0] <= a[1]

    @property
    def mean_overlap(self) -> bool:
        return self._overlap(self.pre_mean_ci, self.post_mean_ci)

    @property
    def quantile_overlap(self) -> bool:
        return self._overlap(self.pre_quantile_ci, self.post_quantile_ci)

    @property
    def passed(self) -> bool:
        return self.mean_overlap and self.quantile_overlap

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(mean_overlap=self.mean_overlap, quantile_overlap=self.quantile_overlap,
                 passed=self.passed)
        return d


def weighted_comparison(name: str, pre: np.ndarray, post: np.ndarray, weights: np.ndarray,
                        seed: int, B: int = 1000, level: float = 0.99,
                        quantile: float = 0.9) -> ObservableComparison:
    """Bootstrap percentile intervals of the weighted mean and quantile, before and after."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    lo, hi = 50.0 * (1 - level), 100.0 - 50.0 * (1 - level)
    out = {}
    for tag, vals, lane in (("pre", pre, 0), ("post", post, 1)):
        vals = np.asarray(vals, dtype=float)
        rng = rng_stream(seed, lane, LANE_BOOTSTRAP)
        bm, bq = _bootstrap(vals, w, quantile, B, rng)
        out[tag] = (
            float(np.dot(w, vals)),
            weighted_quantile(vals, w, quantile),
            tuple(float(x) for x in np.percentile(bm, [lo, hi])),
            tuple(float(x) for x in np.percentile(bq, [lo, hi])),
        )
    return ObservableComparison(
        name, out["pre"][0], out["post"][0], out["pre"][1], out["post"][1],
        out["pre"][2], out["post"][2], out["pre"][3], out["post"][3], quantile,
    )


# ---------------------------------------------------------------------------
# invariance
# ---------------------------------------------------------------------------


@dataclass
class InvarianceReport:
    observables: list[ObservableComparison]
    ess: float
    ensemble_size: int
    t_star: float
    sampler: str
    seed: int
    failed_trajectories: int = 0
    diagnostics: dict = dc_field(default_factory=dict)
    min_ess: float = MIN_ESS

    @property
    def verdict(self) -> str:
        if self.ess < self.min_ess:
            return "inconclusive"
        return "pass" if all(o.passed for o in self.observables) else "fail"

    def verdict_for(self, name: str) -> str:
        if self.ess < self.min_ess:
            return "inconclusive"
        for o in self.observables:
            if o.name == name:
                return "pass" if o.passed else "fail"
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "note": ("invariance is tested for the Galerkin-truncated flow and the matching "
                     "truncated Gibbs measure, where it holds exactly"),
            "ess": self.ess,
            "ensemble_size": self.ensemble_size,
            "t_star": self.t_star,
            "sampler": self.sampler,
            "seed": self.seed,
            "failed_trajectories": self.failed_trajectories,
            "diagnostics": self.diagnostics,
            "observables": [o.to_dict() for o in self.observables],
        }

    def tables(self) -> dict[str, list[list]]:
        rows = [["observable", "stat", "pre", "post", "pre_lo", "pre_hi", "post_lo", "post_hi", "overlap"]]
        for o in self.observables:
            rows.append([o.name, "mean", o.pre_mean, o.post_mean, *o.pre_mean_ci, *o.post_mean_ci,
                         o.mean_overlap])
            rows.append([o.name, f"q{o.quantile_level:g}", o.pre_quantile, o.post_quantile,
                         *o.pre_quantile_ci, *o.post_quantile_ci, o.quantile_overlap])
        return {"invariance": rows}


def draw_ensemble(spec: GibbsSpec, m: int, seed: int, sampler: str = "smc", **options):
    if sampler == "smc":
        return smc_ensemble(spec, seed, m, **options)
    if sampler == "annealed":
        return annealed_ensemble(spec, seed, m, **options)
    if sampler == "importance":
        return importance_ensemble(spec, seed, m)
    raise ValueError(f"unknown sampler {sampler!r}; expected 'smc', 'annealed' or 'importance'")


def compare_ensembles(pre_coeffs: np.ndarray, post_coeffs: np.ndarray, log_weights: np.ndarray,
                      observables: Sequence[str], seed: int, B: int = 1000,
                      alive: np.ndarray | None = None) -> tuple[list[ObservableComparison], float]:
    """Compare each observable before and after; returns comparisons and ESS."""
    lw = np.array(log_weights, dtype=float)
    if alive is not None:
        lw[~alive] = -np.inf
    keep = np.isfinite(lw)
    w = normalized_weights(lw[keep])
    ess = ess_from_log_weights(lw[keep])
    comps = [
        weighted_comparison(name, observable(name)(pre_coeffs[keep]),
                            observable(name)(post_coeffs[keep]), w, seed + 17 * i, B)
        for i, name in enumerate(observables)
    ]
    return comps, ess


def invariance_test(spec: GibbsSpec, evolution: EvolutionSpec,
                    observables: Sequence[str] = ("h_0.25", "l6_6"), m: int = 20_000,
                    seed: int = 0, sampler: str = "smc", bootstrap: int = 1000,
                    sampler_options: dict | None = None) -> InvarianceReport:
    """Draw a weighted rho_N ensemble, evolve it to T, compare statistics.

    Members with zero weight (cutoff violated) are not evolved.  Members whose
    integration fails are dropped from the post-flow statistics and counted.
    """
    if evolution.N != spec.N:
        raise ValueError(f"evolution has N={evolution.N} but the measure has N={spec.N}")
    ens = draw_ensemble(spec, m, seed, sampler, **(sampler_options or {}))
    finite = np.isfinite(ens.log_weights)
    pre = ens.coeffs[finite]
    lw = ens.log_weights[finite]
    post, alive = evolve_ensemble(pre, evolution)
    comps, ess = compare_ensembles(pre, post, lw, observables, seed, bootstrap, alive)
    return InvarianceReport(comps, ess, m, evolution.T * evolution.direction, sampler, seed,
                            int((~alive).sum()), dict(ens.diagnostics))


# ---------------------------------------------------------------------------
# tails
# ---------------------------------------------------------------------------


@dataclass
class LinearFit:
    slope: float
    intercept: float
    r2: float
    residual_norm: float
    points: int

    @classmethod
    def of(cls, x: np.ndarray, y: np.ndarray) -> "LinearFit":
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size < 2:
            return cls(math.nan, math.nan, math.nan, math.nan, int(x.size))
        if np.ptp(x) == 0:
            return cls(0.0, float(y.mean()), math.nan, float(np.linalg.norm(y - y.mean())), int(x.size))
        res = stats.linregress(x, y)
        resid = y - (res.slope * x + res.intercept)
        r2 = float(res.rvalue**2) if np.ptp(y) > 0 else 1.0
        return cls(float(res.slope), float(res.intercept), r2, float(np.linalg.norm(resid)), int(x.size))


def sample_norms(law: GaussianLaw, norm: NormSpec, count: int, seed: int,
                 chunk: int = 10_000) -> np.ndarray:
    out = np.empty(count)
    for start in range(0, count, chunk):
        k = min(chunk, count - start)
        out[start : start + k] = norm.of_coeffs(gaussian_coefficients(law, seed, start, k))
    return out


def tail_probabilities(values: np.ndarray, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Empirical P(value >= M) and hit counts on the grid M."""
    sv = np.sort(values)
    hits = sv.size - np.searchsorted(sv, M, side="left")
    return hits / sv.size, hits


def default_grid(values: np.ndarray, points: int = 40, min_hits: int = 10) -> np.ndarray:
    top = float(np.sort(values)[-min_hits])
    return np.linspace(0.0, top, points)


@dataclass
class GaussianTailReport:
    M: np.ndarray
    p_hat: np.ndarray
    hits: np.ndarray
    estimable: np.ndarray
    fit: LinearFit
    s: float
    N: int
    count: int
    seed: int

    def to_dict(self) -> dict:
        return {"s": self.s, "N": self.N, "count": self.count, "seed": self.seed,
                "fit": asdict(self.fit), "estimable_points": int(self.estimable.sum())}

    def tables(self) -> dict[str, list[list]]:
        rows = [["M", "p_hat", "hits", "estimable"]]
        rows += [[float(a), float(b), int(c), bool(d)]
                 for a, b, c, d in zip(self.M, self.p_hat, self.hits, self.estimable)]
        return {"gaussian_tail": rows}


def _estimable(p_hat: np.ndarray, hits: np.ndarray, M: np.ndarray, min_hits: int) -> np.ndarray:
    return (p_hat <= 0.5) & (hits >= min_hits) & (M > 0)


def gaussian_tail_study(law: GaussianLaw, s: float, M_grid: Sequence[float] | None = None,
                        count: int = 100_000, seed: int = 0, min_hits: int = 10) -> GaussianTailReport:
    """Empirical tail of ||u||_{H^s} under mu_N and a fit of -log p_hat against M^2.

    The fit uses the estimable range: p_hat <= 1/2 with at least ``min_hits``
    exceedances; grid points without hits never enter it.
    """
    if s >= 0.5:
        raise ValueError(f"s must be < 1/2, got {s}")
    vals = sample_norms(law, NormSpec("sobolev", s=s), count, seed)
    M = default_grid(vals, min_hits=min_hits) if M_grid is None else np.asarray(M_grid, dtype=float)
    p_hat, hits = tail_probabilities(vals, M)
    est = _estimable(p_hat, hits, M, min_hits)
    fit = LinearFit.of(M[est] ** 2, -np.log(p_hat[est]))
    return GaussianTailReport(M, p_hat, hits, est, fit, s, law.N, count, seed)


@dataclass
class TailLedger:
    M: np.ndarray
    p_hat: np.ndarray
    hits: np.ndarray
    L: np.ndarray
    estimable: np.ndarray
    fit: LinearFit
    params: YoungParams
    s: float
    N: int
    count: int
    seed: int

    def indicator_model(self, M) -> np.ndarray:
        """Fitted L(M) = exp(-(slope M^{2 alpha} + intercept)), capped at L(0)."""
        M = np.asarray(M, dtype=float)
        log_l = -(self.fit.slope * M ** (2 * self.params.alpha) + self.fit.intercept)
        return np.minimum(np.exp(log_l), self.params.x0)

    def to_dict(self) -> dict:
        return {"alpha": self.params.alpha, "q": self.params.q, "s": self.s, "N": self.N,
                "count": self.count, "seed": self.seed, "fit": asdict(self.fit),
                "estimable_points": int(self.estimable.sum())}

    def tables(self) -> dict[str, list[list]]:
        rows = [["M", "p_hat", "hits", "L", "estimable"]]
        rows += [[float(a), float(b), int(c), float(d), bool(e)]
                 for a, b, c, d, e in zip(self.M, self.p_hat, self.hits, self.L, self.estimable)]
        return {"orlicz_tail": rows}


def orlicz_tail_study(law: GaussianLaw, params: YoungParams, s: float,
                      M_grid: Sequence[float] | None = None, count: int = 100_000,
                      seed: int = 0, min_hits: int = 10) -> TailLedger:
    """L(M) = F*-norm of 1{||u||_{H^s} >= M} and a fit of -log L against M^{2 alpha}."""
    if s >= 0.5:
        raise ValueError(f"s must be < 1/2, got {s}")
    vals = sample_norms(law, NormSpec("sobolev", s=s), count, seed)
    M = default_grid(vals, min_hits=min_hits) if M_grid is None else np.asarray(M_grid, dtype=float)
    p_hat, hits = tail_probabilities(vals, M)
    L = np.array([indicator_tail_norm(params, float(p)) for p in p_hat])
    est = _estimable(p_hat, hits, M, min_hits)
    fit = LinearFit.of(M[est] ** (2 * params.alpha), -np.log(L[est]))
    return TailLedger(M, p_hat, hits, L, est, fit, params, s, law.N, count, seed)


# ---------------------------------------------------------------------------
# density integrability
# ---------------------------------------------------------------------------


def _potential_and_mass(law: GaussianLaw, start: int, count: int, seed: int,
                        chunk: int = 20_000) -> tuple[np.ndarray, np.ndarray]:
    V = np.empty(count)
    M = np.empty(count)
    for off in range(0, count, chunk):
        k = min(chunk, count - off)
        c = gaussian_coefficients(law, seed, start + off, k)
        V[off : off + k] = potential_of(c)
        M[off : off + k] = mass_of(c)
    return V, M


@dataclass
class IntegrabilityResult:
    params: YoungParams
    estimate_m: float
    estimate_2m: float
    max_weight_fraction: float
    density_norm: float
    m: int

    @property
    def relative_difference(self) -> float:
        return abs(self.estimate_m - self.estimate_2m) / abs(self.estimate_2m)

    @property
    def verdict(self) -> str:
        if self.max_weight_fraction > 0.5:
            return "inconclusive"
        return "stable" if self.relative_difference <= 0.2 else "unstable"

    def to_dict(self) -> dict:
        return {"alpha": self.params.alpha, "q": self.params.q, "m": self.m,
                "estimate_m": self.estimate_m, "estimate_2m": self.estimate_2m,
                "relative_difference": self.relative_difference,
                "max_weight_fraction": self.max_weight_fraction,
                "density_norm": self.density_norm, "verdict": self.verdict}


@dataclass
class IntegrabilityReport:
    results: list[IntegrabilityResult]
    N: int
    K: float
    seed: int
    acceptance_fraction: float

    def to_dict(self) -> dict:
        return {"N": self.N, "K": self.K, "seed": self.seed,
                "acceptance_fraction": self.acceptance_fraction,
                "results": [r.to_dict() for r in self.results]}

    def tables(self) -> dict[str, list[list]]:
        rows = [["alpha", "q", "estimate_m", "estimate_2m", "relative_difference",
                 "max_weight_fraction", "density_norm", "verdict"]]
        for r in self.results:
            rows.append([r.params.alpha, r.params.q, r.estimate_m, r.estimate_2m,
                         r.relative_difference, r.max_weight_fraction, r.density_norm, r.verdict])
        return {"integrability": rows}


def integrand_log(V: np.ndarray, mass: np.ndarray, K: float, params: YoungParams | None) -> np.ndarray:
    """log of exp((1/6)||u||_6^6 + q ||u||_6^{6 alpha}) 1{M <= K}; params None means q = 0."""
    extra = 0.0 if params is None else params.q * (6.0 * V) ** params.alpha
    return np.where(mass <= K, V + extra, -np.inf)


def _block_mean(logv: np.ndarray) -> tuple[float, float]:
    """Mean of exp(logv) and the largest single-sample share of the sum."""
    finite = np.isfinite(logv)
    if not finite.any():
        return 0.0, 0.0
    top = logv[finite].max()
    w = np.exp(logv[finite] - top)
    return float(np.exp(top) * w.sum() / logv.size), float(w.max() / w.sum())


def density_integrability_study(spec: GibbsSpec, params_list: Sequence[YoungParams],
                                m: int = 100_000, seed: int = 0) -> IntegrabilityReport:
    """Monte Carlo means of the F-integrability integrand on two disjoint blocks.

    Block A uses sample indices [0, m), block B the next 2m indices, so the
    estimates at sizes m and 2m are independent.  The Luxemburg F-norm of the
    estimated density drho/dmu is computed on all 3m samples.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    V, M = _potential_and_mass(spec.base, 0, 3 * m, seed)
    base_log = integrand_log(V, M, spec.K, None)
    finite = np.isfinite(base_log)
    top = base_log[finite].max()
    dens = np.where(finite, np.exp(base_log - top), 0.0)
    dens /= dens.mean()
    results = []
    for params in params_list:
        lg = integrand_log(V, M, spec.K, params)
        est_a, frac_a = _block_mean(lg[:m])
        est_b, frac_b = _block_mean(lg[m:])
        norm = luxemburg_norm(params, dens).value
        results.append(IntegrabilityResult(params, est_a, est_b, max(frac_a, frac_b), norm, m))
    return IntegrabilityReport(results, spec.N, spec.K, seed, float(finite.mean()))


# ---------------------------------------------------------------------------
# Bourgain union bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BourgainInputs:
    M: float
    T: float
    density_norm: float
    indicator_norm: float
    beta: float = 2.0
    tau0: float = 1.0

    def __post_init__(self) -> None:
        for name in ("M", "T", "density_norm", "indicator_norm", "beta", "tau0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def bourgain_bound(inputs: BourgainInputs) -> float:
    """(1 + 2 floor(T / tau(M))) * 2 * density_norm * indicator_norm with tau(M) = tau0 M^-beta."""
    tau = inputs.tau0 * inputs.M ** (-inputs.beta)
    windows = 1 + 2 * math.floor(inputs.T / tau)
    return windows * 2.0 * inputs.density_norm * inputs.indicator_norm


@dataclass
class BourgainRow:
    T: float
    grid_argmin: float
    argmin_at_grid_end: bool
    level_M: float
    target: float


@dataclass
class BourgainReport:
    rows: list[BourgainRow]
    density_norm: float
    tail_fit: LinearFit
    alpha: float
    beta: float
    tau0: float
    target_exponent: float
    level_fit: LinearFit
    curves: dict[float, np.ndarray]
    M_grid: np.ndarray

    @property
    def level_monotone(self) -> bool:
        lv = [r.level_M for r in self.rows]
        return all(b > a for a, b in zip(lv, lv[1:]))

    @property
    def argmin_monotone(self) -> bool:
        am = [r.grid_argmin for r in self.rows]
        return all(b >= a for a, b in zip(am, am[1:]))

    def to_dict(self) -> dict:
        return {
            "density_norm": self.density_norm, "alpha": self.alpha, "beta": self.beta,
            "tau0": self.tau0, "target_exponent": self.target_exponent,
            "tail_fit": asdict(self.tail_fit), "level_fit_vs_log2T": asdict(self.level_fit),
            "level_monotone": self.level_monotone, "argmin_monotone": self.argmin_monotone,
            "rows": [asdict(r) for r in self.rows],
        }

    def tables(self) -> dict[str, list[list]]:
        Ts = [r.T for r in self.rows]
        rows = [["M", *[f"bound_T{t:g}" for t in Ts]]]
        for i, M in enumerate(self.M_grid):
            rows.append([float(M), *[float(self.curves[t][i]) for t in Ts]])
        return {"bourgain_curves": rows}


def bourgain_study(density_norm: float, tail: TailLedger, T_values: Sequence[float] = (1e2, 1e3, 1e4),
                   M_grid: Sequence[float] | None = None, beta: float = 2.0, tau0: float = 1.0,
                   target_exponent: float = 1.0) -> BourgainReport:
    """Evaluate the union bound on an M grid for several horizons T.

    The indicator norm at level M comes from the fitted Orlicz tail model of
    ``tail`` so the bound can be followed beyond the sampled range.  Two
    summaries are reported per T: the literal grid minimiser of the bound, and
    the level M*(T), the smallest grid M past the bound's peak with
    bound <= (2 + T)^(-target_exponent).  The level is what a Borel-Cantelli
    argument over dyadic T needs, and it is the quantity expected to grow like
    log T.
    """
    if M_grid is None:
        if not tail.fit.slope > 0:
            raise ValueError("the tail fit must have a positive slope to extrapolate")
        top = ((600.0 - tail.fit.intercept) / tail.fit.slope) ** (1.0 / (2 * tail.params.alpha))
        M = np.geomspace(0.5, top, 4000)
    else:
        M = np.asarray(M_grid, dtype=float)
    L = tail.indicator_model(M)
    rows = []
    curves = {}
    for T in T_values:
        curve = np.array([bourgain_bound(BourgainInputs(float(m), float(T), density_norm, float(l),
                                                        beta, tau0)) for m, l in zip(M, L)])
        curves[float(T)] = curve
        i_min = int(np.argmin(curve))
        target = (2.0 + T) ** (-target_exponent)
        peak = int(np.argmax(curve))
        below = np.nonzero(curve[peak:] <= target)[0]
        level = float(M[peak + below[0]]) if below.size else math.inf
        rows.append(BourgainRow(float(T), float(M[i_min]), i_min in (0, M.size - 1), level, target))
    finite = [r for r in rows if math.isfinite(r.level_M)]
    level_fit = LinearFit.of(np.log(2.0 + np.array([r.T for r in finite])),
                             np.array([r.level_M for r in finite]))
    return BourgainReport(rows, density_norm, tail.fit, tail.params.alpha, beta, tau0,
                          target_exponent, level_fit, curves, M)


# ---------------------------------------------------------------------------
# growth
# ---------------------------------------------------------------------------


@dataclass
class GrowthRecord:
    times: np.ndarray
    envelopes: dict[float, np.ndarray]
    median: dict[float, np.ndarray]
    fits: dict[float, dict[str, LinearFit]]
    stationarity: list[ObservableComparison]
    stationarity_ess: float
    failed: int
    ensemble_size: int
    seed: int

    def nondecreasing(self) -> bool:
        return all(bool(np.all(np.diff(e, axis=1) >= 0)) for e in self.envelopes.values())

    @property
    def stationarity_verdict(self) -> str:
        if self.stationarity_ess < MIN_ESS:
            return "inconclusive"
        return "pass" if all(o.passed for o in self.stationarity) else "fail"

    def to_dict(self) -> dict:
        fits = {f"{s:g}": {k: asdict(v) for k, v in d.items()} for s, d in self.fits.items()}
        growth = {}
        for s, med in self.median.items():
            i1 = int(np.searchsorted(self.times, 1.0))
            if i1 < med.size:
                growth[f"{s:g}"] = float(med[-1] / med[i1])
        return {
            "ensemble_size": self.ensemble_size, "seed": self.seed, "failed": self.failed,
            "sample_times": int(self.times.size), "fits": fits,
            "median_growth_from_T1": growth,
            "nondecreasing": self.nondecreasing(),
            "stationarity_verdict": self.stationarity_verdict,
            "stationarity_ess": self.stationarity_ess,
            "stationarity": [o.to_dict() for o in self.stationarity],
        }

    def tables(self) -> dict[str, list[list]]:
        ss = sorted(self.median)
        rows = [["T", *[f"median_h_{s:g}" for s in ss]]]
        for i, t in enumerate(self.times):
            rows.append([float(t), *[float(self.median[s][i]) for s in ss]])
        return {"growth_envelope": rows}


GROWTH_MODELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "log": lambda T: np.log(2.0 + T),
    "sqrt_log": lambda T: np.sqrt(np.log(2.0 + T)),
    "sqrt_T": lambda T: np.sqrt(T),
}


def sample_steps(n_steps: int, dt: float, points: int = 60) -> np.ndarray:
    """Step indices spread geometrically over (0, n_steps], always including n_steps."""
    if n_steps == 0:
        return np.zeros(0, dtype=int)
    raw = np.geomspace(1, n_steps, points)
    return np.unique(np.concatenate([np.rint(raw).astype(int), [n_steps]]))


def growth_study(spec: GibbsSpec, evolution: EvolutionSpec, s_list: Sequence[float] = (0.25,),
                 ensemble_size: int = 100, seed: int = 0, burn_in: int = 2000,
                 beta_pcn: float = 0.2, points: int = 60, bootstrap: int = 1000) -> GrowthRecord:
    """Running maxima of ||u(t)||_{H^s} along Gibbs-distributed trajectories.

    Initial data are the end states of independent pCN chains after
    ``burn_in`` steps, so every trajectory carries equal weight.  The running
    maximum is updated after every time step and stored at geometrically
    spread sample times.  The median envelope is fitted against log(2+T),
    sqrt(log(2+T)) and T^(1/2); the t = 0 and t = T ensembles are compared
    with the invariance statistics.
    """
    if evolution.N != spec.N:
        raise ValueError(f"evolution has N={evolution.N} but the measure has N={spec.N}")
    chains = run_chains(spec, seed, ensemble_size, 0, burn_in=burn_in, beta=beta_pcn)
    start = chains.final
    norms = [NormSpec("sobolev", s=s) for s in s_list]
    hs = evolution.step_sizes()
    wanted = sample_steps(len(hs), evolution.dt, points)
    times = [0.0]
    running = {s: ns.of_coeffs(start) for s, ns in zip(s_list, norms)}
    env = {s: [running[s].copy()] for s in s_list}
    wanted_set = set(int(k) for k in wanted)

    def on_step(k: int, t: float, c: np.ndarray, alive: np.ndarray) -> None:
        for s, ns in zip(s_list, norms):
            running[s] = np.where(alive, np.maximum(running[s], ns.of_coeffs(c)), running[s])
        if k in wanted_set:
            times.append(abs(t))
            for s in s_list:
                env[s].append(running[s].copy())

    final, alive = evolve_ensemble(start, evolution, on_step)
    T_arr = np.array(times)
    envelopes = {s: np.array(env[s]).T[alive] for s in s_list}
    median = {s: np.median(envelopes[s], axis=0) for s in s_list}
    fits = {}
    pos = T_arr > 0
    for s in s_list:
        fits[s] = {name: LinearFit.of(f(T_arr[pos]), median[s][pos]) for name, f in GROWTH_MODELS.items()}
    obs = [f"h_{s:g}" for s in s_list] + ["l6_6"]
    lw = np.zeros(start.shape[0])
    comps, ess = compare_ensembles(start, final, lw, obs, seed, bootstrap, alive)
    return GrowthRecord(T_arr, envelopes, median, fits, comps, ess, int((~alive).sum()),
                        ensemble_size, seed)
