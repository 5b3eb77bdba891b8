"""Base Gaussian measure, truncated focusing Gibbs measure and their samplers.

Random numbers come from a counter-based Philox generator keyed by
(seed, index): sample ``index`` of a run with ``seed`` always sees the same
stream, whatever else is drawn and in whatever order.  An extra lane word in
the Philox counter separates independent uses of one key (initial draws,
MCMC proposals, accept/reject uniforms).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np

from .field import (
    Symmetry,
    TorusField,
    dealiased_grid_size,
    coeffs_to_grid,
    mass_of,
    mode_numbers,
    read_gfl1,
    write_gfl1,
)
from .soliton import mass_threshold

LANE_DRAW = 0
LANE_PROPOSAL = 1
LANE_ACCEPT = 2
LANE_ANNEAL = 3

_U64 = (1 << 64) - 1


class CutoffError(ValueError):
    """Every draw violated the mass cutoff."""

    def __init__(self, message: str, acceptance_fraction: float):
        super().__init__(message)
        self.acceptance_fraction = acceptance_fraction


def rng_stream(seed: int, index: int, lane: int = 0) -> np.random.Generator:
    """Independent generator for (seed, index, lane).

    The mix is the Philox-4x64 key (seed, index) with ``lane`` in the top
    counter word, so streams never overlap for fewer than 2^192 draws.
    """
    key = np.array([int(seed) & _U64, int(index) & _U64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(lane) & _U64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class GaussianLaw:
    """Law of the random series sum_n sigma_n g_n e^{2 pi i n x}.

    ``covariance`` selects the variance profile sigma_n^2 = E|c_n|^2:

    * ``"bracket"``: sigma_n^2 = <n>^{-2}, g_n standard complex Gaussians.
    * ``"h1"``: the Gaussian with density exp(-||u||_{H^1}^2 / 2) where
      ||u||_{H^1}^2 = sum (1 + 4 pi^2 n^2) |c_n|^2, i.e. the measure that
      combines with exp((1/6) int |u|^6) into exp(-H - M/2).  Complex fields
      get E|c_n|^2 = 2/(1 + 4 pi^2 n^2); real fields get 1/(1 + 4 pi^2 n^2)
      on n != 0 and a real N(0, 1) mean.

    In the real-symmetric case c_{-n} = conj(c_n) and c_0 is real with
    variance sigma_0^2.
    """

    N: int
    symmetry: Symmetry = Symmetry.COMPLEX
    covariance: str = "h1"

    def __post_init__(self) -> None:
        if self.N < 0:
            raise ValueError(f"N must be nonnegative, got {self.N}")
        object.__setattr__(self, "symmetry", Symmetry.parse(self.symmetry))
        if self.covariance not in ("bracket", "h1"):
            raise ValueError(f"unknown covariance {self.covariance!r}; expected 'bracket' or 'h1'")

    @property
    def variances(self) -> np.ndarray:
        """E|c_n|^2 for n = -N..N."""
        n = mode_numbers(self.N).astype(float)
        if self.covariance == "bracket":
            return 1.0 / (1.0 + n * n)
        lam = 1.0 + (2.0 * np.pi * n) ** 2
        if self.symmetry is Symmetry.COMPLEX:
            return 2.0 / lam
        return 1.0 / lam

    @property
    def expected_mass(self) -> float:
        return float(np.sum(self.variances))


def draw_gaussian_row(law: GaussianLaw, rng: np.random.Generator) -> np.ndarray:
    """One coefficient vector with the law's distribution."""
    N = law.N
    sd = np.sqrt(law.variances)
    if law.symmetry is Symmetry.COMPLEX:
        z = rng.standard_normal(2 * (2 * N + 1)).view(complex) / math.sqrt(2.0)
        return sd * z
    c = np.empty(2 * N + 1, dtype=complex)
    g0 = rng.standard_normal()
    pos = rng.standard_normal(2 * N).view(complex) / math.sqrt(2.0) if N else np.empty(0, complex)
    c[N] = g0
    c[N + 1 :] = pos
    c[:N] = np.conj(pos[::-1])
    return sd * c


def gaussian_coefficients(law: GaussianLaw, seed: int, start: int, count: int,
                          lane: int = LANE_DRAW) -> np.ndarray:
    """Coefficient rows for sample indices start..start+count-1."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    out = np.empty((count, 2 * law.N + 1), dtype=complex)
    for i in range(count):
        out[i] = draw_gaussian_row(law, rng_stream(seed, start + i, lane))
    return out


def gaussian_block(law: GaussianLaw, rng: np.random.Generator, count: int) -> np.ndarray:
    """``count`` rows drawn from a single generator (used for MCMC noise)."""
    N = law.N
    sd = np.sqrt(law.variances)
    z = rng.standard_normal((count, 2 * (2 * N + 1))).view(complex) / math.sqrt(2.0)
    if law.symmetry is Symmetry.COMPLEX:
        return sd * z
    c = np.empty((count, 2 * N + 1), dtype=complex)
    c[:, N] = z[:, N].real * math.sqrt(2.0)
    c[:, N + 1 :] = z[:, N + 1 :]
    c[:, :N] = np.conj(z[:, N + 1 :][:, ::-1])
    return sd * c


def sample_gaussian(law: GaussianLaw, seed: int, count: int) -> list[TorusField]:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rows = gaussian_coefficients(law, seed, 0, count)
    return [TorusField(r, law.symmetry) for r in rows]


@dataclass(frozen=True)
class GibbsSpec:
    """Truncated focusing Gibbs measure exp((1/6) int |u|^6) 1{M(u) <= K} dmu_N."""

    base: GaussianLaw
    cutoff: float | None = None

    def __post_init__(self) -> None:
        K = mass_threshold() if self.cutoff is None else float(self.cutoff)
        if not K > 0:
            raise ValueError(f"cutoff K must be positive, got {K}")
        object.__setattr__(self, "cutoff", K)

    @property
    def N(self) -> int:
        return self.base.N

    @property
    def K(self) -> float:
        return float(self.cutoff)


def potential_of(coeffs: np.ndarray) -> np.ndarray:
    """(1/6) int |u|^6 for a batch of coefficient rows, dealiased."""
    N = (coeffs.shape[-1] - 1) // 2
    v = coeffs_to_grid(coeffs, dealiased_grid_size(N))
    a = np.abs(v) ** 2
    return np.mean(a * a * a, axis=-1) / 6.0


def log_weights_of(coeffs: np.ndarray, K: float) -> np.ndarray:
    lw = potential_of(coeffs)
    return np.where(mass_of(coeffs) <= K, lw, -np.inf)


def gibbs_log_weight(field: TorusField, spec: GibbsSpec) -> float:
    """(1/6) int |u|^6 when mass(u) <= K, else -inf (the cutoff is sharp)."""
    return float(log_weights_of(field.coeffs[None, :], spec.K)[0])


def normalized_weights(log_weights: np.ndarray) -> np.ndarray:
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not finite.any():
        raise ValueError("no finite log-weight")
    w = np.zeros_like(lw)
    w[finite] = np.exp(lw[finite] - lw[finite].max())
    return w / w.sum()


def ess_from_log_weights(log_weights: np.ndarray) -> float:
    """(sum w)^2 / sum w^2, computed on max-shifted weights."""
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not finite.any():
        raise ValueError("no finite log-weight")
    w = np.exp(lw[finite] - lw[finite].max())
    return float(w.sum() ** 2 / np.sum(w * w))


@dataclass
class WeightedEnsemble:
    """Coefficient rows with self-normalised importance log-weights."""

    coeffs: np.ndarray
    log_weights: np.ndarray
    symmetry: Symmetry = Symmetry.COMPLEX
    seed: int = 0
    method: str = "importance"
    diagnostics: dict = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        self.coeffs = np.atleast_2d(np.asarray(self.coeffs, dtype=complex))
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        if self.coeffs.shape[0] != self.log_weights.size:
            raise ValueError("one log-weight per member is required")
        if np.any(np.isnan(self.log_weights)) or np.any(self.log_weights == np.inf):
            raise ValueError("log-weights must be finite or -inf")
        if not np.isfinite(self.log_weights).any():
            raise ValueError("an ensemble needs at least one finite log-weight")
        self.symmetry = Symmetry.parse(self.symmetry)

    @property
    def N(self) -> int:
        return (self.coeffs.shape[1] - 1) // 2

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return normalized_weights(self.log_weights)

    def fields(self) -> list[TorusField]:
        return [TorusField(r, self.symmetry) for r in self.coeffs]

    def expectation(self, values: np.ndarray | Callable[[np.ndarray], np.ndarray]) -> float:
        """Self-normalised estimate of E_rho[phi]."""
        vals = values(self.coeffs) if callable(values) else np.asarray(values, dtype=float)
        w = self.weights
        keep = w > 0
        return float(np.sum(w[keep] * vals[keep]))

    def standard_error(self, values: np.ndarray | Callable[[np.ndarray], np.ndarray]) -> float:
        """Delta-method standard error of the self-normalised estimator."""
        vals = values(self.coeffs) if callable(values) else np.asarray(values, dtype=float)
        w = self.weights
        keep = w > 0
        mean = np.sum(w[keep] * vals[keep])
        return float(math.sqrt(np.sum(w[keep] ** 2 * (vals[keep] - mean) ** 2)))

    # persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> Path:
        """GFL1 snapshot per member plus manifest.csv."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        width = max(6, len(str(len(self))))
        pot = potential_of(self.coeffs) * 6.0
        masses = mass_of(self.coeffs)
        with open(d / "manifest.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "logweight", "mass", "l6norm6", "seed"])
            for i, row in enumerate(self.coeffs):
                write_gfl1(TorusField(row, self.symmetry), d / f"field_{i:0{width}d}.gfl1")
                w.writerow([i, repr(float(self.log_weights[i])), repr(float(masses[i])),
                            repr(float(pot[i])), self.seed])
        return d

    @classmethod
    def load(cls, directory: str | Path) -> "WeightedEnsemble":
        d = Path(directory)
        with open(d / "manifest.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"empty ensemble manifest in {d}")
        files = sorted(d.glob("field_*.gfl1"))
        if len(files) != len(rows):
            raise ValueError(f"manifest lists {len(rows)} members but {len(files)} snapshots exist")
        fields = [read_gfl1(f) for f in files]
        return cls(
            np.stack([f.coeffs for f in fields]),
            np.array([float(r["logweight"]) for r in rows]),
            fields[0].symmetry,
            seed=int(rows[0]["seed"]),
        )


def effective_sample_size(ensemble: WeightedEnsemble) -> float:
    return ess_from_log_weights(ensemble.log_weights)


def importance_ensemble(spec: GibbsSpec, seed: int, count: int) -> WeightedEnsemble:
    """Self-normalised importance sampling of rho_N with proposal mu_N."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    coeffs = gaussian_coefficients(spec.base, seed, 0, count)
    lw = log_weights_of(coeffs, spec.K)
    accepted = float(np.mean(np.isfinite(lw)))
    if accepted == 0.0:
        raise CutoffError(
            f"all {count} draws violate the mass cutoff K={spec.K:.6g} "
            f"(acceptance fraction 0; expected mass {spec.base.expected_mass:.4g})",
            accepted,
        )
    return WeightedEnsemble(coeffs, lw, spec.base.symmetry, seed, "importance",
                            {"acceptance_fraction": accepted})


def truncated_gaussian(spec: GibbsSpec, seed: int, count: int,
                       max_draws: int | None = None) -> tuple[np.ndarray, float]:
    """Exact draws of mu_N conditioned on M <= K, by rejection over sample indices.

    Returns the accepted rows and the acceptance fraction.
    """
    max_draws = 1000 * count if max_draws is None else max_draws
    rows: list[np.ndarray] = []
    have = drawn = 0
    block = max(64, count)
    while have < count:
        if drawn >= max_draws:
            frac = have / max(drawn, 1)
            raise CutoffError(
                f"only {have} of {count} draws satisfied M <= {spec.K:.6g} "
                f"after {drawn} attempts", frac)
        take = min(block, max_draws - drawn)
        c = gaussian_coefficients(spec.base, seed, drawn, take)
        drawn += take
        ok = c[mass_of(c) <= spec.K]
        rows.append(ok)
        have += ok.shape[0]
    return np.concatenate(rows)[:count], have / drawn


def _pcn_move(coeffs: np.ndarray, pot: np.ndarray, law: GaussianLaw, K: float,
              beta: float, tempering: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """One vectorised pCN move targeting exp(tempering * V) 1{M <= K} dmu_N."""
    m = coeffs.shape[0]
    prop = math.sqrt(1.0 - beta * beta) * coeffs + beta * gaussian_block(law, rng, m)
    inside = mass_of(prop) <= K
    # proposals outside the cutoff are rejected whatever their potential
    pprop = pot.copy()
    pprop[inside] = potential_of(prop[inside])
    log_u = np.log(rng.random(m))
    ok = inside & (log_u < tempering * (pprop - pot))
    coeffs = np.where(ok[:, None], prop, coeffs)
    pot = np.where(ok, pprop, pot)
    return coeffs, pot, ok


def annealed_ensemble(spec: GibbsSpec, seed: int, count: int, levels: int = 50,
                      moves: int = 1, beta_pcn: float = 0.3) -> WeightedEnsemble:
    """Annealed importance sampling of rho_N.

    Particles start as exact draws of mu_N restricted to M <= K.  The potential
    (1/6) int |u|^6 is switched on along a linear schedule of ``levels`` steps;
    after each increment the particles take ``moves`` pCN steps that leave the
    current tempered measure invariant.  The accumulated log-weights are valid
    self-normalised importance weights for rho_N and give a far larger ESS
    than plain mu_N proposals.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if levels < 1 or moves < 0:
        raise ValueError("levels must be >= 1 and moves >= 0")
    if not 0 < beta_pcn <= 1:
        raise ValueError(f"beta_pcn must lie in (0, 1], got {beta_pcn}")
    coeffs, acc0 = truncated_gaussian(spec, seed, count)
    pot = potential_of(coeffs)
    lw = np.zeros(count)
    temps = np.linspace(0.0, 1.0, levels + 1)
    accepted = 0
    for k in range(1, levels + 1):
        lw += (temps[k] - temps[k - 1]) * pot
        rng = rng_stream(seed, k, LANE_ANNEAL)
        for _ in range(moves):
            coeffs, pot, ok = _pcn_move(coeffs, pot, spec.base, spec.K, beta_pcn, temps[k], rng)
            accepted += int(ok.sum())
    diag = {
        "acceptance_fraction": acc0,
        "levels": levels,
        "moves": moves,
        "pcn_acceptance": accepted / max(1, count * levels * moves),
    }
    if spec.base.symmetry is Symmetry.REAL:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1]))
    return WeightedEnsemble(coeffs, lw, spec.base.symmetry, seed, "annealed", diag)


@dataclass(frozen=True)
class ChainState:
    """State of a pCN chain targeting rho_N."""

    field: TorusField
    log_weight: float
    beta: float = 0.2
    accepted: int = 0
    steps: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not math.isfinite(self.log_weight):
            raise ValueError("a chain must start inside the mass cutoff")

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0


def start_chain(spec: GibbsSpec, seed: int, beta: float = 0.2) -> ChainState:
    """Chain started from an exact draw of mu_N restricted to M <= K."""
    row, _ = truncated_gaussian(spec, seed, 1)
    field = TorusField(row[0], spec.base.symmetry)
    return ChainState(field, gibbs_log_weight(field, spec), beta)


def pcn_step(state: ChainState, spec: GibbsSpec, rng: np.random.Generator) -> ChainState:
    """One preconditioned Crank-Nicolson step; detailed balance for rho_N.

    The proposal sqrt(1 - beta^2) u + beta xi with xi ~ mu_N preserves mu_N,
    so the acceptance probability is min(1, exp(logw(u') - logw(u))).
    """
    b = state.beta
    xi = draw_gaussian_row(spec.base, rng)
    prop = math.sqrt(1.0 - b * b) * state.field.coeffs + b * xi
    new = TorusField(prop, spec.base.symmetry)
    lw_new = gibbs_log_weight(new, spec)
    u = rng.random()
    if np.isfinite(lw_new) and math.log(u) < lw_new - state.log_weight:
        return ChainState(new, lw_new, b, state.accepted + 1, state.steps + 1)
    return ChainState(state.field, state.log_weight, b, state.accepted, state.steps + 1)


@dataclass
class ChainRun:
    """Observables recorded along one or several pCN chains."""

    values: dict[str, np.ndarray]
    acceptance_rate: float
    final: np.ndarray

    def mean_and_error(self, name: str, batches: int = 20) -> tuple[float, float]:
        """Mean and batch-means standard error (chains pooled per batch)."""
        v = self.values[name]
        if v.ndim == 1:
            v = v[:, None]
        steps = v.shape[0] - v.shape[0] % batches
        per_batch = v[:steps].reshape(batches, -1, v.shape[1]).mean(axis=(1, 2))
        return float(v.mean()), float(per_batch.std(ddof=1) / math.sqrt(batches))


def run_chains(spec: GibbsSpec, seed: int, chains: int, steps: int, burn_in: int = 0,
               beta: float = 0.2, observables: dict[str, Callable[[np.ndarray], np.ndarray]] | None = None,
               thin: int = 1) -> ChainRun:
    """Run ``chains`` independent pCN chains in lockstep.

    Chain j starts from an exact truncated-Gaussian draw; the proposal noise
    at every step comes from one generator keyed by (seed, step).
    """
    if chains < 1 or steps < 0 or burn_in < 0:
        raise ValueError("chains must be >= 1 and steps, burn_in >= 0")
    if not 0 < beta <= 1:
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    observables = observables or {"mass": mass_of, "potential": potential_of}
    coeffs, _ = truncated_gaussian(spec, seed, chains)
    pot = potential_of(coeffs)
    rec: dict[str, list[np.ndarray]] = {k: [] for k in observables}
    accepted = 0
    for it in range(burn_in + steps):
        rng = rng_stream(seed, it, LANE_PROPOSAL)
        coeffs, pot, ok = _pcn_move(coeffs, pot, spec.base, spec.K, beta, 1.0, rng)
        if it >= burn_in:
            accepted += int(ok.sum())
            if (it - burn_in) % thin == 0:
                for k, f in observables.items():
                    rec[k].append(np.asarray(f(coeffs)))
    if spec.base.symmetry is Symmetry.REAL:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1]))
    vals = {k: np.array(v) for k, v in rec.items()}
    return ChainRun(vals, accepted / max(1, chains * steps), coeffs)


LANE_RESAMPLE = 4


def _systematic_resample(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    m = weights.size
    positions = (rng.random() + np.arange(m)) / m
    cum = np.cumsum(weights)
    cum[-1] = 1.0
    return np.searchsorted(cum, positions)


def _next_temperature(pot: np.ndarray, logw: np.ndarray, temp: float, target: float) -> float:
    """Largest step whose conditional ESS fraction stays >= target."""
    w = normalized_weights(logw)

    def cess(step: float) -> float:
        inc = step * pot
        g = np.exp(inc - inc.max())
        return float(np.sum(w * g) ** 2 / np.sum(w * g * g))

    room = 1.0 - temp
    if cess(room) >= target:
        return 1.0
    lo, hi = 0.0, room
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if cess(mid) >= target:
            lo = mid
        else:
            hi = mid
    return temp + max(lo, 1e-12)


def smc_ensemble(spec: GibbsSpec, seed: int, count: int, moves: int = 2,
                 beta_pcn: float = 0.3, cess_target: float = 0.95,
                 resample_fraction: float = 0.5, max_levels: int = 10_000,
                 rejuvenate: int = 0) -> WeightedEnsemble:
    """Sequential Monte Carlo sampler for rho_N with adaptive tempering.

    Like :func:`annealed_ensemble` the potential is switched on gradually, but
    the temperature increments are chosen so that the conditional ESS of each
    reweighting stays near ``cess_target``, particles are resampled
    (systematically) whenever the ESS falls below ``resample_fraction * count``,
    and every level ends with ``moves`` pCN steps.  The returned log-weights
    are the standard SMC importance weights at temperature 1.

    ``rejuvenate`` extra pCN steps are run at temperature 1 once the tempering
    is done.  Near the threshold mass rho_N has a concentrated component that
    the tempering path reaches slowly, and these steps let the particles
    drift into it.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    if not 0 < cess_target < 1 or not 0 < resample_fraction <= 1:
        raise ValueError("cess_target must lie in (0, 1) and resample_fraction in (0, 1]")
    if not 0 < beta_pcn <= 1:
        raise ValueError(f"beta_pcn must lie in (0, 1], got {beta_pcn}")
    if rejuvenate < 0:
        raise ValueError(f"rejuvenate must be >= 0, got {rejuvenate}")
    coeffs, acc0 = truncated_gaussian(spec, seed, count)
    pot = potential_of(coeffs)
    logw = np.zeros(count)
    temp = 0.0
    level = 0
    resamples = 0
    accepted = proposed = 0
    while temp < 1.0:
        if level >= max_levels:
            raise RuntimeError(f"tempering did not reach 1 within {max_levels} levels")
        level += 1
        new_temp = _next_temperature(pot, logw, temp, cess_target)
        logw = logw + (new_temp - temp) * pot
        temp = new_temp
        if ess_from_log_weights(logw) < resample_fraction * count:
            idx = _systematic_resample(normalized_weights(logw),
                                       rng_stream(seed, level, LANE_RESAMPLE))
            coeffs, pot = coeffs[idx], pot[idx]
            logw = np.zeros(count)
            resamples += 1
        rng = rng_stream(seed, level, LANE_ANNEAL)
        for _ in range(moves):
            coeffs, pot, ok = _pcn_move(coeffs, pot, spec.base, spec.K, beta_pcn, temp, rng)
            accepted += int(ok.sum())
            proposed += count
    if rejuvenate:
        rng = rng_stream(seed, level + 1, LANE_ANNEAL)
        for _ in range(rejuvenate):
            coeffs, pot, ok = _pcn_move(coeffs, pot, spec.base, spec.K, beta_pcn, 1.0, rng)
            accepted += int(ok.sum())
            proposed += count
    if spec.base.symmetry is Symmetry.REAL:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[:, ::-1]))
    diag = {
        "acceptance_fraction": acc0,
        "levels": level,
        "moves": moves,
        "rejuvenate": rejuvenate,
        "resamples": resamples,
        "pcn_acceptance": accepted / max(1, proposed),
    }
    return WeightedEnsemble(coeffs, logw, spec.base.symmetry, seed, "smc", diag)
