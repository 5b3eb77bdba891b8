"""Command line front end: ``gibbslab COMMAND [options]``.

Every run resolves a flat YAML configuration (file values first, then
command-line flags), validates all fields at once, writes its outputs plus
the resolved configuration into ``--out`` and finishes with a manifest of
SHA-256 hashes.  Outputs depend only on the configuration and the seed.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field as dc_field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import experiments as ex
from .dynamics import EvolutionSpec, IntegrationFailure, conservation_report, evolve
from .field import NormSpec, Symmetry, TorusField, write_gfl1
from .measures import CutoffError, GaussianLaw, GibbsSpec, truncated_gaussian
from .orlicz import (
    YoungParams,
    conjugate_eval,
    conjugate_upper_bound,
    constants as orlicz_constants,
    indicator_tail_norm,
    luxemburg_norm,
    y_threshold,
    young_eval,
)
from .soliton import constants_report, density_blowup_exponent, mass_threshold, qm_estimates_check

COMMANDS = ("sample", "evolve", "invariance", "tails", "growth", "orlicz", "soliton", "bourgain")
ORLICZ_ACTIONS = ("eval", "conjugate", "norm", "constants")
SAMPLERS = ("smc", "annealed", "importance")
EXIT_CONFIG = 2
EXIT_FAILURE = 1


class ConfigError(ValueError):
    """Raised with every violation found in a configuration."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))


@dataclass
class RunConfig:
    command: str = "soliton"
    action: str = "constants"
    equation: str = "nls"
    N: int = 16
    dt: float = 0.01
    T: float = 1.0
    seed: int = 0
    alpha: float = 0.5
    q: float = 0.05
    s: list = dc_field(default_factory=lambda: [0.25])
    p: float = 6.0
    cutoff: Any = "auto"
    ensemble_size: int = 1000
    out: str = "out"
    scheme: Any = None
    sampler: str = "smc"
    covariance: str = "h1"
    stride: int = 1
    bootstrap: int = 1000
    burn_in: int = 2000
    rejuvenate: int = 0
    T_values: list = dc_field(default_factory=lambda: [100.0, 1000.0, 10000.0])
    beta: float = 2.0
    tau0: float = 1.0
    delta: float = 0.01
    epsilon: float = 0.1
    x_max: float = 100.0
    points: int = 101
    input: Any = None

    @property
    def K(self) -> float:
        return mass_threshold() if self.cutoff == "auto" else float(self.cutoff)

    @property
    def params(self) -> YoungParams:
        return YoungParams(self.alpha, self.q)

    def resolved(self) -> dict:
        d = asdict(self)
        d["cutoff"] = self.K
        return d


_FIELD_NAMES = {f.name for f in fields(RunConfig)}
_INTS = {"N", "seed", "ensemble_size", "stride", "bootstrap", "burn_in", "rejuvenate", "points"}
_FLOATS = {"dt", "T", "alpha", "q", "p", "beta", "tau0", "delta", "epsilon", "x_max"}
_LISTS = {"s", "T_values"}


def _coerce(key: str, value: Any, problems: list[str]) -> Any:
    if key in _INTS:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            problems.append(f"{key}: expected an integer, got {value!r}")
            return None
        try:
            f = float(value)
        except ValueError:
            problems.append(f"{key}: expected an integer, got {value!r}")
            return None
        if not f.is_integer():
            problems.append(f"{key}: expected an integer, got {value!r}")
            return None
        return int(f)
    if key in _FLOATS:
        try:
            return float(value)
        except (TypeError, ValueError):
            problems.append(f"{key}: expected a number, got {value!r}")
            return None
    if key in _LISTS:
        items = value.strip().strip("[]").split(",") if isinstance(value, str) else value
        if not isinstance(items, (list, tuple)):
            items = [items]
        try:
            return [float(v) for v in items]
        except (TypeError, ValueError):
            problems.append(f"{key}: expected a list of numbers, got {value!r}")
            return None
    if key == "cutoff":
        if value == "auto":
            return value
        try:
            return float(value)
        except (TypeError, ValueError):
            problems.append(f"cutoff: expected a number or 'auto', got {value!r}")
            return None
    return value


def _validate(cfg: RunConfig) -> list[str]:
    problems = []

    def need(cond: bool, msg: str) -> None:
        if not cond:
            problems.append(msg)

    need(cfg.command in COMMANDS, f"command: must be one of {', '.join(COMMANDS)}, got {cfg.command!r}")
    need(cfg.action in ORLICZ_ACTIONS, f"action: must be one of {', '.join(ORLICZ_ACTIONS)}, got {cfg.action!r}")
    need(cfg.equation in ("nls", "gkdv"), f"equation: must be 'nls' or 'gkdv', got {cfg.equation!r}")
    need(cfg.N >= 1, f"N: must be >= 1, got {cfg.N}")
    need(cfg.dt > 0, f"dt: must be positive, got {cfg.dt}")
    need(cfg.T >= 0, f"T: must be nonnegative, got {cfg.T}")
    need(0 <= cfg.seed < 2**64, f"seed: must be an unsigned 64-bit integer, got {cfg.seed}")
    need(0 < cfg.alpha < 1, f"alpha: must lie in (0, 1), got {cfg.alpha}")
    need(cfg.q > 0, f"q: must be positive, got {cfg.q}")
    need(len(cfg.s) >= 1, "s: must list at least one Sobolev index")
    need(all(v >= 0 for v in cfg.s), f"s: entries must be nonnegative, got {cfg.s}")
    if cfg.command in ("tails", "bourgain", "growth"):
        need(all(v < 0.5 for v in cfg.s), f"s: entries must be < 1/2 for {cfg.command}, got {cfg.s}")
    need(cfg.p >= 1, f"p: must be >= 1, got {cfg.p}")
    need(cfg.cutoff == "auto" or (isinstance(cfg.cutoff, float) and cfg.cutoff > 0),
         f"cutoff: must be positive or 'auto', got {cfg.cutoff!r}")
    need(cfg.ensemble_size >= 1, f"ensemble_size: must be >= 1, got {cfg.ensemble_size}")
    need(isinstance(cfg.out, str) and cfg.out != "", "out: must be a directory path")
    need(cfg.sampler in SAMPLERS, f"sampler: must be one of {', '.join(SAMPLERS)}, got {cfg.sampler!r}")
    need(cfg.covariance in ("h1", "bracket"), f"covariance: must be 'h1' or 'bracket', got {cfg.covariance!r}")
    need(cfg.stride >= 1, f"stride: must be >= 1, got {cfg.stride}")
    need(cfg.bootstrap >= 10, f"bootstrap: must be >= 10, got {cfg.bootstrap}")
    need(cfg.burn_in >= 0, f"burn_in: must be >= 0, got {cfg.burn_in}")
    need(cfg.rejuvenate >= 0, f"rejuvenate: must be >= 0, got {cfg.rejuvenate}")
    need(cfg.rejuvenate == 0 or cfg.sampler == "smc", "rejuvenate: only the smc sampler takes rejuvenation moves")
    need(len(cfg.T_values) >= 1 and all(v > 0 for v in cfg.T_values),
         f"T_values: must be positive, got {cfg.T_values}")
    need(cfg.beta > 0, f"beta: must be positive, got {cfg.beta}")
    need(cfg.tau0 > 0, f"tau0: must be positive, got {cfg.tau0}")
    need(0 < cfg.delta < 0.25, f"delta: must lie in (0, 1/4), got {cfg.delta}")
    need(0 <= cfg.epsilon < 1, f"epsilon: must lie in [0, 1), got {cfg.epsilon}")
    need(cfg.x_max > 0, f"x_max: must be positive, got {cfg.x_max}")
    need(cfg.points >= 2, f"points: must be >= 2, got {cfg.points}")
    if cfg.T > 0 and cfg.dt > 0:
        need(cfg.dt <= cfg.T or cfg.command not in ("evolve", "invariance", "growth"),
             f"dt: must not exceed T={cfg.T}, got {cfg.dt}")
    if cfg.scheme is not None and cfg.equation in ("nls", "gkdv"):
        from .dynamics import GKDV_SCHEMES, NLS_SCHEMES

        allowed = NLS_SCHEMES if cfg.equation == "nls" else GKDV_SCHEMES
        need(cfg.scheme in allowed, f"scheme: must be one of {', '.join(allowed)} for {cfg.equation}, got {cfg.scheme!r}")
    if cfg.command in ("invariance", "growth"):
        need(cfg.equation == "nls" or cfg.covariance == "h1",
             "equation: gKdV invariance needs the h1 covariance")
    return problems


def config_from_mapping(mapping: dict) -> RunConfig:
    """Validate a flat mapping; unknown keys and every bad value are reported together."""
    if not isinstance(mapping, dict):
        raise ConfigError(["configuration must be a flat key-value mapping"])
    problems = []
    values = {}
    for key, value in mapping.items():
        if key not in _FIELD_NAMES:
            problems.append(f"{key}: unknown key")
            continue
        if isinstance(value, dict):
            problems.append(f"{key}: nested mappings are not allowed")
            continue
        coerced = _coerce(key, value, problems)
        if coerced is not None or value is None:
            values[key] = coerced
    if problems:
        raise ConfigError(problems)
    cfg = RunConfig(**values)
    problems = _validate(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    """Parse a YAML document, apply ``overrides`` and validate."""
    try:
        doc = yaml.safe_load(text) if text.strip() else {}
    except yaml.YAMLError as exc:
        raise ConfigError([f"not a well-formed document: {exc}"]) from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(["configuration must be a flat key-value mapping"])
    merged = dict(doc)
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_mapping(merged)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def write_json(path: Path, obj: Any) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_manifest(out: Path) -> Path:
    """manifest.json with path, byte count and SHA-256 of every file under ``out``."""
    entries = []
    for path in sorted(p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"):
        data = path.read_bytes()
        entries.append({"path": path.relative_to(out).as_posix(), "bytes": len(data),
                        "sha256": hashlib.sha256(data).hexdigest()})
    target = out / "manifest.json"
    write_json(target, {"artifacts": entries})
    return target


def _write_report(out: Path, stem: str, report) -> None:
    write_json(out / f"{stem}.json", report.to_dict())
    for name, rows in report.tables().items():
        write_csv(out / f"{name}.csv", rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _gibbs(cfg: RunConfig) -> GibbsSpec:
    sym = Symmetry.REAL if cfg.equation == "gkdv" else Symmetry.COMPLEX
    return GibbsSpec(GaussianLaw(cfg.N, sym, cfg.covariance), cfg.K)


def _evolution(cfg: RunConfig) -> EvolutionSpec:
    return EvolutionSpec(cfg.equation, cfg.N, cfg.dt, cfg.T, cfg.stride, scheme=cfg.scheme)


def cmd_sample(cfg: RunConfig, out: Path) -> None:
    options = {"rejuvenate": cfg.rejuvenate} if cfg.sampler == "smc" else {}
    ens = ex.draw_ensemble(_gibbs(cfg), cfg.ensemble_size, cfg.seed, cfg.sampler, **options)
    ens.save(out / "ensemble")
    write_json(out / "sample.json", {
        "ess": ex.ess_from_log_weights(ens.log_weights),
        "diagnostics": ens.diagnostics,
        "mean_mass": ens.expectation(ex.observable("mass")),
        "mean_l6_6": ens.expectation(ex.observable("l6_6")),
    })


def _initial_field(cfg: RunConfig) -> TorusField:
    if cfg.input is not None:
        from .field import read_gfl1

        f = read_gfl1(cfg.input)
        if f.N != cfg.N:
            raise ValueError(f"input field has N={f.N} but N={cfg.N} was requested")
        return f
    spec = _gibbs(cfg)
    rows, _ = truncated_gaussian(spec, cfg.seed, 1)
    return TorusField(rows[0], spec.base.symmetry)


def cmd_evolve(cfg: RunConfig, out: Path) -> None:
    init = _initial_field(cfg)
    norms = [NormSpec("sobolev", s=s) for s in cfg.s] + [NormSpec("lebesgue", p=cfg.p)]
    traj = evolve(init, _evolution(cfg), norms, keep_fields=True)
    traj.to_csv(out / "trajectory.csv")
    write_gfl1(init, out / "initial.gfl1")
    write_gfl1(traj.fields[-1], out / "final.gfl1")
    report = conservation_report(traj).as_dict()
    report.update(failed=traj.failed, failure_time=traj.failure_time, records=len(traj))
    write_json(out / "conservation.json", report)
    if traj.failed:
        raise IntegrationFailure("trajectory became non-finite", traj.failure_time or 0.0)


def cmd_invariance(cfg: RunConfig, out: Path) -> None:
    obs = [f"h_{s:g}" for s in cfg.s] + ["l6_6"]
    options = {"rejuvenate": cfg.rejuvenate} if cfg.sampler == "smc" else {}
    rep = ex.invariance_test(_gibbs(cfg), _evolution(cfg), obs, cfg.ensemble_size, cfg.seed,
                             cfg.sampler, cfg.bootstrap, options)
    _write_report(out, "invariance", rep)


def cmd_tails(cfg: RunConfig, out: Path) -> None:
    law = _gibbs(cfg).base
    summary = {}
    for s in cfg.s:
        g = ex.gaussian_tail_study(law, s, count=cfg.ensemble_size, seed=cfg.seed)
        o = ex.orlicz_tail_study(law, cfg.params, s, count=cfg.ensemble_size, seed=cfg.seed)
        summary[f"{s:g}"] = {"gaussian": g.to_dict(), "orlicz": o.to_dict()}
        write_csv(out / f"gaussian_tail_s{s:g}.csv", g.tables()["gaussian_tail"])
        write_csv(out / f"orlicz_tail_s{s:g}.csv", o.tables()["orlicz_tail"])
    dens = ex.density_integrability_study(_gibbs(cfg), [cfg.params], cfg.ensemble_size, cfg.seed)
    summary["integrability"] = dens.to_dict()
    write_csv(out / "integrability.csv", dens.tables()["integrability"])
    write_json(out / "tails.json", summary)


def cmd_growth(cfg: RunConfig, out: Path) -> None:
    rep = ex.growth_study(_gibbs(cfg), _evolution(cfg), cfg.s, cfg.ensemble_size, cfg.seed,
                          burn_in=cfg.burn_in, bootstrap=cfg.bootstrap)
    _write_report(out, "growth", rep)


def cmd_bourgain(cfg: RunConfig, out: Path) -> None:
    law = _gibbs(cfg).base
    tail = ex.orlicz_tail_study(law, cfg.params, cfg.s[0], count=cfg.ensemble_size, seed=cfg.seed)
    dens = ex.density_integrability_study(_gibbs(cfg), [cfg.params], cfg.ensemble_size, cfg.seed + 1)
    rep = ex.bourgain_study(dens.results[0].density_norm, tail, cfg.T_values, beta=cfg.beta, tau0=cfg.tau0)
    _write_report(out, "bourgain", rep)
    write_csv(out / "orlicz_tail.csv", tail.tables()["orlicz_tail"])


def cmd_soliton(cfg: RunConfig, out: Path) -> None:
    write_json(out / "constants.json", constants_report())
    checks = {}
    for r in (2, 6, "grad"):
        c = qm_estimates_check(cfg.delta, cfg.epsilon, r)
        checks[str(r)] = {"computed": c.computed, "predicted": c.predicted, "ratio": c.ratio}
    write_json(out / "qm_estimates.json", {"delta": cfg.delta, "epsilon": cfg.epsilon, "checks": checks})
    write_json(out / "density_exponent.json", {
        "p": cfg.p, "epsilon": cfg.epsilon,
        "exponent": density_blowup_exponent(cfg.p, cfg.epsilon),
    })


def cmd_orlicz(cfg: RunConfig, out: Path) -> None:
    params = cfg.params
    if cfg.action == "constants":
        write_json(out / "orlicz_constants.json", orlicz_constants(params))
        return
    rows: list[list] = [["x_or_y", "value", "bound"]]
    if cfg.action == "eval":
        for x in np.linspace(0.0, cfg.x_max, cfg.points):
            rows.append([float(x), float(young_eval(params, x)), ""])
        write_csv(out / "orlicz_eval.csv", rows)
    elif cfg.action == "conjugate":
        thr = y_threshold(params)
        for y in np.linspace(0.0, cfg.x_max, cfg.points):
            bound = conjugate_upper_bound(params, float(y)) if y >= thr else ""
            rows.append([float(y), float(conjugate_eval(params, float(y))), bound])
        write_csv(out / "orlicz_conjugate.csv", rows)
    else:
        if cfg.input is not None:
            with open(cfg.input, newline="") as fh:
                data = list(csv.DictReader(fh))
            if not data or "value" not in data[0]:
                raise ValueError(f"{cfg.input}: expected a CSV with a 'value' column")
            vals = np.array([float(r["value"]) for r in data])
            w = np.array([float(r["weight"]) for r in data]) if "weight" in data[0] else None
            est = luxemburg_norm(params, vals, w)
            write_json(out / "orlicz_norm.json", {"value": est.value, "lower": est.lower,
                                                  "upper": est.upper})
            return
        for prob in np.geomspace(1e-6, 1.0, cfg.points):
            vals = np.array([1.0, 0.0])
            est = luxemburg_norm(params, vals, np.array([prob, 1.0 - prob]), which="F*")
            rows.append([float(prob), est.value, indicator_tail_norm(params, float(prob))])
        write_csv(out / "orlicz_norm.csv", rows)


DISPATCH = {
    "sample": cmd_sample, "evolve": cmd_evolve, "invariance": cmd_invariance,
    "tails": cmd_tails, "growth": cmd_growth, "orlicz": cmd_orlicz,
    "soliton": cmd_soliton, "bourgain": cmd_bourgain,
}


def run(cfg: RunConfig) -> Path:
    """Execute one validated configuration; returns the manifest path."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(_jsonable(cfg.resolved()), sort_keys=True))
    DISPATCH[cfg.command](cfg, out)
    return write_manifest(out)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


_FLAG_FIELDS = [f.name for f in fields(RunConfig) if f.name not in ("command", "action")]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file with RunConfig keys")
    common.add_argument("--threads", type=int, default=None,
                        help="worker count; results do not depend on it")
    for name in _FLAG_FIELDS:
        flag = "--" + name.replace("_", "-")
        extra = ["--modes"] if name == "N" else []
        common.add_argument(flag, *extra, dest=name, default=None)
    parser = argparse.ArgumentParser(prog="gibbslab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        sp = sub.add_parser(cmd, parents=[common])
        if cmd == "orlicz":
            sp.add_argument("action", choices=ORLICZ_ACTIONS)
    sub.add_parser("run", parents=[common], help="take the command from the configuration file")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    text = ""
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    overrides = {name: getattr(args, name) for name in _FLAG_FIELDS}
    if args.command != "run":
        overrides["command"] = args.command
    if getattr(args, "action", None):
        overrides["action"] = args.action
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text, overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(cfg)
    except (ValueError, RuntimeError, CutoffError, OSError) as exc:
        print(f"error: {cfg.command} failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
