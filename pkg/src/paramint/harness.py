"""Experiment harness: regime reports, convergence sweeps, speedup runs.

Configuration is a single JSON document with nested sections; unknown keys are
rejected so that typos cannot silently fall back to defaults.  Every emitted
byte is a function of (config, seed): floats are serialized with 17
significant digits, rows are ordered by budget, and wall-clock data never
reaches the output files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import rates
from .instances import TestInstance, bump_instance, expected_error, lq_error, smooth_instance
from .multilevel import (BudgetError, min_budget, run_adaptive,
                         run_deterministic, run_nonadaptive, schedule)
from .problem import INF, ProblemSpec

__all__ = [
    "ConfigError", "ExperimentConfig", "load_config", "parse_spec",
    "RunRecord", "cmd_rates", "cmd_convergence", "cmd_gap", "fit_slope",
]


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


_SPEC_KEYS = {"r", "p", "q", "d1", "d2"}
_INSTANCE_KEYS = {"name", "mode", "level", "amplitude"}
_TOP_KEYS = {
    "spec", "algorithm", "instance", "n_grid", "replications", "seed",
    "out", "resolution", "w", "threads", "ml_constant", "damping",
}
_ALGORITHMS = {
    "det": "det",
    "a4": "nonadaptive", "nonadaptive": "nonadaptive",
    "a5": "adaptive", "adaptive": "adaptive",
}


def parse_spec(obj) -> ProblemSpec:
    if not isinstance(obj, dict):
        raise ConfigError("spec section must be a mapping")
    unknown = set(obj) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown spec keys: {sorted(unknown)}")
    missing = _SPEC_KEYS - set(obj)
    if missing:
        raise ConfigError(f"missing spec keys: {sorted(missing)}")
    try:
        return ProblemSpec(obj["r"], obj["p"], obj["q"], obj["d1"], obj["d2"])
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"invalid spec values: {exc}") from exc


@dataclass
class ExperimentConfig:
    spec: ProblemSpec
    algorithm: Optional[str]
    instance: dict
    n_grid: list
    replications: int
    seed: int
    out: Optional[str]
    resolution: object  # int or "auto"
    w: float
    threads: int
    ml_constant: float
    damping: Optional[float]


def _validate_config(raw: dict, require_algorithm: bool) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "spec" not in raw:
        raise ConfigError("missing 'spec' section")
    spec = parse_spec(raw["spec"])

    algorithm = raw.get("algorithm")
    if require_algorithm:
        if algorithm is None:
            raise ConfigError("missing 'algorithm'")
        if algorithm not in _ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algorithm!r}; "
                              f"choose from {sorted(_ALGORITHMS)}")
        algorithm = _ALGORITHMS[algorithm]
    elif algorithm is not None:
        raise ConfigError("'algorithm' is not accepted by this command")

    instance = raw.get("instance", {"name": "smooth"})
    if not isinstance(instance, dict) or "name" not in instance:
        raise ConfigError("instance section must be a mapping with a 'name'")
    unknown = set(instance) - _INSTANCE_KEYS
    if unknown:
        raise ConfigError(f"unknown instance keys: {sorted(unknown)}")
    if instance["name"] not in ("smooth", "bump"):
        raise ConfigError(f"unknown instance {instance['name']!r}")

    n_grid = raw.get("n_grid")
    if (not isinstance(n_grid, list) or not n_grid
            or any(int(v) != v or v < 1 for v in n_grid)
            or any(b <= a for a, b in zip(n_grid, n_grid[1:]))):
        raise ConfigError("'n_grid' must be a strictly increasing list of budgets")
    n_grid = [int(v) for v in n_grid]

    replications = int(raw.get("replications", 1))
    if replications < 1:
        raise ConfigError("'replications' must be >= 1")
    seed = int(raw.get("seed", 0))
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("'seed' must fit in 64 bits")
    resolution = raw.get("resolution", "auto")
    if resolution != "auto":
        resolution = int(resolution)
        if resolution < 2:
            raise ConfigError("'resolution' must be >= 2 or 'auto'")
    w = float(raw.get("w", 2.0))
    if w < 1:
        raise ConfigError("'w' must be >= 1")
    threads = int(raw.get("threads", 1))
    if threads < 1:
        raise ConfigError("'threads' must be >= 1")
    ml_constant = float(raw.get("ml_constant", 1.0))
    if ml_constant <= 0:
        raise ConfigError("'ml_constant' must be > 0")
    damping = raw.get("damping")
    if damping is not None:
        damping = float(damping)
        if damping < 0:
            raise ConfigError("'damping' must be >= 0")
    return ExperimentConfig(
        spec=spec, algorithm=algorithm, instance=dict(instance), n_grid=n_grid,
        replications=replications, seed=seed, out=raw.get("out"),
        resolution=resolution, w=w, threads=threads, ml_constant=ml_constant,
        damping=damping)


def load_config(path: str, require_algorithm: bool = True) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return _validate_config(raw, require_algorithm)


# -- shared helpers ------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _auto_resolution(cfg: ExperimentConfig, n: int) -> int:
    if cfg.resolution != "auto":
        return int(cfg.resolution)
    spec = cfg.spec
    if cfg.algorithm == "det":
        level = math.ceil(math.log2(n) / spec.d) if n > 1 else 0
        return 2 ** (level + 2)
    sched = schedule(n, spec, damping=cfg.damping,
                     adaptive=cfg.algorithm == "adaptive")
    return 2 ** (sched.l1 + 2)


def _instance_for(cfg: ExperimentConfig, n: int, seed_seq) -> TestInstance:
    name = cfg.instance["name"]
    if name == "smooth":
        return smooth_instance(cfg.spec)
    level = cfg.instance.get("level", "auto")
    if level == "auto":
        level = schedule(max(n, min_budget(cfg.spec)), cfg.spec).l0
    mode = cfg.instance.get("mode", "dense")
    amplitude = float(cfg.instance.get("amplitude", 1.0))
    rng = np.random.default_rng(seed_seq)
    return bump_instance(int(level), cfg.spec, rng, mode=mode, amplitude=amplitude)


def _runner(algorithm: str, cfg: ExperimentConfig) -> Callable:
    if algorithm == "det":
        return lambda spec, n, f, rng: run_deterministic(spec, n, f)
    if algorithm == "nonadaptive":
        return lambda spec, n, f, rng: run_nonadaptive(
            spec, n, f, rng, damping=cfg.damping)
    return lambda spec, n, f, rng: run_adaptive(
        spec, n, f, rng, damping=cfg.damping, ml_constant=cfg.ml_constant)


def fit_slope(ns, errs, restrict_upper_half: bool = True):
    """OLS slope of log2 err against log2 n with a 95 percent band.

    Zero errors are excluded (their logs are undefined); by default only
    budgets at or above the grid median enter, cutting pre-asymptotic bias.
    """
    ns = np.asarray(ns, dtype=np.float64)
    errs = np.asarray(errs, dtype=np.float64)
    keep = errs > 0
    if restrict_upper_half and keep.sum() >= 4:
        keep &= ns >= np.median(ns)
    ns, errs = ns[keep], errs[keep]
    if len(ns) < 2:
        return math.nan, math.nan
    x, y = np.log2(ns), np.log2(errs)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    slope = float(coef[0])
    if len(ns) == 2:
        return slope, math.nan
    resid = y - A @ coef
    s2 = float(resid @ resid) / (len(ns) - 2)
    sxx = float(np.sum((x - x.mean()) ** 2))
    return slope, 1.96 * math.sqrt(s2 / sxx)


@dataclass
class RunRecord:
    """One experiment row; wall_time stays out of the serialized output."""

    n: int
    eval_total: float
    err_mean: float
    err_stderr: float
    phi_theory: float
    seed: int
    wall_time: float = 0.0


# -- commands --------------------------------------------------------------------


def cmd_rates(spec: ProblemSpec) -> dict:
    """Regime report with the speedup exponent and envelope exponents."""
    if not rates.solvable_check(spec):
        raise ConfigError("spec is not solvable: the parametric-integration "
                          "operator is unbounded for these parameters")
    report = rates.regime_report(spec).as_dict()
    a1, b1 = rates.nonadaptive_rate_exponents(spec)
    report["phi1_exponents"] = {"power": str(a1), "log_power": str(b1),
                                "power_float": float(a1), "log_float": float(b1)}
    report["det_exponent"] = float(rates.deterministic_rate_exponent(spec))
    if spec.p > 2 and spec.q > spec.p:
        a2, b2 = rates.adaptive_rate_exponents(spec)
        report["phi2_exponents"] = {"power": str(a2), "log_power": str(b2),
                                    "power_float": float(a2), "log_float": float(b2)}
        theta = rates.gap_exponent(spec)
        report["theta"] = float(theta)
        report["theta_exact"] = str(theta)
    else:
        report["phi2_exponents"] = None
        report["theta"] = None
        report["theta_exact"] = None
    report["envelopes_n1024"] = {
        k: (float(v) if v is not None else None)
        for k, v in rates.theory_envelopes(1024, spec).items()}
    return report


def _theory_value(cfg: ExperimentConfig, n: int) -> float:
    spec = cfg.spec
    if cfg.algorithm == "det":
        return float(n) ** float(rates.deterministic_rate_exponent(spec))
    envs = rates.theory_envelopes(n, spec)
    if cfg.algorithm == "adaptive":
        v = envs["ran_upper"]
        return float(v) if v is not None else envs["phi2"]
    return envs["ran_non_upper"]


def cmd_convergence(cfg: ExperimentConfig, out_path: Optional[str] = None):
    """Error sweep over the budget grid; CSV rows plus a fitted-slope line."""
    import time

    if cfg.algorithm is None:
        raise ConfigError("convergence needs an 'algorithm'")
    if cfg.algorithm == "adaptive" and not (cfg.spec.p > 2 and cfg.spec.q > cfg.spec.p):
        raise ConfigError("adaptive algorithm requires 2 < p < q")
    master = np.random.SeedSequence(cfg.seed)
    runner = _runner(cfg.algorithm, cfg)
    records = []
    for k, n in enumerate(cfg.n_grid):
        t0 = time.monotonic()
        inst_seed, rep_seed = np.random.SeedSequence(
            entropy=cfg.seed, spawn_key=(k,)).spawn(2)
        inst = _instance_for(cfg, n, inst_seed)
        stats = expected_error(
            runner, inst, cfg.spec, n, cfg.replications, rep_seed,
            resolution=_auto_resolution(cfg, n), w=cfg.w, threads=cfg.threads)
        records.append(RunRecord(
            n=n, eval_total=float(stats.eval_totals.mean()),
            err_mean=stats.mean, err_stderr=stats.stderr,
            phi_theory=_theory_value(cfg, n), seed=cfg.seed,
            wall_time=time.monotonic() - t0))
    slope, band = fit_slope([r.n for r in records], [r.err_mean for r in records])
    lines = ["n,eval_total,err_mean,err_stderr,phi_theory,seed"]
    for r in records:
        lines.append(",".join([
            str(r.n), _fmt(r.eval_total), _fmt(r.err_mean), _fmt(r.err_stderr),
            _fmt(r.phi_theory), str(r.seed)]))
    lines.append(f"# fitted_slope={_fmt(slope)},ci95={_fmt(band)},"
                 f"rows_used=upper_half")
    text = "\n".join(lines) + "\n"
    path = out_path or cfg.out
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return records, slope, text


# -- adaptive-vs-non-adaptive speedup experiment ----------------------------------


def _structure_total(kind: str, cfg: ExperimentConfig, n: int, seed) -> int:
    """Ledger total of a run on the zero integrand (index machinery only)."""
    zero = lambda pts: np.zeros(len(pts))
    rng = np.random.default_rng(seed)
    if kind == "nonadaptive":
        _, card = run_nonadaptive(cfg.spec, n, zero, rng, damping=cfg.damping)
    else:
        _, card = run_adaptive(cfg.spec, n, zero, rng, damping=cfg.damping,
                               ml_constant=cfg.ml_constant)
    return card.total


def _calibrate_adaptive_budget(cfg: ExperimentConfig, n: int, seed) -> int:
    """Largest adaptive budget whose evaluation count stays within the
    non-adaptive ledger at budget n (measured on structure-only runs)."""
    target = _structure_total("nonadaptive", cfg, n, seed)
    lo = min_budget(cfg.spec)
    if _structure_total("adaptive", cfg, lo, seed) > target:
        return lo
    hi = n
    while _structure_total("adaptive", cfg, hi, seed) <= target and hi < n * 4:
        hi *= 2
    lo_budget, hi_budget = lo, hi
    while hi_budget - lo_budget > max(1, lo_budget // 64):
        mid = (lo_budget + hi_budget) // 2
        if _structure_total("adaptive", cfg, mid, seed) <= target:
            lo_budget = mid
        else:
            hi_budget = mid
    return lo_budget


def cmd_gap(cfg: ExperimentConfig, out_path: Optional[str] = None):
    """Paired non-adaptive vs adaptive sweep at matched evaluation budgets.

    Emits the per-budget error ratio and its fitted slope; the adaptive
    budget is reduced until its ledger does not exceed the non-adaptive one.
    """
    spec = cfg.spec
    if not (spec.p > 2 and spec.q > spec.p):
        raise ConfigError("gap experiment requires 2 < p < q")
    if cfg.instance.get("name") == "smooth":
        raise ConfigError("gap experiment needs the bump instance family")
    rows = []
    for k, n in enumerate(cfg.n_grid):
        keyroot = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(k,))
        inst_seed, cal_seed, rep_seed4, rep_seed5 = keyroot.spawn(4)
        inst = _instance_for(cfg, n, inst_seed)
        n5 = _calibrate_adaptive_budget(cfg, n, cal_seed)
        res = _auto_resolution(
            ExperimentConfig(**{**cfg.__dict__, "algorithm": "nonadaptive"}), n)
        stats4 = expected_error(
            _runner("nonadaptive", cfg), inst, spec, n, cfg.replications,
            rep_seed4, resolution=res, w=cfg.w, threads=cfg.threads)
        stats5 = expected_error(
            _runner("adaptive", cfg), inst, spec, n5, cfg.replications,
            rep_seed5, resolution=res, w=cfg.w, threads=cfg.threads)
        led4 = float(stats4.eval_totals.mean())
        led5 = float(stats5.eval_totals.mean())
        assert abs(led4 - led5) / led4 <= 0.1, \
            f"budget parity violated at n={n}: {led4} vs {led5}"
        rows.append({
            "n": n, "n_adaptive": n5, "eval_nonadaptive": led4,
            "eval_adaptive": led5, "err_nonadaptive": stats4.mean,
            "err_adaptive": stats5.mean,
            "ratio": stats4.mean / stats5.mean if stats5.mean > 0 else math.inf,
            "seed": cfg.seed})
    slope, band = fit_slope([r["n"] for r in rows], [r["ratio"] for r in rows],
                            restrict_upper_half=False)
    header = ("n,n_adaptive,eval_nonadaptive,eval_adaptive,"
              "err_nonadaptive,err_adaptive,ratio,seed")
    lines = [header]
    for r in rows:
        lines.append(",".join([
            str(r["n"]), str(r["n_adaptive"]), _fmt(r["eval_nonadaptive"]),
            _fmt(r["eval_adaptive"]), _fmt(r["err_nonadaptive"]),
            _fmt(r["err_adaptive"]), _fmt(r["ratio"]), str(r["seed"])]))
    lines.append(f"# ratio_slope={_fmt(slope)},ci95={_fmt(band)}")
    text = "\n".join(lines) + "\n"
    path = out_path or cfg.out
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return rows, slope, text
