"""Batch experiment runner.

Configs are flat key=value files with [section] headers (model / run /
sweep / output); unknown keys are rejected and every run is fully
determined by (config, seed).  Replica seeds derive from the master
seed by successive splitmix64 steps, so any replica is individually
reproducible.

Exit codes: 0 success, 1 runtime error, 2 config error, 3 an audit
subcommand detected violations.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analysis, dynamics, oracle, theory, waitsee
from .model import ModelParams, ParameterError


class ConfigError(ValueError):
    """Invalid or unknown configuration content."""


EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

_RUN_KEYS = {
    "replicas",
    "t_max",
    "max_events",
    "seed",
    "obs",
    "star_cut",
    "duality_t",
    "set_a",
    "set_b",
    "lambda2",
    "burn_in",
    "window",
    "min_drift_samples",
}
_SWEEP_KEYS = {"parameter", "values"}
_OUTPUT_KEYS = {"directory", "formats"}


# =============================================================================
# Experiment configuration
# =============================================================================

@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelParams
    run: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        parser.optionxform = str  # keys are case-sensitive
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        sections = set(parser.sections())
        unknown = sections - {"model", "run", "sweep", "output"}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        if "model" not in sections:
            raise ConfigError("config needs a [model] section")
        try:
            model = ModelParams.from_mapping(dict(parser.items("model")))
        except (ParameterError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        run = dict(parser.items("run")) if "run" in sections else {}
        sweep = dict(parser.items("sweep")) if "sweep" in sections else {}
        output = dict(parser.items("output")) if "output" in sections else {}
        for name, keys, got in (
            ("run", _RUN_KEYS, run),
            ("sweep", _SWEEP_KEYS, sweep),
            ("output", _OUTPUT_KEYS, output),
        ):
            bad = set(got) - keys
            if bad:
                raise ConfigError(f"unknown [{name}] keys: {sorted(bad)}")
        return cls(model, run, sweep, output)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def to_text(self) -> str:
        lines = ["[model]"]
        for key, value in self.model.to_mapping().items():
            lines.append(f"{key} = {value}")
        for name, section in (("run", self.run), ("sweep", self.sweep), ("output", self.output)):
            if section:
                lines.append(f"[{name}]")
                for key in sorted(section):
                    lines.append(f"{key} = {section[key]}")
        return "\n".join(lines) + "\n"

    # -- typed accessors over the run section --

    def run_int(self, key: str, default: int) -> int:
        return int(self.run.get(key, default))

    def run_float(self, key: str, default: float) -> float:
        return float(self.run.get(key, default))

    def obs_times(self) -> np.ndarray:
        """Grid spec: 'geometric:t0:t1:count', 'linear:t0:t1:count' or CSV list."""
        spec = self.run.get("obs", "")
        if not spec:
            return np.empty(0)
        parts = spec.split(":")
        if parts[0] == "geometric" and len(parts) == 4:
            return dynamics.geometric_times(float(parts[1]), float(parts[2]), int(parts[3]))
        if parts[0] == "linear" and len(parts) == 4:
            return np.linspace(float(parts[1]), float(parts[2]), int(parts[3]))
        try:
            return np.array([float(v) for v in spec.split(",")])
        except ValueError as exc:
            raise ConfigError(f"bad obs grid spec {spec!r}") from exc

    def vertex_set(self, key: str) -> Optional[list[int]]:
        raw = self.run.get(key, "")
        if not raw:
            return None
        return [int(v) for v in raw.replace(",", " ").split()]

    def sweep_values(self) -> tuple[str, list[float]]:
        name = self.sweep.get("parameter", "lambda")
        raw = self.sweep.get("values", "")
        if not raw:
            return name, [self.model.lam]
        return name, [float(v) for v in raw.replace(",", " ").split()]


_MODEL_KEYS = {"n", "kernel", "beta", "gamma", "eta", "kappa0", "lambda"}


def _infer_section(key: str) -> str:
    if key in _MODEL_KEYS:
        return "model"
    if key in _RUN_KEYS:
        return "run"
    if key in _SWEEP_KEYS:
        return "sweep"
    if key in _OUTPUT_KEYS:
        return "output"
    raise ConfigError(f"--set key {key!r} matches no config section")


def _apply_overrides(config: ExperimentConfig, overrides: Sequence[str]) -> ExperimentConfig:
    if not overrides:
        return config
    text = config.to_text()
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    parser.read_string(text)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects [section.]key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, option = key.split(".", 1)
        else:
            section, option = _infer_section(key), key
        if section not in parser:
            parser.add_section(section)
        parser.set(section.strip(), option.strip(), value.strip())
    out = []
    for section in parser.sections():
        out.append(f"[{section}]")
        for option, value in parser.items(section):
            out.append(f"{option} = {value}")
    return ExperimentConfig.from_text("\n".join(out))


# =============================================================================
# Output helpers
# =============================================================================

def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _json_default(obj):
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _echo_config(config: ExperimentConfig, out_dir: Path) -> None:
    (out_dir / "config.echo.ini").write_text(config.to_text())


# =============================================================================
# Subcommands
# =============================================================================

def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("EPINET_THREADS", "")
    return max(1, int(env)) if env else 1


def _replica_chunk(task):
    params_map, count, master_seed, offset, t_max, max_events = task
    params = ModelParams.from_mapping(params_map)
    return dynamics.extinction_times(
        params,
        count,
        master_seed=master_seed,
        t_max=t_max,
        max_events=max_events,
        replica_offset=offset,
    )


def _ensemble_extinction(
    params: ModelParams, replicas: int, seed: int, t_max: float, max_events: int, threads: int
) -> np.ndarray:
    if threads <= 1:
        return dynamics.extinction_times(
            params, replicas, master_seed=seed, t_max=t_max, max_events=max_events
        )
    # contiguous replica blocks; replica i keeps its own splitmix-step seed,
    # so the concatenated result is identical for every worker count
    base = replicas // threads
    sizes = [base + (1 if i < replicas % threads else 0) for i in range(threads)]
    offsets = np.concatenate([[0], np.cumsum(sizes)])[:-1]
    tasks = [
        (params.to_mapping(), sizes[i], seed, int(offsets[i]), t_max, max_events)
        for i in range(threads)
        if sizes[i] > 0
    ]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(_replica_chunk, tasks))
    return np.concatenate(parts)


def _default_grid(t_max: float, count: int = 30) -> np.ndarray:
    # geometric spacing by default, with the known t = 0 point prepended
    return np.concatenate([[0.0], dynamics.geometric_times(t_max / 50.0, t_max, count)])


def cmd_simulate(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    obs = config.obs_times()
    if obs.size == 0:
        obs = _default_grid(config.run_float("t_max", 10.0))
    sim = dynamics.SimConfig(
        t_max=config.run_float("t_max", float(obs[-1])),
        max_events=config.run_int("max_events", 50_000_000),
        seed=config.run_int("seed", 0),
        obs_times=obs,
        star_cut=config.run_float("star_cut", 0.0),
    )
    replicas = config.run_int("replicas", 1)
    from . import _kernels

    seeds = _kernels.derive_seeds(sim.seed, replicas)
    meta_runs = []
    for i in range(replicas):
        cfg_i = dynamics.SimConfig(sim.t_max, sim.max_events, int(seeds[i]), obs, sim.star_cut)
        traj = dynamics.simulate(params, None, cfg_i)
        rows = [
            [_fmt(traj.times[k]), int(traj.infected[k]), int(traj.star_infected[k])]
            for k in range(len(traj.times))
        ]
        _write_csv(out_dir / f"trajectory_{i:04d}.csv", ["t", "infected", "star_infected"], rows)
        meta_runs.append(
            {
                "censored": bool(traj.censored),
                "events": traj.events,
                "seed": traj.seed,
                "t_ext": None if traj.censored else traj.t_ext,
            }
        )
    _write_json(
        out_dir / "runs.json",
        {"params": params.to_mapping(), "master_seed": sim.seed, "runs": meta_runs},
    )
    return EXIT_OK


def cmd_density(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    obs = config.obs_times()
    if obs.size == 0:
        obs = _default_grid(config.run_float("t_max", 60.0), count=48)
    replicas = config.run_int("replicas", 100)
    seed = config.run_int("seed", 0)
    name, values = config.sweep_values()
    if name != "lambda":
        raise ConfigError("density sweeps only support parameter = lambda")
    window = tuple(float(v) for v in config.run.get("window", "0.5 0.9").split())
    burn_in = config.run_float("burn_in", 0.25)
    rows = []
    report = {}
    for lam in values:
        p = params.with_lambda(lam)
        curve = dynamics.estimate_I_N(
            p, obs, replicas, master_seed=seed, max_events=config.run_int("max_events", 50_000_000)
        )
        est = analysis.plateau(curve, burn_in=burn_in, window=window)
        for k in range(len(obs)):
            rows.append(
                [
                    _fmt(lam),
                    _fmt(curve.times[k]),
                    _fmt(curve.mean[k]),
                    _fmt(curve.se[k]),
                    int(curve.n_surviving[k]),
                ]
            )
        report[_fmt(lam)] = {
            "rho_hat": est.rho_hat,
            "se": est.se,
            "window": list(est.window),
            "flatness": est.flatness,
            "no_plateau": est.no_plateau,
            "surviving": est.n_replicas_surviving,
        }
    _write_csv(out_dir / "density.csv", ["lambda", "t", "mean", "se", "surviving"], rows)
    payload = {"params": params.to_mapping(), "plateau": report, "replicas": replicas, "seed": seed}
    if len(values) >= 3:
        rhos = [report[_fmt(v)]["rho_hat"] for v in values]
        if all(r > 0 for r in rhos):
            fit = analysis.fit_exponent(values, rhos)
            payload["exponent_fit"] = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared}
            phase = theory.classify_phase(params.kernel, params.gamma, params.eta)
            payload["xi_theory"] = None if phase.xi is None else float(phase.xi)
    _write_json(out_dir / "plateau.json", payload)
    return EXIT_OK


def cmd_extinct(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    replicas = config.run_int("replicas", 1000)
    seed = config.run_int("seed", 0)
    t_max = config.run_float("t_max", math.inf)
    t_ext = _ensemble_extinction(
        params, replicas, seed, t_max, config.run_int("max_events", 50_000_000), _threads(args)
    )
    obs = config.obs_times()
    if obs.size == 0:
        finite = t_ext[~np.isnan(t_ext)]
        hi = float(np.quantile(finite, 0.99)) if finite.size else 1.0
        obs = np.linspace(0.0, max(hi, 1e-6), 50)
    curve = analysis.survival_from_times(t_ext, obs)
    rows = [
        [_fmt(curve.times[k]), _fmt(curve.probability[k]), _fmt(curve.wilson_low[k]), _fmt(curve.wilson_high[k])]
        for k in range(len(curve.times))
    ]
    _write_csv(out_dir / "survival.csv", ["t", "p_survive", "wilson_low", "wilson_high"], rows)
    finite = t_ext[~np.isnan(t_ext)]
    _write_json(
        out_dir / "extinction.json",
        {
            "params": params.to_mapping(),
            "replicas": replicas,
            "censored": int(np.isnan(t_ext).sum()),
            "mean_t_ext": float(finite.mean()) if finite.size else None,
            "se_t_ext": float(finite.std(ddof=1) / math.sqrt(finite.size)) if finite.size > 1 else None,
            "seed": seed,
        },
    )
    return EXIT_OK


def cmd_phase(config: ExperimentConfig, out_dir: Path, args) -> int:
    name = config.sweep.get("parameter", "gamma")
    if name != "gamma":
        raise ConfigError("phase sweeps run over parameter = gamma")
    raw = config.sweep.get("values", "")
    values = [float(v) for v in raw.replace(",", " ").split()] if raw else [config.model.gamma]
    kernel_kind = "factor" if config.model.to_mapping()["kernel"] == "factor" else "pa"
    eta = config.model.eta
    rows = []
    for g in values:
        res = theory.classify_phase(kernel_kind, Fraction(g).limit_denominator(10**6), Fraction(eta).limit_denominator(10**6))
        rows.append(
            [
                kernel_kind,
                _fmt(g),
                _fmt(eta),
                res.phase.value,
                "" if res.xi is None else _fmt(float(res.xi)),
                "" if res.dominant_strategy is None else res.dominant_strategy.value,
            ]
        )
    _write_csv(out_dir / "phase.csv", ["kernel", "gamma", "eta", "phase", "xi", "dominant_strategy"], rows)
    return EXIT_OK


def cmd_verify_lower(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    consts = theory.DEFAULT_CONSTANTS
    lam = params.lam
    conditions = {}
    for strat in theory.Strategy:
        a = theory.maximal_a(strat, lam, params, consts)
        entry = {"maximal_a": a}
        if a is not None and 0 < a < 0.5:
            entry["holds_at_0.95a"] = theory.strategy_holds(
                strat, 0.95 * a, lam, params, consts.with_m(strat, _strategy_value(strat, a, lam, params))
            )
        conditions[strat.value] = entry
    pick = theory.a0(lam, params, consts)
    _write_json(
        out_dir / "lower.json",
        {
            "params": params.to_mapping(),
            "conditions": conditions,
            "a0": None if pick is None else pick[0],
            "dominant_strategy": None if pick is None else pick[1].value,
            "lower_density_bound": theory.lower_density_bound(lam, params, consts),
            "theta": theory.theta(params),
        },
    )
    return EXIT_OK


def _strategy_value(strat: theory.Strategy, a: float, lam: float, params: ModelParams) -> float:
    ker = params.kernel
    if strat is theory.Strategy.QUICK_DIRECT:
        return lam * a * float(ker(a, a))
    if strat is theory.Strategy.QUICK_INDIRECT:
        return lam ** 2 * a * float(ker(a, 1.0)) ** 2
    t = theory.solve_T(a, lam, params)
    if strat is theory.Strategy.DELAYED_DIRECT:
        return lam * a * t * float(ker(a, a))
    return lam ** 2 * a * t * float(ker(a, 1.0)) ** 2


def cmd_verify_upper(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    d = theory.d_max(params)
    score = theory.scoring_function(params, d=d)
    payload = {
        "params": params.to_mapping(),
        "d_max": d,
        "regime": score.regime,
        "a1": score.a1,
    }
    report = theory.verify_condS(score, params, d=d, mode="global")
    payload["condS1_global"] = {
        "passed": report.passed,
        "worst_margin": report.worst_margin,
        "worst_x": report.worst_x,
    }
    if score.a1 > 0 and score.a1 * params.n >= 1:
        rep2 = theory.verify_condS(score, params, d=d, mode="cutoff")
        payload["condS2_cutoff"] = {
            "passed": rep2.passed,
            "worst_margin": rep2.worst_margin,
            "worst_x": rep2.worst_x,
        }
    if score.a1 > 0:
        payload["density_upper_bound"] = theory.density_upper_bound(score)
    _write_json(out_dir / "upper.json", payload)
    return EXIT_OK


def cmd_oracle(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    space = oracle.build_generator(params)
    payload = {
        "params": params.to_mapping(),
        "n_states": space.n_states,
        "e_t_ext": oracle.expected_extinction_time(space),
    }
    obs = config.obs_times()
    if obs.size:
        payload["density"] = {_fmt(t): oracle.exact_density(space, float(t)) for t in obs}
    _write_json(out_dir / "oracle.json", payload)
    return EXIT_OK


def cmd_couple(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    replicas = config.run_int("replicas", 100)
    seed = config.run_int("seed", 0)
    t_max = config.run_float("t_max", 10.0)
    max_events = config.run_int("max_events", 2_000_000)
    lam2 = config.run_float("lambda2", min(1.0, 2 * params.lam))
    from . import _kernels

    seeds = _kernels.derive_seeds(seed, replicas)
    mono_viol = 0
    dom_viol = 0
    rev_viol = 0
    for i in range(replicas):
        cfg = dynamics.SimConfig(t_max=t_max, max_events=max_events, seed=int(seeds[i]))
        res = dynamics.simulate_coupled_monotone(params, (params.lam, lam2), (None, None), cfg)
        mono_viol += res.violation_count
        wres = waitsee.ws_simulate_coupled(params, None, cfg)
        dom_viol += wres.domination_count
        rev_viol += wres.reveal_count
    set_a = config.vertex_set("set_a") or [1]
    set_b = config.vertex_set("set_b") or [params.n]
    gap = dynamics.estimate_duality_gap(
        params, set_a, set_b, config.run_float("duality_t", 2.0), replicas, master_seed=seed
    )
    payload = {
        "params": params.to_mapping(),
        "replicas": replicas,
        "monotone_violations": mono_viol,
        "ws_domination_violations": dom_viol,
        "ws_reveal_violations": rev_viol,
        "duality": {
            "p_ab": gap.p_ab,
            "p_ba": gap.p_ba,
            "gap": gap.gap,
            "se_gap": gap.se_gap,
            "within_3se": gap.gap < 3 * gap.se_gap + 1e-12,
        },
    }
    _write_json(out_dir / "couple.json", payload)
    if mono_viol or dom_viol or rev_viol:
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_drift(config: ExperimentConfig, out_dir: Path, args) -> int:
    params = config.model
    cfg = waitsee.ScoreConfig.for_params(params)
    audit = waitsee.drift_audit(
        params,
        cfg,
        replicas=config.run_int("replicas", 200),
        master_seed=config.run_int("seed", 0),
        t_max=config.run_float("t_max", math.inf),
        max_events=config.run_int("max_events", 1_000_000),
        min_samples=config.run_int("min_drift_samples", 0),
    )
    rows = [
        [r.event_index, _fmt(r.t), _fmt(r.m), _fmt(r.drift), _fmt(r.margin(cfg.delta))]
        for r in audit.samples
    ]
    _write_csv(out_dir / "drift.csv", ["event_index", "t", "M", "drift", "margin"], rows)
    _write_json(
        out_dir / "drift.json",
        {
            "params": params.to_mapping(),
            "samples": len(audit.samples),
            "positive_drifts": audit.n_positive,
            "worst_drift": audit.worst_drift,
            "d": cfg.d,
            "delta": cfg.delta,
        },
    )
    return EXIT_VIOLATION if audit.n_positive else EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "density": cmd_density,
    "extinct": cmd_extinct,
    "phase": cmd_phase,
    "verify-lower": cmd_verify_lower,
    "verify-upper": cmd_verify_upper,
    "oracle": cmd_oracle,
    "couple": cmd_couple,
    "drift": cmd_drift,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epinet",
        description="contact process on fast-evolving scale-free networks",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="experiment config path")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override a config entry (repeatable)",
    )
    parser.add_argument("--seed", type=int, default=None, help="override [run] seed")
    parser.add_argument("--threads", type=int, default=None, help="worker processes (or EPINET_THREADS)")
    parser.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = ExperimentConfig.from_file(args.config)
        config = _apply_overrides(config, args.overrides)
        if args.seed is not None:
            config = _apply_overrides(config, [f"run.seed={args.seed}"])
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        _echo_config(config, out_dir)
        return _COMMANDS[args.command](config, out_dir, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures exit 1 per contract
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
