"""Single command-line entry point: sample, solve, verify.

Every run is driven by one versioned JSON config; all randomness flows
from its single master seed (or the ``--seed`` override), so any output
is reproducible from the config file alone.  Unknown config keys are
rejected rather than ignored.

Exit codes: 0 success, 2 validation/config error, 3 numerical error,
4 experiment failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import coefficients as coef
from . import experiments as exp
from .errors import (
    ConfigError,
    ExperimentFailure,
    NumericalError,
    ParameterError,
    StableHeatError,
)
from .noise import (
    SpaceTimeDomain,
    StableParams,
    TruncationSpec,
    expected_jump_count,
    sample_noise,
)
from .solvers import (
    GridSpec,
    ProblemSpec,
    grid_h_norm,
    solve_galerkin,
    solve_mild,
    spectral_to_grid,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_EXPERIMENT = 4

CONFIG_VERSION = 1

# Fixed execution order so report files are written deterministically.
EXPERIMENT_ORDER = (
    "stopping_law",
    "consistency",
    "galerkin_convergence",
    "moment_estimate",
    "comparison",
    "nonnegativity",
)


def _require_keys(section: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing key(s) {sorted(missing)} in {where}")


def _parse_coefficient(section: dict, length_L: float, where: str):
    _require_keys(
        section,
        {"family", "params", "lipschitz_bound", "growth_bound", "monotone_in_u"},
        {"family"},
        where,
    )
    family = section["family"]
    params = dict(section.get("params", {}))
    try:
        if family == "zero":
            spec = coef.zero()
        elif family == "constant":
            spec = coef.constant(params.pop("value"))
        elif family == "affine":
            spec = coef.affine(params.pop("a"), params.pop("b"))
        elif family == "clipped_linear":
            spec = coef.clipped_linear(params.pop("slope"), params.pop("cap"))
        elif family == "sine_modulated":
            spec = coef.sine_modulated(
                params.pop("amplitude"),
                params.pop("mode"),
                params.pop("u_slope", 0.0),
                params.pop("length", length_L),
            )
        elif family == "shifted":
            base = _parse_coefficient(
                params.pop("base"), length_L, where + ".base"
            )
            spec = coef.shifted(base, params.pop("delta"))
        else:
            raise ConfigError(f"unknown coefficient family {family!r} in {where}")
    except KeyError as exc:
        raise ConfigError(f"missing coefficient parameter {exc} in {where}") from exc
    if params:
        raise ConfigError(f"unknown coefficient parameter(s) {sorted(params)} in {where}")
    overrides = {}
    for key in ("lipschitz_bound", "growth_bound", "monotone_in_u"):
        if key in section:
            overrides[key] = section[key]
    return replace(spec, **overrides) if overrides else spec


def _parse_initial(section: dict, length_L: float, where: str):
    _require_keys(section, {"family", "params"}, {"family"}, where)
    family = section["family"]
    params = dict(section.get("params", {}))
    try:
        if family == "zero":
            ic = coef.ic_zero()
        elif family == "constant":
            ic = coef.ic_constant(params.pop("value"))
        elif family == "sine_mode":
            ic = coef.ic_sine_mode(
                params.pop("mode"),
                params.pop("amplitude"),
                params.pop("length", length_L),
            )
        elif family == "bump":
            ic = coef.ic_bump(
                params.pop("amplitude"), params.pop("center"), params.pop("width")
            )
        elif family == "tabulated":
            ic = coef.ic_tabulated(params.pop("xs"), params.pop("values"))
        else:
            raise ConfigError(f"unknown initial-condition family {family!r} in {where}")
    except KeyError as exc:
        raise ConfigError(f"missing initial-condition parameter {exc} in {where}") from exc
    if params:
        raise ConfigError(
            f"unknown initial-condition parameter(s) {sorted(params)} in {where}"
        )
    return ic


def _parse_grid(section: dict, where: str) -> GridSpec:
    _require_keys(section, {"n_t", "n_x"}, {"n_t", "n_x"}, where)
    return GridSpec(int(section["n_t"]), int(section["n_x"]))


@dataclass
class RunConfig:
    """Validated configuration with all module objects materialized."""

    master_seed: int
    problem: ProblemSpec
    grid: GridSpec
    solver_method: str
    solver_tol: float
    solver_window_steps: int
    solver_modes: int
    experiments: dict
    output_dir: str
    effective: dict

    @staticmethod
    def parse(raw: dict, *, seed_override: int | None = None) -> "RunConfig":
        top_allowed = {
            "version",
            "master_seed",
            "stable",
            "truncation",
            "domain",
            "grid",
            "coefficients",
            "initial",
            "solver",
            "experiments",
            "output_dir",
        }
        required = {
            "version",
            "master_seed",
            "stable",
            "truncation",
            "domain",
            "grid",
            "coefficients",
            "initial",
        }
        _require_keys(raw, top_allowed, required, "config")
        if raw["version"] != CONFIG_VERSION:
            raise ConfigError(
                f"unsupported config version {raw['version']!r}; expected "
                f"{CONFIG_VERSION}"
            )

        sec = raw["stable"]
        _require_keys(sec, {"alpha", "c_plus", "c_minus"}, {"alpha", "c_plus", "c_minus"}, "stable")
        params = StableParams(float(sec["alpha"]), float(sec["c_plus"]), float(sec["c_minus"]))

        sec = raw["truncation"]
        _require_keys(
            sec,
            {"big_cutoff_K", "small_cutoff_eps", "gaussian_correction"},
            {"big_cutoff_K", "small_cutoff_eps"},
            "truncation",
        )
        trunc = TruncationSpec(
            float(sec["big_cutoff_K"]),
            float(sec["small_cutoff_eps"]),
            bool(sec.get("gaussian_correction", False)),
        )

        sec = raw["domain"]
        _require_keys(sec, {"horizon_T", "length_L"}, {"horizon_T", "length_L"}, "domain")
        dom = SpaceTimeDomain(float(sec["horizon_T"]), float(sec["length_L"]))

        grid = _parse_grid(raw["grid"], "grid")

        sec = raw["coefficients"]
        _require_keys(sec, {"drift", "noise_coef"}, {"drift", "noise_coef"}, "coefficients")
        drift = _parse_coefficient(sec["drift"], dom.length_L, "coefficients.drift")
        noise_coef = _parse_coefficient(
            sec["noise_coef"], dom.length_L, "coefficients.noise_coef"
        )
        init = _parse_initial(raw["initial"], dom.length_L, "initial")
        problem = ProblemSpec(params, trunc, dom, drift, noise_coef, init)

        solver = dict(raw.get("solver", {}))
        _require_keys(
            solver, {"method", "tol", "window_steps", "modes"}, set(), "solver"
        )
        method = solver.get("method", "mild")
        if method not in ("mild", "galerkin", "both"):
            raise ConfigError("solver.method must be one of mild, galerkin, both")
        tol = float(solver.get("tol", 1e-10))
        window_steps = int(solver.get("window_steps", 4))
        modes = int(solver.get("modes", min(16, grid.n_x // 4)))

        experiments = dict(raw.get("experiments", {}))
        unknown = set(experiments) - set(EXPERIMENT_ORDER)
        if unknown:
            raise ConfigError(f"unknown experiment(s) {sorted(unknown)}")

        master_seed = int(raw["master_seed"]) if seed_override is None else int(seed_override)
        effective = {
            "version": CONFIG_VERSION,
            "master_seed": master_seed,
            "stable": {"alpha": params.alpha, "c_plus": params.c_plus, "c_minus": params.c_minus},
            "truncation": {
                "big_cutoff_K": trunc.big_cutoff_K,
                "small_cutoff_eps": trunc.small_cutoff_eps,
                "gaussian_correction": trunc.gaussian_correction,
            },
            "domain": {"horizon_T": dom.horizon_T, "length_L": dom.length_L},
            "grid": {"n_t": grid.n_t, "n_x": grid.n_x},
            "coefficients": {
                "drift": drift.canonical(),
                "noise_coef": noise_coef.canonical(),
            },
            "initial": init.canonical(),
            "solver": {
                "method": method,
                "tol": tol,
                "window_steps": window_steps,
                "modes": modes,
            },
            "experiments": experiments,
            "output_dir": raw.get("output_dir", "stableheat-out"),
        }
        return RunConfig(
            master_seed=master_seed,
            problem=problem,
            grid=grid,
            solver_method=method,
            solver_tol=tol,
            solver_window_steps=window_steps,
            solver_modes=modes,
            experiments=experiments,
            output_dir=effective["output_dir"],
            effective=effective,
        )


def _load_config(path: str, seed_override: int | None) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return RunConfig.parse(raw, seed_override=seed_override)


def _write_json(path: str, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _echo_config(cfg: RunConfig, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "effective_config.json"), cfg.effective)


def _config_hash(cfg: RunConfig) -> str:
    blob = json.dumps(cfg.effective, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# -- subcommands ----------------------------------------------------------


def cmd_sample_noise(cfg: RunConfig, out_dir: str) -> int:
    """Write one noise realization in the columnar format plus metadata."""
    _echo_config(cfg, out_dir)
    noise_dir = os.path.join(out_dir, "noise")
    os.makedirs(noise_dir, exist_ok=True)
    realization = sample_noise(
        cfg.problem.params, cfg.problem.trunc, cfg.problem.dom, cfg.master_seed
    )
    base = os.path.join(noise_dir, f"noise_seed{cfg.master_seed}")
    realization.save_text(base + ".txt")
    _write_json(
        base + ".meta.json",
        {
            "config_hash": _config_hash(cfg),
            "seed": cfg.master_seed,
            "n_jumps": realization.jump_count,
            "compensator_mu": realization.compensator_mu,
            "expected_jump_count": expected_jump_count(
                cfg.problem.params, cfg.problem.trunc, cfg.problem.dom
            ),
        },
    )
    return EXIT_OK


def cmd_solve(cfg: RunConfig, out_dir: str, threads: int = 1) -> int:
    """Run the selected solver(s) and write CSV + metadata (+ discrepancy)."""
    _echo_config(cfg, out_dir)
    sol_dir = os.path.join(out_dir, "solutions")
    os.makedirs(sol_dir, exist_ok=True)
    cfg.problem.validate()
    realization = sample_noise(
        cfg.problem.params, cfg.problem.trunc, cfg.problem.dom, cfg.master_seed
    )
    written = {}
    if cfg.solver_method in ("mild", "both"):
        sol = solve_mild(
            cfg.problem,
            realization,
            cfg.grid,
            tol=cfg.solver_tol,
            window_steps=cfg.solver_window_steps,
        )
        sol.save_csv(os.path.join(sol_dir, "mild.csv"))
        meta = sol.metadata()
        meta.update({"config_hash": _config_hash(cfg), "seed": cfg.master_seed})
        _write_json(os.path.join(sol_dir, "mild.meta.json"), meta)
        written["mild"] = sol
    if cfg.solver_method in ("galerkin", "both"):
        spectral = solve_galerkin(cfg.problem, realization, cfg.solver_modes, cfg.grid)
        sol = spectral_to_grid(spectral, cfg.grid)
        sol.save_csv(os.path.join(sol_dir, "galerkin.csv"))
        meta = sol.metadata()
        meta.update({"config_hash": _config_hash(cfg), "seed": cfg.master_seed})
        _write_json(os.path.join(sol_dir, "galerkin.meta.json"), meta)
        written["galerkin"] = sol
    if cfg.solver_method == "both":
        mild, galerkin = written["mild"], written["galerkin"]
        diff = np.abs(mild.values - galerkin.values)
        dx = cfg.grid.dx(cfg.problem.dom.length_L)
        _write_json(
            os.path.join(sol_dir, "discrepancy.json"),
            {
                "max_abs_difference": float(diff.max()),
                "max_h_norm_difference": float(
                    max(grid_h_norm(row, dx) for row in mild.values - galerkin.values)
                ),
                "modes": cfg.solver_modes,
            },
        )
    return EXIT_OK


def _run_one_experiment(name: str, section: dict, cfg: RunConfig, threads: int):
    section = dict(section)
    grid_section = section.pop("grid", None)
    grid = (
        _parse_grid(grid_section, f"{name}.grid")
        if grid_section is not None
        else cfg.grid
    )
    problem = cfg.problem
    ws = cfg.solver_window_steps
    if name == "stopping_law":
        _require_keys(section, {"K", "n_paths", "observe_factor"}, {"K", "n_paths"}, name)
        return exp.run_stopping_law(
            problem.params,
            float(section["K"]),
            problem.dom,
            int(section["n_paths"]),
            cfg.master_seed,
            observe_factor=float(section.get("observe_factor", 1000.0)),
            threads=threads,
        )
    if name == "consistency":
        _require_keys(section, {"K_small", "K_large", "n_paths"}, {"K_small", "K_large"}, name)
        return exp.run_consistency(
            problem,
            cfg.master_seed,
            float(section["K_small"]),
            float(section["K_large"]),
            grid,
            n_paths=int(section.get("n_paths", 1)),
            window_steps=ws,
        )
    if name == "galerkin_convergence":
        _require_keys(section, {"m_list"}, {"m_list"}, name)
        return exp.run_galerkin_convergence(
            problem, cfg.master_seed, section["m_list"], grid, window_steps=ws,
            threads=threads,
        )
    if name == "moment_estimate":
        _require_keys(section, {"n_paths", "p"}, {"n_paths"}, name)
        return exp.run_moment_estimate(
            problem,
            grid,
            int(section["n_paths"]),
            float(section.get("p", 2.0)),
            cfg.master_seed,
            threads=threads,
            window_steps=ws,
        )
    if name == "comparison":
        _require_keys(section, {"n_paths", "problem_u", "tol"}, {"n_paths", "problem_u"}, name)
        pu_sec = section["problem_u"]
        _require_keys(pu_sec, {"drift", "initial"}, {"drift"}, "comparison.problem_u")
        drift_u = _parse_coefficient(
            pu_sec["drift"], problem.dom.length_L, "comparison.problem_u.drift"
        )
        init_u = (
            _parse_initial(
                pu_sec["initial"], problem.dom.length_L, "comparison.problem_u.initial"
            )
            if "initial" in pu_sec
            else problem.init
        )
        problem_u = replace(problem, drift=drift_u, init=init_u)
        tol = section.get("tol")
        return exp.run_comparison(
            problem_u,
            problem,
            grid,
            int(section["n_paths"]),
            cfg.master_seed,
            tol=None if tol is None else float(tol),
            threads=threads,
            window_steps=ws,
        )
    if name == "nonnegativity":
        _require_keys(section, {"n_paths", "tol"}, {"n_paths"}, name)
        tol = section.get("tol")
        return exp.run_nonnegativity(
            problem,
            grid,
            int(section["n_paths"]),
            cfg.master_seed,
            tol=None if tol is None else float(tol),
            threads=threads,
            window_steps=ws,
        )
    raise ConfigError(f"unknown experiment {name!r}")


def cmd_verify(cfg: RunConfig, out_dir: str, threads: int = 1) -> int:
    """Run every selected experiment; exit 0 only if all pass."""
    if not cfg.experiments:
        raise ConfigError("verify requires at least one experiment in the config")
    _echo_config(cfg, out_dir)
    report_dir = os.path.join(out_dir, "reports")
    os.makedirs(report_dir, exist_ok=True)
    outcomes = []
    for name in EXPERIMENT_ORDER:
        if name not in cfg.experiments:
            continue
        report = _run_one_experiment(name, cfg.experiments[name], cfg, threads)
        report.write(report_dir)
        outcomes.append((name, report.passed))
    _write_json(
        os.path.join(report_dir, "summary.json"),
        {
            "config_hash": _config_hash(cfg),
            "results": {name: passed for name, passed in outcomes},
            "all_passed": all(p for _, p in outcomes),
        },
    )
    failing = [name for name, passed in outcomes if not passed]
    if failing:
        print(f"experiment failed: {failing[0]} (see {report_dir})", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="stableheat",
        description="Sampling, solving, and verification for the truncated "
        "jump-noise heat equation laboratory.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("sample-noise", None),
        ("solve", None),
        ("verify", None),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=1, help="path-level workers")

    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args.config, args.seed)
        out_dir = args.out or cfg.output_dir
        if args.command == "sample-noise":
            return cmd_sample_noise(cfg, out_dir)
        if args.command == "solve":
            return cmd_solve(cfg, out_dir, threads=args.threads)
        return cmd_verify(cfg, out_dir, threads=args.threads)
    except ParameterError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ExperimentFailure as exc:
        print(f"experiment failure: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except StableHeatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
