"""Config-driven experiment runner.

Subcommands reproduce the benchmark convergence figures and the estimator bias
studies: each writes a CSV table (pinned schema below), a slope-summary CSV
where a decay is expected, and a rendered log-log figure next to the data.

    polex weak-sweep      --preset fig1_drift [--config cfg.toml] [--fast]
    polex strong-sweep    --preset fig1_drift
    polex counterexample
    polex estimator-study --study pg --preset lq_pg
    polex plots --out <dir with CSVs>

Exit codes: 0 success, 2 config/IO error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import estimators, rng
from .analysis import SlopeFit, SweepSeries, complexity_report, fit_loglog
from .errors import ConfigError, NumericsError
from .estimators import TestFunctionSpec
from .presets import get_preset, preset_names

CSV_HEADER = "study,preset,n,m,run,mean,std_error,seed,wall_ms"
SUMMARY_HEADER = "study,preset,slope,ci_low,ci_high,r_squared,resamples"

_NAMED_TEST_FUNCTIONS = {
    "tanh": lambda x: np.tanh(x[..., 0]),
    "identity": lambda x: x[..., 0],
}

DEFAULT_GRID_SIZES = (2, 4, 8, 16, 32, 64, 128, 256)


@dataclass
class ExperimentConfig:
    """One experiment: preset plus sweep/budget parameters.

    Defaults follow the benchmark setup: horizon 1, 50000 paths, 100 outer
    runs, 1000 bootstrap resamples, grid sizes 2..256.  ``fast`` switches to
    the desk-scale profile (5000 paths, 10 runs) used by CI pipelines.
    """

    preset: str = "fig1_drift"
    grid_sizes: tuple = DEFAULT_GRID_SIZES
    paths: int = 50_000
    runs: int = 100
    master_seed: int = 20_240_801
    horizon: float = 1.0
    test_function: Optional[tuple] = None  # ("monomial", power) | ("named", name)
    lattice_factor: Optional[int] = None   # None -> preset default
    output_dir: str = "polex_out"
    resamples: int = 1000
    workers: int = 1
    epsilon: float = 0.1   # budget parameter of the shared-vs-naive study
    rho: float = 0.05      # tail probability of conditional-error quantiles
    k_outer: int = 200
    m_inner: Optional[int] = None

    def validate(self) -> "ExperimentConfig":
        if not self.grid_sizes:
            raise ConfigError("grid_sizes must be nonempty")
        if any(int(n) < 1 for n in self.grid_sizes):
            raise ConfigError("grid sizes must be >= 1")
        if list(self.grid_sizes) != sorted(set(int(n) for n in self.grid_sizes)):
            raise ConfigError("grid sizes must be strictly increasing")
        if self.paths < 2:
            raise ConfigError("paths must be >= 2")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.horizon <= 0.0:
            raise ConfigError("horizon must be positive")
        if self.lattice_factor is not None and self.lattice_factor < 1:
            raise ConfigError("lattice_factor must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if not (0.0 < self.rho < 1.0):
            raise ConfigError("rho must be in (0, 1)")
        return self

    def fast_profile(self) -> "ExperimentConfig":
        return dataclasses.replace(self, paths=5000, runs=10)

    def hash(self) -> str:
        parts = []
        for f in dataclasses.fields(self):
            parts.append(f"{f.name}={getattr(self, f.name)!r}")
        return hashlib.sha256(";".join(parts).encode()).hexdigest()[:12]


def _tf_from_spec(spec: Optional[tuple], preset) -> TestFunctionSpec:
    if spec is None:
        return preset.f
    kind = spec[0]
    if kind == "monomial":
        return TestFunctionSpec.monomial(int(spec[1]))
    if kind == "named":
        name = spec[1]
        if name not in _NAMED_TEST_FUNCTIONS:
            raise ConfigError(f"unknown named test function {name!r}; "
                              f"known: {sorted(_NAMED_TEST_FUNCTIONS)}")
        return TestFunctionSpec.custom(_NAMED_TEST_FUNCTIONS[name], name)
    raise ConfigError(f"unknown test function spec {spec!r}")


def load_config(path: str) -> ExperimentConfig:
    """Parse a TOML config file into an ExperimentConfig."""
    try:
        import tomllib  # Python >= 3.11
    except ImportError:  # pragma: no cover - depends on interpreter
        import tomli as tomllib
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except Exception as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}")
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs = dict(raw)
    if "grid_sizes" in kwargs:
        kwargs["grid_sizes"] = tuple(int(n) for n in kwargs["grid_sizes"])
    if "test_function" in kwargs:
        tf = kwargs["test_function"]
        if not isinstance(tf, dict) or "kind" not in tf:
            raise ConfigError("test_function must be a table with a 'kind' key")
        if tf["kind"] == "monomial":
            kwargs["test_function"] = ("monomial", int(tf.get("power", 4)))
        elif tf["kind"] == "named":
            kwargs["test_function"] = ("named", str(tf["name"]))
        else:
            raise ConfigError(f"unknown test function kind {tf['kind']!r}")
    try:
        return ExperimentConfig(**kwargs).validate()
    except TypeError as exc:
        raise ConfigError(f"bad config: {exc}")


# ---------------------------------------------------------------------------
# task execution (module-level so process pools can pickle task tuples)

def _execute_task(task: dict) -> tuple:
    preset = get_preset(task["preset"])
    lattice_factor = task["lattice_factor"]
    tf = _tf_from_spec(task.get("tf"), preset)
    kw = dict(horizon=task["horizon"], lattice_factor=lattice_factor)
    t0 = time.perf_counter()
    study = task["study"]
    if study == "weak":
        res = estimators.weak_error(preset.dynamics, preset.policy, preset.agg, tf,
                                    task["n"], task["m"], task["seed"], **kw)
    elif study in ("strong", "counterexample"):
        res = estimators.strong_error(preset.dynamics, preset.policy, preset.agg,
                                      task["n"], task["m"], task["seed"],
                                      norm="terminal", p=2, **kw)
    elif study == "value":
        res = estimators.value_gap(preset.dynamics, preset.policy, preset.agg,
                                   task["n"], task["m"], task["seed"], **kw)
    elif study == "td":
        res = estimators.td_residual(preset.dynamics, preset.policy, preset.toolkit,
                                     task["n"], task["m"], task["seed"], **kw)
    elif study == "pg":
        res = estimators.policy_gradient_estimate(preset.dynamics, preset.policy,
                                                  preset.toolkit, task["n"], task["m"],
                                                  task["seed"], **kw)
    elif study == "qv":
        res = estimators.quadratic_variation_estimate(preset.dynamics, preset.policy,
                                                      preset.toolkit, task["n"], task["m"],
                                                      task["seed"], **kw)
    elif study == "shared":
        res = estimators.shared_noise_estimate(preset.dynamics, preset.policy, tf,
                                               task["n"], task["m"], task["seed"], **kw)
    elif study == "naive":
        res = estimators.naive_estimate(preset.dynamics, preset.policy, tf,
                                        task["n"], task["m"], task["seed"], **kw)
    else:
        raise ConfigError(f"unknown study {study!r}")
    wall_ms = (time.perf_counter() - t0) * 1e3
    return (study, task["preset"], task["n"], task["m"], task["run"],
            res.mean, res.std_error, task["seed"], wall_ms)


def _run_tasks(tasks: list, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [_execute_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_task, tasks, chunksize=1))


# ---------------------------------------------------------------------------
# output files

def _write_csv(path: Path, rows: Sequence[tuple], config: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        fh.write(f"# polex master_seed={config.master_seed} config_hash={config.hash()}\n")
        fh.write(CSV_HEADER + "\n")
        for study, preset, n, m, run, mean, sem, seed, wall_ms in rows:
            fh.write(f"{study},{preset},{n},{m},{run},{mean:.17g},{sem:.17g},"
                     f"{seed},{wall_ms:.3f}\n")


def _write_summary(path: Path, study: str, preset: str, fit: SlopeFit) -> None:
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        fh.write(f"{study},{preset},{fit.slope:.17g},{fit.ci_low:.17g},"
                 f"{fit.ci_high:.17g},{fit.r_squared:.17g},{fit.resamples}\n")


def _aggregate_runs(rows: list, grid_sizes, use_abs: bool) -> SweepSeries:
    """Per-n average over outer runs; spread across runs gives the std error."""
    points = []
    for n in grid_sizes:
        means = np.array([r[5] for r in rows if r[2] == n])
        sems = np.array([r[6] for r in rows if r[2] == n])
        avg = float(np.mean(means))
        if len(means) > 1:
            sem = float(np.std(means, ddof=1) / math.sqrt(len(means)))
        else:
            sem = float(sems[0])
        points.append((n, abs(avg) if use_abs else avg, sem))
    return SweepSeries(points=tuple(points), label="")


def _fit_or_notice(series: SweepSeries, config: ExperimentConfig, study: str,
                   out_dir: Path, preset_name: str) -> Optional[SlopeFit]:
    if len(series.points) < 3:
        print(f"[{study}] need >=3 grid sizes for a slope fit; skipping fit")
        return None
    if any(v <= 0.0 for v in series.values):
        print(f"[{study}] nonpositive values in the sweep (noise floor or exact zero); "
              f"skipping fit")
        return None
    fit = fit_loglog(series, resamples=config.resamples, seed=config.master_seed)
    _write_summary(out_dir / f"{study}_{preset_name}_summary.csv", study, preset_name, fit)
    print(fit.summary(label=f"{study}/{preset_name}"))
    return fit


def _sweep(config: ExperimentConfig, study: str) -> int:
    from .figures import render_sweep_figure

    preset = get_preset(config.preset)
    lattice_factor = config.lattice_factor or preset.lattice_factor
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = []
    for n in config.grid_sizes:
        for run in range(config.runs):
            tasks.append(dict(study=study, preset=config.preset, n=int(n), m=config.paths,
                              run=run, seed=rng.derive_seed(config.master_seed, run),
                              horizon=config.horizon, lattice_factor=lattice_factor,
                              tf=config.test_function))
    rows = _run_tasks(tasks, config.workers)
    _write_csv(out_dir / f"{study}_{config.preset}.csv", rows, config)
    series = _aggregate_runs(rows, config.grid_sizes, use_abs=(study == "weak"))
    fit = _fit_or_notice(series, config, study, out_dir, config.preset)

    ref = None
    ref_key = "weak_true" if study == "weak" else "strong_rmse"
    if ref_key in preset.references:
        ref = np.array([preset.references[ref_key](n, config.horizon)
                        for n in config.grid_sizes])
    ylabel = "weak error" if study == "weak" else "RMSE"
    png = render_sweep_figure(
        dataclasses.replace(series, label=f"{study} {config.preset}"), fit,
        out_dir / f"{study}_{config.preset}.png",
        title=f"{study} sweep, preset {config.preset}",
        ylabel=ylabel, reference=ref)
    print(f"wrote {out_dir / f'{study}_{config.preset}.csv'} and {png}")
    if study == "counterexample" and "strong_rmse" in preset.references:
        level = preset.references["strong_rmse"](config.grid_sizes[0], config.horizon)
        print(f"[counterexample] theoretical non-vanishing RMSE level: {level:.6f}")
        for (n, v, s) in series.points:
            print(f"[counterexample] n={n}: RMSE={v:.6f} (+/- {s:.2g})")
    return 0


def run_weak_sweep(config: ExperimentConfig) -> int:
    """Weak-error sweep: per-run CSV, run-averaged slope fit, figure."""
    return _sweep(config, "weak")


def run_strong_sweep(config: ExperimentConfig) -> int:
    """Strong (pathwise RMSE) sweep with the same outputs."""
    return _sweep(config, "strong")


_STUDIES = ("value", "cond_value", "td", "pg", "qv", "shared_vs_naive", "cond_weak")


def run_estimator_study(config: ExperimentConfig, which: str) -> int:
    """Bias-versus-grid-size table for one estimator family."""
    from .figures import render_sweep_figure

    if which not in _STUDIES:
        raise ConfigError(f"unknown study {which!r}; known: {_STUDIES}")
    preset = get_preset(config.preset)
    lattice_factor = config.lattice_factor or preset.lattice_factor
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if which in ("td", "pg", "qv") and preset.toolkit is None:
        raise ConfigError(f"preset {config.preset!r} supplies no value toolkit "
                          f"for study {which!r}")

    if which == "shared_vs_naive":
        eps = config.epsilon
        m = n = math.ceil(eps ** -2 * (1.0 + math.log(2.0 / eps)))
        rows = []
        tf = config.test_function or ("named", "tanh")
        for run in range(config.runs):
            seed = rng.derive_seed(config.master_seed, run)
            for study in ("shared", "naive"):
                rows.extend(_run_tasks([dict(study=study, preset=config.preset, n=n, m=m,
                                             run=run, seed=seed, horizon=config.horizon,
                                             lattice_factor=lattice_factor, tf=tf)], 1))
        _write_csv(out_dir / f"shared_vs_naive_{config.preset}.csv", rows, config)
        shared_draws, _ = complexity_report("shared", m, n)
        naive_draws, _ = complexity_report("naive", m, n)
        print(f"budget epsilon={eps}: m = n = {m}")
        print(f"complexity shared = m + n = {shared_draws} noise streams")
        print(f"complexity naive  = m(1 + n) = {naive_draws} noise streams "
              f"(~epsilon^-3 scale)")
        return 0

    if which == "cond_weak":
        tf = _tf_from_spec(config.test_function, preset)
        m_inner_base = config.m_inner
        rows = []
        points = []
        for n in config.grid_sizes:
            m_inner = m_inner_base or max(1000, 20 * int(n))
            t0 = time.perf_counter()
            q = estimators.conditional_weak_error_quantile(
                preset.dynamics, preset.policy, preset.agg, tf, int(n), m_inner,
                config.k_outer, config.rho, config.master_seed,
                horizon=config.horizon, lattice_factor=lattice_factor)
            wall = (time.perf_counter() - t0) * 1e3
            rows.append(("cond_weak", config.preset, int(n), m_inner, 0, q, 0.0,
                         config.master_seed, wall))
            points.append((int(n), q, 0.0))
            ref = preset.references.get("conditional_quantile")
            # the closed form is for the identity test function only
            extra = ""
            if ref is not None and tf.kind == "monomial" and tf.power == 1:
                extra = f" (closed form {ref(n, config.horizon):.6f})"
            print(f"[cond_weak] n={n}: {1 - config.rho:.0%} quantile = {q:.6f}{extra}")
        _write_csv(out_dir / f"cond_weak_{config.preset}.csv", rows, config)
        series = SweepSeries(points=tuple(points), label=f"cond_weak {config.preset}")
        fit = _fit_or_notice(series, config, "cond_weak", out_dir, config.preset)
        render_sweep_figure(series, fit, out_dir / f"cond_weak_{config.preset}.png",
                            title=f"conditional weak error, preset {config.preset}",
                            ylabel="quantile of conditional error")
        return 0

    if which == "cond_value":
        ref = estimators.value_aggregated(preset.agg, preset.policy, preset.dynamics,
                                          n_lattice=max(config.grid_sizes) * lattice_factor,
                                          m=config.paths, seed=rng.derive_seed(config.master_seed, 10 ** 6),
                                          horizon=config.horizon)
        rows = []
        points = []
        for n in config.grid_sizes:
            vals = []
            for run in range(config.runs):
                t0 = time.perf_counter()
                res = estimators.conditional_value(
                    preset.dynamics, preset.policy, int(n), config.paths,
                    xi_seed=rng.derive_seed(config.master_seed, 5000 + run),
                    seed=rng.derive_seed(config.master_seed, run),
                    horizon=config.horizon, lattice_factor=lattice_factor)
                wall = (time.perf_counter() - t0) * 1e3
                rows.append(("cond_value", config.preset, int(n), config.paths, run,
                             res.mean, res.std_error, res.seed, wall))
                vals.append(res.mean)
            spread = float(np.quantile(np.abs(np.array(vals) - ref.mean), 1 - config.rho))
            points.append((int(n), spread, 0.0))
            print(f"[cond_value] n={n}: |J(xi) - J~| {1 - config.rho:.0%} quantile "
                  f"= {spread:.6f}")
        _write_csv(out_dir / f"cond_value_{config.preset}.csv", rows, config)
        series = SweepSeries(points=tuple(points), label=f"cond_value {config.preset}")
        fit = _fit_or_notice(series, config, "cond_value", out_dir, config.preset)
        render_sweep_figure(series, fit, out_dir / f"cond_value_{config.preset}.png",
                            title=f"conditional value concentration, {config.preset}",
                            ylabel="quantile of |J(xi) - J~|")
        return 0

    # plain bias-versus-n studies: value, td, pg, qv
    tasks = []
    for n in config.grid_sizes:
        for run in range(config.runs):
            tasks.append(dict(study=which, preset=config.preset, n=int(n), m=config.paths,
                              run=run, seed=rng.derive_seed(config.master_seed, run),
                              horizon=config.horizon, lattice_factor=lattice_factor,
                              tf=config.test_function))
    rows = _run_tasks(tasks, config.workers)
    _write_csv(out_dir / f"{which}_{config.preset}.csv", rows, config)

    target = 0.0
    if which == "pg" and "true_gradient" in preset.references:
        target = preset.references["true_gradient"](config.horizon)
    elif which == "qv" and "limit" in preset.references:
        target = preset.references["limit"](config.horizon)
    points = []
    for n in config.grid_sizes:
        means = np.array([r[5] for r in rows if r[2] == n])
        avg = float(np.mean(means))
        sem = (float(np.std(means, ddof=1) / math.sqrt(len(means)))
               if len(means) > 1 else float(next(r[6] for r in rows if r[2] == n)))
        points.append((int(n), abs(avg - target), sem))
        print(f"[{which}] n={n}: mean={avg:.6f} (+/- {sem:.2g}), |bias|={abs(avg - target):.6f}")
    series = SweepSeries(points=tuple(points), label=f"{which} {config.preset}")
    fit = _fit_or_notice(series, config, which, out_dir, config.preset)
    render_sweep_figure(series, fit, out_dir / f"{which}_{config.preset}.png",
                        title=f"{which} bias, preset {config.preset}", ylabel="|bias|")
    return 0


_PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Standalone renderer for polex sweep CSVs (schema: __SCHEMA__)."""
import csv
import math
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

SCHEMA = "__SCHEMA__"

def main(csv_dir="."):
    groups = defaultdict(lambda: defaultdict(list))
    for path in sorted(Path(csv_dir).glob("*.csv")):
        with open(path) as fh:
            first = fh.readline()
            header = fh.readline() if first.startswith("#") else first
            if header.strip() != SCHEMA:
                continue
            for row in csv.DictReader(fh, fieldnames=SCHEMA.split(",")):
                key = (row["study"], row["preset"])
                groups[key][int(row["n"])].append(
                    (float(row["mean"]), float(row["std_error"])))
    if not groups:
        print("no CSV found", file=sys.stderr)
        return 2
    for (study, preset), by_n in groups.items():
        ns = sorted(by_n)
        means, bands = [], []
        for n in ns:
            vals = [abs(v) for v, _ in by_n[n]]
            mu = sum(vals) / len(vals)
            if len(vals) > 1:
                var = sum((v - mu) ** 2 for v in vals) / (len(vals) - 1)
                sem = math.sqrt(var / len(vals))
            else:
                sem = by_n[n][0][1]
            means.append(mu)
            bands.append(1.96 * sem)
        fig, ax = plt.subplots(figsize=(5.0, 3.6))
        ax.errorbar(ns, means, yerr=bands, fmt="o-", capsize=3)
        ax.fill_between(ns, [max(m - b, 1e-300) for m, b in zip(means, bands)],
                        [m + b for m, b in zip(means, bands)], alpha=0.25)
        ax.set_xscale("log", base=2)
        if min(means) > 0 and max(means) / max(min(means), 1e-300) > 1.5:
            ax.set_yscale("log")
        ax.set_xlabel("grid points n")
        ax.set_ylabel("error")
        ax.set_title(study + " / " + preset + " (95% bands)")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        out = Path(csv_dir) / (study + "_" + preset + "_replot.png")
        fig.savefig(out, dpi=150)
        plt.close(fig)
        print("wrote " + str(out))
    return 0

if __name__ == "__main__":
    sys.exit(main(sys.argv[1] if len(sys.argv) > 1 else "."))
'''


def emit_plots(csv_dir: str) -> int:
    """Write a standalone plotting script next to the CSVs (not executed)."""
    directory = Path(csv_dir)
    candidates = sorted(directory.glob("*.csv")) if directory.is_dir() else []
    usable = []
    for path in candidates:
        with open(path) as fh:
            first = fh.readline().strip()
            second = fh.readline().strip()
        if first == CSV_HEADER or second == CSV_HEADER:
            usable.append(path)
    if not usable:
        raise ConfigError(f"no CSV found with schema '{CSV_HEADER}' in {csv_dir}")
    script = directory / "plot_results.py"
    with open(script, "w") as fh:
        fh.write(_PLOT_SCRIPT.replace("__SCHEMA__", CSV_HEADER))
    print(f"wrote {script} (run `python {script} {csv_dir}` to render "
          f"{len(usable)} table(s))")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polex",
        description="Policy-execution error experiments for controlled SDEs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--preset", help=f"preset name ({', '.join(preset_names())})")
        p.add_argument("--fast", action="store_true",
                       help="desk-scale profile: 5000 paths, 10 runs")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--paths", type=int, help="Monte Carlo paths override")
        p.add_argument("--runs", type=int, help="outer repetitions override")
        p.add_argument("--grid-sizes", help="comma-separated grid sizes override")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--test-function",
                       help="terminal test function: 'monomial:<power>' or a "
                            f"named one ({', '.join(sorted(_NAMED_TEST_FUNCTIONS))})")

    for name in ("weak-sweep", "strong-sweep", "counterexample"):
        add_common(sub.add_parser(name))
    study = sub.add_parser("estimator-study")
    add_common(study)
    study.add_argument("--study", required=True, choices=_STUDIES)
    plots = sub.add_parser("plots")
    plots.add_argument("--out", default=".", help="directory holding the CSV tables")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.fast:
        config = config.fast_profile()
    updates = {}
    if args.preset:
        updates["preset"] = args.preset
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.out:
        updates["output_dir"] = args.out
    if args.paths is not None:
        updates["paths"] = args.paths
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.grid_sizes:
        updates["grid_sizes"] = tuple(int(s) for s in args.grid_sizes.split(","))
    if args.workers is not None:
        updates["workers"] = args.workers
    if getattr(args, "test_function", None):
        spec = args.test_function
        if spec.startswith("monomial:"):
            updates["test_function"] = ("monomial", int(spec.split(":", 1)[1]))
        else:
            updates["test_function"] = ("named", spec)
    config = dataclasses.replace(config, **updates)
    return config.validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "plots":
            return emit_plots(args.out)
        config = _config_from_args(args)
        if args.command == "weak-sweep":
            return run_weak_sweep(config)
        if args.command == "strong-sweep":
            return run_strong_sweep(config)
        if args.command == "counterexample":
            if not args.preset and not args.config:
                config = dataclasses.replace(config, preset="counterexample")
            return _sweep(config.validate(), "counterexample")
        if args.command == "estimator-study":
            return run_estimator_study(config, args.study)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
