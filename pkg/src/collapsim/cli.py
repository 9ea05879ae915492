"""Experiment runner: reproduces the reference figures and batch tests.

Usage:  collapsim --experiment NAME [--config FILE] [flags]

Experiments
    lattice-run    one forward+backward lattice pass; occupancy/field images
                   and per-link tables
    lattice-batch  chi-squared reversal test over many seeded runs; p-value
                   list, histogram, uniformity report
    qmupl-run      one wave-packet trajectory with its back-solved reversal
                   and collapse-centre record
    qmupl-batch    normality of back-solved increments over many runs
    markov-demo    retrodiction tables for a finite chain (stationary state,
                   reverse kernel, posteriors, two-time conditioning)
    energy-demo    pre- vs post-selected momentum-walk energy curves next to
                   the wave-packet ensemble energy curve

Configuration is layered: built-in defaults (the reference figure
parameters), then a key=value config file (--config), then explicit flags.
Every artifact is listed in manifest.jsonl with the resolved parameters and
base seed, so any file can be regenerated exactly.  Repeated invocations
with the same configuration and seed produce byte-identical outputs,
including under --workers parallelism.

Exit codes: 0 success, 2 configuration error, 3 statistical degeneracy
(no usable events, no survivors, no unique equilibrium), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import multiprocessing
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .errors import (
    CollapsimError,
    ConditioningError,
    ConfigError,
    DegenerateTestError,
    InsufficientDataError,
    NoUniqueEquilibriumError,
    ResampleExhaustedError,
)
from .lattice import (
    LatticeConfig,
    build_basis_state,
    conjugate,
    run_backward,
    run_forward,
    single_particle_state,
)
from .lattice_analysis import pvalue_uniformity, reversal_chi_squared
from .output import Manifest, write_csv, write_pgm
from .qmupl import (
    QmuplConfig,
    ensemble_energy_curve,
    normality_test,
    reverse_trajectory,
    simulate_forward,
)
from .retrodiction import (
    Distribution,
    MarkovModel,
    SelectionSpec,
    equilibrium_retrodiction,
    load_kernel,
    momentum_walk_demo,
    postselected_prediction,
    retrodict,
    save_distribution,
    save_kernel,
    smoothed_inference,
    stationary,
)
from .stats import PrngStream

EXPERIMENTS = (
    "lattice-run",
    "lattice-batch",
    "qmupl-run",
    "qmupl-batch",
    "markov-demo",
    "energy-demo",
)

# ======================================================================
# Configuration: defaults <- config file <- flags
# ======================================================================

_SCHEMA = {
    "experiment": str,
    "out": str,
    "seed": int,
    "runs": int,
    "workers": int,
    "lattice_n": int,
    "collapse_x": float,
    "theta": float,
    "steps": int,
    "initial": str,
    "particle_column": int,
    "g": float,
    "mass": float,
    "dt": float,
    "n_steps": int,
    "kernel_file": str,
    "grid_half_width": int,
    "step_variance": float,
    "walk_steps": int,
    "walk_runs": int,
    "selection_tolerance": int,
}

DEFAULTS = {
    "seed": 1,
    "workers": 1,
    # One-pass lattice figure: 16 columns, X = 0.5, theta = pi/4, 100 steps,
    # single particle at column 11.
    "lattice_n": 16,
    "collapse_x": 0.5,
    "theta": math.pi / 4.0,
    "steps": 100,
    "initial": "particle",
    # Wave-packet figure parameters.
    "g": 20.0,
    "mass": 1.0,
    "dt": 0.001,
    "n_steps": 1000,
    # Momentum-walk demo.
    "grid_half_width": 60,
    "step_variance": 0.5,
    "walk_steps": 200,
    "walk_runs": 2000,
    "selection_tolerance": 1,
}

# Batch sizes match the reference histograms; energy-demo keeps the
# wave-packet ensemble small enough for interactive use.
_DEFAULT_RUNS = {"lattice-batch": 500, "qmupl-batch": 5000, "energy-demo": 200}


def load_config_file(path: str) -> dict:
    """Parse a key=value file; unknown keys and bad values name file:line."""
    text = Path(path).read_text()
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            values[key] = _SCHEMA[key](value)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: invalid {_SCHEMA[key].__name__} for {key}: {value!r}"
            ) from None
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapsim",
        description=__doc__,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--experiment", choices=EXPERIMENTS)
    parser.add_argument("--config", help="key=value config file; flags override it")
    parser.add_argument("--out", help="output directory (created if missing)")
    parser.add_argument("--seed", type=int, help="base seed; run i uses child stream i")
    parser.add_argument("--runs", type=int, help="batch size")
    parser.add_argument("--workers", type=int, help="worker processes for batches")
    lattice = parser.add_argument_group("lattice")
    lattice.add_argument("--lattice-n", type=int, help="number of columns (even, <= 16)")
    lattice.add_argument("--collapse-x", type=float, help="jump strength X >= 0")
    lattice.add_argument("--theta", type=float, help="vertex mixing angle (radians)")
    lattice.add_argument("--steps", type=int, help="time steps")
    lattice.add_argument("--initial", choices=("particle", "vacuum"))
    lattice.add_argument("--particle-column", type=int)
    packet = parser.add_argument_group("wave packet")
    packet.add_argument("--g", type=float, help="collapse coupling")
    packet.add_argument("--mass", type=float)
    packet.add_argument("--dt", type=float, help="step size")
    packet.add_argument("--n-steps", type=int, help="steps per trajectory")
    demo = parser.add_argument_group("demos")
    demo.add_argument("--kernel-file", help="CSV kernel for markov-demo")
    demo.add_argument("--grid-half-width", type=int)
    demo.add_argument("--step-variance", type=float)
    demo.add_argument("--walk-steps", type=int)
    demo.add_argument("--walk-runs", type=int)
    demo.add_argument("--selection-tolerance", type=int)
    parser.add_argument("--version", action="version", version=f"collapsim {__version__}")
    return parser


def resolve_params(args: argparse.Namespace) -> dict:
    params = dict(DEFAULTS)
    if args.config is not None:
        params.update(load_config_file(args.config))
    for key in _SCHEMA:
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            params[key] = flag_value
    experiment = params.get("experiment")
    if experiment is None:
        raise ConfigError("no experiment selected (use --experiment or an 'experiment=' line)")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if "runs" not in params or params.get("runs") is None:
        params["runs"] = _DEFAULT_RUNS.get(experiment, 1)
    if params.get("out") is None:
        raise ConfigError("no output directory (use --out or an 'out=' line)")
    if params["workers"] < 1:
        raise ConfigError(f"workers must be >= 1, got {params['workers']}")
    if params["initial"] not in ("particle", "vacuum"):
        raise ConfigError(f"initial must be 'particle' or 'vacuum', got {params['initial']!r}")
    if params.get("particle_column") is None:
        # Figure default is column 11 on the 16-column lattice; for other
        # sizes fall back to a central column.
        params["particle_column"] = 11 if params["lattice_n"] == 16 else params["lattice_n"] // 2 + 1
    return params


def _manifest_params(params: dict) -> dict:
    # The worker count never changes artifact content, so leaving it out
    # keeps outputs byte-identical across serial and parallel invocations.
    return {k: v for k, v in params.items() if k not in ("out", "workers")}


# ======================================================================
# lattice-run / lattice-batch
# ======================================================================


def _lattice_initial(params: dict):
    if params["initial"] == "vacuum":
        return build_basis_state([0] * params["lattice_n"])
    return single_particle_state(params["lattice_n"], params["particle_column"])


def _lattice_config(params: dict) -> LatticeConfig:
    return LatticeConfig(
        n_columns=params["lattice_n"],
        collapse_x=params["collapse_x"],
        theta=params["theta"],
        steps=params["steps"],
    )


def _flip_time(matrix: np.ndarray) -> np.ndarray:
    # Image rows run top-down while step indices run 0..T-1, so the latest
    # step prints as the top row.
    return matrix[::-1, :]


def _link_rows(record) -> list:
    steps, n_columns = record.field.alpha.shape
    rows = []
    for t in range(steps):
        for c in range(n_columns):
            rows.append(
                (
                    t,
                    c + 1,
                    record.probabilities[t, c],
                    int(record.field.alpha[t, c]),
                    record.occupancy[t, c],
                )
            )
    return rows


def run_lattice_run(params: dict, out: Path, manifest: Manifest) -> None:
    config = _lattice_config(params)
    record, final = run_forward(config, _lattice_initial(params), PrngStream(params["seed"]))
    back, _ = run_backward(config, record.field, conjugate(final))

    for name, matrix, kind in (
        ("occupancy_forward.pgm", record.occupancy, "occupancy"),
        ("field.pgm", record.field.alpha.astype(float), "field"),
        ("occupancy_backward.pgm", back.occupancy, "occupancy"),
    ):
        write_pgm(out / name, _flip_time(matrix))
        manifest.record(name)
    header = ("step", "column", "probability", "alpha", "occupancy")
    write_csv(out / "links_forward.csv", header, _link_rows(record))
    manifest.record("links_forward.csv")
    write_csv(out / "links_backward.csv", header, _link_rows(back))
    manifest.record("links_backward.csv")

    try:
        report = reversal_chi_squared(record.field, back.probabilities)
        payload = {
            "degenerate": False,
            "statistic": report.statistic,
            "dof": report.dof,
            "p_value": report.p_value,
            "events_total": report.events_total,
            "events_retained": report.events_retained,
        }
    except DegenerateTestError as exc:
        payload = {"degenerate": True, "reason": str(exc)}
    (out / "chi_squared.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    manifest.record("chi_squared.json")


def _lattice_batch_worker(task) -> tuple:
    index, seed, params = task
    config = _lattice_config(params)
    stream = PrngStream(seed).split(index)
    record, final = run_forward(config, _lattice_initial(params), stream)
    back, _ = run_backward(config, record.field, conjugate(final))
    try:
        report = reversal_chi_squared(record.field, back.probabilities)
        return index, report.statistic, report.dof, report.p_value
    except DegenerateTestError:
        return index, None, None, None


def _qmupl_batch_worker(task) -> tuple:
    index, seed, params = task
    config = _qmupl_config(params)
    stream = PrngStream(seed).split(index)
    trajectory = simulate_forward(config, stream)
    back = reverse_trajectory(trajectory.z, trajectory.x[-1], trajectory.p[-1], config)
    try:
        report = normality_test(back.dB, config.dt)
        return index, report.statistic, None, report.p_value
    except InsufficientDataError:
        return index, None, None, None


def _fan_out(worker, params: dict) -> list[tuple]:
    """Run the per-seed worker over all run indices, optionally in parallel.

    Each task depends only on (base seed, run index), so the result list is
    identical for any worker count; outputs are collected in index order.
    """
    tasks = [(i, params["seed"], params) for i in range(params["runs"])]
    workers = min(params["workers"], params["runs"])
    if workers <= 1:
        return [worker(task) for task in tasks]
    chunk = max(1, params["runs"] // (workers * 8))
    with multiprocessing.Pool(workers) as pool:
        return list(pool.imap(worker, tasks, chunksize=chunk))


def _emit_batch_reports(results: list[tuple], params: dict, out: Path, manifest: Manifest) -> None:
    """Shared tail of the two batch experiments: p-value list, histogram, report."""
    rows = []
    retained = []
    degenerate = 0
    for index, statistic, dof, p_value in results:
        if p_value is None:
            degenerate += 1
            rows.append((index, "", "" if dof is None else dof, ""))
        else:
            retained.append(p_value)
            rows.append((index, statistic, "" if dof is None else dof, p_value))
    write_csv(out / "pvalues.csv", ("run", "statistic", "dof", "p_value"), rows)
    manifest.record("pvalues.csv")

    edges = np.linspace(0.0, 1.0, 21)
    counts, _ = np.histogram(retained, bins=edges)
    write_csv(
        out / "histogram.csv",
        ("bin_low", "bin_high", "count"),
        [(edges[i], edges[i + 1], int(counts[i])) for i in range(20)],
    )
    manifest.record("histogram.csv")

    # Keep every expected bin count >= 5 so the uniformity chi-squared is valid
    # even for small smoke batches.
    bin_count = 20 if len(retained) >= 100 else max(2, len(retained) // 10)
    payload: dict = {"runs": params["runs"], "degenerate": degenerate, "retained": len(retained)}
    try:
        report = pvalue_uniformity(retained, bin_count=bin_count)
        payload["chi_squared"] = {
            "statistic": report.chi_squared.statistic,
            "p_value": report.chi_squared.p_value,
            "method": report.chi_squared.method,
        }
        payload["ks"] = {
            "statistic": report.ks.statistic,
            "p_value": report.ks.p_value,
            "method": report.ks.method,
        }
        payload["bin_count"] = report.bin_count
    except (InsufficientDataError, DegenerateTestError) as exc:
        payload["error"] = str(exc)
    (out / "uniformity.json").write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    manifest.record("uniformity.json")


def run_lattice_batch(params: dict, out: Path, manifest: Manifest) -> None:
    if params["runs"] < 50:
        raise ConfigError(
            f"lattice-batch needs runs >= 50 for a meaningful uniformity test, got {params['runs']}"
        )
    results = _fan_out(_lattice_batch_worker, params)
    _emit_batch_reports(results, params, out, manifest)


# ======================================================================
# qmupl-run / qmupl-batch
# ======================================================================


def _qmupl_config(params: dict) -> QmuplConfig:
    return QmuplConfig(g=params["g"], m=params["mass"], dt=params["dt"], n=params["n_steps"])


def run_qmupl_run(params: dict, out: Path, manifest: Manifest) -> None:
    config = _qmupl_config(params)
    trajectory = simulate_forward(config, PrngStream(params["seed"]))
    n = config.n
    write_csv(
        out / "trajectory.csv",
        ("step", "time", "x", "p"),
        [(i, i * config.dt, trajectory.x[i], trajectory.p[i]) for i in range(n + 1)],
    )
    manifest.record("trajectory.csv")
    write_csv(
        out / "collapse_centres.csv",
        ("step", "time", "z", "dB"),
        [(i, i * config.dt, trajectory.z[i], trajectory.dB[i]) for i in range(n)],
    )
    manifest.record("collapse_centres.csv")

    back = reverse_trajectory(trajectory.z, trajectory.x[-1], trajectory.p[-1], config)
    write_csv(
        out / "reversal.csv",
        ("step", "time", "x", "p"),
        [(i, i * config.dt, back.x[i], back.p[i]) for i in range(n + 1)],
    )
    manifest.record("reversal.csv")


def run_qmupl_batch(params: dict, out: Path, manifest: Manifest) -> None:
    if params["runs"] < 2:
        raise ConfigError(f"qmupl-batch needs runs >= 2, got {params['runs']}")
    results = _fan_out(_qmupl_batch_worker, params)
    _emit_batch_reports(results, params, out, manifest)


# ======================================================================
# markov-demo / energy-demo
# ======================================================================

# Default chain for the retrodiction tables: symmetric two-state flip, which
# satisfies detailed balance, so its equilibrium reverse kernel equals the
# forward kernel in the emitted tables.
_DEFAULT_CHAIN = MarkovModel(
    states=("S1", "S2"), kernel=np.array([[0.9, 0.1], [0.1, 0.9]])
)


def run_markov_demo(params: dict, out: Path, manifest: Manifest) -> None:
    if params.get("kernel_file"):
        model = load_kernel(params["kernel_file"])
    else:
        model = _DEFAULT_CHAIN
    save_kernel(out / "kernel.csv", model)
    manifest.record("kernel.csv")

    equilibrium = stationary(model)
    save_distribution(out / "stationary.csv", model, equilibrium)
    manifest.record("stationary.csv")

    reverse = equilibrium_retrodiction(model, equilibrium)
    save_kernel(out / "reverse_kernel.csv", MarkovModel(states=model.states, kernel=reverse))
    manifest.record("reverse_kernel.csv")

    uniform = Distribution.uniform(model.size)
    rows = []
    for j, observed_label in enumerate(model.states):
        posterior = retrodict(model, uniform, j)
        for i, source_label in enumerate(model.states):
            rows.append((observed_label, source_label, posterior.probabilities[i]))
    write_csv(out / "retrodiction.csv", ("observed", "source", "posterior"), rows)
    manifest.record("retrodiction.csv")

    # Two-time conditioning on a 4-step window: pin the first state at the
    # boundary (time 0), observe the last state at the far end, and report
    # the interior distribution at the midpoint — once forward, once mirrored.
    first, last = 0, model.size - 1
    smoothed = smoothed_inference(model, SelectionSpec(0, first), SelectionSpec(4, last), 2)
    mirrored = postselected_prediction(model, SelectionSpec(0, first), SelectionSpec(-4, last), -2)
    rows = []
    for label, value in zip(model.states, smoothed.probabilities):
        rows.append(("smoothed", 2, label, value))
    for label, value in zip(model.states, mirrored.probabilities):
        rows.append(("postselected", -2, label, value))
    write_csv(out / "selection.csv", ("kind", "time", "state", "probability"), rows)
    manifest.record("selection.csv")


def _walk_rows(result) -> list:
    return [
        (
            int(result.times[t]),
            result.mean_energy[t],
            result.mean_energy_reverse[t],
            result.standard_error[t],
            result.survivors,
        )
        for t in range(result.times.size)
    ]


def run_energy_demo(params: dict, out: Path, manifest: Manifest) -> None:
    root = PrngStream(params["seed"])
    walk_args = (
        params["grid_half_width"],
        params["step_variance"],
        params["walk_steps"],
        params["walk_runs"],
    )
    header = ("t", "mean_energy_forward", "mean_energy_reverse", "standard_error", "survivors")
    pre = momentum_walk_demo(*walk_args, "pre", root.split(0))
    write_csv(out / "walk_pre.csv", header, _walk_rows(pre))
    manifest.record("walk_pre.csv")
    post = momentum_walk_demo(
        *walk_args, "post", root.split(1), post_tolerance=params["selection_tolerance"]
    )
    write_csv(out / "walk_post.csv", header, _walk_rows(post))
    manifest.record("walk_post.csv")

    curve = ensemble_energy_curve(_qmupl_config(params), params["runs"], root.split(2))
    write_csv(
        out / "qmupl_energy.csv",
        ("step", "time", "mean_p_squared", "standard_error", "runs"),
        [
            (i, curve.times[i], curve.mean_p_squared[i], curve.standard_error[i], curve.runs)
            for i in range(curve.times.size)
        ],
    )
    manifest.record("qmupl_energy.csv")


# ======================================================================
# Entry point
# ======================================================================

_RUNNERS = {
    "lattice-run": run_lattice_run,
    "lattice-batch": run_lattice_batch,
    "qmupl-run": run_qmupl_run,
    "qmupl-batch": run_qmupl_batch,
    "markov-demo": run_markov_demo,
    "energy-demo": run_energy_demo,
}

_DEGENERACY_ERRORS = (
    DegenerateTestError,
    InsufficientDataError,
    ConditioningError,
    NoUniqueEquilibriumError,
    ResampleExhaustedError,
)


def _run(argv: Sequence[str] | None) -> int:
    args = build_parser().parse_args(argv)
    params = resolve_params(args)
    out = Path(params["out"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(
        out, params["experiment"], _manifest_params(params), params["seed"], __version__
    )
    _RUNNERS[params["experiment"]](params, out, manifest)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    try:
        return _run(argv)
    except _DEGENERACY_ERRORS as exc:
        print(f"collapsim: {exc}", file=sys.stderr)
        return 3
    except CollapsimError as exc:
        print(f"collapsim: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"collapsim: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
