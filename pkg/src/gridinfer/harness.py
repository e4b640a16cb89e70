"""End-to-end experiments: leave-out fits, sweeps, weight analysis and flow reconstruction.

Every run writes plain CSV/JSON reports plus a ``manifest.json`` listing
each output with its SHA-256.  Given the same configuration and seeds,
all report files are byte-identical across runs; only the manifest's
timings differ.
"""

from __future__ import annotations

import contextlib
import csv
import hashlib
import json
import logging
import platform
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Sequence, TypeVar

import numpy as np

from . import __version__
from .dataset import (
    GEN_PREFIX,
    LOAD_PREFIX,
    LeaveOutSpec,
    ObservationSet,
    RegressionProblem,
    Split,
    SynthConfig,
    TargetKind,
    assemble,
    block_split,
    load_observations,
    random_split,
    rank_and_split_targets,
    save_cache,
    subsample_train,
    synthesize,
    write_csv,
)
from .errors import ConfigError, DataError, GridError
from .grid import BusKind, GridNetwork, load_network
from .powerflow import DEFAULT_POWER_FACTOR, SolveOptions, flow_series
from .regressor import (
    FitReport,
    RidgeModel,
    analyze_weights,
    evaluate,
    fit,
    grid_search_alpha,
    predict,
    save_model,
)

log = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Training time reported for the 903-feature x 139,776-row ridge fit on a
# laptop CPU; recorded in manifests for context, never asserted.
REFERENCE_TIMING = {"features": 903, "observations": 139_776, "fit_seconds": 8.26}


# ---------------------------------------------------------------- configuration


@dataclass(frozen=True)
class PowerFlowConfig:
    power_factor: float = DEFAULT_POWER_FACTOR
    tol: float = 1e-8
    max_iter: int = 20
    warm_start: bool = False
    retry: bool = False
    max_timestamps: int | None = 200
    oracle_injections: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.  ``csv`` (path to CSV or binary cache) or ``synthesize`` selects the data."""

    csv: str | None = None
    synthesize: SynthConfig | None = None
    leave_out: LeaveOutSpec = field(default_factory=LeaveOutSpec)
    alpha: float = 1e-5
    alpha_grid: tuple[float, ...] | None = None
    standardize: bool = False
    seed: int = 0
    split_seed: int | None = None
    train_fraction: float = 0.8
    split_mode: str = "random"
    m_values: tuple[int, ...] = (1, 2, 5, 10, 20, 50)
    train_fractions: tuple[float, ...] = (0.01, 0.1, 1.0)
    network: str | None = None
    powerflow: PowerFlowConfig = field(default_factory=PowerFlowConfig)
    bin_count: int = 101
    out_dir: str = "out"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.csv is None and self.synthesize is None:
            raise ConfigError("either 'csv' or 'synthesize' must be given")
        if self.csv is not None and self.synthesize is not None:
            raise ConfigError("'csv' and 'synthesize' are mutually exclusive")
        if self.alpha < 0 or (self.alpha_grid is not None and (not self.alpha_grid or min(self.alpha_grid) < 0)):
            raise ConfigError("alpha values must be non-negative and the grid non-empty")
        if not 0 < self.train_fraction <= 1:
            raise ConfigError("train_fraction must be in (0, 1]")
        if self.split_mode not in ("random", "block"):
            raise ConfigError("split_mode must be 'random' or 'block'")
        if not self.m_values or min(self.m_values) < 1:
            raise ConfigError("m_values must be positive")
        if not self.train_fractions or not all(0 < f <= 1 for f in self.train_fractions):
            raise ConfigError("train_fractions must lie in (0, 1]")
        if self.bin_count < 4:
            raise ConfigError("bin_count must be at least 4")
        if self.seed < 0 or (self.split_seed is not None and self.split_seed < 0):
            raise ConfigError("seeds must be non-negative")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.csv is not None and not Path(self.csv).is_file():
            raise ConfigError(f"dataset file not found: {self.csv}")
        if self.network is not None and not self.network.startswith("builtin:") and not Path(self.network).is_file():
            raise ConfigError(f"network file not found: {self.network}")

    @property
    def seeds(self) -> dict[str, int]:
        return {
            "synthesize": self.seed,
            "split": self.seed + 1 if self.split_seed is None else self.split_seed,
            "subsample": self.seed + 2,
        }

    def to_dict(self) -> dict[str, Any]:
        lo = self.leave_out
        return {
            "csv": self.csv,
            "synthesize": None if self.synthesize is None else self.synthesize.to_dict(),
            "leave_out": {
                "target_kind": lo.target_kind.value,
                "m_top": lo.m_top,
                "ranking": lo.ranking.value,
                "labels": None if lo.explicit_labels is None else list(lo.explicit_labels),
            },
            "alpha": self.alpha,
            "alpha_grid": None if self.alpha_grid is None else list(self.alpha_grid),
            "standardize": self.standardize,
            "seed": self.seed,
            "split_seed": self.split_seed,
            "train_fraction": self.train_fraction,
            "split_mode": self.split_mode,
            "m_values": list(self.m_values),
            "train_fractions": list(self.train_fractions),
            "network": self.network,
            "powerflow": dict(self.powerflow.__dict__),
            "bin_count": self.bin_count,
            "out_dir": self.out_dir,
            "workers": self.workers,
        }

    def config_hash(self) -> str:
        d = self.to_dict()
        # output location and parallelism do not change any number
        d.pop("out_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_TOP_KEYS = set(ExperimentConfig.__dataclass_fields__)


def config_from_dict(d: dict[str, Any], base_dir: str | Path | None = None, **overrides: Any) -> ExperimentConfig:
    """Validate a JSON config document.  Relative file paths resolve against ``base_dir``."""
    d = dict(d)
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for k, v in overrides.items():
        if v is not None:
            d[k] = v
    try:
        if d.get("synthesize") is not None:
            d["synthesize"] = SynthConfig.from_dict(d["synthesize"])
        lo = d.get("leave_out")
        if lo is not None:
            lo = dict(lo)
            labels = lo.pop("labels", None)
            d["leave_out"] = LeaveOutSpec(explicit_labels=labels, **lo)
        pf = d.get("powerflow")
        if pf is not None:
            d["powerflow"] = PowerFlowConfig(**pf)
        for key in ("alpha_grid", "m_values", "train_fractions"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid config value: {exc}") from None
    if base_dir is not None:
        for key in ("csv", "network"):
            p = d.get(key)
            if p and not str(p).startswith("builtin:") and not Path(p).is_absolute():
                d[key] = str(Path(base_dir) / p)
    try:
        return ExperimentConfig(**d)
    except TypeError as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path: str | Path, **overrides: Any) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc, base_dir=path.parent, **overrides)


def desk_config(**kw: Any) -> ExperimentConfig:
    """Swiss-sized synthetic default (163 loads, 36 generators, two synthetic years)."""
    kw.setdefault("synthesize", SynthConfig())
    return ExperimentConfig(**kw)


# ---------------------------------------------------------------- run bookkeeping


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seeds: dict[str, int]
    version: str = __version__
    timings: dict[str, float] = field(default_factory=dict)
    outputs: list[dict[str, Any]] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seeds": self.seeds,
            "version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "timings_s": self.timings,
            "reference_timing": REFERENCE_TIMING,
            "outputs": self.outputs,
        }


class _Run:
    """Tracks written files and stage timings; removes partial outputs on failure."""

    def __init__(self, config: ExperimentConfig, command: str):
        self.config = config
        self.out = Path(config.out_dir)
        self.manifest = RunManifest(command, config.config_hash(), config.seeds)
        self.files: list[Path] = []
        self._created_dirs: list[Path] = []

    def mkdir(self, rel: str | Path = ".") -> Path:
        d = self.out / rel
        missing = []
        p = d
        while not p.exists():
            missing.append(p)
            p = p.parent
        d.mkdir(parents=True, exist_ok=True)
        self._created_dirs.extend(reversed(missing))
        return d

    def path(self, rel: str) -> Path:
        p = self.out / rel
        self.mkdir(p.parent.relative_to(self.out))
        self.files.append(p)
        return p

    @contextlib.contextmanager
    def stage(self, name: str) -> Iterator[None]:
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.manifest.timings[name] = round(time.perf_counter() - t0, 6)

    def finish(self) -> Path:
        for p in self.files:
            self.manifest.outputs.append(
                {"path": p.relative_to(self.out).as_posix(), "sha256": _sha256(p), "bytes": p.stat().st_size}
            )
        mpath = self.out / "manifest.json"
        mpath.write_text(json.dumps(self.manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
        return mpath

    def abort(self) -> None:
        for p in self.files:
            with contextlib.suppress(FileNotFoundError):
                p.unlink()
        for d in reversed(self._created_dirs):
            with contextlib.suppress(OSError):
                d.rmdir()


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@contextlib.contextmanager
def _run(config: ExperimentConfig, command: str) -> Iterator[_Run]:
    run = _Run(config, command)
    run.mkdir()
    try:
        yield run
    except BaseException:
        run.abort()
        raise
    run.finish()


def _pmap(fn: Callable[[T], R], items: Sequence[T], workers: int) -> list[R]:
    """Map preserving input order regardless of completion order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _write_json(path: Path, data: Any) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", label)


# ---------------------------------------------------------------- pipeline pieces


def load_dataset(config: ExperimentConfig) -> ObservationSet:
    if config.synthesize is not None:
        return synthesize(config.synthesize, config.seeds["synthesize"])
    return load_observations(config.csv)


def make_split(config: ExperimentConfig, n: int) -> Split:
    if config.split_mode == "block":
        return block_split(n, config.train_fraction)
    return random_split(n, config.train_fraction, config.seeds["split"])


@dataclass(frozen=True)
class CellResult:
    """One fitted leave-out configuration."""

    problem: RegressionProblem
    model: RidgeModel
    report: FitReport


def leave_out_cell(
    obs: ObservationSet,
    split: Split,
    spec: LeaveOutSpec,
    alpha: float,
    *,
    standardize: bool = False,
    train_fraction: float = 1.0,
    subsample_seed: int = 0,
) -> CellResult:
    """Rank targets on the full training partition, then fit (on a sub-sample if asked).

    NRMSE is normalized by the target spread over the full training
    partition so sub-sampled fits stay comparable.
    """
    features, targets = rank_and_split_targets(obs, spec, split.train)
    problem = assemble(obs, features, targets, split)
    full_std = problem.Y_train.std(axis=0, ddof=1)
    fit_problem = problem if train_fraction >= 1.0 else problem.with_split(
        subsample_train(split, train_fraction, subsample_seed)
    )
    model = fit(fit_problem, alpha, standardize=standardize)
    return CellResult(fit_problem, model, evaluate(model, fit_problem, train_std=full_std))


def _prepare(config: ExperimentConfig, run: _Run) -> tuple[ObservationSet, Split]:
    with run.stage("dataset"):
        obs = load_dataset(config)
        split = make_split(config, obs.n_samples)
    return obs, split


def _choose_alpha(config: ExperimentConfig, run: _Run, obs: ObservationSet, split: Split) -> float:
    if config.alpha_grid is None:
        return config.alpha
    with run.stage("alpha_grid"):
        features, targets = rank_and_split_targets(obs, config.leave_out, split.train)
        problem = assemble(obs, features, targets, split)
        best, reports = grid_search_alpha(problem, config.alpha_grid)
        _write_rows(
            run.path("alpha_grid.csv"),
            ["alpha", "nrmse_test_mean", "nrmse_train_mean"],
            [(r.alpha_used, float(np.mean(r.nrmse_test)), float(np.mean(r.nrmse_train))) for r in reports],
        )
    return best


_GNUPLOT = """\
# Scatter of predicted vs true values; usage: gnuplot -p scatter.gp
set datafile separator ','
set key top left
set xlabel 'true (p.u.)'
set ylabel 'predicted (p.u.)'
files = "{files}"
do for [f in files] {{
  set title f
  plot f using 3:($2==0?$4:1/0) skip 1 title 'train' pt 7 ps 0.3, \\
       f using 3:($2==1?$4:1/0) skip 1 title 'test' pt 7 ps 0.3, \\
       x title 'unit slope' lw 1
  pause -1
}}
"""


def _write_fit_outputs(run: _Run, cell: CellResult, prefix: str = "") -> None:
    problem, model, report = cell.problem, cell.model, cell.report
    report.write_csv(run.path(f"{prefix}nrmse.csv"))
    report.write_json(run.path(f"{prefix}fit_report.json"))
    run.path(f"{prefix}model.json")
    run.path(f"{prefix}model.npy")
    save_model(model, run.out / f"{prefix}model")

    y_hat = predict(model, problem.X)
    part = np.full(problem.X.shape[0], -1)
    part[problem.split.train] = 0
    part[problem.split.test] = 1
    rows = np.flatnonzero(part >= 0)
    names = []
    for t, label in enumerate(problem.target_labels):
        rel = f"{prefix}scatter/{_safe_name(label)}.csv"
        names.append(rel.split("/", 1)[1])
        _write_rows(
            run.path(rel),
            ["timestamp", "test", "true", "predicted"],
            ((int(problem.timestamps[r]), int(part[r]), float(problem.Y[r, t]), float(y_hat[r, t])) for r in rows),
        )
    run.path(f"{prefix}scatter/scatter.gp").write_text(_GNUPLOT.format(files=" ".join(names)), encoding="utf-8")


# ---------------------------------------------------------------- experiments


@dataclass
class RunOutputs:
    out_dir: Path
    manifest: Path
    data: dict[str, Any] = field(default_factory=dict)


def _outputs(config: ExperimentConfig, data: dict[str, Any]) -> RunOutputs:
    out = Path(config.out_dir)
    return RunOutputs(out, out / "manifest.json", data)


def run_synthesize(config: ExperimentConfig, *, binary: bool = False) -> RunOutputs:
    """Write the configured dataset (CSV, or binary cache with ``binary``)."""
    if config.synthesize is None:
        raise ConfigError("the synthesize command needs a 'synthesize' block")
    with _run(config, "synthesize") as run:
        obs, _ = _prepare(config, run)
        with run.stage("write"):
            if binary:
                save_cache(obs, run.path("observations.bin"))
            else:
                write_csv(obs, run.path("observations.csv"))
    return _outputs(config, {"observations": obs})


def run_top_m_experiment(config: ExperimentConfig) -> RunOutputs:
    """Hide the top ``m_top`` buses, fit on 80% of rows, score train and test.

    Writes ``nrmse.csv``, ``fit_report.json``, ``model.json``/``model.npy``
    and one scatter CSV per target under ``scatter/``.
    """
    with _run(config, "fit") as run:
        obs, split = _prepare(config, run)
        alpha = _choose_alpha(config, run, obs, split)
        with run.stage("fit"):
            cell = leave_out_cell(obs, split, config.leave_out, alpha, standardize=config.standardize)
        with run.stage("write"):
            _write_fit_outputs(run, cell)
    return _outputs(config, {"cell": cell, "alpha": alpha})


def run_generator_experiment(config: ExperimentConfig) -> RunOutputs:
    """Top-m experiment with generators as targets (features: all loads + remaining generators)."""
    if config.leave_out.target_kind is not TargetKind.GENERATORS:
        config = replace(config, leave_out=replace(config.leave_out, target_kind=TargetKind.GENERATORS))
    with _run(config, "gens") as run:
        obs, split = _prepare(config, run)
        alpha = _choose_alpha(config, run, obs, split)
        with run.stage("fit"):
            cell = leave_out_cell(obs, split, config.leave_out, alpha, standardize=config.standardize)
        with run.stage("write"):
            _write_fit_outputs(run, cell)
    return _outputs(config, {"cell": cell, "alpha": alpha})


def run_m_sweep(config: ExperimentConfig) -> RunOutputs:
    """Test NRMSE (mean/min/max over targets) for each number of hidden buses."""
    with _run(config, "sweep-m") as run:
        obs, split = _prepare(config, run)
        kind = config.leave_out.target_kind

        def cell(m: int) -> CellResult:
            return leave_out_cell(obs, split, LeaveOutSpec(kind, m), config.alpha, standardize=config.standardize)

        with run.stage("fit"):
            cells = _pmap(cell, list(config.m_values), config.workers)
        rows = []
        for m, c in zip(config.m_values, cells):
            te, tr = c.report.nrmse_test, c.report.nrmse_train
            rows.append((m, len(c.problem.feature_labels), float(te.mean()), float(te.min()), float(te.max()), float(tr.mean())))
        with run.stage("write"):
            _write_rows(
                run.path("m_sweep.csv"),
                ["m", "n_features", "nrmse_test_mean", "nrmse_test_min", "nrmse_test_max", "nrmse_train_mean"],
                rows,
            )
    return _outputs(config, {"rows": rows, "cells": cells})


def run_train_size_sweep(config: ExperimentConfig) -> RunOutputs:
    """Test NRMSE per (m, training fraction); the test partition is shared by every cell."""
    with _run(config, "sweep-train-size") as run:
        obs, split = _prepare(config, run)
        kind = config.leave_out.target_kind
        grid = [(m, f) for m in config.m_values for f in config.train_fractions]

        def cell(item: tuple[int, float]) -> CellResult:
            m, f = item
            return leave_out_cell(
                obs, split, LeaveOutSpec(kind, m), config.alpha,
                standardize=config.standardize, train_fraction=f, subsample_seed=config.seeds["subsample"],
            )

        with run.stage("fit"):
            cells = _pmap(cell, grid, config.workers)
        rows = []
        for (m, f), c in zip(grid, cells):
            te = c.report.nrmse_test
            rows.append((m, float(f), int(c.problem.split.train.size), float(te.mean()), float(te.min()), float(te.max())))
        with run.stage("write"):
            _write_rows(
                run.path("train_size_sweep.csv"),
                ["m", "fraction", "n_train", "nrmse_test_mean", "nrmse_test_min", "nrmse_test_max"],
                rows,
            )
    return _outputs(config, {"rows": rows, "cells": cells})


def run_analyze_weights(config: ExperimentConfig) -> RunOutputs:
    """Fit the top-m model and fit Gaussian/Lorentzian peaks to its weight histogram."""
    with _run(config, "analyze-weights") as run:
        obs, split = _prepare(config, run)
        with run.stage("fit"):
            cell = leave_out_cell(obs, split, config.leave_out, config.alpha, standardize=config.standardize)
        with run.stage("analyze"):
            hist = analyze_weights(cell.model, config.bin_count)
        with run.stage("write"):
            from .regressor import gaussian, lorentzian

            g, lz = hist.gaussian, hist.lorentzian
            c = hist.centers
            _write_rows(
                run.path("weights_histogram.csv"),
                ["bin_lo", "bin_hi", "count", "gaussian", "lorentzian"],
                zip(hist.edges[:-1], hist.edges[1:], hist.counts,
                    gaussian(c, g.a, g.x0, g.width), lorentzian(c, lz.a, lz.x0, lz.width)),
            )
            _write_rows(
                run.path("weights.csv"),
                ["feature"] + list(cell.model.target_labels),
                ([lab, *map(float, row)] for lab, row in zip(cell.model.feature_labels, cell.model.weights)),
            )
            _write_json(run.path("weights_fit.json"), hist.to_dict())
    return _outputs(config, {"cell": cell, "histogram": hist})


def injection_matrix(
    net: GridNetwork, obs: ObservationSet, rows: np.ndarray, overrides: dict[str, np.ndarray] | None = None
) -> np.ndarray:
    """Per-bus active injections (``len(rows) x n_bus``) for selected observation rows.

    Buses with a ``label`` take that observation column (loads negated when
    stored as magnitudes); ``overrides`` replaces columns by label, e.g. with
    predictions.  Unlabelled buses keep their network ``p_set``.
    """
    overrides = overrides or {}
    P = np.tile(np.array([b.p_set for b in net.buses], dtype=float), (len(rows), 1))
    for k, bus in enumerate(net.buses):
        if bus.label is None:
            continue
        if bus.label in overrides:
            col = np.asarray(overrides[bus.label], dtype=float)
        else:
            try:
                col = obs.column(bus.label)[rows]
            except (KeyError, ValueError):
                raise DataError(f"network bus {bus.id} maps to unknown column {bus.label!r}") from None
        if bus.label.startswith(LOAD_PREFIX) and obs.loads_are_magnitudes:
            col = -col
        P[:, k] = col
    return P


def _check_mapping(net: GridNetwork, targets: Sequence[str]) -> None:
    mapped = {b.label for b in net.buses if b.label is not None}
    unmapped = [t for t in targets if t not in mapped]
    if unmapped:
        raise ConfigError(f"inferred buses {unmapped} are not mapped onto the network")
    for b in net.buses:
        if b.label is None:
            continue
        if b.label.startswith(LOAD_PREFIX) and b.kind is not BusKind.LOAD:
            raise GridError(f"bus {b.id} is not a load but maps to {b.label}")
        if b.label.startswith(GEN_PREFIX) and b.kind is BusKind.LOAD:
            raise GridError(f"load bus {b.id} maps to generator column {b.label}")


def run_flow_reconstruction(config: ExperimentConfig) -> RunOutputs:
    """Infer hidden loads on test rows, solve the AC power flow for true and inferred
    injections, and report per-line flows with the aggregate metrics.

    Writes ``nrmse.csv``, ``flows.csv`` and ``flow_summary.json``.
    """
    if config.network is None:
        raise ConfigError("flow reconstruction needs a 'network' file")
    pf = config.powerflow
    with _run(config, "flows") as run:
        obs, split = _prepare(config, run)
        net = load_network(config.network)
        if config.leave_out.target_kind is not TargetKind.LOADS:
            raise ConfigError("flow reconstruction infers loads; set leave_out.target_kind to 'loads'")
        with run.stage("fit"):
            cell = leave_out_cell(obs, split, config.leave_out, config.alpha, standardize=config.standardize)
        _check_mapping(net, cell.model.target_labels)
        rows = split.test if pf.max_timestamps is None else split.test[: pf.max_timestamps]
        problem = cell.problem
        pred = predict(cell.model, problem.X[rows])
        overrides = {}
        if not pf.oracle_injections:
            overrides = {lab: pred[:, t] for t, lab in enumerate(cell.model.target_labels)}
        with run.stage("powerflow"):
            p_true = injection_matrix(net, obs, rows)
            p_hat = injection_matrix(net, obs, rows, overrides)
            report = flow_series(
                net, p_true, p_hat,
                timestamps=problem.timestamps[rows],
                power_factor=pf.power_factor,
                options=SolveOptions(pf.tol, pf.max_iter),
                warm_start=pf.warm_start,
                retry=pf.retry,
            )
        with run.stage("write"):
            cell.report.write_csv(run.path("nrmse.csv"))
            report.write_csv(run.path("flows.csv"))
            summary = report.summary()
            summary["load_nrmse_test"] = {
                lab: float(x) for lab, x in zip(cell.report.target_labels, cell.report.nrmse_test)
            }
            summary["oracle_injections"] = pf.oracle_injections
            _write_json(run.path("flow_summary.json"), summary)
    return _outputs(config, {"cell": cell, "flows": report})


COMMANDS: dict[str, Callable[[ExperimentConfig], RunOutputs]] = {
    "synthesize": run_synthesize,
    "fit": run_top_m_experiment,
    "sweep-m": run_m_sweep,
    "sweep-train-size": run_train_size_sweep,
    "flows": run_flow_reconstruction,
    "gens": run_generator_experiment,
    "analyze-weights": run_analyze_weights,
}
