"""Observation time series: ingestion, synthesis, target selection and assembly.

Loads are stored as positive magnitudes (``loads_are_magnitudes=True``);
the sign convention (loads negative) is applied only when injections are
handed to the power-flow solver.  Column labels are qualified by kind,
``L:<name>`` for loads and ``G:<name>`` for generators.
"""

from __future__ import annotations

import csv
import enum
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, CsvFormatError, DataError

LOAD_PREFIX = "L:"
GEN_PREFIX = "G:"

HOURS_PER_DAY = 24
HOURS_PER_WEEK = 168
HOURS_PER_YEAR = 52 * HOURS_PER_WEEK  # 364-day synthetic year
FULL_SCALE_SAMPLES = 20 * HOURS_PER_YEAR  # 174,720
DESK_SCALE_SAMPLES = 2 * HOURS_PER_YEAR  # 17,472


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ObservationSet:
    load_labels: tuple[str, ...]
    gen_labels: tuple[str, ...]
    timestamps: np.ndarray
    loads: np.ndarray  # N x M_load
    gens: np.ndarray  # N x M_gen
    loads_are_magnitudes: bool = True

    def __post_init__(self) -> None:
        loads = np.array(self.loads, dtype=float).reshape(len(self.timestamps), -1)
        gens = np.array(self.gens, dtype=float).reshape(len(self.timestamps), -1)
        ts = np.array(self.timestamps, dtype=np.int64)
        lab_l, lab_g = tuple(self.load_labels), tuple(self.gen_labels)
        if ts.ndim != 1 or ts.size < 1:
            raise DataError("an observation set needs at least one timestamp")
        if loads.shape != (ts.size, len(lab_l)) or gens.shape != (ts.size, len(lab_g)):
            raise DataError(
                f"shape mismatch: loads {loads.shape}, gens {gens.shape} for {ts.size} timestamps, "
                f"{len(lab_l)} load and {len(lab_g)} generator labels"
            )
        if len(set(lab_l)) != len(lab_l) or len(set(lab_g)) != len(lab_g):
            raise DataError("duplicate bus labels")
        if not (np.all(np.isfinite(loads)) and np.all(np.isfinite(gens))):
            raise DataError("observations must be finite; model missing data by leaving buses out")
        if not self.loads_are_magnitudes and np.any(loads > 0):
            raise DataError("signed loads must be <= 0")
        object.__setattr__(self, "load_labels", lab_l)
        object.__setattr__(self, "gen_labels", lab_g)
        object.__setattr__(self, "timestamps", _readonly(ts))
        object.__setattr__(self, "loads", _readonly(loads))
        object.__setattr__(self, "gens", _readonly(gens))

    @property
    def n_samples(self) -> int:
        return self.timestamps.size

    @property
    def columns(self) -> list[str]:
        return [LOAD_PREFIX + x for x in self.load_labels] + [GEN_PREFIX + x for x in self.gen_labels]

    def column(self, label: str) -> np.ndarray:
        """Series for a qualified label (``L:name`` or ``G:name``)."""
        if label.startswith(LOAD_PREFIX):
            return self.loads[:, self.load_labels.index(label[2:])]
        if label.startswith(GEN_PREFIX):
            return self.gens[:, self.gen_labels.index(label[2:])]
        raise KeyError(label)

    def matrix(self, labels: Sequence[str]) -> np.ndarray:
        if not labels:
            return np.empty((self.n_samples, 0))
        return np.column_stack([self.column(lab) for lab in labels])

    def signed_loads(self) -> np.ndarray:
        """Loads as negative injections."""
        return -self.loads if self.loads_are_magnitudes else self.loads

    def equals(self, other: "ObservationSet") -> bool:
        return (
            self.load_labels == other.load_labels
            and self.gen_labels == other.gen_labels
            and self.loads_are_magnitudes == other.loads_are_magnitudes
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.loads, other.loads)
            and np.array_equal(self.gens, other.gens)
        )


# ---------------------------------------------------------------- CSV / cache


@dataclass(frozen=True)
class CsvSchema:
    """Expected columns of an observation CSV.

    ``loads``/``gens`` list required labels (without prefix) in the order
    they should be stored; ``None`` takes every column of that kind in file
    order.
    """

    loads: tuple[str, ...] | None = None
    gens: tuple[str, ...] | None = None
    loads_are_magnitudes: bool = True


def ingest_csv(path: str | Path, schema: CsvSchema | None = None) -> ObservationSet:
    """Parse ``timestamp,L:<name>...,G:<name>...`` into an :class:`ObservationSet`.

    Values are per-unit on the 100 MW base.  Errors carry the 1-based file
    row and the column header.
    """
    schema = schema or CsvSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvFormatError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "timestamp":
        raise CsvFormatError("first column must be 'timestamp'", row=1, column=1)
    for k, h in enumerate(header[1:], start=2):
        if not (h.startswith(LOAD_PREFIX) or h.startswith(GEN_PREFIX)) or len(h) <= 2:
            raise CsvFormatError("column label must look like 'L:<name>' or 'G:<name>'", row=1, column=k)
    if len(set(header)) != len(header):
        raise CsvFormatError("duplicate column label", row=1)

    file_loads = [h[2:] for h in header[1:] if h.startswith(LOAD_PREFIX)]
    file_gens = [h[2:] for h in header[1:] if h.startswith(GEN_PREFIX)]
    load_labels = list(schema.loads) if schema.loads is not None else file_loads
    gen_labels = list(schema.gens) if schema.gens is not None else file_gens
    missing = [LOAD_PREFIX + x for x in load_labels if x not in file_loads]
    missing += [GEN_PREFIX + x for x in gen_labels if x not in file_gens]
    if missing:
        raise CsvFormatError(f"missing columns {missing}", row=1)
    pos = {h: k for k, h in enumerate(header)}
    cols = [pos[LOAD_PREFIX + x] for x in load_labels] + [pos[GEN_PREFIX + x] for x in gen_labels]

    body = rows[1:]
    if not body:
        raise CsvFormatError("no data rows", row=2)
    ts = np.empty(len(body), dtype=np.int64)
    values = np.empty((len(body), len(cols)))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise CsvFormatError(f"expected {len(header)} fields, found {len(row)}", row=line)
        try:
            ts[r] = int(row[0])
        except ValueError:
            raise CsvFormatError(f"non-integer timestamp {row[0]!r}", row=line, column="timestamp") from None
        for c, k in enumerate(cols):
            cell = row[k].strip()
            if not cell:
                raise CsvFormatError("blank cell", row=line, column=header[k])
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise CsvFormatError(f"non-numeric cell {cell!r}", row=line, column=header[k]) from None
            if not math.isfinite(values[r, c]):
                raise CsvFormatError(f"non-finite cell {cell!r}", row=line, column=header[k])
    nl = len(load_labels)
    return ObservationSet(
        tuple(load_labels), tuple(gen_labels), ts, values[:, :nl], values[:, nl:], schema.loads_are_magnitudes
    )


def write_csv(obs: ObservationSet, path: str | Path) -> None:
    """Inverse of :func:`ingest_csv`; floats written with ``repr`` so they round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp"] + obs.columns)
        data = np.hstack([obs.loads, obs.gens])
        for ts, row in zip(obs.timestamps.tolist(), data.tolist()):
            w.writerow([ts] + [repr(x) for x in row])


CACHE_MAGIC = b"GRIDOBS1"


def save_cache(obs: ObservationSet, path: str | Path) -> None:
    """Binary cache: ``GRIDOBS1``, uint32 LE header length, UTF-8 JSON header,
    then ``N`` int64 LE timestamps and an ``N x (M_load + M_gen)`` row-major
    float64 LE block (loads first)."""
    header = json.dumps(
        {
            "n_samples": obs.n_samples,
            "load_labels": list(obs.load_labels),
            "gen_labels": list(obs.gen_labels),
            "loads_are_magnitudes": obs.loads_are_magnitudes,
        },
        sort_keys=True,
    ).encode("utf-8")
    data = np.ascontiguousarray(np.hstack([obs.loads, obs.gens]), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        fh.write(obs.timestamps.astype("<i8").tobytes())
        fh.write(data.tobytes())


def load_cache(path: str | Path) -> ObservationSet:
    raw = Path(path).read_bytes()
    if raw[:8] != CACHE_MAGIC:
        raise DataError(f"{path}: not an observation cache file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    meta = json.loads(raw[12 : 12 + hlen].decode("utf-8"))
    n = meta["n_samples"]
    m = len(meta["load_labels"]) + len(meta["gen_labels"])
    off = 12 + hlen
    expected = off + 8 * n + 8 * n * m
    if len(raw) != expected:
        raise DataError(f"{path}: truncated or oversized payload ({len(raw)} bytes, expected {expected})")
    ts = np.frombuffer(raw, dtype="<i8", count=n, offset=off)
    data = np.frombuffer(raw, dtype="<f8", count=n * m, offset=off + 8 * n).reshape(n, m)
    nl = len(meta["load_labels"])
    return ObservationSet(
        tuple(meta["load_labels"]),
        tuple(meta["gen_labels"]),
        ts.copy(),
        data[:, :nl].copy(),
        data[:, nl:].copy(),
        meta["loads_are_magnitudes"],
    )


def load_observations(path: str | Path) -> ObservationSet:
    """CSV or binary cache, picked by content."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    return load_cache(path) if head == CACHE_MAGIC else ingest_csv(path)


# ---------------------------------------------------------------- synthesis


class GenMode(str, enum.Enum):
    STEP = "step"
    LOAD_FOLLOWING = "load_following"


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the synthetic load/generation generator.

    Each load is ``s_i * (1 + A*season(t) + f*(sqrt(rho)*z0(t) + sqrt(1-rho)*z_i(t))) + e_i(t)``
    where ``season`` is a fixed daily/weekly/yearly profile shared by all
    loads, ``z0`` a common white Gaussian factor, ``z_i`` idiosyncratic white
    noise and ``e_i`` measurement noise of std ``noise_scale * sqrt(s_i)``
    (relatively noisier for small loads).
    Per-bus scales ``s_i`` are log-normal unless given explicitly.

    Generators either follow a step-wise dispatch independent of the loads
    (dwell times geometric with mean ``gen_dwell_hours``, levels drawn from
    ``gen_levels`` times the rating) or take a fixed share of total load
    (``gen_shares``, random shares summing to one when not given).
    """

    n_loads: int = 163
    n_gens: int = 36
    n_samples: int = DESK_SCALE_SAMPLES
    rho: float = 0.95
    seasonal_amplitude: float = 0.3
    fluctuation_scale: float = 0.03
    noise_scale: float = 0.01
    load_scale_median: float = 0.3
    load_scale_sigma: float = 1.0
    load_scales: tuple[float, ...] | None = None
    gen_mode: GenMode = GenMode.STEP
    gen_shares: tuple[float, ...] | None = None
    gen_dwell_hours: float = 72.0
    gen_levels: tuple[float, ...] = (0.0, 0.4, 0.7, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "gen_mode", GenMode(self.gen_mode))
        if self.load_scales is not None:
            object.__setattr__(self, "load_scales", tuple(float(x) for x in self.load_scales))
        object.__setattr__(self, "gen_levels", tuple(float(x) for x in self.gen_levels))
        if self.gen_shares is not None:
            object.__setattr__(self, "gen_shares", tuple(float(x) for x in self.gen_shares))
        if self.n_loads < 1 or self.n_gens < 0 or self.n_samples < 1:
            raise ConfigError("need n_loads >= 1, n_gens >= 0, n_samples >= 1")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"rho must lie in [0, 1], got {self.rho}")
        for name in ("seasonal_amplitude", "fluctuation_scale", "noise_scale", "load_scale_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.load_scale_median <= 0 or self.gen_dwell_hours < 1:
            raise ConfigError("load_scale_median must be positive and gen_dwell_hours >= 1")
        if self.load_scales is not None and (
            len(self.load_scales) != self.n_loads or min(self.load_scales) <= 0
        ):
            raise ConfigError("load_scales must list n_loads positive values")
        if self.gen_shares is not None and (
            len(self.gen_shares) != self.n_gens or min(self.gen_shares, default=0.0) < 0
        ):
            raise ConfigError("gen_shares must list n_gens non-negative values")
        if not self.gen_levels or min(self.gen_levels) < 0:
            raise ConfigError("gen_levels must be non-empty and non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthesize keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["gen_mode"] = self.gen_mode.value
        for k in ("load_scales", "gen_levels", "gen_shares"):
            if out[k] is not None:
                out[k] = list(out[k])
        return out


def seasonal_profile(t: np.ndarray) -> np.ndarray:
    """Zero-mean daily + weekly + yearly shape, hourly ``t``."""
    t = np.asarray(t, dtype=float)
    daily = 0.6 * np.sin(2 * np.pi * (t - 9.0) / HOURS_PER_DAY) + 0.2 * np.sin(4 * np.pi * t / HOURS_PER_DAY)
    weekly = 0.25 * np.sin(2 * np.pi * t / HOURS_PER_WEEK)
    yearly = 0.3 * np.cos(2 * np.pi * t / HOURS_PER_YEAR)
    return daily + weekly + yearly


def _step_dispatch(n: int, rating: float, cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(n)
    levels = np.asarray(cfg.gen_levels) * rating
    pos = 0
    p = 1.0 / cfg.gen_dwell_hours
    while pos < n:
        length = int(rng.geometric(p))
        out[pos : pos + length] = levels[rng.integers(levels.size)]
        pos += length
    return out


def synthesize(config: SynthConfig, seed: int) -> ObservationSet:
    """Deterministic synthetic observation set for ``(config, seed)``."""
    cfg = config
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    r_scale, r_common, r_idio, r_noise, r_gen = rng.spawn(5)
    n, m = cfg.n_samples, cfg.n_loads
    t = np.arange(n)

    if cfg.load_scales is not None:
        scales = np.array(cfg.load_scales)
    else:
        scales = cfg.load_scale_median * np.exp(cfg.load_scale_sigma * r_scale.standard_normal(m))
    common = cfg.seasonal_amplitude * seasonal_profile(t)
    z0 = r_common.standard_normal(n)
    zi = r_idio.standard_normal((n, m))
    fluct = math.sqrt(cfg.rho) * z0[:, None] + math.sqrt(1.0 - cfg.rho) * zi
    shape = 1.0 + common[:, None] + cfg.fluctuation_scale * fluct
    loads = scales[None, :] * shape
    if cfg.noise_scale > 0:
        loads = loads + cfg.noise_scale * np.sqrt(scales)[None, :] * r_noise.standard_normal((n, m))

    g = cfg.n_gens
    if g == 0:
        gens = np.empty((n, 0))
    elif cfg.gen_mode is GenMode.LOAD_FOLLOWING:
        shares = r_gen.dirichlet(np.ones(g))
        if cfg.gen_shares is not None:
            shares = np.array(cfg.gen_shares)
        gens = loads.sum(axis=1)[:, None] * shares[None, :]
    else:
        # ratings sized so that full output roughly covers mean total load
        ratings = r_gen.dirichlet(np.ones(g)) * scales.sum() * 1.6
        gens = np.column_stack([_step_dispatch(n, ratings[k], cfg, r_gen) for k in range(g)])

    width_l = len(str(m))
    width_g = len(str(max(g, 1)))
    return ObservationSet(
        tuple(f"{k + 1:0{width_l}d}" for k in range(m)),
        tuple(f"{k + 1:0{width_g}d}" for k in range(g)),
        t,
        loads,
        gens,
        loads_are_magnitudes=True,
    )


# ---------------------------------------------------------------- leave-out


class TargetKind(str, enum.Enum):
    LOADS = "loads"
    GENERATORS = "generators"


class Ranking(str, enum.Enum):
    BY_MEAN_DEMAND = "mean_demand"
    BY_LABEL_LIST = "labels"


@dataclass(frozen=True)
class LeaveOutSpec:
    """Which buses are hidden and inferred.

    ``explicit_labels`` (unqualified names) is required with
    ``Ranking.BY_LABEL_LIST``; ``m_top`` must then equal its length.
    """

    target_kind: TargetKind = TargetKind.LOADS
    m_top: int = 5
    ranking: Ranking = Ranking.BY_MEAN_DEMAND
    explicit_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_kind", TargetKind(self.target_kind))
        object.__setattr__(self, "ranking", Ranking(self.ranking))
        if self.explicit_labels is not None:
            object.__setattr__(self, "explicit_labels", tuple(self.explicit_labels))
        if self.m_top < 1:
            raise ConfigError(f"m_top must be at least 1, got {self.m_top}")
        if self.ranking is Ranking.BY_LABEL_LIST:
            if not self.explicit_labels or len(self.explicit_labels) != self.m_top:
                raise ConfigError("label ranking needs explicit_labels of length m_top")


def rank_and_split_targets(
    obs: ObservationSet, spec: LeaveOutSpec, train_rows: np.ndarray | None = None
) -> tuple[list[str], list[str]]:
    """Qualified ``(feature_labels, target_labels)`` for a leave-out spec.

    Ranking is by mean absolute power over ``train_rows`` (all rows if
    ``None``), descending; ties go to the lower original column index.
    Targets come out in ranked order, features in original column order.
    Loads: ``1 <= m_top < M_load``.  Generators: features are all loads plus
    the remaining generators, so ``m_top == M_gen`` is allowed as long as
    there is at least one load.
    """
    if spec.target_kind is TargetKind.LOADS:
        names, prefix, data = obs.load_labels, LOAD_PREFIX, obs.loads
        upper = len(names) - 1
    else:
        names, prefix, data = obs.gen_labels, GEN_PREFIX, obs.gens
        upper = len(names) if obs.load_labels else len(names) - 1
    if not 1 <= spec.m_top <= upper:
        raise ConfigError(f"m_top={spec.m_top} out of range [1, {upper}] for {len(names)} {spec.target_kind.value}")

    if spec.ranking is Ranking.BY_LABEL_LIST:
        unknown = [x for x in spec.explicit_labels if x not in names]
        if unknown:
            raise ConfigError(f"unknown {spec.target_kind.value} labels {unknown}")
        chosen = list(spec.explicit_labels)
    else:
        rows = data if train_rows is None else data[np.asarray(train_rows)]
        mean = np.mean(np.abs(rows), axis=0)
        order = np.argsort(-mean, kind="stable")
        chosen = [names[k] for k in order[: spec.m_top]]

    targets = [prefix + x for x in chosen]
    remaining = [prefix + x for x in names if x not in set(chosen)]
    if spec.target_kind is TargetKind.GENERATORS:
        features = [LOAD_PREFIX + x for x in obs.load_labels] + remaining
    else:
        features = remaining
    return features, targets


# ---------------------------------------------------------------- split / assembly


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "train", _readonly(np.array(self.train, dtype=np.int64)))
        object.__setattr__(self, "test", _readonly(np.array(self.test, dtype=np.int64)))
        if np.intersect1d(self.train, self.test).size:
            raise DataError("train and test rows overlap")
        if self.train.size < 1:
            raise DataError("empty training partition")


def _count(fraction: float, n: int) -> int:
    return int(math.floor(fraction * n + 0.5))


def random_split(n: int, train_fraction: float = 0.8, seed: int = 0) -> Split:
    """Uniform random partition of ``n`` rows; indices returned sorted."""
    if not 0 < train_fraction <= 1:
        raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
    n_train = min(n, max(1, _count(train_fraction, n)))
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(n)
    return Split(np.sort(perm[:n_train]), np.sort(perm[n_train:]))


def block_split(n: int, train_fraction: float = 0.8) -> Split:
    """Contiguous split: first rows train, last rows test."""
    if not 0 < train_fraction <= 1:
        raise ConfigError(f"train_fraction must be in (0, 1], got {train_fraction}")
    n_train = min(n, max(1, _count(train_fraction, n)))
    return Split(np.arange(n_train), np.arange(n_train, n))


def subsample_count(fraction: float, n_train: int) -> int:
    """Rows kept when training on ``fraction`` of the training partition (rounded up)."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"training fraction must be in (0, 1], got {fraction}")
    # guard against 0.01 * 139776 -> 1397.7600000000002 style noise before ceil
    return max(1, min(n_train, math.ceil(round(fraction * n_train, 9))))


def subsample_train(split: Split, fraction: float, seed: int = 0) -> Split:
    """Keep a random ``fraction`` of the training rows, test rows untouched.

    One seeded permutation is truncated, so for a fixed seed smaller
    fractions give subsets of larger ones.
    """
    k = subsample_count(fraction, split.train.size)
    perm = np.random.default_rng(np.random.SeedSequence(seed)).permutation(split.train.size)
    return Split(np.sort(split.train[perm[:k]]), split.test)


@dataclass(frozen=True)
class RegressionProblem:
    """Bias-augmented feature matrix ``X`` (last column all ones) and targets ``Y``, full length."""

    X: np.ndarray
    Y: np.ndarray
    feature_labels: tuple[str, ...]
    target_labels: tuple[str, ...]
    split: Split
    timestamps: np.ndarray = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.X.shape[1] != len(self.feature_labels) + 1 or self.Y.shape[1] != len(self.target_labels):
            raise DataError("column counts do not match label lists")
        if self.X.shape[0] != self.Y.shape[0]:
            raise DataError("X and Y row counts differ")
        if not np.all(self.X[:, -1] == 1.0):
            raise DataError("last column of X must be the bias column of ones")
        n = self.X.shape[0]
        rows = np.concatenate([self.split.train, self.split.test])
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise DataError("split references rows outside the data")

    @property
    def X_train(self) -> np.ndarray:
        return self.X[self.split.train]

    @property
    def Y_train(self) -> np.ndarray:
        return self.Y[self.split.train]

    @property
    def X_test(self) -> np.ndarray:
        return self.X[self.split.test]

    @property
    def Y_test(self) -> np.ndarray:
        return self.Y[self.split.test]

    def with_split(self, split: Split) -> "RegressionProblem":
        return RegressionProblem(self.X, self.Y, self.feature_labels, self.target_labels, split, self.timestamps)


def assemble(
    obs: ObservationSet,
    feature_labels: Sequence[str],
    target_labels: Sequence[str],
    split: Split | None = None,
    *,
    seed: int = 0,
    train_fraction: float = 0.8,
) -> RegressionProblem:
    """Stack observations into ``X`` (bias appended last) and ``Y``.

    Without an explicit ``split`` a seeded uniform random partition with
    ``train_fraction`` of the rows for training is drawn.  Split indices
    refer to timestamp-ordered rows.
    """
    overlap = set(feature_labels) & set(target_labels)
    if overlap:
        raise DataError(f"labels used as both feature and target: {sorted(overlap)}")
    if not target_labels:
        raise DataError("no target labels")
    order = np.argsort(obs.timestamps, kind="stable")
    X = np.hstack([obs.matrix(list(feature_labels)), np.ones((obs.n_samples, 1))])[order]
    Y = obs.matrix(list(target_labels))[order]
    if split is None:
        split = random_split(obs.n_samples, train_fraction, seed)
    return RegressionProblem(
        _readonly(X), _readonly(Y), tuple(feature_labels), tuple(target_labels), split, obs.timestamps[order]
    )
