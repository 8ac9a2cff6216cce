"""Data loading, feature construction, and dataset splitting.

The on-disk format is a UTF-8 CSV with the exact header

    timestamp,wind_speed,wind_speed_std,wind_dir,wind_dir_std,temperature,pressure,power

where timestamp is ISO-8601 and everything else is a decimal number.
Wind speed is m/s, direction degrees, temperature Celsius, pressure hPa,
power kW. From the five weather columns we build the six model features
used everywhere downstream, in this fixed order:

    v          mean wind speed
    iv_turb    turbulence intensity of speed, std over |mean|
    sin_dir    sine of the mean direction
    isin_turb  the same intensity ratio carried onto the sine scale
    temp       air temperature
    pressure   station pressure

Intensity ratios are floored at an epsilon denominator and capped so a
near-zero mean cannot blow a single row up into an outlier that
dominates clustering. Negative power is kept as-is (a farm can draw
from the grid); rows with missing cells or negative speed/spread
readings are dropped with a counted warning.
"""

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass
from datetime import datetime
from typing import Optional

import numpy as np

from .errors import (
    EmptyInput,
    BadFoldCount,
    InvalidConfig,
    LengthMismatch,
    MalformedNumber,
    MissingColumn,
    MultiYearSpan,
    NonFiniteInput,
    SchemaMismatch,
    TooFewRows,
)

log = logging.getLogger(__name__)

RAW_COLUMNS = (
    "timestamp",
    "wind_speed",
    "wind_speed_std",
    "wind_dir",
    "wind_dir_std",
    "temperature",
    "pressure",
    "power",
)

FEATURE_NAMES = ("v", "iv_turb", "sin_dir", "isin_turb", "temp", "pressure")

INTENSITY_EPS = 1e-6
INTENSITY_CAP = 10.0

# columns that cannot be negative in a physically sane record
_NONNEGATIVE = ("wind_speed", "wind_speed_std", "wind_dir_std")


def turbulence_intensity(mean, std, eps=INTENSITY_EPS):
    """Intensity ratio std / max(|mean|, eps), clamped to INTENSITY_CAP.

    Total on all finite inputs: the eps floor absorbs a zero mean and
    the cap bounds the result, so downstream code never sees inf.
    """
    std = np.abs(np.asarray(std, dtype=float))
    denom = np.maximum(np.abs(np.asarray(mean, dtype=float)), eps)
    return np.minimum(std / denom, INTENSITY_CAP)


@dataclass
class StandardizationParams:
    """Per-column affine transform (x - mean) / std.

    Columns whose sample std falls below 1e-12 are flagged degenerate:
    they transform to zero and invert back to the stored mean.
    """

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=float)
        self.stds = np.asarray(self.stds, dtype=float)

    @property
    def degenerate(self):
        return self.stds < 1e-12

    def apply(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.means.shape[0]:
            raise SchemaMismatch(self.means.shape[0], X.shape[1])
        safe = np.where(self.degenerate, 1.0, self.stds)
        Z = (X - self.means) / safe
        Z[:, self.degenerate] = 0.0
        return Z

    def invert(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.shape[1] != self.means.shape[0]:
            raise SchemaMismatch(self.means.shape[0], Z.shape[1])
        safe = np.where(self.degenerate, 0.0, self.stds)
        return Z * safe + self.means


@dataclass
class Dataset:
    """Features, targets, and timestamps kept in row correspondence.

    ``standardization`` records the transform already applied to
    ``features`` (None while the features are still raw).
    """

    features: np.ndarray
    targets: np.ndarray
    timestamps: np.ndarray
    feature_names: tuple = FEATURE_NAMES
    standardization: Optional[StandardizationParams] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype=object)
        if self.features.ndim != 2:
            if self.features.size == 0:
                raise EmptyInput("feature matrix")
            raise ValueError("features must be 2-D")
        n = self.features.shape[0]
        if self.targets.shape[0] != n:
            raise LengthMismatch(n, self.targets.shape[0])
        if self.timestamps.shape[0] != n:
            raise LengthMismatch(n, self.timestamps.shape[0])

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    def column(self, name):
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise MissingColumn(name) from None
        return self.features[:, j]

    def take(self, indices):
        indices = np.asarray(indices)
        return dataclasses.replace(
            self,
            features=self.features[indices],
            targets=self.targets[indices],
            timestamps=self.timestamps[indices],
        )


def _parse_timestamp(text):
    # fromisoformat in 3.10 rejects a trailing Z, normalize it first
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return datetime.fromisoformat(text)


def parse_csv(path):
    """Parse a raw CSV into a columnar batch of records.

    Returns a dict keyed by RAW_COLUMNS: an object array of datetimes
    plus float arrays. Rows with empty/NaN cells or negative
    speed/spread readings are dropped and counted in a warning; cells
    that fail to parse at all raise MalformedNumber. Wind direction is
    normalized into [0, 360). Timestamps that go backwards only produce
    a warning, reordering is left to the caller.
    """
    raw = {name: [] for name in RAW_COLUMNS}
    dropped = 0
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise EmptyInput(str(path))
        got = tuple(reader.fieldnames)
        if got != RAW_COLUMNS:
            for name in RAW_COLUMNS:
                if name not in got:
                    raise MissingColumn(name)
            raise SchemaMismatch(list(RAW_COLUMNS), list(got))
        for rec in reader:
            line = reader.line_num
            values = {}
            skip = False
            for name in RAW_COLUMNS:
                cell = rec[name]
                if cell is None or cell.strip() == "":
                    skip = True
                    break
                cell = cell.strip()
                if name == "timestamp":
                    try:
                        values[name] = _parse_timestamp(cell)
                    except ValueError:
                        raise MalformedNumber(line, name, cell) from None
                else:
                    try:
                        x = float(cell)
                    except ValueError:
                        raise MalformedNumber(line, name, cell) from None
                    if math.isnan(x):
                        skip = True
                        break
                    if name in _NONNEGATIVE and x < 0:
                        skip = True
                        break
                    values[name] = x
            if skip:
                dropped += 1
                continue
            values["wind_dir"] %= 360.0
            for name in RAW_COLUMNS:
                raw[name].append(values[name])
    if dropped:
        log.warning("dropped %d unusable rows from %s", dropped, path)
    out = {"timestamp": np.asarray(raw["timestamp"], dtype=object)}
    for name in RAW_COLUMNS[1:]:
        out[name] = np.asarray(raw[name], dtype=float)
    log.info("parsed %d rows from %s", len(out["timestamp"]), path)
    ts = out["timestamp"]
    if len(ts) > 1:
        backwards = sum(1 for a, b in zip(ts, ts[1:]) if b < a)
        if backwards:
            log.warning("%d timestamp steps go backwards in %s",
                        backwards, path)
    return out


def write_csv(path, raw):
    """Write a columnar record batch back out in the canonical schema."""
    n = len(raw["timestamp"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RAW_COLUMNS)
        for i in range(n):
            row = [raw["timestamp"][i].isoformat()]
            row.extend(repr(float(raw[name][i])) for name in RAW_COLUMNS[1:])
            writer.writerow(row)


def engineer_features(raw):
    """Build the unstandardized six-feature Dataset from a record batch.

    v is the mean speed, iv_turb its intensity ratio; the direction
    enters through its sine, and the direction spread through
    |sin(spread)| over |sin(direction)| on the same capped intensity
    scale. Temperature and pressure pass straight through.
    """
    v = np.asarray(raw["wind_speed"], dtype=float)
    if v.size == 0:
        raise EmptyInput("record batch")
    iv = turbulence_intensity(v, raw["wind_speed_std"])
    sin_dir = np.sin(np.deg2rad(np.asarray(raw["wind_dir"], dtype=float)))
    sin_spread = np.abs(np.sin(np.deg2rad(
        np.asarray(raw["wind_dir_std"], dtype=float))))
    isin = turbulence_intensity(sin_dir, sin_spread)
    temp = np.asarray(raw["temperature"], dtype=float)
    pres = np.asarray(raw["pressure"], dtype=float)
    X = np.column_stack([v, iv, sin_dir, isin, temp, pres])
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("feature matrix")
    y = np.asarray(raw["power"], dtype=float)
    if not np.all(np.isfinite(y)):
        raise NonFiniteInput("power column")
    return Dataset(features=X, targets=y, timestamps=raw["timestamp"])


def load_dataset(path):
    return engineer_features(parse_csv(path))


# ---------------------------------------------------------------------------
# standardization

def fit_standardization(train):
    """Per-column mean and sample std over the training rows only."""
    if train.n < 2:
        raise TooFewRows(2, train.n)
    X = train.features
    return StandardizationParams(
        means=X.mean(axis=0), stds=X.std(axis=0, ddof=1))


def apply_standardization(params, ds):
    """Transform a dataset's features; targets are left untouched."""
    return dataclasses.replace(
        ds, features=params.apply(ds.features), standardization=params)


# ---------------------------------------------------------------------------
# splitting

def split_train_test(ds, train_frac, mode="chronological", seed=None):
    """Split into train/test, first ceil(frac * n) rows to train.

    Chronological mode keeps row order (no temporal leakage); shuffled
    mode permutes rows by seed first.
    """
    if not 0.0 < train_frac < 1.0:
        raise InvalidConfig(f"train_frac must be in (0, 1), got {train_frac}")
    if ds.n < 10:
        raise TooFewRows(10, ds.n)
    order = np.arange(ds.n)
    if mode == "shuffled":
        from .rng import make_rng
        order = make_rng(0 if seed is None else seed).permutation(ds.n)
    elif mode != "chronological":
        raise InvalidConfig(f"unknown split mode {mode!r}")
    cut = math.ceil(train_frac * ds.n)
    if cut == 0 or cut == ds.n:
        raise TooFewRows(2, ds.n)
    return ds.take(order[:cut]), ds.take(order[cut:])


def kfold_indices(n, k, seed=None):
    """Partition range(n) into k folds, first n % k folds one longer.

    With a seed the row order is shuffled first; without, folds are
    contiguous blocks in row order. Same (n, k, seed) always gives the
    same folds.
    """
    if k < 2 or k > n:
        raise BadFoldCount(k, n)
    order = np.arange(n)
    if seed is not None:
        from .rng import make_rng
        order = make_rng(seed).permutation(n)
    base = n // k
    extra = n % k
    folds = []
    start = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(order[start:start + size])
        start += size
    return folds


def quarter_split(ds):
    """Split one calendar year of data into four quarterly datasets.

    Returns a list of four entries (Jan-Mar first); quarters with no
    rows come back as None. Data spanning several years is refused.
    """
    years = {t.year for t in ds.timestamps}
    if len(years) > 1:
        raise MultiYearSpan(years)
    months = np.array([t.month for t in ds.timestamps])
    out = []
    for q in range(4):
        mask = (months >= 3 * q + 1) & (months <= 3 * q + 3)
        out.append(ds.take(np.flatnonzero(mask)) if mask.any() else None)
    return out


# ---------------------------------------------------------------------------
# descriptive statistics

def column_stats(x):
    """Mean, sample std, range, and moment-based shape for one column.

    Skewness is m3 / m2^1.5 and kurtosis m4 / m2^2 (non-excess, so a
    normal sample sits near 3; heavy-tailed power data lands in the
    hundreds). A constant column gets NaN for both shape numbers.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise EmptyInput("column")
    mu = x.mean()
    centered = x - mu
    m2 = np.mean(centered ** 2)
    if m2 < 1e-24:
        skew = float("nan")
        kurt = float("nan")
    else:
        skew = np.mean(centered ** 3) / m2 ** 1.5
        kurt = np.mean(centered ** 4) / m2 ** 2
    return {
        "n": int(x.size),
        "mean": float(mu),
        "std": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "min": float(x.min()),
        "max": float(x.max()),
        "skewness": float(skew),
        "kurtosis": float(kurt),
    }


@dataclass
class DatasetStats:
    """The four headline statistics averaged across feature columns."""

    mean: float
    std: float
    skewness: float
    kurtosis: float
    per_column: dict


def summarize(ds):
    """Average per-column mean/std/skewness/kurtosis across features.

    Columns with undefined shape statistics (constant columns) are
    skipped in the average rather than poisoning it. Power is reported
    in per_column but kept out of the averages since it lives on a
    different scale than the (typically standardized) features.
    """
    if ds.n < 4:
        raise TooFewRows(4, ds.n)
    per_column = {}
    for j, name in enumerate(ds.feature_names):
        per_column[name] = column_stats(ds.features[:, j])
    feature_rows = [per_column[name] for name in ds.feature_names]
    per_column["power"] = column_stats(ds.targets)

    def avg(key):
        vals = np.array([row[key] for row in feature_rows])
        return float(np.nanmean(vals)) if not np.all(np.isnan(vals)) \
            else float("nan")

    return DatasetStats(
        mean=avg("mean"),
        std=avg("std"),
        skewness=avg("skewness"),
        kurtosis=avg("kurtosis"),
        per_column=per_column,
    )


def stats_cov(blocks):
    """Coefficient of variation of each headline statistic across blocks.

    ``blocks`` is a list of DatasetStats (for example Year plus the four
    quarters); the CoV is sample std over mean, per statistic.
    """
    if len(blocks) < 2:
        raise TooFewRows(2, len(blocks))
    out = {}
    for key in ("mean", "std", "skewness", "kurtosis"):
        vals = np.array([getattr(b, key) for b in blocks], dtype=float)
        mu = vals.mean()
        sd = vals.std(ddof=1)
        out[key] = float(sd / mu) if abs(mu) > 1e-300 else float("inf")
    return out
