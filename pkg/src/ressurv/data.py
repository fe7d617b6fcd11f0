"""Censored survival datasets: CSV ingestion, filtering, standardization,
fold assignment, and a Weibull proportional-hazards synthetic generator.

A dataset is an immutable bundle of a dense feature matrix plus per-sample
survival time and event indicator. Times are continuous and may contain
duplicates; tie handling is the loss module's concern.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataRowError,
    SchemaError,
    StratificationError,
    UnusableDatasetError,
)

HAZARD_KINDS = ("linear", "interaction", "deep")

# Feature columns whose variance falls at or below this are dropped by default.
DEFAULT_MIN_VARIANCE = 1e-8


@dataclass(frozen=True)
class SurvivalDataset:
    """Feature matrix with per-sample survival time and event indicator.

    `events[i]` is True when the event (death) was observed, False when the
    sample is censored. Arrays are locked read-only after construction, so a
    dataset can be shared freely across threads; derived datasets are new
    objects.
    """

    sample_ids: list[str]
    features: np.ndarray       # (n, p) float64
    feature_names: list[str]
    times: np.ndarray          # (n,) float64
    events: np.ndarray         # (n,) bool

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        times = np.asarray(self.times, dtype=np.float64).ravel()
        events = np.asarray(self.events).astype(bool).ravel()
        ids = [str(s) for s in self.sample_ids]
        names = [str(s) for s in self.feature_names]
        n, p = feats.shape
        if not (len(ids) == len(times) == len(events) == n):
            raise ValueError(
                f"inconsistent sample counts: {len(ids)} ids, {n} feature rows, "
                f"{len(times)} times, {len(events)} events"
            )
        if len(names) != p:
            raise ValueError(f"{len(names)} feature names for {p} columns")
        for arr in (feats, times, events):
            arr.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "sample_ids", ids)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    def subset(self, indices) -> "SurvivalDataset":
        """New dataset containing the given rows, in the given order."""
        idx = np.asarray(indices, dtype=np.intp)
        return SurvivalDataset(
            sample_ids=[self.sample_ids[i] for i in idx],
            features=self.features[idx],
            feature_names=list(self.feature_names),
            times=self.times[idx],
            events=self.events[idx],
        )

    def select_features(self, names: list[str]) -> "SurvivalDataset":
        """New dataset keeping only the named feature columns, in the given order."""
        pos = {name: j for j, name in enumerate(self.feature_names)}
        missing = [name for name in names if name not in pos]
        if missing:
            raise ValueError(f"unknown feature names: {missing[:5]}")
        cols = np.array([pos[name] for name in names], dtype=np.intp)
        return SurvivalDataset(
            sample_ids=list(self.sample_ids),
            features=self.features[:, cols],
            feature_names=list(names),
            times=self.times,
            events=self.events,
        )

    def sorted_by_id(self) -> "SurvivalDataset":
        """Rows reordered into canonical (lexicographic sample id) order."""
        order = sorted(range(self.n), key=lambda i: self.sample_ids[i])
        return self.subset(order)

    def require_trainable(self) -> None:
        """Check the invariants training relies on; raise if violated."""
        if self.n < 2:
            raise UnusableDatasetError(f"need at least 2 samples, got {self.n}")
        if self.n_events < 1:
            raise UnusableDatasetError("dataset contains no observed events")
        if not np.isfinite(self.features).all():
            raise UnusableDatasetError("features contain non-finite values")
        if not (np.isfinite(self.times).all() and (self.times > 0).all()):
            raise UnusableDatasetError("times must be strictly positive and finite")


@dataclass(frozen=True)
class StandardizationParams:
    """Per-feature mean and population standard deviation."""

    means: np.ndarray
    stddevs: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64).ravel()
        stds = np.asarray(self.stddevs, dtype=np.float64).ravel()
        if means.shape != stds.shape:
            raise ValueError("means and stddevs must have the same length")
        if not (stds > 0).all():
            raise ValueError("all stddevs must be strictly positive")
        means.flags.writeable = False
        stds.flags.writeable = False
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stddevs", stds)


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of samples into k folds, stratified by event indicator."""

    fold_of_sample: np.ndarray   # (n,) int in [0, k)
    k: int
    seed: int

    def __post_init__(self):
        fos = np.asarray(self.fold_of_sample, dtype=np.int64).ravel()
        fos.flags.writeable = False
        object.__setattr__(self, "fold_of_sample", fos)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_sample == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of_sample != fold)

    def content_hash(self) -> str:
        """Stable hex digest of the assignment, recorded in reports so runs
        on 'identical folds' can be verified."""
        import hashlib

        raw = self.fold_of_sample.astype("<i8").tobytes() + f"|k={self.k}".encode()
        return hashlib.sha256(raw).hexdigest()[:16]


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic censored survival dataset.

    Event times follow a Weibull proportional-hazards model: with true risk
    score s and U ~ uniform(0,1),

        T = (-ln U / (baseline_scale * exp(s)))**(1 / weibull_shape)

    Censoring times are uniform on [0, c_max] with c_max solved by bisection
    so the realized censored fraction lands on the target (the realized rate
    is within 1/n of the target, well inside +/-0.05 for n >= 20).
    """

    n: int
    p: int
    hazard_kind: str = "linear"
    true_coefficients: tuple[float, ...] | None = None
    weibull_shape: float = 1.0
    baseline_scale: float = 0.1
    target_censor_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be >= 1")
        if self.hazard_kind not in HAZARD_KINDS:
            raise ValueError(
                f"hazard_kind must be one of {HAZARD_KINDS}, got {self.hazard_kind!r}"
            )
        if not 0.0 <= self.target_censor_rate < 1.0:
            raise ValueError("target_censor_rate must lie in [0, 1)")
        if self.weibull_shape <= 0 or self.baseline_scale <= 0:
            raise ValueError("weibull_shape and baseline_scale must be positive")
        if self.hazard_kind == "linear":
            if self.true_coefficients is None:
                raise ValueError("linear hazard requires true_coefficients")
            if len(self.true_coefficients) != self.p:
                raise ValueError(
                    f"true_coefficients has length {len(self.true_coefficients)}, "
                    f"expected p={self.p}"
                )
            object.__setattr__(
                self, "true_coefficients", tuple(float(c) for c in self.true_coefficients)
            )
        elif self.hazard_kind == "interaction" and self.p < 2:
            raise ValueError("interaction hazard requires p >= 2")
        elif self.hazard_kind == "deep" and self.p < 3:
            raise ValueError("deep hazard requires p >= 3")


@dataclass(frozen=True)
class CsvSchema:
    """Column names of the id/time/event triple; all other columns are features."""

    id_col: str = "sample_id"
    time_col: str = "time"
    event_col: str = "event"


_TRUE_TOKENS = {"1", "true"}
_FALSE_TOKENS = {"0", "false"}


def _parse_event(token: str, row: int) -> bool:
    t = token.strip().lower()
    if t in _TRUE_TOKENS:
        return True
    if t in _FALSE_TOKENS:
        return False
    raise DataRowError(row, f"event value {token!r} is not one of 0/1/true/false")


def load_csv(path, schema: CsvSchema = CsvSchema()) -> SurvivalDataset:
    """Load a survival dataset from CSV.

    The header row is required. The schema names the id, time, and event
    columns; every remaining column is a numeric feature. Parsing is
    fail-fast: a non-numeric feature cell, a nonpositive or non-finite time,
    or a missing value raises `DataRowError` naming the 1-based data row.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        col_of = {name: i for i, name in enumerate(header)}
        for col in (schema.id_col, schema.time_col, schema.event_col):
            if col not in col_of:
                raise SchemaError(f"{path}: missing required column {col!r}")
        special = {col_of[schema.id_col], col_of[schema.time_col], col_of[schema.event_col]}
        feature_cols = [i for i in range(len(header)) if i not in special]
        feature_names = [header[i] for i in feature_cols]

        ids: list[str] = []
        seen_ids: set[str] = set()
        times: list[float] = []
        events: list[bool] = []
        rows: list[list[float]] = []
        for rownum, record in enumerate(reader, start=1):
            if len(record) != len(header):
                raise DataRowError(
                    rownum, f"expected {len(header)} cells, got {len(record)}"
                )
            raw_time = record[col_of[schema.time_col]].strip()
            if not raw_time:
                raise DataRowError(rownum, "missing time value")
            try:
                t = float(raw_time)
            except ValueError:
                raise DataRowError(rownum, f"time value {raw_time!r} is not numeric") from None
            if not (math.isfinite(t) and t > 0):
                raise DataRowError(rownum, f"time must be positive and finite, got {raw_time}")
            ev = _parse_event(record[col_of[schema.event_col]], rownum)
            feats = []
            for ci in feature_cols:
                cell = record[ci].strip()
                if not cell:
                    raise DataRowError(rownum, f"missing value in column {header[ci]!r}")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataRowError(
                        rownum, f"non-numeric value {cell!r} in column {header[ci]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise DataRowError(
                        rownum, f"non-finite value {cell!r} in column {header[ci]!r}"
                    )
                feats.append(v)
            sid = record[col_of[schema.id_col]].strip()
            if not sid:
                raise DataRowError(rownum, "missing sample id")
            if sid in seen_ids:
                # ids canonicalize row order downstream, so they must be unique
                raise DataRowError(rownum, f"duplicate sample id {sid!r}")
            seen_ids.add(sid)
            ids.append(sid)
            times.append(t)
            events.append(ev)
            rows.append(feats)

    if not ids:
        raise SchemaError(f"{path}: no data rows")
    features = np.array(rows, dtype=np.float64).reshape(len(ids), len(feature_cols))
    return SurvivalDataset(ids, features, feature_names, np.array(times), np.array(events))


def write_csv(ds: SurvivalDataset, path, schema: CsvSchema = CsvSchema()) -> None:
    """Write a dataset to the same CSV format `load_csv` reads.

    Floats are written with shortest round-trip repr, so load(write(ds))
    reproduces the numeric content exactly.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.id_col, schema.time_col, schema.event_col, *ds.feature_names])
        for i in range(ds.n):
            row = [
                ds.sample_ids[i],
                repr(float(ds.times[i])),
                "1" if ds.events[i] else "0",
            ]
            row.extend(repr(float(v)) for v in ds.features[i])
            writer.writerow(row)


def filter_patients(ds: SurvivalDataset) -> tuple[SurvivalDataset, int]:
    """Drop samples whose time is nonpositive or non-finite.

    Relative order is preserved. Returns the filtered dataset and the number
    of samples removed. Raises `UnusableDatasetError` if no events remain.
    """
    keep = np.isfinite(ds.times) & (ds.times > 0)
    removed = int((~keep).sum())
    out = ds.subset(np.flatnonzero(keep)) if removed else ds
    if out.n_events == 0:
        raise UnusableDatasetError("no observed events remain after patient filtering")
    return out, removed


def filter_features(
    ds: SurvivalDataset, min_variance: float = DEFAULT_MIN_VARIANCE
) -> tuple[SurvivalDataset, list[str]]:
    """Drop feature columns whose population variance is <= min_variance,
    along with any column containing non-finite values.

    Returns the filtered dataset and the retained feature names. Idempotent
    at a fixed threshold. Raises `UnusableDatasetError` if nothing survives.
    """
    if min_variance < 0:
        raise ValueError("min_variance must be >= 0")
    finite_cols = np.isfinite(ds.features).all(axis=0)
    variances = np.zeros(ds.p)
    variances[finite_cols] = ds.features[:, finite_cols].var(axis=0)
    keep = finite_cols & (variances > min_variance)
    retained = [name for name, k in zip(ds.feature_names, keep) if k]
    if not retained:
        raise UnusableDatasetError(
            f"no features retained at min_variance={min_variance!r}"
        )
    if keep.all():
        return ds, retained
    return ds.select_features(retained), retained


def standardize_fit(ds: SurvivalDataset) -> StandardizationParams:
    """Per-feature mean and population (divide-by-n) standard deviation.

    Raises on zero-variance features, naming the first offender; run
    `filter_features` first.
    """
    means = ds.features.mean(axis=0)
    stds = ds.features.std(axis=0)   # population convention
    bad = np.flatnonzero(stds == 0)
    if bad.size:
        raise UnusableDatasetError(
            f"feature {ds.feature_names[bad[0]]!r} has zero variance; "
            "run filter_features first"
        )
    return StandardizationParams(means, stds)


def standardize_apply(ds: SurvivalDataset, params: StandardizationParams) -> SurvivalDataset:
    """Center and scale features by the given parameters; times and events
    pass through untouched."""
    if params.means.shape[0] != ds.p:
        raise ValueError(
            f"standardization params have {params.means.shape[0]} features, dataset has {ds.p}"
        )
    scaled = (ds.features - params.means) / params.stddevs
    return SurvivalDataset(
        list(ds.sample_ids), scaled, list(ds.feature_names), ds.times, ds.events
    )


def _dealt_assignment(events: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin deal of shuffled events then shuffled censored samples.

    Guarantees overall fold sizes differ by at most 1 and per-fold event
    counts differ by at most 1.
    """
    ev_idx = rng.permutation(np.flatnonzero(events))
    cen_idx = rng.permutation(np.flatnonzero(~events))
    dealt = np.concatenate([ev_idx, cen_idx])
    fold = np.empty(len(events), dtype=np.int64)
    fold[dealt] = np.arange(len(dealt)) % k
    return fold


def kfold_split(ds: SurvivalDataset, k: int, seed: int) -> FoldAssignment:
    """Deterministic event-stratified k-fold assignment.

    Raises `StratificationError` if any fold's training complement would
    contain zero events (possible only when the dataset has a single event).
    """
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    if ds.n < k:
        raise ValueError(f"need at least k={k} samples, got {ds.n}")
    fold = _dealt_assignment(ds.events, k, np.random.default_rng(seed))
    for f in range(k):
        if ds.events[fold != f].sum() == 0:
            raise StratificationError(
                f"training complement of fold {f} has no events "
                f"(dataset has {ds.n_events} event(s) for k={k})"
            )
    return FoldAssignment(fold, k, seed)


def stratified_holdout(
    ds: SurvivalDataset, holdout_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Split row indices into (train, holdout), stratified by event indicator.

    The holdout receives round(fraction * count) samples from each stratum,
    at least one event in each side when the dataset has >= 2 events.
    """
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    ev_idx = rng.permutation(np.flatnonzero(ds.events))
    cen_idx = rng.permutation(np.flatnonzero(~ds.events))
    n_ev_hold = int(round(holdout_fraction * len(ev_idx)))
    if len(ev_idx) >= 2:
        n_ev_hold = min(max(n_ev_hold, 1), len(ev_idx) - 1)
    n_cen_hold = int(round(holdout_fraction * len(cen_idx)))
    hold = np.concatenate([ev_idx[:n_ev_hold], cen_idx[:n_cen_hold]])
    train = np.concatenate([ev_idx[n_ev_hold:], cen_idx[n_cen_hold:]])
    return np.sort(train), np.sort(hold)


def _true_scores(spec: SyntheticSpec, X: np.ndarray) -> np.ndarray:
    if spec.hazard_kind == "linear":
        return X @ np.asarray(spec.true_coefficients, dtype=np.float64)
    if spec.hazard_kind == "interaction":
        return X[:, 0] * X[:, 1]
    # deep: a smooth/nonsmooth mix no linear or single-interaction model captures
    return np.sin(X[:, 0]) + X[:, 1] ** 2 * np.sign(X[:, 2])


def _solve_censor_scale(
    event_times: np.ndarray, unit_censor: np.ndarray, target: float
) -> float:
    """Bisect on the censoring horizon c so that mean(c * unit_censor < T)
    lands on the target censored fraction.

    The realized fraction is a step function of c with steps of 1/n, so
    bisection converges to the jump closest to the target.
    """
    ratio = event_times / unit_censor

    def censored_frac(c: float) -> float:
        return float((ratio > c).mean())

    lo = 0.0
    hi = float(ratio.max()) * 2.0 + 1.0
    while censored_frac(hi) > target:
        hi *= 2.0
        if hi > 1e300:
            break
    best_c, best_err = hi, abs(censored_frac(hi) - target)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        frac = censored_frac(mid)
        err = abs(frac - target)
        if err < best_err:
            best_c, best_err = mid, err
        if frac > target:
            lo = mid
        else:
            hi = mid
    return best_c


def generate_synthetic(spec: SyntheticSpec) -> tuple[SurvivalDataset, np.ndarray]:
    """Draw a censored survival dataset under a Weibull proportional-hazards
    model. Returns (dataset, true risk scores); higher score means earlier
    expected event. Deterministic for a fixed seed.
    """
    rng = np.random.default_rng(spec.seed)
    X = rng.standard_normal((spec.n, spec.p))
    s = _true_scores(spec, X)
    tiny = np.finfo(np.float64).tiny
    u = rng.uniform(tiny, 1.0, size=spec.n)
    event_times = (-np.log(u) / (spec.baseline_scale * np.exp(s))) ** (1.0 / spec.weibull_shape)

    if spec.target_censor_rate == 0.0:
        times = event_times
        events = np.ones(spec.n, dtype=bool)
    else:
        unit_censor = rng.uniform(tiny, 1.0, size=spec.n)
        c_max = _solve_censor_scale(event_times, unit_censor, spec.target_censor_rate)
        censor_times = unit_censor * c_max
        events = event_times <= censor_times
        times = np.where(events, event_times, censor_times)

    width = len(str(spec.n - 1))
    ids = [f"synth-{i:0{width}d}" for i in range(spec.n)]
    names = [f"x{j}" for j in range(spec.p)]
    return SurvivalDataset(ids, X, names, times, events), s
