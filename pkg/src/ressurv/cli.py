"""Command-line entry point.

Commands: synth, train, cv, gridsearch, compare. Every command is a pure
function of its inputs and seed; report files are byte-identical across
reruns. Timestamps and wall-clock measurements live in a separate meta.json
so they never contaminate deterministic content.

Exit codes: 0 success, 2 configuration or input error, 3 numerical
divergence during training.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import _kernels
from .cox import fit_linear_cox_newton
from .data import (
    CsvSchema,
    SurvivalDataset,
    SyntheticSpec,
    filter_features,
    filter_patients,
    generate_synthetic,
    kfold_split,
    load_csv,
    standardize_apply,
    standardize_fit,
    stratified_holdout,
    write_csv,
)
from .errors import DivergenceError, RessurvError
from .metrics import concordance_fast
from .model import model_forward, save_checkpoint
from .training import (
    Hyperparameters,
    cross_validate,
    grid_search,
    stable_seed,
    train,
)

REPORT_SCHEMA = "ressurv-report-v1"
TRUTH_SCHEMA = "ressurv-synth-truth-v1"

ENV_PREFIX = "RESSURV_"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


# ---------------------------------------------------------------------------
# Option resolution: explicit flag > RESSURV_<NAME> env var > default
# ---------------------------------------------------------------------------

def _resolve(args, name: str, default, cast):
    value = getattr(args, name, None)
    if value is None:
        raw = os.environ.get(ENV_PREFIX + name.upper())
        if raw is None:
            return default
        value = raw
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError) as err:
        raise ValueError(f"bad value for --{name.replace('_', '-')}: {value!r}") from err


def _opt_int(v):
    return None if v is None else int(v)


def _fmt(v):
    v = str(v).lower()
    if v not in ("jsonl", "tsv"):
        raise ValueError(f"format must be jsonl or tsv, not {v!r}")
    return v


# ---------------------------------------------------------------------------
# Report writing
# ---------------------------------------------------------------------------

def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def write_records(path: str, records: list[dict], fmt: str) -> None:
    """Line-delimited records: one JSON object or one TSV row per record."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if fmt == "jsonl":
            for rec in records:
                fh.write(_dump_json(rec) + "\n")
        else:
            keys = sorted({k for rec in records for k in rec})
            fh.write("\t".join(keys) + "\n")
            for rec in records:
                fh.write("\t".join(_cell(rec.get(k)) for k in keys) + "\n")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (dict, list)):
        return _dump_json(value)
    return str(value)


def write_summary(path: str, summary: dict) -> None:
    summary = {"schema": REPORT_SCHEMA, **summary}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")


def write_meta(path: str, wall_time_s: float, argv: list[str]) -> None:
    """The only report file allowed to differ between reruns."""
    meta = {
        "schema": REPORT_SCHEMA,
        "created_unix": time.time(),
        "wall_time_s": wall_time_s,
        "argv": argv,
        "concordance_backend": _kernels.backend(),
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, sort_keys=True, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Input loading
# ---------------------------------------------------------------------------

def _read_json_file(path: str, what: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ValueError(f"cannot read {what} file {path}: {err}") from err
    except json.JSONDecodeError as err:
        raise ValueError(f"{what} file {path} is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValueError(f"{what} file {path} must hold a JSON object")
    return raw


def load_hyperparameters(path: str | None) -> Hyperparameters:
    if path is None:
        return Hyperparameters()
    return Hyperparameters.from_dict(_read_json_file(path, "hyperparameter"))


def load_grid_file(path: str) -> tuple[dict, Hyperparameters]:
    """Grid file: either a flat {field: [values...]} mapping, or
    {"sweep": {...}, "base": {hp overrides}} when non-swept fields such as
    max_epochs need pinning."""
    raw = _read_json_file(path, "grid")
    if "sweep" in raw:
        extra = set(raw) - {"sweep", "base"}
        if extra:
            raise ValueError(f"unknown grid file keys: {sorted(extra)}")
        base = Hyperparameters.from_dict(raw.get("base", {}))
        sweep = raw["sweep"]
        if not isinstance(sweep, dict):
            raise ValueError("grid file 'sweep' must be an object")
        return sweep, base
    return raw, Hyperparameters()


def load_synth_spec(path: str) -> SyntheticSpec:
    raw = _read_json_file(path, "synthetic-spec")
    known = {
        "n", "p", "hazard_kind", "true_coefficients", "weibull_shape",
        "baseline_scale", "target_censor_rate", "seed",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown synthetic-spec keys: {sorted(unknown)}")
    if raw.get("true_coefficients") is not None:
        raw["true_coefficients"] = np.asarray(raw["true_coefficients"], dtype=np.float64)
    try:
        return SyntheticSpec(**raw)
    except TypeError as err:
        raise ValueError(f"incomplete synthetic spec: {err}") from err


def _load_dataset(path: str) -> SurvivalDataset:
    if path is None:
        raise ValueError("--data is required (or set RESSURV_DATA)")
    ds = load_csv(path, CsvSchema())
    ds, _removed = filter_patients(ds)
    ds.require_trainable()
    return ds


def _ensure_out_dir(out: str | None) -> str:
    if out is None:
        raise ValueError("--out is required (or set RESSURV_OUT)")
    os.makedirs(out, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    t0 = time.perf_counter()
    spec_path = _resolve(args, "spec", None, str)
    out = _resolve(args, "out", None, str)
    if spec_path is None:
        raise ValueError("--spec is required (or set RESSURV_SPEC)")
    if out is None:
        raise ValueError("--out is required (or set RESSURV_OUT)")
    spec = load_synth_spec(spec_path)
    ds, true_scores = generate_synthetic(spec)
    write_csv(ds, out)
    sidecar = {
        "schema": TRUTH_SCHEMA,
        "spec": {
            "n": spec.n,
            "p": spec.p,
            "hazard_kind": spec.hazard_kind,
            "true_coefficients": (
                None if spec.true_coefficients is None
                else [float(b) for b in spec.true_coefficients]
            ),
            "weibull_shape": spec.weibull_shape,
            "baseline_scale": spec.baseline_scale,
            "target_censor_rate": spec.target_censor_rate,
            "seed": spec.seed,
        },
        "sample_ids": list(ds.sample_ids),
        "true_scores": [float(s) for s in true_scores],
    }
    with open(out + ".truth.json", "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(sidecar, sort_keys=True) + "\n")
    print(
        f"wrote {out} (n={ds.n}, events={ds.n_events}, "
        f"censored={ds.n - ds.n_events}) and {out}.truth.json "
        f"[{time.perf_counter() - t0:.2f}s]"
    )
    return EXIT_OK


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_out_dir(_resolve(args, "out", None, str))
    fmt = _resolve(args, "format", "jsonl", _fmt)
    seed = _resolve(args, "seed", 0, int)
    hp = load_hyperparameters(_resolve(args, "hp", None, str))
    ds = _load_dataset(_resolve(args, "data", None, str))

    # leakage-free: standardization is fit on the 80% training side only
    train_idx, val_idx = stratified_holdout(ds, 0.2, seed=stable_seed(seed, 1))
    train_raw, val_raw = ds.subset(train_idx), ds.subset(val_idx)
    train_raw, retained = filter_features(train_raw)
    val_raw = val_raw.select_features(retained)
    std = standardize_fit(train_raw)
    train_ds = standardize_apply(train_raw, std)
    val_ds = standardize_apply(val_raw, std)

    report = train(train_ds, val_ds, hp, seed=seed)

    ckpt_path = os.path.join(out, "model.ckpt")
    save_checkpoint(ckpt_path, report.params, standardization=std,
                    extra={"hp": hp.to_dict(), "seed": seed})
    report.checkpoint_path = "model.ckpt"

    ext = "jsonl" if fmt == "jsonl" else "tsv"
    write_records(os.path.join(out, f"epochs.{ext}"), report.epoch_records(), fmt)
    write_summary(
        os.path.join(out, "summary.json"),
        {
            "command": "train",
            "seed": seed,
            "hp": hp.to_dict(),
            "n_train": train_ds.n,
            "n_val": val_ds.n,
            "n_features": train_ds.p,
            "feature_names": list(train_ds.feature_names),
            **report.summary(),
        },
    )
    write_meta(os.path.join(out, "meta.json"), time.perf_counter() - t0, sys.argv[1:])
    print(
        f"trained {report.epochs_run} epochs (best {report.best_epoch}, "
        f"val C-index {report.best_val_c_index:.4f}) -> {out}"
    )
    return EXIT_OK


def cmd_cv(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_out_dir(_resolve(args, "out", None, str))
    fmt = _resolve(args, "format", "jsonl", _fmt)
    seed = _resolve(args, "seed", 0, int)
    k = _resolve(args, "k", 5, int)
    hp = load_hyperparameters(_resolve(args, "hp", None, str))
    ds = _load_dataset(_resolve(args, "data", None, str))

    result = cross_validate(ds, hp, k=k, seed=seed)

    ext = "jsonl" if fmt == "jsonl" else "tsv"
    write_records(os.path.join(out, f"folds.{ext}"), result.fold_records(), fmt)
    write_summary(
        os.path.join(out, "summary.json"),
        {"command": "cv", "hp": hp.to_dict(), **result.summary()},
    )
    write_meta(os.path.join(out, "meta.json"), time.perf_counter() - t0, sys.argv[1:])
    print(
        f"cv: mean C-index {result.mean_c_index:.4f} "
        f"+/- {result.std_c_index:.4f} over {result.k} folds -> {out}"
    )
    return EXIT_OK


def cmd_gridsearch(args) -> int:
    t0 = time.perf_counter()
    out = _ensure_out_dir(_resolve(args, "out", None, str))
    fmt = _resolve(args, "format", "jsonl", _fmt)
    seed = _resolve(args, "seed", 0, int)
    k = _resolve(args, "k", 5, int)
    budget = _resolve(args, "budget", None, _opt_int)
    workers = _resolve(args, "workers", 1, int)
    grid_path = _resolve(args, "grid", None, str)
    if grid_path is None:
        raise ValueError("--grid is required (or set RESSURV_GRID)")
    grid, base_hp = load_grid_file(grid_path)
    ds = _load_dataset(_resolve(args, "data", None, str))

    result = grid_search(ds, grid, k=k, seed=seed, budget=budget,
                         workers=workers, base_hp=base_hp)

    ext = "jsonl" if fmt == "jsonl" else "tsv"
    write_records(os.path.join(out, f"points.{ext}"), result.point_records(), fmt)
    write_summary(
        os.path.join(out, "summary.json"),
        {"command": "gridsearch", **result.summary()},
    )
    write_meta(os.path.join(out, "meta.json"), time.perf_counter() - t0, sys.argv[1:])
    best = result.best_point
    if best is None:
        print(f"gridsearch: all {result.total_runs} points failed -> {out}")
    else:
        print(
            f"gridsearch: best point #{best.index} "
            f"mean C-index {best.mean_c_index:.4f} "
            f"({result.total_runs} points) -> {out}"
        )
    return EXIT_OK


def cmd_compare(args) -> int:
    """ResSurv vs the no-shortcut ablation vs the linear Cox oracle, all
    evaluated on one shared fold assignment."""
    t0 = time.perf_counter()
    out = _ensure_out_dir(_resolve(args, "out", None, str))
    fmt = _resolve(args, "format", "jsonl", _fmt)
    seed = _resolve(args, "seed", 0, int)
    k = _resolve(args, "k", 5, int)
    hp = load_hyperparameters(_resolve(args, "hp", None, str))
    ds = _load_dataset(_resolve(args, "data", None, str))

    canon = ds.sorted_by_id()
    folds = kfold_split(canon, k, seed)

    records: list[dict] = []
    summaries: dict[str, dict] = {}

    for model_name, with_shortcut in (("ressurv", True), ("mlp_ablation", False)):
        cv = cross_validate(canon, hp, k=k, seed=seed,
                            with_shortcut=with_shortcut, folds=folds)
        for rec in cv.fold_records():
            records.append({"model": model_name, **rec})
        summaries[model_name] = {
            "mean_c_index": cv.mean_c_index,
            "std_c_index": cv.std_c_index,
        }

    cox_values = []
    for f in range(folds.k):
        complement = canon.subset(folds.train_indices(f))
        test_fold = canon.subset(folds.test_indices(f))
        complement, retained = filter_features(complement)
        test_fold = test_fold.select_features(retained)
        std = standardize_fit(complement)
        complement = standardize_apply(complement, std)
        test_fold = standardize_apply(test_fold, std)
        fit = fit_linear_cox_newton(complement)
        scores = test_fold.features @ fit.beta
        c = concordance_fast(test_fold.times, test_fold.events, scores).c_index
        cox_values.append(float(c))
        records.append({
            "model": "linear_cox",
            "fold": f,
            "n_train": complement.n,
            "n_test": test_fold.n,
            "n_test_events": test_fold.n_events,
            "c_index": float(c),
            "newton_converged": fit.converged,
            "newton_iterations": fit.iterations,
        })
    cox_arr = np.array(cox_values)
    summaries["linear_cox"] = {
        "mean_c_index": float(cox_arr.mean()),
        "std_c_index": float(cox_arr.std()),
    }

    ext = "jsonl" if fmt == "jsonl" else "tsv"
    write_records(os.path.join(out, f"models.{ext}"), records, fmt)
    write_summary(
        os.path.join(out, "summary.json"),
        {
            "command": "compare",
            "k": folds.k,
            "seed": seed,
            "fold_hash": folds.content_hash(),
            "hp": hp.to_dict(),
            "models": summaries,
        },
    )
    write_meta(os.path.join(out, "meta.json"), time.perf_counter() - t0, sys.argv[1:])
    line = "  ".join(
        f"{name}={summaries[name]['mean_c_index']:.4f}" for name in sorted(summaries)
    )
    print(f"compare: {line} -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser and entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ressurv",
        description=(
            "Survival-risk prediction with a residual network trained on the "
            "Cox partial likelihood. Flags fall back to RESSURV_* environment "
            "variables (e.g. RESSURV_SEED)."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, *, data=False, hp=False, grid=False, spec=False,
            k=False, budget=False, workers=False):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        if spec:
            p.add_argument("--spec", help="synthetic-spec JSON file")
        if data:
            p.add_argument("--data", help="survival CSV (sample_id,time,event,features...)")
        if hp:
            p.add_argument("--hp", help="hyperparameter JSON file (defaults if omitted)")
        if grid:
            p.add_argument("--grid", help="grid JSON file")
        if k:
            p.add_argument("--k", help="number of folds (default 5)")
        p.add_argument("--seed", help="run seed (default 0)")
        if budget:
            p.add_argument("--budget", help="max grid points to evaluate")
        if workers:
            p.add_argument("--workers", help="concurrent evaluations (default 1)")
        p.add_argument("--out", help="output path (synth: CSV path; otherwise directory)")
        p.add_argument("--format", help="record format: jsonl (default) or tsv")
        return p

    add("synth", cmd_synth, "generate a synthetic survival dataset", spec=True)
    add("train", cmd_train, "train one model with an early-stop split", data=True, hp=True)
    add("cv", cmd_cv, "stratified k-fold cross-validation", data=True, hp=True, k=True)
    add("gridsearch", cmd_gridsearch, "grid search over hyperparameters",
        data=True, grid=True, k=True, budget=True, workers=True)
    add("compare", cmd_compare, "ResSurv vs no-shortcut ablation vs linear Cox",
        data=True, hp=True, k=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except (RessurvError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
