"""Training protocol: optimizers, learning-rate decay, the epoch loop with
early stopping, stratified k-fold cross-validation, and grid search.

Determinism contract: (dataset, hyperparameters, seed) fully determines every
reported number. Per-fold and per-grid-point sub-seeds are derived from
position in a deterministic enumeration, never from execution order, so
results are identical across reruns and worker counts. Wall-clock time is
carried separately and never enters deterministic report content.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from . import cox
from .data import (
    FoldAssignment,
    SurvivalDataset,
    filter_features,
    kfold_split,
    standardize_apply,
    standardize_fit,
    stratified_holdout,
)
from .errors import DivergenceError, UnusableDatasetError
from .metrics import concordance_fast
from .model import (
    DropoutStream,
    ResSurvParams,
    decay_mask,
    init_params,
    model_backward,
    model_forward,
    set_flat,
    to_flat,
)

OPTIMIZER_KINDS = ("sgd", "adam", "adamw")
HP_ACTIVATION_KINDS = ("tanh", "selu", "relu")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# l2_lambda is a loss-penalty magnitude; as decoupled AdamW decay it is scaled
# down so that one step cannot erase a weight (decay 2 would zero everything)
ADAMW_DECAY_SCALE = 1e-3

EARLY_STOP_MIN_IMPROVEMENT = 1e-6

MIN_BATCH_SIZE = 64
MIN_EVENTS_PER_BATCH = 4


def stable_seed(*parts: int) -> int:
    """Deterministic sub-seed from integer components, independent of
    platform hash randomization and execution order."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Hyperparameters
# ---------------------------------------------------------------------------

# Field order below is the deterministic grid-enumeration order.
GRID_FIELDS = (
    "optimizer_kind",
    "activation_kind",
    "n_blocks",
    "dense_layers_per_block",
    "nodes",
    "learning_rate",
    "l2_lambda",
    "dropout_rate",
    "lr_decay",
)

# Canonical sweep domains. Grid files may sweep any subset of these fields,
# and values outside the canonical domains are accepted anywhere a single
# Hyperparameters value is (tests and small benchmarks need off-grid values);
# the domains are the documented defaults for full sweeps.
GRID_DOMAINS = {
    "optimizer_kind": ("adam", "adamw", "sgd"),
    "activation_kind": ("tanh", "selu", "relu"),
    "n_blocks": (5, 6, 7),
    "dense_layers_per_block": (3, 4, 5, 6),
    "nodes": (64, 128, 512, 1024),
    "learning_rate": (1e-1, 1e-2, 1e-3, 1e-4),
    "l2_lambda": (2.0, 4.0, 6.0, 8.0),
    "dropout_rate": (0.2, 0.4, 0.6),
    "lr_decay": (1e-2, 1e-3, 1e-4, 1e-5),
}


@dataclass(frozen=True)
class Hyperparameters:
    """One training configuration.

    String fields are case-insensitive on input and stored lowercase.
    Numeric fields are sanity-checked (positive, in range) rather than pinned
    to the canonical grid domains, so small test-scale configurations and
    off-grid values like lr_decay=0 are legal.
    """

    optimizer_kind: str = "adam"
    activation_kind: str = "tanh"
    n_blocks: int = 5
    dense_layers_per_block: int = 3
    nodes: int = 64
    learning_rate: float = 1e-2
    l2_lambda: float = 1e-2
    dropout_rate: float = 0.2
    lr_decay: float = 1e-3
    max_epochs: int = 500
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "optimizer_kind", str(self.optimizer_kind).lower())
        object.__setattr__(self, "activation_kind", str(self.activation_kind).lower())
        if self.optimizer_kind not in OPTIMIZER_KINDS:
            raise ValueError(f"unknown optimizer {self.optimizer_kind!r}")
        if self.activation_kind not in HP_ACTIVATION_KINDS:
            raise ValueError(f"unknown activation {self.activation_kind!r}")
        if self.n_blocks < 1 or self.dense_layers_per_block < 1 or self.nodes < 1:
            raise ValueError("network size fields must be positive integers")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.l2_lambda < 0 or self.lr_decay < 0:
            raise ValueError("l2_lambda and lr_decay must be nonnegative")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @classmethod
    def from_dict(cls, raw: dict) -> "Hyperparameters":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown hyperparameter keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return {
            name: getattr(self, name) for name in self.__dataclass_fields__
        }

    def replaced(self, **kwargs) -> "Hyperparameters":
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """Mutable per-run optimizer state: step counter, current learning rate,
    and (for Adam/AdamW) first/second moment accumulators."""

    t: int
    lr: float
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    decay_mask: np.ndarray | None = field(default=None, repr=False)


def init_optimizer_state(
    hp: Hyperparameters, n_params: int, mask: np.ndarray | None = None
) -> OptimizerState:
    if hp.optimizer_kind == "sgd":
        return OptimizerState(t=0, lr=hp.learning_rate, decay_mask=mask)
    return OptimizerState(
        t=0,
        lr=hp.learning_rate,
        m=np.zeros(n_params),
        v=np.zeros(n_params),
        decay_mask=mask,
    )


def sgd_step(
    params: np.ndarray, grads: np.ndarray, state: OptimizerState, hp: Hyperparameters
) -> np.ndarray:
    """w <- w - lr g. Mutates params in place and returns it."""
    state.t += 1
    params -= state.lr * grads
    return params


def _adam_update(
    params: np.ndarray, grads: np.ndarray, state: OptimizerState
) -> np.ndarray:
    state.t += 1
    state.m *= ADAM_BETA1
    state.m += (1.0 - ADAM_BETA1) * grads
    state.v *= ADAM_BETA2
    state.v += (1.0 - ADAM_BETA2) * grads * grads
    m_hat = state.m / (1.0 - ADAM_BETA1 ** state.t)
    v_hat = state.v / (1.0 - ADAM_BETA2 ** state.t)
    params -= state.lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return params


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: OptimizerState, hp: Hyperparameters
) -> np.ndarray:
    """Bias-corrected Adam (beta1=0.9, beta2=0.999, eps=1e-8)."""
    return _adam_update(params, grads, state)


def adamw_step(
    params: np.ndarray, grads: np.ndarray, state: OptimizerState, hp: Hyperparameters
) -> np.ndarray:
    """Adam with decoupled weight decay applied before the moment update.

    The decay coefficient is l2_lambda scaled by 1e-3 and touches only
    weight-matrix entries (state.decay_mask); with AdamW selected the loss
    carries no L2 term, so l2_lambda acts purely as decay.
    """
    wd = hp.l2_lambda * ADAMW_DECAY_SCALE
    if wd > 0.0:
        if state.decay_mask is None:
            params -= state.lr * wd * params
        else:
            params[state.decay_mask] -= state.lr * wd * params[state.decay_mask]
    return _adam_update(params, grads, state)


_STEP_FUNCTIONS = {"sgd": sgd_step, "adam": adam_step, "adamw": adamw_step}


def decay_learning_rate(
    state: OptimizerState, hp: Hyperparameters, epoch: int
) -> OptimizerState:
    """Inverse-time decay: lr(epoch) = learning_rate / (1 + lr_decay * epoch)."""
    if epoch < 1:
        raise ValueError("epoch must be >= 1")
    state.lr = hp.learning_rate / (1.0 + hp.lr_decay * epoch)
    return state


# ---------------------------------------------------------------------------
# The epoch loop
# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    learning_rate: float
    train_loss: float
    val_loss: float
    val_c_index: float

    def to_dict(self) -> dict:
        return {
            "epoch": self.epoch,
            "learning_rate": self.learning_rate,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_c_index": self.val_c_index,
        }


@dataclass
class TrainReport:
    """Everything a training run produced. `params` is the restored
    best-validation-loss snapshot; wall_time_s is informational only and is
    excluded from deterministic report serializations."""

    epochs: list[EpochRecord]
    best_epoch: int
    best_val_loss: float
    best_val_c_index: float
    stopped_early: bool
    epochs_run: int
    wall_time_s: float
    params: ResSurvParams = field(repr=False)
    checkpoint_path: str | None = None

    def epoch_records(self) -> list[dict]:
        return [r.to_dict() for r in self.epochs]

    def summary(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "best_val_c_index": self.best_val_c_index,
            "stopped_early": self.stopped_early,
            "epochs_run": self.epochs_run,
            "checkpoint": self.checkpoint_path,
        }


def _stratified_batches(
    events: np.ndarray, batch_size: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Deal shuffled event and censored indices round-robin across batches so
    every batch sees events. Batch count = floor(n / batch_size)."""
    n = events.size
    n_batches = max(1, n // batch_size)
    buckets: list[list[int]] = [[] for _ in range(n_batches)]
    slot = 0
    for pool in (np.flatnonzero(events), np.flatnonzero(~events)):
        for i in rng.permutation(pool):
            buckets[slot % n_batches].append(int(i))
            slot += 1
    return [np.sort(np.array(b, dtype=np.intp)) for b in buckets]


def train(
    train_ds: SurvivalDataset,
    val_ds: SurvivalDataset,
    hp: Hyperparameters,
    with_shortcut: bool = True,
    seed: int | None = None,
    batch_size: int | None = None,
) -> TrainReport:
    """Run the epoch loop and return the report with best-epoch parameters.

    Both splits must be nonempty with at least one event each, and features
    must already be standardized with training-split statistics. Training is
    full-batch by default: the Cox partial likelihood couples samples through
    risk sets, so the full-batch gradient is the exact one. Passing
    batch_size (>= 64, stratified so every batch holds >= 4 events) switches
    to a documented approximation with risk sets formed within each batch.

    Each epoch: forward in train mode, Cox NLL plus L2 penalty (penalty
    skipped for AdamW, which carries it as decoupled decay), backward,
    optimizer step, then inverse-time LR decay and a validation pass in eval
    mode. Stops when validation NLL has not improved by at least 1e-6 for
    `patience` consecutive epochs; the best-validation snapshot (weights and
    batch-norm running statistics) is restored into the report.

    A non-finite training or validation loss aborts with the offending epoch.
    """
    if train_ds.n < 2 or train_ds.n_events < 1:
        raise UnusableDatasetError("training split needs >= 2 samples and >= 1 event")
    if val_ds.n < 2 or val_ds.n_events < 1:
        raise UnusableDatasetError("validation split needs >= 2 samples and >= 1 event")
    if val_ds.p != train_ds.p:
        raise UnusableDatasetError("train and validation feature counts differ")

    t_start = time.perf_counter()
    run_seed = hp.seed if seed is None else seed
    params = init_params(
        n_features=train_ds.p,
        block_widths=[hp.nodes] * hp.n_blocks,
        dense_layers_per_block=hp.dense_layers_per_block,
        activation_kind=hp.activation_kind,
        dropout_rate=hp.dropout_rate,
        seed=stable_seed(run_seed, 0),
        with_shortcut=with_shortcut,
    )
    flat = to_flat(params)
    mask = decay_mask(params)
    state = init_optimizer_state(hp, flat.size, mask)
    step_fn = _STEP_FUNCTIONS[hp.optimizer_kind]
    # AdamW carries l2_lambda as decoupled decay; everyone else as a loss term
    loss_lambda = 0.0 if hp.optimizer_kind == "adamw" else hp.l2_lambda

    batches: list[np.ndarray] | None = None
    if batch_size is not None:
        if batch_size < MIN_BATCH_SIZE:
            raise ValueError(f"mini-batch mode requires batch_size >= {MIN_BATCH_SIZE}")
        n_batches = max(1, train_ds.n // batch_size)
        if train_ds.n_events < MIN_EVENTS_PER_BATCH * n_batches:
            raise ValueError(
                f"mini-batch mode requires >= {MIN_EVENTS_PER_BATCH} events per batch"
            )
    else:
        full_index = cox.build_risk_index(train_ds.times, train_ds.events)
        stream = DropoutStream(stable_seed(run_seed, 1))

    val_index = cox.build_risk_index(val_ds.times, val_ds.events)

    best_val = np.inf
    best_epoch = 0
    best_c = np.nan
    best_snapshot = params.copy()
    epochs_since_improvement = 0
    stopped_early = False
    records: list[EpochRecord] = []

    for epoch in range(1, hp.max_epochs + 1):
        lr_used = state.lr
        if batch_size is None:
            h, cache = model_forward(
                train_ds.features, params, mode="train", stream=stream, epoch=epoch
            )
            nll = cox.neg_log_partial_likelihood(h, full_index)
            penalty, penalty_grad = cox.l2_penalty(flat, loss_lambda, mask)
            train_loss = nll + penalty
            if not np.isfinite(train_loss):
                raise DivergenceError(epoch, "training loss")
            grads = model_backward(cox.nll_gradient(h, full_index), params, cache)
            grads += penalty_grad
            flat = step_fn(flat, grads, state, hp)
            set_flat(params, flat)
        else:
            deal_rng = np.random.default_rng(
                np.random.SeedSequence([stable_seed(run_seed, 2), epoch])
            )
            batches = _stratified_batches(train_ds.events, batch_size, deal_rng)
            loss_accum = 0.0
            for b_idx, rows in enumerate(batches):
                stream = DropoutStream(stable_seed(run_seed, 1, b_idx))
                sub_index = cox.build_risk_index(
                    train_ds.times[rows], train_ds.events[rows]
                )
                h, cache = model_forward(
                    train_ds.features[rows], params, mode="train",
                    stream=stream, epoch=epoch,
                )
                nll = cox.neg_log_partial_likelihood(h, sub_index)
                penalty, penalty_grad = cox.l2_penalty(flat, loss_lambda, mask)
                batch_loss = nll + penalty
                if not np.isfinite(batch_loss):
                    raise DivergenceError(epoch, f"batch {b_idx} loss")
                loss_accum += batch_loss * rows.size
                grads = model_backward(cox.nll_gradient(h, sub_index), params, cache)
                grads += penalty_grad
                flat = step_fn(flat, grads, state, hp)
                set_flat(params, flat)
            train_loss = loss_accum / train_ds.n
        decay_learning_rate(state, hp, epoch)

        h_val, _ = model_forward(val_ds.features, params, mode="eval")
        val_loss = cox.neg_log_partial_likelihood(h_val, val_index)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, "validation loss")
        val_c = concordance_fast(val_ds.times, val_ds.events, h_val).c_index

        records.append(EpochRecord(epoch, lr_used, float(train_loss),
                                   float(val_loss), float(val_c)))

        if val_loss <= best_val - EARLY_STOP_MIN_IMPROVEMENT:
            best_val = float(val_loss)
            best_epoch = epoch
            best_c = float(val_c)
            best_snapshot = params.copy()
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if epochs_since_improvement >= hp.patience:
                stopped_early = True
                break

    return TrainReport(
        epochs=records,
        best_epoch=best_epoch,
        best_val_loss=best_val,
        best_val_c_index=best_c,
        stopped_early=stopped_early,
        epochs_run=len(records),
        wall_time_s=time.perf_counter() - t_start,
        params=best_snapshot,
    )


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------

@dataclass
class FoldRecord:
    fold: int
    n_train: int
    n_test: int
    n_test_events: int
    c_index: float
    best_epoch: int
    epochs_run: int
    stopped_early: bool
    best_val_loss: float

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_test_events": self.n_test_events,
            "c_index": self.c_index,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "stopped_early": self.stopped_early,
            "best_val_loss": self.best_val_loss,
        }


@dataclass
class CVResult:
    """Held-out C-index across k folds. std is the population standard
    deviation (ddof=0) over the k fold values."""

    k: int
    seed: int
    fold_hash: str
    folds: list[FoldRecord]
    mean_c_index: float
    std_c_index: float

    def fold_records(self) -> list[dict]:
        return [r.to_dict() for r in self.folds]

    def summary(self) -> dict:
        return {
            "k": self.k,
            "seed": self.seed,
            "fold_hash": self.fold_hash,
            "mean_c_index": self.mean_c_index,
            "std_c_index": self.std_c_index,
        }


HOLDOUT_FRACTION = 0.2


def cross_validate(
    ds: SurvivalDataset,
    hp: Hyperparameters,
    k: int = 5,
    seed: int = 0,
    with_shortcut: bool = True,
    folds: FoldAssignment | None = None,
    batch_size: int | None = None,
) -> CVResult:
    """Stratified k-fold cross-validation of the held-out C-index.

    Rows are first canonicalized by sample id, so the result is invariant to
    the order samples arrive in. Per fold: low-variance features are dropped
    and standardization is fit on the training complement only (no leakage),
    an 80/20 stratified early-stop split is carved from the complement, the
    model trains with a fold-specific sub-seed, and the C-index is measured
    on the untouched held-out fold.

    A training abort on any fold propagates with the fold index attached.
    """
    canon = ds.sorted_by_id()
    if folds is None:
        folds = kfold_split(canon, k, seed)
    elif folds.fold_of_sample.size != canon.n:
        raise ValueError("fold assignment does not match dataset size")

    fold_records: list[FoldRecord] = []
    for f in range(folds.k):
        train_idx = folds.train_indices(f)
        test_idx = folds.test_indices(f)
        complement = canon.subset(train_idx)
        test_fold = canon.subset(test_idx)

        complement, retained = filter_features(complement)
        test_fold = test_fold.select_features(retained)
        std = standardize_fit(complement)
        complement = standardize_apply(complement, std)
        test_fold = standardize_apply(test_fold, std)

        inner_train_idx, inner_val_idx = stratified_holdout(
            complement, HOLDOUT_FRACTION, seed=stable_seed(seed, 11, f)
        )
        inner_train = complement.subset(inner_train_idx)
        inner_val = complement.subset(inner_val_idx)

        try:
            report = train(
                inner_train,
                inner_val,
                hp,
                with_shortcut=with_shortcut,
                seed=stable_seed(hp.seed, 13, f),
                batch_size=batch_size,
            )
        except DivergenceError as err:
            raise DivergenceError(err.epoch, f"fold {f}") from err

        h_test, _ = model_forward(test_fold.features, report.params, mode="eval")
        c = concordance_fast(test_fold.times, test_fold.events, h_test).c_index
        fold_records.append(
            FoldRecord(
                fold=f,
                n_train=complement.n,
                n_test=test_fold.n,
                n_test_events=test_fold.n_events,
                c_index=float(c),
                best_epoch=report.best_epoch,
                epochs_run=report.epochs_run,
                stopped_early=report.stopped_early,
                best_val_loss=report.best_val_loss,
            )
        )

    values = np.array([r.c_index for r in fold_records])
    return CVResult(
        k=folds.k,
        seed=seed,
        fold_hash=folds.content_hash(),
        folds=fold_records,
        mean_c_index=float(values.mean()),
        std_c_index=float(values.std()),
    )


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------

@dataclass
class GridPointResult:
    index: int
    hp: dict
    mean_c_index: float | None
    std_c_index: float | None
    fold_c_indexes: list[float]
    failed: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "hp": self.hp,
            "mean_c_index": self.mean_c_index,
            "std_c_index": self.std_c_index,
            "fold_c_indexes": self.fold_c_indexes,
            "failed": self.failed,
            "error": self.error,
        }


@dataclass
class GridSearchResult:
    points: list[GridPointResult]
    best_index: int | None
    total_runs: int
    k: int
    seed: int
    fold_hash: str

    @property
    def best_point(self) -> GridPointResult | None:
        return None if self.best_index is None else self.points[self.best_index]

    def point_records(self) -> list[dict]:
        return [p.to_dict() for p in self.points]

    def summary(self) -> dict:
        best = self.best_point
        return {
            "total_runs": self.total_runs,
            "k": self.k,
            "seed": self.seed,
            "fold_hash": self.fold_hash,
            "best_index": self.best_index,
            "best_hp": None if best is None else best.hp,
            "best_mean_c_index": None if best is None else best.mean_c_index,
        }


def enumerate_grid(grid: dict, base_hp: Hyperparameters) -> list[Hyperparameters]:
    """Deterministic enumeration: the cartesian product over the swept fields
    taken in declared field order, values in the order the grid lists them.
    Fields absent from the grid keep the base configuration's value."""
    if not grid:
        raise ValueError("grid must sweep at least one field")
    unknown = set(grid) - set(GRID_FIELDS)
    if unknown:
        raise ValueError(f"unknown grid fields: {sorted(unknown)}")
    swept = [f for f in GRID_FIELDS if f in grid]
    for f in swept:
        if not isinstance(grid[f], (list, tuple)) or len(grid[f]) == 0:
            raise ValueError(f"grid field {f!r} must list at least one value")
    points = []
    for combo in product(*(grid[f] for f in swept)):
        points.append(base_hp.replaced(**dict(zip(swept, combo))))
    return points


def grid_search(
    ds: SurvivalDataset,
    grid: dict,
    k: int = 5,
    seed: int = 0,
    budget: int | None = None,
    workers: int = 1,
    base_hp: Hyperparameters | None = None,
    with_shortcut: bool = True,
) -> GridSearchResult:
    """Evaluate grid points by cross-validation and pick the argmax.

    All points share one fold assignment (built from `seed`), and each point
    trains under a sub-seed derived from its enumeration index, so the result
    is a pure function of (dataset, grid, k, seed, budget) regardless of
    worker count. A point whose training diverges is recorded with a failure
    flag instead of aborting the search; ties on mean C-index resolve to the
    earliest enumerated point.
    """
    if budget is not None and budget < 1:
        raise ValueError("budget must be >= 1")
    if workers < 1:
        raise ValueError("workers must be >= 1")
    base = base_hp if base_hp is not None else Hyperparameters()
    all_points = enumerate_grid(grid, base)
    if budget is not None:
        all_points = all_points[:budget]

    canon = ds.sorted_by_id()
    folds = kfold_split(canon, k, seed)

    def evaluate(index: int) -> GridPointResult:
        hp = all_points[index].replaced(seed=stable_seed(seed, 17, index))
        try:
            cv = cross_validate(
                canon, hp, k=k, seed=seed,
                with_shortcut=with_shortcut, folds=folds,
            )
        except DivergenceError as err:
            return GridPointResult(
                index=index, hp=hp.to_dict(), mean_c_index=None, std_c_index=None,
                fold_c_indexes=[], failed=True, error=str(err),
            )
        return GridPointResult(
            index=index,
            hp=hp.to_dict(),
            mean_c_index=cv.mean_c_index,
            std_c_index=cv.std_c_index,
            fold_c_indexes=[r.c_index for r in cv.folds],
        )

    indexes = range(len(all_points))
    if workers == 1:
        results = [evaluate(i) for i in indexes]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(evaluate, indexes))

    best_index = None
    best_mean = -np.inf
    for point in results:
        if not point.failed and point.mean_c_index > best_mean:
            best_mean = point.mean_c_index
            best_index = point.index

    return GridSearchResult(
        points=results,
        best_index=best_index,
        total_runs=len(results),
        k=k,
        seed=seed,
        fold_hash=folds.content_hash(),
    )
