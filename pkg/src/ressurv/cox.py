"""Cox negative log partial likelihood over per-sample risk scores.

The loss for scores h and censored observations (T_i, E_i) is

    L(h) = -(1/N_E) * sum_{i: E_i=1} ( h_i - ln sum_{j: T_j >= T_i} e^{h_j} )

with N_E the number of observed events. Tied event times are handled with
the Breslow convention: all events in a tie group share one risk-set
denominator. All accumulation runs in log space (running log-sum-exp), so
the loss and gradient are finite for any finite scores.

Also provides a Newton-Raphson fitter for the classical linear Cox model,
used throughout the test suite as an independent optimum oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import SurvivalDataset
from .errors import UnusableDatasetError


@dataclass(frozen=True)
class RiskSetIndex:
    """Sorted view of (times, events) that makes risk sets prefix ranges.

    `order` sorts samples by descending time (stable), so the risk set of the
    sample at sorted position k is the prefix [0 .. tie_end[k]] where
    tie_end[k] is the inclusive end of k's group of equal times. This turns
    every risk-set sum into one pass of cumulative accumulation.
    """

    order: np.ndarray             # (n,) int64, permutation into descending time
    sorted_events: np.ndarray     # (n,) bool, events in sorted order
    tie_end: np.ndarray           # (n,) int64, inclusive end of each position's tie group
    event_positions: np.ndarray   # sorted positions where events occur
    n_events: int

    @property
    def n(self) -> int:
        return self.order.shape[0]


def build_risk_index(times, events) -> RiskSetIndex:
    """Precompute the sort and tie-group structure shared by loss and gradient."""
    times = np.asarray(times, dtype=np.float64).ravel()
    events = np.asarray(events).astype(bool).ravel()
    if times.shape != events.shape:
        raise ValueError("times and events must have equal length")
    n_events = int(events.sum())
    if n_events == 0:
        raise UnusableDatasetError("risk index requires at least one event")

    order = np.argsort(-times, kind="stable")
    st = times[order]
    if st.size > 1:
        group_id = np.concatenate([[0], np.cumsum(st[:-1] != st[1:])])
    else:
        group_id = np.zeros(1, dtype=np.int64)
    is_last = np.concatenate([group_id[1:] != group_id[:-1], [True]])
    last_of_group = np.flatnonzero(is_last)
    tie_end = last_of_group[group_id]

    sorted_events = events[order]
    return RiskSetIndex(
        order=order,
        sorted_events=sorted_events,
        tie_end=tie_end,
        event_positions=np.flatnonzero(sorted_events),
        n_events=n_events,
    )


def _check_scores(h: np.ndarray, idx: RiskSetIndex) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64).ravel()
    if h.shape[0] != idx.n:
        raise ValueError(f"got {h.shape[0]} scores for a {idx.n}-sample index")
    if not np.isfinite(h).all():
        raise ValueError("scores must be finite")
    return h


def neg_log_partial_likelihood(h, idx: RiskSetIndex) -> float:
    """Breslow-tied Cox negative log partial likelihood, averaged over events."""
    h = _check_scores(h, idx)
    hs = h[idx.order]
    log_denom = np.logaddexp.accumulate(hs)[idx.tie_end]
    ev = idx.event_positions
    return float((log_denom[ev] - hs[ev]).sum() / idx.n_events)


def nll_gradient(h, idx: RiskSetIndex) -> np.ndarray:
    """Exact gradient of `neg_log_partial_likelihood` with respect to h.

        dL/dh_i = -(1/N_E) [ 1{E_i=1} - sum_{k: E_k=1, i in risk(k)} e^{h_i} / D_k ]

    where D_k is event k's risk-set denominator. Computed in O(n) after the
    sort: the inner sum is a reverse cumulative log-sum-exp of the event
    weights 1/D_k placed at their tie-group ends, so it stays finite for any
    finite h. Gradient entries sum to zero (shift invariance).
    """
    h = _check_scores(h, idx)
    n = idx.n
    hs = h[idx.order]
    log_denom = np.logaddexp.accumulate(hs)[idx.tie_end]

    # events within a tie group share a denominator: at each tie-group end,
    # one weight log(count) - log(D)
    ev_count = np.zeros(n)
    np.add.at(ev_count, idx.tie_end[idx.event_positions], 1.0)
    with np.errstate(divide="ignore"):
        log_w = np.where(ev_count > 0, np.log(ev_count) - log_denom, -np.inf)

    # log A_q = log sum over events k with tie_end >= q of 1/D_k
    log_a = np.logaddexp.accumulate(log_w[::-1])[::-1]
    grad_sorted = -(idx.sorted_events.astype(np.float64) - np.exp(hs + log_a)) / idx.n_events

    grad = np.empty(n)
    grad[idx.order] = grad_sorted
    return grad


def l2_penalty(
    flat_params: np.ndarray, lam: float, decay_mask: np.ndarray | None = None
) -> tuple[float, np.ndarray]:
    """Quadratic weight penalty lam * sum(w^2) and its gradient 2*lam*w.

    When `decay_mask` is given, only True entries are penalized; the model
    excludes biases and batch-norm scale/shift from the mask.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    flat = np.asarray(flat_params, dtype=np.float64).ravel()
    if lam == 0:
        return 0.0, np.zeros_like(flat)
    if decay_mask is None:
        penalized = flat
        grad = 2.0 * lam * flat
    else:
        mask = np.asarray(decay_mask, dtype=bool).ravel()
        if mask.shape != flat.shape:
            raise ValueError("decay_mask must match flat parameter length")
        penalized = flat[mask]
        grad = np.where(mask, 2.0 * lam * flat, 0.0)
    return float(lam * np.dot(penalized, penalized)), grad


@dataclass
class LinearCoxFit:
    """Newton-Raphson fit of the linear Cox model h(x) = beta . x."""

    beta: np.ndarray
    iterations: int
    final_gradient_norm: float
    converged: bool


def _nll_beta(X: np.ndarray, beta: np.ndarray, idx: RiskSetIndex) -> float:
    return neg_log_partial_likelihood(X @ beta, idx)


def _grad_hessian(X: np.ndarray, beta: np.ndarray, idx: RiskSetIndex):
    """Gradient and Hessian of the NLL in beta, via prefix sums over the
    descending-time order. Uses a global max shift; fine for the moderate
    linear predictors the oracle sees (standardized features, bounded beta).
    """
    n, p = X.shape
    h = X @ beta
    grad = X.T @ nll_gradient(h, idx)

    Xs = X[idx.order]
    hs = h[idx.order]
    shift = hs.max()
    r = np.exp(hs - shift)
    s0 = np.cumsum(r)
    s1 = np.cumsum(r[:, None] * Xs, axis=0)
    s2 = np.cumsum(r[:, None, None] * (Xs[:, :, None] * Xs[:, None, :]), axis=0)

    ends, counts = np.unique(idx.tie_end[idx.event_positions], return_counts=True)
    hess = np.zeros((p, p))
    for e, c in zip(ends, counts):
        mu = s1[e] / s0[e]
        hess += c * (s2[e] / s0[e] - np.outer(mu, mu))
    hess /= idx.n_events
    return grad, hess


def fit_linear_cox_newton(
    ds: SurvivalDataset, max_iter: int = 100, tol: float = 1e-8
) -> LinearCoxFit:
    """Maximize the partial likelihood over beta by damped Newton-Raphson.

    Step-halving (up to 30 halvings) enforces a monotone NLL decrease; a
    singular Hessian falls back to a diagonally damped gradient step.
    Non-convergence within max_iter returns converged=False rather than
    raising. Expects standardized features; intended for p << n oracle use.
    """
    ds.require_trainable()
    X = ds.features
    idx = build_risk_index(ds.times, ds.events)
    beta = np.zeros(ds.p)
    nll = _nll_beta(X, beta, idx)

    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        grad, hess = _grad_hessian(X, beta, idx)
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= tol:
            return LinearCoxFit(beta, it - 1, grad_norm, True)
        try:
            direction = -np.linalg.solve(hess, grad)
            if not np.isfinite(direction).all():
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            damping = np.abs(np.diag(hess)).max() * 1e-8 + 1e-12
            direction = -grad / (np.diag(hess) + damping)

        step = 1.0
        for _ in range(30):
            candidate = beta + step * direction
            new_nll = _nll_beta(X, candidate, idx)
            if new_nll < nll:
                break
            step *= 0.5
        else:
            # no decrease along the Newton direction; report where we stand
            return LinearCoxFit(beta, it, grad_norm, grad_norm <= tol)
        beta = candidate
        nll = new_nll

    grad, _ = _grad_hessian(X, beta, idx)
    grad_norm = float(np.abs(grad).max())
    return LinearCoxFit(beta, max_iter, grad_norm, grad_norm <= tol)
