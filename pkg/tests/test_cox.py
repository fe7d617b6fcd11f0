import numpy as np
import pytest

from ressurv.cox import (
    build_risk_index,
    fit_linear_cox_newton,
    l2_penalty,
    neg_log_partial_likelihood,
    nll_gradient,
)
from ressurv.data import SyntheticSpec, generate_synthetic, standardize_apply, standardize_fit
from ressurv.errors import UnusableDatasetError

from conftest import make_dataset, random_survival_arrays


def nll_reference(h, times, events):
    """Direct O(n^2) transcription of the mean negative log partial
    likelihood with Breslow ties: one risk-set denominator per event, risk
    set = {j : T_j >= T_i}."""
    h = np.asarray(h, dtype=np.float64)
    total = 0.0
    n_events = 0
    for i in range(len(times)):
        if not events[i]:
            continue
        risk = times >= times[i]
        total += np.log(np.exp(h[risk]).sum()) - h[i]
        n_events += 1
    return total / n_events


def test_hand_value_three_events():
    # times (1,2,3), all events, h = 0:
    # denominators 3, 2, 1 -> (ln 3 + ln 2 + ln 1) / 3
    idx = build_risk_index(np.array([1.0, 2.0, 3.0]),
                           np.array([True, True, True]))
    value = neg_log_partial_likelihood(np.zeros(3), idx)
    assert abs(value - (np.log(3.0) + np.log(2.0)) / 3.0) < 1e-12


def test_matches_reference_on_random_data():
    for seed in range(10):
        times, events, _ = random_survival_arrays(60, seed)
        rng = np.random.default_rng(seed + 100)
        h = rng.normal(scale=2.0, size=60)
        idx = build_risk_index(times, events)
        fast = neg_log_partial_likelihood(h, idx)
        slow = nll_reference(h, times, events)
        assert abs(fast - slow) < 1e-10


def test_shift_invariance():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(3, 40))
        times = rng.exponential(5.0, size=n) + 0.01
        events = rng.random(n) < 0.7
        if not events.any():
            events[0] = True
        h = rng.normal(size=n)
        idx = build_risk_index(times, events)
        base = neg_log_partial_likelihood(h, idx)
        shifted = neg_log_partial_likelihood(h + 123.456, idx)
        assert abs(base - shifted) < 1e-12


def test_breslow_ties_hand_value():
    # two events tied at t=1 share the full 3-sample denominator
    idx = build_risk_index(np.array([1.0, 1.0, 2.0]),
                           np.array([True, True, True]))
    value = neg_log_partial_likelihood(np.zeros(3), idx)
    expected = (np.log(3.0) + np.log(3.0) + 0.0) / 3.0
    assert abs(value - expected) < 1e-12


def test_censored_only_raises():
    with pytest.raises(UnusableDatasetError):
        build_risk_index(np.array([1.0, 2.0]), np.array([False, False]))


def test_extreme_scores_stay_finite():
    times, events, _ = random_survival_arrays(50, 3)
    idx = build_risk_index(times, events)
    for scale in (1e2, 1e5, 1e8):
        h = np.linspace(-scale, scale, 50)
        assert np.isfinite(neg_log_partial_likelihood(h, idx))
        assert np.isfinite(nll_gradient(h, idx)).all()


# ---------------------------------------------------------------------------
# Gradient
# ---------------------------------------------------------------------------

def test_gradient_sums_to_zero():
    # consequence of shift invariance
    for seed in range(5):
        times, events, _ = random_survival_arrays(80, seed)
        rng = np.random.default_rng(seed)
        h = rng.normal(size=80)
        idx = build_risk_index(times, events)
        assert abs(nll_gradient(h, idx).sum()) < 1e-12


def test_gradient_matches_finite_differences():
    times, events, _ = random_survival_arrays(50, 11)
    rng = np.random.default_rng(11)
    h = rng.normal(size=50)
    idx = build_risk_index(times, events)
    grad = nll_gradient(h, idx)
    step = 1e-6
    for i in range(50):
        hp = h.copy(); hp[i] += step
        hm = h.copy(); hm[i] -= step
        fd = (neg_log_partial_likelihood(hp, idx)
              - neg_log_partial_likelihood(hm, idx)) / (2 * step)
        assert abs(fd - grad[i]) < 1e-7


def test_gradient_with_ties_matches_fd():
    times = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 3.0])
    events = np.array([True, True, False, True, True, False])
    h = np.array([0.3, -0.2, 0.9, -1.1, 0.4, 0.0])
    idx = build_risk_index(times, events)
    grad = nll_gradient(h, idx)
    step = 1e-6
    for i in range(6):
        hp = h.copy(); hp[i] += step
        hm = h.copy(); hm[i] -= step
        fd = (neg_log_partial_likelihood(hp, idx)
              - neg_log_partial_likelihood(hm, idx)) / (2 * step)
        assert abs(fd - grad[i]) < 1e-8


# ---------------------------------------------------------------------------
# L2 penalty
# ---------------------------------------------------------------------------

def test_l2_penalty_value_and_gradient():
    w = np.array([1.0, -2.0, 3.0])
    value, grad = l2_penalty(w, 0.5)
    assert abs(value - 0.5 * 14.0) < 1e-12
    np.testing.assert_allclose(grad, w)  # 2 * 0.5 * w


def test_l2_penalty_mask():
    w = np.array([1.0, -2.0, 3.0])
    mask = np.array([True, False, True])
    value, grad = l2_penalty(w, 1.0, mask)
    assert abs(value - 10.0) < 1e-12
    np.testing.assert_allclose(grad, [2.0, 0.0, 6.0])


def test_l2_penalty_zero_lambda():
    w = np.ones(4)
    value, grad = l2_penalty(w, 0.0)
    assert value == 0.0
    assert not grad.any()


# ---------------------------------------------------------------------------
# Newton-Raphson linear fitter
# ---------------------------------------------------------------------------

def test_newton_recovers_coefficients():
    spec = SyntheticSpec(n=4000, p=3, hazard_kind="linear",
                         true_coefficients=np.array([1.0, -0.5, 0.25]),
                         target_censor_rate=0.2, seed=77)
    ds, _ = generate_synthetic(spec)
    fit = fit_linear_cox_newton(ds)
    assert fit.converged
    assert fit.final_gradient_norm < 1e-8
    # partial-likelihood estimates concentrate around the truth at this n
    np.testing.assert_allclose(fit.beta, [1.0, -0.5, 0.25], atol=0.12)


def test_newton_gradient_zero_at_optimum():
    ds = make_dataset(n=120, p=4, seed=5, censor_frac=0.25)
    std = standardize_fit(ds)
    ds = standardize_apply(ds, std)
    fit = fit_linear_cox_newton(ds)
    idx = build_risk_index(ds.times, ds.events)
    grad_h = nll_gradient(ds.features @ fit.beta, idx)
    grad_beta = ds.features.T @ grad_h
    assert np.abs(grad_beta).max() < 1e-8


def test_newton_beats_zero_model():
    ds = make_dataset(n=150, p=3, seed=6, censor_frac=0.3)
    fit = fit_linear_cox_newton(ds)
    idx = build_risk_index(ds.times, ds.events)
    nll_fit = neg_log_partial_likelihood(ds.features @ fit.beta, idx)
    nll_zero = neg_log_partial_likelihood(np.zeros(ds.n), idx)
    assert nll_fit <= nll_zero + 1e-12


def test_newton_handles_collinear_features():
    # duplicate column makes the Hessian singular; fitter must not crash
    rng = np.random.default_rng(9)
    X = rng.normal(size=(80, 2))
    X = np.column_stack([X, X[:, 0]])
    from ressurv.data import SurvivalDataset
    times = rng.exponential(5.0, size=80) + 0.01
    events = rng.random(80) < 0.7
    ds = SurvivalDataset([f"s{i}" for i in range(80)], X,
                         ["a", "b", "a_copy"], times, events)
    fit = fit_linear_cox_newton(ds, max_iter=50)
    assert np.isfinite(fit.beta).all()
