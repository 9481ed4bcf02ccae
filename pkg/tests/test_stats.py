import numpy as np
import pytest
from hypothesis import given, strategies as st

from qopt.estimators import TrackerState
from qopt.optimizers import RunTrace
from qopt.stats import ExperimentSummary, empirical_rate, order_statistic_quantile, summarize

samples = st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=80)


def test_order_statistic_examples():
    assert order_statistic_quantile([5, 1, 4, 2, 3], 0.6) == 3
    assert order_statistic_quantile([5, 1, 4, 2, 3], 0.95) == 5
    assert order_statistic_quantile([7.0], 0.5) == 7.0


@pytest.mark.parametrize("phi", [0.0, 1.0])
def test_order_statistic_bad_phi(phi):
    with pytest.raises(ValueError):
        order_statistic_quantile([1, 2], phi)


def test_order_statistic_empty():
    with pytest.raises(ValueError):
        order_statistic_quantile([], 0.5)


def test_order_statistic_axis():
    x = np.array([[3, 1, 2], [9, 8, 7]])
    np.testing.assert_array_equal(order_statistic_quantile(x, 0.5, axis=1), [2, 8])


@given(samples, st.floats(0.01, 0.99), st.randoms())
def test_order_statistic_permutation_invariant(xs, phi, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    assert order_statistic_quantile(xs, phi) == order_statistic_quantile(ys, phi)


@given(samples, st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_order_statistic_monotone_in_phi(xs, a, b):
    lo, hi = sorted((a, b))
    assert order_statistic_quantile(xs, lo) <= order_statistic_quantile(xs, hi)


def test_summarize_two_runs():
    s = summarize([1.0, 3.0])
    assert s.mean_final == 2.0
    assert s.stderr_final == pytest.approx(1.0)
    assert s.runs == 2


def test_summarize_rejects_single():
    with pytest.raises(ValueError):
        summarize([1.0])


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=50), st.randoms())
def test_summarize_order_invariant(xs, rnd):
    ys = list(xs)
    rnd.shuffle(ys)
    a, b = summarize(xs), summarize(ys)
    assert (a.mean_final, a.stderr_final) == (b.mean_final, b.stderr_final)


def test_summarize_tight_ensemble():
    finals = np.random.default_rng(0).normal(10.0, 0.01, 40)
    s = summarize(finals)
    assert s.mean_final == pytest.approx(10.0, abs=0.01)
    assert s.stderr_final < 0.01


def test_summary_round_trip():
    s = ExperimentSummary("spqo", "case1-normal", 0.6, 2, 1.0, 0.5, [(0, 2.0)], [3, 3], {"x": 1})
    assert ExperimentSummary.from_dict(s.to_dict()) == s


def make_trace(k, err, d=2):
    k = np.asarray(k)
    theta = np.zeros((k.size, d))
    theta[:, 0] = err
    z = np.zeros(k.size)
    return RunTrace("t", "spqo", 0, k, 3 * k, theta, z, z, z.astype(np.int64),
                    TrackerState(theta[-1], 0.0, np.zeros(d)))


def test_rate_exact_power_law():
    k = np.arange(0, 100_001, 10)
    err = np.where(k > 0, np.maximum(k, 1) ** -0.25, 1.0)
    assert empirical_rate([make_trace(k, err)], np.zeros(2), (1000, 100_000)) == pytest.approx(-0.25, abs=1e-9)


def test_rate_flat_error():
    k = np.arange(0, 10_001)
    assert empirical_rate([make_trace(k, np.full(k.size, 3.0))], np.zeros(2), (10, 10_000)) == pytest.approx(0.0, abs=1e-12)


@given(st.floats(1e-3, 1e3))
def test_rate_scale_invariant(scale):
    k = np.arange(0, 20_001, 5)
    err = (k + 3.0) ** -0.6
    a = empirical_rate([make_trace(k, err)], np.zeros(2), (100, 20_000))
    b = empirical_rate([make_trace(k, scale * err)], np.zeros(2), (100, 20_000))
    assert a == pytest.approx(b, abs=1e-9)


def test_rate_window_checks():
    k = np.arange(0, 101)
    tr = make_trace(k, np.ones(k.size))
    with pytest.raises(ValueError):
        empirical_rate([tr], np.zeros(2), (50, 10))
    with pytest.raises(ValueError):
        empirical_rate([tr], np.zeros(2), (10, 1000))
