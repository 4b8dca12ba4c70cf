import numpy as np
import pytest

from oupm.core import InputSeries, ModelParams, PreprocessStats, transform_inverse
from oupm.ou_process import marginal_moments, mean_path, mu_at
from oupm.sampler import PathEnsemble, cumulative_stats, initial_condition, path_stream, sample_paths

from conftest import random_params

STATS = PreprocessStats(1.0, [0.0, 0.0], [1.0, 1.0])


def step_inputs(n=200, dt=0.05, seed=0):
    rng = np.random.default_rng(seed)
    seg = np.repeat(rng.normal(size=(n // 20 + 1, 2)), 20, axis=0)[:n]
    return InputSeries(0.0, dt, seg, ("u1", "u2"))


def test_noiseless_paths_follow_mean_recursion():
    inputs = step_inputs()
    p = ModelParams(np.array([0.7, -0.4]), 0.3, np.zeros(2), -800.0, 0.5)
    ens = sample_paths(p, STATS, inputs, M=5, seed=1, keep_paths=True)
    expected = mean_path(p, inputs.u, inputs.dt)
    for j in range(5):
        np.testing.assert_allclose(ens.paths[j], expected, rtol=0, atol=1e-13)
    assert np.all(ens.summary.std < 1e-12)


def test_mean_and_variance_match_marginal_moments():
    inputs = step_inputs(n=120)
    rng = np.random.default_rng(3)
    p = random_params(rng, 2, lam_range=(1.0, 5.0))
    M = 20_000
    ens = sample_paths(p, STATS, inputs, M=M, seed=5)
    m, v = marginal_moments(p, inputs.u, inputs.dt)
    sd = np.sqrt(v[1:])
    assert np.all(np.abs(ens.summary.mean[1:] - m[1:]) <= 4 * sd / np.sqrt(M))
    # std of a sample variance is about v * sqrt(2 / M)
    assert np.all(np.abs(ens.summary.std[1:] ** 2 - v[1:]) <= 5 * v[1:] * np.sqrt(2.0 / M))


def test_stationary_spread():
    lam, sigma, dt = 3.0, 0.8, 0.1
    inputs = InputSeries(0.0, dt, np.zeros((400, 2)), ("u1", "u2"))
    p = ModelParams.constant(2, 1.0, sigma, lam)
    M = 10_000
    ens = sample_paths(p, STATS, inputs, M=M, seed=0)
    target = sigma / np.sqrt(2 * lam)
    # after ~40 relaxation times the spread sits at the stationary value
    s = ens.summary.std[-1]
    assert abs(s - target) <= 3 * target / np.sqrt(2 * M)


@pytest.mark.parametrize("workers,window", [(1, 7), (3, None), (4, 1000), (2, 1)])
def test_output_independent_of_threads_and_windows(workers, window):
    inputs = step_inputs(n=90)
    p = random_params(np.random.default_rng(8), 2)
    ref = sample_paths(p, STATS, inputs, M=257, seed=42, keep_paths=True)
    ens = sample_paths(p, STATS, inputs, M=257, seed=42, keep_paths=True, workers=workers, window=window)
    assert np.array_equal(ref.paths, ens.paths)
    assert np.array_equal(ref.summary.mean, ens.summary.mean)
    assert np.array_equal(ref.summary.median, ens.summary.median)
    np.testing.assert_allclose(ref.cumulative.std, ens.cumulative.std, rtol=1e-12, atol=1e-12)


def test_path_streams_are_independent_of_m():
    inputs = step_inputs(n=50)
    p = random_params(np.random.default_rng(2), 2)
    small = sample_paths(p, STATS, inputs, M=10, seed=7, keep_paths=True)
    large = sample_paths(p, STATS, inputs, M=40, seed=7, keep_paths=True)
    assert np.array_equal(small.paths, large.paths[:10])
    a = path_stream(7, 3).standard_normal(4)
    assert np.array_equal(a, path_stream(7, 3).standard_normal(4))
    assert not np.array_equal(a, path_stream(8, 3).standard_normal(4))


def test_streamed_summaries_match_from_paths():
    inputs = step_inputs(n=75)
    stats = PreprocessStats(40.0, [0.0, 0.0], [1.0, 1.0])
    p = random_params(np.random.default_rng(11), 2)
    ens = sample_paths(p, stats, inputs, M=301, seed=3, keep_paths=True, window=16)
    ref = PathEnsemble.from_paths(ens.paths, stats, inputs.t0, inputs.dt)
    for a, b in ((ens.summary, ref.summary), (ens.raw_summary, ref.raw_summary)):
        np.testing.assert_allclose(a.mean, b.mean, rtol=1e-12)
        np.testing.assert_allclose(a.std, b.std, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(a.median, b.median)
        for q in a.quantiles:
            np.testing.assert_array_equal(a.quantiles[q], b.quantiles[q])
    cb = cumulative_stats(ens)
    np.testing.assert_allclose(ens.cumulative.mean, cb.mean, rtol=1e-12)
    np.testing.assert_allclose(ens.cumulative.std, cb.std, rtol=1e-9, atol=1e-10)


def test_cumulative_constant_paths():
    # every path sits at transformed value 1 -> raw 2 per step; three steps after the start
    stats = PreprocessStats(1.0, [0.0], [1.0])
    ens = PathEnsemble.from_paths(np.ones((4, 4)), stats)
    np.testing.assert_allclose(ens.cumulative.mean, [0.0, 2.0, 4.0, 6.0])
    np.testing.assert_allclose(ens.cumulative.std, 0.0)
    raw = stats.unscale_target(ens.paths)
    np.testing.assert_allclose(ens.cumulative.mean[1:], np.cumsum(raw.mean(axis=0)[1:]))


def test_band_nesting_and_median_order():
    inputs = step_inputs(n=60)
    p = random_params(np.random.default_rng(6), 2)
    s = sample_paths(p, STATS, inputs, M=999, seed=1).summary
    lo50, hi50 = s.band(0.5)
    lo95, hi95 = s.band(0.95)
    lo99, hi99 = s.band(0.99)
    assert np.all((lo99 <= lo95) & (lo95 <= lo50) & (lo50 <= s.median))
    assert np.all((s.median <= hi50) & (hi50 <= hi95) & (hi95 <= hi99))
    with pytest.raises(KeyError):
        s.band(0.8)


def test_raw_median_is_inverse_transform_for_odd_m():
    inputs = step_inputs(n=40)
    stats = PreprocessStats(25.0, [0.0, 0.0], [1.0, 1.0])
    p = random_params(np.random.default_rng(4), 2)
    ens = sample_paths(p, stats, inputs, M=1001, seed=2)
    np.testing.assert_allclose(ens.raw_summary.median, transform_inverse(ens.summary.median) * 25.0,
                               rtol=1e-12)


def test_single_path_and_validation():
    inputs = step_inputs(n=10)
    p = ModelParams(np.zeros(2), 0.0, np.zeros(2), -800.0, 0.0)
    ens = sample_paths(p, STATS, inputs, M=1, seed=0)
    assert ens.M == 1 and ens.n == 10
    with pytest.raises(ValueError):
        sample_paths(p, STATS, inputs, M=0)
    with pytest.raises(ValueError, match="channels"):
        sample_paths(ModelParams.constant(3, 0.0, 1.0, 1.0), STATS, inputs, M=2)


def test_initial_condition_is_mean_level(rng):
    p = ModelParams(np.zeros(2), 0.3, rng.normal(size=2), 0.1, 0.0)
    assert initial_condition(p, STATS, rng.normal(size=2)) == pytest.approx(0.3)
    q = random_params(rng, 2)
    u0 = rng.normal(size=2)
    assert initial_condition(q, STATS, u0) == float(mu_at(q, u0))
    ens = sample_paths(q, STATS, step_inputs(n=5), M=7, seed=0, keep_paths=True)
    assert np.all(ens.paths[:, 0] == initial_condition(q, STATS, step_inputs(n=5).u[0]))
