import math

import numpy as np
import pytest

import oracles
from layered_ou import (
    Dataset,
    ModelSpec,
    ObservationDesign,
    build_system,
    make_params,
    simulate_dataset,
    simulate_state_paths,
    stationary_moments,
)


def test_near_zero_noise_follows_the_deterministic_mean_path():
    spec = ModelSpec(n_layers=2, n_sites=1)
    params = make_params(spec, alpha=[2.0, 0.5], sigma=[1e-8, 1e-8], mu0=1.7)
    design = ObservationDesign.regular(20, 0.0, 10.0, s2=0.0, n=1.0)
    data = simulate_dataset(spec, params, design, seed=3)
    assert np.abs(data.y - 1.7).max() < 1e-3


def test_stationary_variance_from_replicate_observations():
    # 1e4 independent single-time observations of a stationary OU
    spec = ModelSpec(n_layers=1, n_sites=1)
    params = make_params(spec, alpha=[1.0], sigma=[math.sqrt(2.0)], mu0=0.0)
    rng = np.random.default_rng(17)
    states = simulate_state_paths(spec, params, [0.0, 1.0], n_paths=10_000, rng=rng)
    y = states[:, 1, 0]
    var = y.var(ddof=1)
    se = math.sqrt(2.0 / len(y))  # var of sample variance of N(0,1)
    assert abs(var - 1.0) < 4 * se


def test_lagged_pairs_have_expected_autocorrelation():
    spec = ModelSpec(n_layers=1, n_sites=1)
    params = make_params(spec, alpha=[1.0], sigma=[math.sqrt(2.0)], mu0=0.0)
    rng = np.random.default_rng(23)
    lag = math.log(2.0)
    states = simulate_state_paths(spec, params, [0.0, lag], n_paths=20_000, rng=rng)
    corr = np.corrcoef(states[:, 0, 0], states[:, 1, 0])[0, 1]
    assert corr == pytest.approx(0.5, abs=4.0 / math.sqrt(20_000))


def test_exact_simulation_matches_stationary_moments_after_transitions():
    rng = np.random.default_rng(41)
    spec = ModelSpec(n_layers=3, n_sites=2, correlations=("none", "none", "intermediate"))
    params = make_params(
        spec, alpha=[3.0, 1.0, 0.3], sigma=[0.6, 0.5, 0.4], mu0=0.5, rho={3: 0.5}
    )
    times = [0.0, 0.4, 1.1, 2.0]
    n = 10_000
    states = simulate_state_paths(spec, params, times, n_paths=n, rng=rng)
    terminal = states[:, -1, :]
    mean, cov = stationary_moments(build_system(spec, params))
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(terminal.mean(axis=0) - mean) < 4 * sd / math.sqrt(n))
    emp_cov = np.cov(terminal.T)
    se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
    assert np.all(np.abs(emp_cov - cov) < 4 * se_cov)


def test_seed_determinism_bit_identical():
    spec = ModelSpec(n_layers=2, n_sites=2, correlations=("none", "perfect"))
    params = make_params(spec, alpha=[2.0, 0.4], sigma=[0.5, 0.3], mu0=0.0)
    design = ObservationDesign.regular(15, 0.0, 10.0, s2=0.02, n=2.0, sites=("a", "b"))
    d1 = simulate_dataset(spec, params, design, seed=99)
    d2 = simulate_dataset(spec, params, design, seed=99)
    assert d1.y.tobytes() == d2.y.tobytes()
    d3 = simulate_dataset(spec, params, design, seed=100)
    assert d1.y.tobytes() != d3.y.tobytes()


def test_design_copied_from_dataset_reproduces_times_and_noise():
    data = Dataset(
        site=("a", "b", "a"),
        time=[0.5, 0.5, 2.0],
        y=[0.1, 0.2, 0.3],
        s2=[0.4, 0.5, 0.6],
        n=[2, 3, 4],
    )
    design = ObservationDesign.from_dataset(data)
    assert design.site == data.site
    assert design.time == pytest.approx(data.time)
    assert design.s2 == pytest.approx(data.s2)
    assert design.n == pytest.approx(data.n)
    spec = ModelSpec(n_layers=1, n_sites=2)
    params = make_params(spec, alpha=[1.0], sigma=[0.5], mu0=0.0)
    sim = simulate_dataset(spec, params, design, seed=1)
    assert sim.time == pytest.approx(data.time)
    assert sim.s2 == pytest.approx(data.s2)


def test_site_count_mismatch_is_rejected():
    from layered_ou.errors import DimensionMismatch

    spec = ModelSpec(n_layers=1, n_sites=2)
    params = make_params(spec, alpha=[1.0], sigma=[0.5], mu0=0.0)
    design = ObservationDesign.regular(5, 0.0, 4.0, s2=0.1)
    with pytest.raises(DimensionMismatch):
        simulate_dataset(spec, params, design, seed=0)


@pytest.mark.slow
def test_euler_maruyama_agrees_with_stationary_moments():
    # independent dynamics oracle: crude stepping must reproduce the
    # stationary law the exact machinery claims
    spec = ModelSpec(n_layers=3, n_sites=2, correlations=("none", "none", "intermediate"))
    params = make_params(
        spec, alpha=[2.0, 1.0, 0.5], sigma=[0.6, 0.5, 0.4], mu0=0.7, rho={3: 0.66}
    )
    sys = build_system(spec, params)
    mean, cov = stationary_moments(sys)
    rng = np.random.default_rng(2025)
    n_paths = 100_000
    dt_min = 1.0 / 2.0  # fastest characteristic time
    h = dt_min / 100.0
    total = 12.0 / 0.5  # twelve slowest characteristic times of burn-in
    x = oracles.euler_maruyama_terminal(
        sys, mean, total_time=total, n_steps=int(total / h), n_paths=n_paths, rng=rng
    )
    sd = np.sqrt(np.diag(cov))
    assert np.all(np.abs(x.mean(axis=0) - mean) < 4 * sd / math.sqrt(n_paths))
    emp = np.cov(x.T)
    se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n_paths)
    bias_margin = 3.0 * 0.5 * h * np.abs(cov)  # first-order step-size bias
    assert np.all(np.abs(emp - cov) < 4 * se + bias_margin)
    # bottom-layer cross-site correlation equals rho
    corr = emp[4, 5] / math.sqrt(emp[4, 4] * emp[5, 5])
    assert corr == pytest.approx(0.66, abs=0.01)
