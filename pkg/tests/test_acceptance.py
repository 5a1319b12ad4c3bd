"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line and enforcing its runtime budget (run with -s to see the
lines live)."""

import json
import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from scipy.stats import kstest

import oracles
from layered_ou import (
    BmlConfig,
    Categorization,
    MLConfig,
    McmcConfig,
    ModelSpec,
    ObservationDesign,
    PriorSpec,
    StudyConfig,
    bml_estimate,
    build_system,
    canonicalize_pulls,
    log_likelihood,
    make_params,
    mcmc_sample,
    ou_autocovariance,
    property_weights,
    run_selection_study,
    simulate_dataset,
    simulate_state_paths,
    stationary_autocovariance,
    stationary_moments,
    two_layer_autocovariance,
)
from layered_ou.cli import main
from tests_support_acceptance import conjugate_fixture


@contextmanager
def criterion(number, name, limit_seconds):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        elapsed = time.perf_counter() - start
        print(f"ACCEPTANCE {number} {name}: FAIL ({elapsed:.1f}s)")
        raise
    elapsed = time.perf_counter() - start
    print(
        f"ACCEPTANCE {number} {name}: PASS ({elapsed:.1f}s, limit {limit_seconds}s)"
    )
    assert elapsed < limit_seconds, f"runtime {elapsed:.1f}s over {limit_seconds}s"


def test_criterion_1_analytic_oracles():
    with criterion(1, "analytic-oracle suite", 10):
        rng = np.random.default_rng(11)
        spec = ModelSpec(n_layers=2, n_sites=1)
        checked = 0
        while checked < 200:
            a1, a2 = np.exp(rng.uniform(-2.0, 2.0, 2))
            if abs(a1 - a2) <= 1e-6 * max(a1, a2):
                continue
            s1, s2 = np.exp(rng.uniform(-1.5, 1.0, 2))
            lag = rng.uniform(0.0, 10.0 / min(a1, a2))
            sys = build_system(
                spec, make_params(spec, alpha=[a1, a2], sigma=[s1, s2], mu0=0.0)
            )
            general = stationary_autocovariance(sys, lag)[0, 0]
            closed = two_layer_autocovariance(a1, a2, s1, s2, lag)
            assert general == pytest.approx(closed, rel=1e-8)
            checked += 1
        for _ in range(50):
            alpha, sigma = np.exp(rng.uniform(-2, 2, 2))
            sd = math.sqrt(ou_autocovariance(alpha, sigma, 0.0))
            assert sd == pytest.approx(sigma / math.sqrt(2 * alpha), rel=1e-12)


def test_criterion_2_filter_oracle():
    from test_kalman import random_fixture

    with criterion(2, "filter-oracle suite", 30):
        rng = np.random.default_rng(314159)
        for trial in range(50):
            spec, params, data = random_fixture(rng)
            got = log_likelihood(spec, params, data)
            want = oracles.joint_gaussian_loglik(build_system(spec, params), data)
            assert got == pytest.approx(want, rel=1e-8, abs=1e-9)


def _mc_fixture(rng, index):
    n_layers = [1, 2, 3][index % 3]
    n_sites = [1, 2][index % 2]
    corr = ["none"] * n_layers
    if n_sites > 1:
        corr[index % n_layers] = "intermediate" if index % 4 else "perfect"
    spec = ModelSpec(n_layers=n_layers, n_sites=n_sites, correlations=tuple(corr))
    rho = {
        layer: 0.4
        for layer in range(1, n_layers + 1)
        if spec.correlation(layer) == "intermediate"
    }
    params = make_params(
        spec,
        alpha=list(np.exp(rng.uniform(-0.5, 1.0, n_layers))),
        sigma=list(np.exp(rng.uniform(-1.0, 0.2, n_layers))),
        mu0=float(rng.normal()),
        rho=rho,
    )
    return spec, params


def test_criterion_3_monte_carlo_suite():
    with criterion(3, "Monte Carlo suite", 60):
        rng = np.random.default_rng(99)
        n = 10_000
        for index in range(10):
            spec, params = _mc_fixture(rng, index)
            times = [0.0, 0.5, 1.3, 2.4]
            states = simulate_state_paths(
                spec, params, times, n_paths=n, rng=np.random.default_rng(1000 + index)
            )
            terminal = states[:, -1, :]
            mean, cov = stationary_moments(build_system(spec, params))
            sd = np.sqrt(np.diag(cov))
            assert np.all(
                np.abs(terminal.mean(axis=0) - mean) < 4 * sd / math.sqrt(n)
            )
            emp = np.cov(terminal.T).reshape(cov.shape)
            se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
            assert np.all(np.abs(emp - cov) < 4 * se)


def test_criterion_4_conjugate_evidence_and_posterior():
    with criterion(4, "conjugate evidence check", 300):
        prior = PriorSpec()
        for seed in range(5):
            spec, data, fix, truth_alpha, truth_sigma = conjugate_fixture(seed)
            chain = mcmc_sample(
                spec, data, prior=prior,
                config=McmcConfig(iterations=1500, burn_in=500), seed=seed, fix=fix,
            )
            log_bml, mc_se = bml_estimate(
                spec, data, prior=prior, chain=chain,
                config=BmlConfig(n_samples=2000), seed=seed,
            )
            C = (truth_sigma**2 / (2 * truth_alpha)) * np.exp(
                -truth_alpha * np.abs(data.time[:, None] - data.time[None, :])
            ) + np.diag(data.noise_var)
            one = np.ones(len(data))
            m0, s0 = prior.mean_sd("mu0")
            Cm = C + s0**2 * np.outer(one, one)
            resid = data.y - m0
            _, logdet = np.linalg.slogdet(Cm)
            analytic = -0.5 * (
                len(data) * math.log(2 * math.pi)
                + logdet
                + resid @ np.linalg.solve(Cm, resid)
            )
            assert abs(log_bml - analytic) < 3 * mc_se
            precision = one @ np.linalg.solve(C, one) + 1.0 / s0**2
            post_mean = (one @ np.linalg.solve(C, data.y) + m0 / s0**2) / precision
            post_sd = precision**-0.5
            thinned = chain.draws[::20, 0]
            assert kstest(thinned, "norm", args=(post_mean, post_sd)).pvalue > 0.01


def test_criterion_5_desk_scale_model_recovery():
    with criterion(5, "desk-scale model recovery", 1800):
        spec1 = ModelSpec(n_layers=1, n_sites=1)
        spec2 = ModelSpec(n_layers=2, n_sites=1)
        gen1 = make_params(spec1, alpha=[1.0], sigma=[0.6], mu0=0.0)
        # characteristic times 0.1 and 10 My: separation 100x (>= 10x)
        gen2 = make_params(spec2, alpha=[10.0, 0.1], sigma=[1.73, 0.316], mu0=0.0)
        centers = np.arange(20) * 1.5
        times = np.sort(
            np.concatenate([centers, centers + 0.04, centers + 0.75])
        )
        design = ObservationDesign(
            site=("s",) * 60, time=times, s2=np.full(60, 0.001), n=np.ones(60)
        )
        config = StudyConfig(
            ml=MLConfig(n_starts=12, max_iter=400, restrict_pulls=True),
            mcmc=McmcConfig(iterations=2000, burn_in=800, restrict_pulls=True),
            bml=BmlConfig(n_samples=5000, n_components=80),
            prior=PriorSpec(dt_my=(0.05, 20.0), sigma=(0.1, 2.0), center=(0.1, 10.0)),
            jobs=2,
        )
        result = run_selection_study(
            [(spec1, gen1), (spec2, gen2)], [spec1, spec2], design,
            n_reps=10, seed=42, config=config,
        )
        print()
        print(result.summary_table())
        correct = result.correct_counts()
        for gen in result.generator_names:
            for crit in result.criteria:
                assert correct[gen][crit] > 5, (gen, crit, correct[gen])


def test_criterion_6_pull_identifiability():
    with criterion(6, "pull identifiability", 120):
        rng = np.random.default_rng(1618)
        spec = ModelSpec(n_layers=2, n_sites=1)
        truth = make_params(spec, alpha=[2.0, 0.3], sigma=[0.6, 0.5], mu0=0.0)
        design = ObservationDesign.regular(50, 0.0, 30.0, s2=0.02, n=1.0)
        data = simulate_dataset(spec, truth, design, seed=7)
        for _ in range(20):
            a = np.exp(rng.uniform(-1.5, 1.5, 2))
            if abs(a[0] - a[1]) < 1e-3 * a.max():
                a[1] *= 1.7
            s = np.exp(rng.uniform(-1.0, 0.5, 2))
            params = make_params(spec, alpha=list(a), sigma=list(s), mu0=rng.normal())
            canon = canonicalize_pulls(spec, params)
            changed = (a[0] < a[1])
            if changed:
                assert canon.alpha != params.alpha
            assert log_likelihood(spec, canon, data) == pytest.approx(
                log_likelihood(spec, params, data), abs=1e-6
            )


def test_criterion_7_property_weight_formula():
    with criterion(7, "property-weight formula", 1):
        cat = Categorization(
            "number of layers",
            (("1", lambda s: s.n_layers == 1), ("2", lambda s: s.n_layers == 2)),
        )
        m1 = ModelSpec(n_layers=1, n_sites=1)
        m2 = ModelSpec(n_layers=2, n_sites=1)
        m2b = ModelSpec(n_layers=2, n_sites=1, random_walk_bottom=True)

        # hand-computed: W(1) = e^1 / (e^1 + e^0) for singleton categories
        pw = property_weights(cat, [(m1, 1.0), (m2, 0.0)])
        assert pw.weights[0] == pytest.approx(math.e / (math.e + 1.0), abs=1e-12)
        assert pw.weights[1] == pytest.approx(1.0 / (math.e + 1.0), abs=1e-12)

        # hand-computed with unequal sizes: category 2 averages its models
        pw = property_weights(cat, [(m1, 0.0), (m2, math.log(2.0)), (m2b, 0.0)])
        t1, t2 = 1.0, 0.5 * (2.0 + 1.0)
        assert pw.weights[0] == pytest.approx(t1 / (t1 + t2), abs=1e-12)
        assert pw.weights[1] == pytest.approx(t2 / (t1 + t2), abs=1e-12)

        # singletons reduce to posterior model probabilities
        cat3 = Categorization(
            "which",
            tuple((m.name, (lambda s, n=m.name: s.name == n)) for m in (m1, m2, m2b)),
        )
        log_bml = np.array([-4.0, -3.0, -5.5])
        pw = property_weights(cat3, list(zip((m1, m2, m2b), log_bml)))
        probs = np.exp(log_bml - log_bml.max())
        probs /= probs.sum()
        assert pw.weights == pytest.approx(tuple(probs), abs=1e-12)

        # equal evidence: uniform weights whatever the category sizes
        pw = property_weights(cat, [(m1, -7.0), (m2, -7.0), (m2b, -7.0)])
        assert pw.weights == pytest.approx((0.5, 0.5), abs=1e-12)
        assert sum(pw.weights) == pytest.approx(1.0, abs=1e-12)


def test_criterion_8_determinism_and_format(tmp_path):
    with criterion(8, "determinism and output format", 600):
        spec = ModelSpec(n_layers=1, n_sites=1)
        params = make_params(spec, alpha=[1.0], sigma=[0.6], mu0=0.5)
        design = ObservationDesign.regular(40, 0.0, 20.0, s2=0.05, n=2.0)
        data = simulate_dataset(spec, params, design, seed=0)
        from layered_ou import save_dataset

        data_path = tmp_path / "data.csv"
        save_dataset(data, data_path)
        blobs = []
        for tag in ("x", "y"):
            out = tmp_path / tag
            code = main([
                "compare", "--data", str(data_path),
                "--specs", "L1:S1:rw0", "L2:S1:rw0",
                "--out-dir", str(out), "--seed", "21",
                "--ml-starts", "5", "--ml-max-iter", "200",
                "--mcmc-iterations", "600", "--mcmc-burn-in", "250",
                "--bml-samples", "1000",
            ])
            assert code == 0
            blobs.append(
                (
                    (out / "models.jsonl").read_bytes(),
                    (out / "weights.jsonl").read_bytes(),
                )
            )
        assert blobs[0] == blobs[1]
        summary = (tmp_path / "x" / "summary.txt").read_text()
        for column in ("ML", "B. median", "Prior 95%", "Posterior 95%"):
            assert column in summary
        record = json.loads((tmp_path / "x" / "models.jsonl").read_text().splitlines()[0])
        for field in ("spec", "seed", "version", "log_bml", "aic", "bic"):
            assert field in record
