"""Exogenous forcing on a middle layer, plus a miniature layer-count
recovery study.

Run: python demos/05_forcing_and_recovery.py   (takes a couple of minutes)
"""

import numpy as np

from layered_ou import (
    ForcingSeries,
    MLConfig,
    McmcConfig,
    BmlConfig,
    ModelSpec,
    ObservationDesign,
    PriorSpec,
    StudyConfig,
    make_params,
    ml_fit,
    run_selection_study,
    simulate_dataset,
)

# --- forcing: the second layer tracks layer 3 plus beta * T(t) ---
spec = ModelSpec(n_layers=2, n_sites=1, forcing_layer=2)
truth = make_params(
    spec, alpha=[4.0, 0.5], sigma=[0.3, 0.25], mu0=0.0, beta=0.15
)
ft = np.linspace(0.0, 40.0, 80)
forcing = ForcingSeries(times=ft, values=np.sin(ft / 5.0) * 3.0)
design = ObservationDesign.regular(120, 0.0, 40.0, s2=0.01, n=1.0)
data = simulate_dataset(spec, truth, design, forcing=forcing, seed=21)

ml = ml_fit(
    spec, data, forcing=forcing, config=MLConfig(n_starts=15, max_iter=500), seed=2
)
beta_hat = ml.params.beta
print(f"forcing regression: true beta = 0.15, ML beta = {beta_hat:.3f}")

# --- miniature recovery study (small budgets; see tests for the full one) ---
spec1 = ModelSpec(n_layers=1, n_sites=1)
gen1 = make_params(spec1, alpha=[1.0], sigma=[0.6], mu0=0.0)
spec2 = ModelSpec(n_layers=2, n_sites=1)
gen2 = make_params(spec2, alpha=[10.0, 0.1], sigma=[1.73, 0.316], mu0=0.0)
centers = np.arange(20) * 1.5
times = np.sort(np.concatenate([centers, centers + 0.04, centers + 0.75]))
study_design = ObservationDesign(
    site=("s",) * 60, time=times, s2=np.full(60, 0.001), n=np.ones(60)
)
config = StudyConfig(
    criteria=("AIC", "BIC"),
    ml=MLConfig(n_starts=8, max_iter=300, restrict_pulls=True),
    mcmc=McmcConfig(iterations=500, burn_in=250, restrict_pulls=True),
    bml=BmlConfig(n_samples=800, min_ess=50),
    prior=PriorSpec(dt_my=(0.05, 20.0), sigma=(0.1, 2.0), center=(0.1, 10.0)),
)
result = run_selection_study(
    [(spec1, gen1), (spec2, gen2)], [spec1, spec2], study_design,
    n_reps=3, criteria=("AIC", "BIC"), seed=7, config=config,
)
print()
print(result.summary_table())
