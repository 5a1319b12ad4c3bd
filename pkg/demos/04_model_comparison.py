"""Model comparison on a toy frame: evidence, Bayes factors and
size-normalized property weights.

Run: python demos/04_model_comparison.py
"""

import numpy as np

from layered_ou import (
    BmlConfig,
    MLConfig,
    McmcConfig,
    ModelFrame,
    ModelSpec,
    ObservationDesign,
    PriorSpec,
    bayes_factor,
    bml_estimate,
    enumerate_models,
    make_params,
    mcmc_sample,
    ml_fit,
    property_weights,
    simulate_dataset,
)
from layered_ou.frame import restrict_to_nonempty, standard_categorizations
from layered_ou.report import weights_table_text

truth_spec = ModelSpec(n_layers=1, n_sites=1)
truth = make_params(truth_spec, alpha=[1.0], sigma=[0.6], mu0=0.3)
design = ObservationDesign.regular(50, 0.0, 25.0, s2=0.04, n=2.0)
data = simulate_dataset(truth_spec, truth, design, seed=9)

frame = ModelFrame(
    n_sites=1,
    layer_counts=(1, 2),
    regional_kinds=("none",),
    correlation_kinds=("none",),
)
models = enumerate_models(frame)
print("candidate models:", [m.name for m in models])

prior = PriorSpec()
table = {}
for spec in models:
    ml = ml_fit(spec, data, prior=prior, config=MLConfig(n_starts=8, max_iter=300), seed=1)
    chain = mcmc_sample(
        spec, data, prior=prior, config=McmcConfig(iterations=800, burn_in=400), seed=1
    )
    log_bml, mc_se = bml_estimate(
        spec, data, prior=prior, chain=chain, config=BmlConfig(n_samples=1500), seed=1
    )
    table[spec] = log_bml
    print(
        f"  {spec.name}: logL {ml.log_lik:7.2f}  AIC {ml.aic:7.2f}  "
        f"BIC {ml.bic:7.2f}  log-BML {log_bml:7.2f} +- {mc_se:.2f}"
    )

best = max(table, key=table.get)
worst = min(table, key=table.get)
print(f"\nBayes factor best vs worst: {bayes_factor(table[best], table[worst]):.1f}")

print("\nsize-normalized property weights:")
for cat in standard_categorizations(layer_counts=(1, 2)):
    cat = restrict_to_nonempty(cat, models)
    if len(cat.categories) >= 2:
        print(weights_table_text(property_weights(cat, table)))
