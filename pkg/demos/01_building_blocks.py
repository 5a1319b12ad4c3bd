"""Tour of the core building blocks: model specs, system matrices and
exact Gaussian moments of a layered OU chain.

Run: python demos/01_building_blocks.py
"""

import numpy as np

from layered_ou import (
    ModelSpec,
    build_system,
    make_params,
    ou_autocovariance,
    stationary_autocovariance,
    stationary_moments,
    transition_moments,
    two_layer_autocovariance,
)

# A two-layer chain: the observed top layer tracks a slower hidden layer.
spec = ModelSpec(n_layers=2, n_sites=1)
params = make_params(spec, alpha=[2.0, 1.0], sigma=[1.0, 1.0], mu0=0.0)
sys = build_system(spec, params)

print("pull matrix A:")
print(sys.A)
print("eigenvalues (negated pulls):", sys.lam)

mean, cov = stationary_moments(sys)
print("\nstationary mean:", mean)
print("stationary covariance:")
print(cov)
print("top-layer variance 7/12 =", 7 / 12)

# The closed-form two-layer autocovariance doubles as an oracle for the
# general eigendecomposition machinery.
print("\nlag   closed-form   general-machinery")
for lag in (0.0, 0.5, 1.0, 2.0):
    closed = two_layer_autocovariance(2.0, 1.0, 1.0, 1.0, lag)
    general = stationary_autocovariance(sys, lag)[0, 0]
    print(f"{lag:4.1f}  {closed:.10f}  {general:.10f}")

# Conditional moments over a gap: the scalar OU special case.
ou = build_system(
    ModelSpec(n_layers=1, n_sites=1),
    make_params(ModelSpec(n_layers=1, n_sites=1), alpha=[1.0], sigma=[np.sqrt(2)], mu0=0.0),
)
m, c = transition_moments(ou, np.array([2.0]), np.zeros((1, 1)), 0.0, np.log(2))
print("\nOU from x0=2 over lag ln 2: mean", m[0], "(expect 1.0),",
      "var", c[0, 0], "(expect 0.75)")
print("OU autocovariance at lag 1/alpha:", ou_autocovariance(1.0, np.sqrt(2), 1.0),
      "= 1/e =", np.exp(-1.0))
