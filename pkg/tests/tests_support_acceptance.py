"""Shared fixture builders for the acceptance suite."""

from layered_ou import ModelSpec, ObservationDesign, make_params, simulate_dataset


def conjugate_fixture(seed):
    """1-layer OU data with pull and diffusion pinned: only the level is
    free, so the posterior and the evidence are available in closed form."""
    alpha, sigma = 1.0, 0.7
    spec = ModelSpec(n_layers=1, n_sites=1)
    truth = make_params(spec, alpha=[alpha], sigma=[sigma], mu0=1.5)
    design = ObservationDesign.regular(25, 0.0, 24.0, s2=0.25, n=1.0)
    data = simulate_dataset(spec, truth, design, seed=seed)
    fix = {"pull_1": alpha, "sigma_1": sigma}
    return spec, data, fix, alpha, sigma
