"""Bayesian model likelihood, Bayes factors and property weights.

The model likelihood integral is estimated by importance sampling from a
heavy-tailed proposal fitted to the posterior chain: an equally weighted
mixture of multivariate Student-t components centered on evenly spaced
chain draws (local covariance proportional to the chain covariance), plus
a small defensive prior component. The mixture follows ridge-shaped and
multimodal posteriors that a single ellipsoid covers poorly; log-weights
are stabilized through log-sum-exp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .dataio import Dataset
from .errors import EmptyCategory, UnstableEstimate
from .forcing import ForcingSeries
from .mcmc import Chain, make_log_posterior
from .model import ModelSpec
from .priors import PriorSpec, UnconstrainedPrior


@dataclass(frozen=True)
class BmlConfig:
    n_samples: int = 4000
    df: float = 5.0
    n_components: int = 64  # t components along the chain
    local_scale: float = 0.25  # component covariance relative to chain covariance
    batches: int = 20
    min_ess: float = 100.0
    # share of proposal mass taken from the prior; guards against a chain
    # that underexplored a diffuse posterior (weakly identified parameters)
    defensive_weight: float = 0.1


class _StudentTMixture:
    """Equal-weight t mixture with one shared shape matrix."""

    def __init__(self, locs: np.ndarray, cov: np.ndarray, df: float):
        self.locs = locs
        self.df = df
        self.chol = np.linalg.cholesky(cov)
        d = locs.shape[1]
        self._log_norm = (
            gammaln((df + d) / 2.0)
            - gammaln(df / 2.0)
            - 0.5 * d * math.log(df * math.pi)
            - np.log(np.diag(self.chol)).sum()
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        m, d = self.locs.shape
        comp = rng.integers(0, m, size=n)
        z = rng.standard_normal((n, d))
        g = rng.chisquare(self.df, size=n)
        return self.locs[comp] + (z @ self.chol.T) * np.sqrt(self.df / g)[:, None]

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        m, d = self.locs.shape
        parts = np.empty((m, x.shape[0]))
        for i in range(m):
            resid = solve_triangular(self.chol, (x - self.locs[i]).T, lower=True)
            q = (resid * resid).sum(axis=0)
            parts[i] = self._log_norm - 0.5 * (self.df + d) * np.log1p(q / self.df)
        return logsumexp(parts, axis=0) - math.log(m)


def bml_estimate(
    spec: ModelSpec,
    data: Dataset,
    forcing: ForcingSeries | None = None,
    prior: PriorSpec | None = None,
    chain: Chain | None = None,
    config: BmlConfig | None = None,
    seed: int = 0,
) -> tuple[float, float]:
    """Importance-sampling estimate of the log model likelihood.

    Returns (log_bml, mc_se) with the Monte Carlo standard error from
    batch means; deterministic given the seed. Raises UnstableEstimate
    when the effective sample size drops below ``config.min_ess``.
    """
    if chain is None:
        raise ValueError("bml_estimate needs a posterior chain for the proposal")
    config = config or BmlConfig()
    if len(data) == 0:
        # the marginal of an empty dataset is 1 by convention
        return 0.0, 0.0
    transform = chain.transform
    d = transform.n_free
    upri = UnconstrainedPrior(transform, prior, chain.restricted)
    log_post = make_log_posterior(spec, data, forcing, transform, upri)
    if d == 0:
        return float(log_post(np.empty(0))), 0.0

    rows = np.unique(
        np.linspace(0, chain.n_draws - 1, config.n_components).round().astype(int)
    )
    cov = np.cov(chain.draws, rowvar=False).reshape(d, d)
    cov = config.local_scale * cov + 1e-10 * np.eye(d)
    proposal = _StudentTMixture(chain.draws[rows], cov, config.df)

    rng = np.random.default_rng(np.random.SeedSequence(seed))
    n = config.n_samples
    w_def = config.defensive_weight
    x = proposal.sample(rng, n)
    if w_def > 0:
        from_prior = rng.uniform(size=n) < w_def
        prior_draws = upri.sample(rng, n)
        x = np.where(from_prior[:, None], prior_draws, x)
        log_q = np.logaddexp(
            math.log1p(-w_def) + proposal.log_pdf(x),
            math.log(w_def) + upri.log_density_rows(x),
        )
    else:
        log_q = proposal.log_pdf(x)
    log_w = np.array([log_post(row) for row in x]) - log_q

    n = log_w.size
    log_bml = float(logsumexp(log_w) - math.log(n))
    b = max(2, min(config.batches, n // 2))
    per = n // b
    batch_est = np.array(
        [logsumexp(log_w[i * per : (i + 1) * per]) - math.log(per) for i in range(b)]
    )
    mc_se = float(batch_est.std(ddof=1) / math.sqrt(b))
    ess = float(np.exp(2.0 * logsumexp(log_w) - logsumexp(2.0 * log_w)))
    if ess < config.min_ess:
        raise UnstableEstimate(
            f"effective sample size {ess:.1f} below {config.min_ess}",
            log_bml=log_bml,
            mc_se=mc_se,
            ess=ess,
        )
    return log_bml, mc_se


def bayes_factor(log_bml_1: float, log_bml_2: float) -> float:
    """Evidence ratio exp(log_bml_1 - log_bml_2) of model 1 over model 2."""
    if not (np.isfinite(log_bml_1) and np.isfinite(log_bml_2)):
        raise ValueError("Bayes factor needs finite log model likelihoods")
    return math.exp(log_bml_1 - log_bml_2)


@dataclass(frozen=True)
class PropertyWeights:
    property_name: str
    labels: tuple[str, ...]
    weights: tuple[float, ...]
    counts: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "property": self.property_name,
            "categories": [
                {"label": lab, "weight": w, "n_models": c}
                for lab, w, c in zip(self.labels, self.weights, self.counts)
            ],
        }


def property_weights(categorization, bml_table) -> PropertyWeights:
    """Posterior weights per category, each category prior-weighted by the
    inverse of its model count so unequal category sizes do not bias the
    comparison. Computed in log space; weights sum to one.

    ``bml_table`` maps ModelSpec (or spec name) to log model likelihood.
    """
    items = list(bml_table.items()) if hasattr(bml_table, "items") else list(bml_table)
    by_label: dict[str, list[float]] = {label: [] for label, _ in categorization.categories}
    for spec, log_bml in items:
        label = categorization.classify(spec)
        by_label[label].append(float(log_bml))
    labels = [label for label, _ in categorization.categories]
    for label in labels:
        if not by_label[label]:
            raise EmptyCategory(
                f"category {label!r} of {categorization.property_name!r} has no models"
            )
    log_terms = np.array(
        [logsumexp(by_label[label]) - math.log(len(by_label[label])) for label in labels]
    )
    weights = np.exp(log_terms - logsumexp(log_terms))
    weights = weights / weights.sum()
    return PropertyWeights(
        property_name=categorization.property_name,
        labels=tuple(labels),
        weights=tuple(float(w) for w in weights),
        counts=tuple(len(by_label[label]) for label in labels),
    )
