"""Adaptive random-walk Metropolis sampling of the parameter posterior.

Proposals update one unconstrained coordinate at a time. Each coordinate's
proposal scale follows a Robbins-Monro recursion toward the target
acceptance rate during burn-in and is frozen afterwards, so the recorded
draws come from a Markov chain with the exact posterior as its invariant
distribution. Convergence is flagged via split-chain potential scale
reduction over at least two independent chains.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataio import Dataset
from .errors import DimensionMismatch
from .forcing import ForcingSeries
from .kalman import log_likelihood_or_neginf
from .model import ModelSpec
from .params import ParamTransform, ParamVector
from .priors import PriorSpec, UnconstrainedPrior

RHAT_THRESHOLD = 1.05


@dataclass(frozen=True)
class McmcConfig:
    iterations: int = 3000  # recorded sweeps per chain (after burn-in)
    burn_in: int = 1000
    thin: int = 1
    chains: int = 2
    target_accept: float = 0.3
    initial_scale: float = 0.5
    restrict_pulls: bool = False


@dataclass(frozen=True)
class Chain:
    """Posterior draws on the unconstrained scale, chains concatenated in
    order; ``per_chain`` rows belong to each chain."""

    spec: ModelSpec
    transform: ParamTransform = field(repr=False)
    names: list[str]
    draws: np.ndarray
    log_post: np.ndarray
    per_chain: int
    acceptance: np.ndarray
    scales: np.ndarray
    burnin_acceptance: np.ndarray
    rhat: np.ndarray
    converged: bool
    seed: int
    restricted: bool = False

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def param_draws(self, max_draws: int | None = None) -> list[ParamVector]:
        idx = np.arange(self.n_draws)
        if max_draws is not None and self.n_draws > max_draws:
            idx = np.unique(
                np.linspace(0, self.n_draws - 1, max_draws).round().astype(int)
            )
        return [self.transform.from_unconstrained(self.draws[i]) for i in idx]

    def natural_draws(self) -> dict[str, np.ndarray]:
        """Marginal draws per coordinate mapped back to the natural scale."""
        out = {}
        for j, coord in enumerate(self.transform.coords):
            u = self.draws[:, j]
            if coord.ptype in ("pull", "sigma"):
                out[coord.name] = np.exp(u)
            elif coord.ptype == "rho":
                out[coord.name] = np.tanh(u)
            else:
                out[coord.name] = u.copy()
        return out


def make_log_posterior(
    spec: ModelSpec,
    data: Dataset,
    forcing: ForcingSeries | None,
    transform: ParamTransform,
    upri: UnconstrainedPrior,
):
    def log_post(u: np.ndarray) -> float:
        lp = upri.log_density(u)
        if not np.isfinite(lp):
            return -math.inf
        try:
            params = transform.from_unconstrained(u)
        except (OverflowError, DimensionMismatch):
            return -math.inf
        return lp + log_likelihood_or_neginf(spec, params, data, forcing)

    return log_post


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Potential scale reduction per coordinate from (m, n, d) draws,
    splitting each chain in half."""
    m, n, d = chains.shape
    half = n // 2
    if half < 2:
        return np.full(d, np.nan)
    segs = np.concatenate([chains[:, :half, :], chains[:, half : 2 * half, :]], axis=0)
    means = segs.mean(axis=1)  # (2m, d)
    variances = segs.var(axis=1, ddof=1)
    W = variances.mean(axis=0)
    B = half * means.var(axis=0, ddof=1)
    var_plus = (half - 1) / half * W + B / half
    with np.errstate(divide="ignore", invalid="ignore"):
        rhat = np.sqrt(var_plus / W)
    return np.where(W > 0, rhat, 1.0)


def _run_single_chain(log_post, u0, config: McmcConfig, rng: np.random.Generator):
    d = u0.size
    u = u0.copy()
    lp = log_post(u)
    log_scale = np.full(d, math.log(config.initial_scale))
    adapt_count = np.zeros(d)
    n_rec = config.iterations // config.thin
    draws = np.empty((n_rec, d))
    lps = np.empty(n_rec)
    accepted = np.zeros(d)
    proposed = np.zeros(d)
    burn_accepted = np.zeros(d)
    burn_proposed = np.zeros(d)
    rec = 0
    total_sweeps = config.burn_in + config.iterations
    for sweep in range(total_sweeps):
        adapting = sweep < config.burn_in
        for i in range(d):
            step = math.exp(log_scale[i]) * rng.standard_normal()
            proposal = u.copy()
            proposal[i] += step
            lp_new = log_post(proposal)
            log_ratio = lp_new - lp
            acc_prob = 1.0 if log_ratio >= 0 else math.exp(max(log_ratio, -700.0))
            if rng.uniform() < acc_prob:
                u, lp = proposal, lp_new
                if adapting:
                    burn_accepted[i] += 1
                else:
                    accepted[i] += 1
            if adapting:
                burn_proposed[i] += 1
                adapt_count[i] += 1
                gamma = (1.0 + adapt_count[i]) ** -0.6
                log_scale[i] += gamma * (acc_prob - config.target_accept)
            else:
                proposed[i] += 1
        if not adapting:
            k = sweep - config.burn_in
            if (k + 1) % config.thin == 0 and rec < n_rec:
                draws[rec] = u
                lps[rec] = lp
                rec += 1
    acc = np.divide(accepted, proposed, out=np.zeros_like(accepted), where=proposed > 0)
    burn_acc = np.divide(
        burn_accepted, burn_proposed, out=np.zeros_like(burn_accepted),
        where=burn_proposed > 0,
    )
    return draws[:rec], lps[:rec], acc, np.exp(log_scale), burn_acc


def mcmc_sample(
    spec: ModelSpec,
    data: Dataset,
    forcing: ForcingSeries | None = None,
    prior: PriorSpec | None = None,
    config: McmcConfig | None = None,
    seed: int = 0,
    fix: dict | None = None,
) -> Chain:
    """Sample the posterior over the free parameters of ``spec``.

    Deterministic given ``seed``; an unconverged result is still returned,
    flagged through ``Chain.converged``.
    """
    config = config or McmcConfig()
    transform = ParamTransform(spec, fix)
    upri = UnconstrainedPrior(transform, prior, config.restrict_pulls)
    log_post = make_log_posterior(spec, data, forcing, transform, upri)
    d = transform.n_free

    if d == 0:
        value = log_post(np.empty(0))
        n = max(config.iterations // config.thin, 1)
        return Chain(
            spec=spec,
            transform=transform,
            names=[],
            draws=np.empty((n, 0)),
            log_post=np.full(n, value),
            per_chain=n,
            acceptance=np.empty(0),
            scales=np.empty((config.chains, 0)),
            burnin_acceptance=np.empty(0),
            rhat=np.empty(0),
            converged=True,
            seed=seed,
            restricted=upri.restricted,
        )

    chain_seeds = np.random.SeedSequence(seed).spawn(config.chains)
    all_draws, all_lps, accs, scales, burn_accs = [], [], [], [], []
    for c in range(config.chains):
        rng = np.random.default_rng(chain_seeds[c])
        u0 = None
        for _ in range(100):
            cand = upri.sample(rng, 1)[0]
            if np.isfinite(log_post(cand)):
                u0 = cand
                break
        if u0 is None:
            u0 = upri.mean.copy()
        draws, lps, acc, scale, burn_acc = _run_single_chain(log_post, u0, config, rng)
        all_draws.append(draws)
        all_lps.append(lps)
        accs.append(acc)
        scales.append(scale)
        burn_accs.append(burn_acc)

    per_chain = min(len(dr) for dr in all_draws)
    stacked = np.stack([dr[:per_chain] for dr in all_draws])
    rhat = split_rhat(stacked) if config.chains >= 2 else np.full(d, np.nan)
    converged = bool(config.chains >= 2 and np.all(rhat < RHAT_THRESHOLD))
    return Chain(
        spec=spec,
        transform=transform,
        names=transform.names,
        draws=stacked.reshape(-1, d),
        log_post=np.concatenate([lp[:per_chain] for lp in all_lps]),
        per_chain=per_chain,
        acceptance=np.mean(accs, axis=0),
        scales=np.asarray(scales),
        burnin_acceptance=np.mean(burn_accs, axis=0),
        rhat=rhat,
        converged=converged,
        seed=seed,
        restricted=upri.restricted,
    )
