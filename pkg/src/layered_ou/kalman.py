"""Exact Gaussian likelihood and latent-state inference for layered OU models.

The filter runs on the sorted union of observation (and query) times, with
exact transition moments between grid points and scalar or batched
measurement updates. Observations sharing one time point are absorbed in a
single multivariate update, so their within-time order is irrelevant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import ndtr

from .dataio import Dataset
from .errors import DimensionMismatch, NonFiniteResult
from .forcing import ForcingSeries
from .model import ModelSpec
from .params import ParamVector
from .system import (
    build_system,
    discretize,
    forcing_drift,
    initial_moments,
    stationary_moments,
)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class StatePosterior:
    """Marginal posterior of all state components on a time grid.

    ``means`` is (K, p) and ``covs`` (K, p, p) with the state ordering of
    :mod:`layered_ou.system`; ``lower``/``upper`` are central 95% bounds.
    ``realizations``, when requested from an ensemble, holds conditionally
    simulated state paths of shape (R, K, p).
    """

    spec: ModelSpec
    times: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    realizations: np.ndarray | None = None

    def component(self, layer: int, site: int = 0):
        """(mean, sd, lower, upper) series for one layer/site component."""
        i = (layer - 1) * self.spec.n_sites + site
        sd = np.sqrt(np.maximum(self.covs[:, i, i], 0.0))
        lo = self.lower[:, i] if self.lower is not None else None
        hi = self.upper[:, i] if self.upper is not None else None
        return self.means[:, i], sd, lo, hi


def _check_sites(spec: ModelSpec, data: Dataset) -> None:
    # dataset sites define the site indexing of regional parameters
    if len(data) and len(data.sites) != spec.n_sites:
        raise DimensionMismatch(
            f"dataset has {len(data.sites)} sites, spec wants {spec.n_sites}"
        )


def _grouped_observations(data: Dataset):
    """Unique observation times plus per-time (site_state_rows, y, noise).

    Cached on the dataset: grouping is reused across the many likelihood
    evaluations an optimizer or sampler performs on the same data.
    """
    cached = getattr(data, "_obs_groups", None)
    if cached is not None:
        return cached
    times = data.time
    edges = np.flatnonzero(np.diff(times) != 0) + 1
    groups = []
    start = 0
    noise = data.noise_var
    for stop in list(edges) + [len(times)]:
        sl = slice(start, stop)
        groups.append((data.site_index[sl], data.y[sl], noise[sl]))
        start = stop
    result = (np.unique(times), groups)
    object.__setattr__(data, "_obs_groups", result)
    return result


def _scalar_update(mean, cov, i, y, v):
    s = cov[i, i] + v
    if not s > 0 or not np.isfinite(s):
        raise NonFiniteResult("non-positive innovation variance")
    r = y - mean[i]
    gain = cov[:, i] / s
    mean += gain * r
    cov -= np.outer(gain, cov[i, :])
    return -0.5 * (_LOG_2PI + math.log(s) + r * r / s)


def _batch_update(mean, cov, idx, y, v):
    S = cov[np.ix_(idx, idx)] + np.diag(v)
    try:
        chol = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NonFiniteResult("singular innovation covariance") from exc
    resid = y - mean[idx]
    z = solve_triangular(chol, resid, lower=True)
    X = cho_solve((chol, True), cov[idx, :])  # S^-1 H P
    mean += X.T @ resid
    cov -= X.T @ cov[idx, :]
    return -0.5 * (
        len(idx) * _LOG_2PI + 2.0 * np.log(np.diag(chol)).sum() + float(z @ z)
    )


def _update(mean, cov, idx, y, v):
    if len(idx) == 1:
        return _scalar_update(mean, cov, int(idx[0]), float(y[0]), float(v[0]))
    return _batch_update(mean, cov, np.asarray(idx), y, v)


def log_likelihood(
    spec: ModelSpec,
    params: ParamVector,
    data: Dataset,
    forcing: ForcingSeries | None = None,
) -> float:
    """Exact log density of the observations given a parameter set.

    The state starts in its stationary law at the first observation time
    (plus the forcing-induced mean offset) and is propagated through the
    conditional Gaussian transitions between observation times. An empty
    dataset has log-likelihood 0.
    """
    _check_sites(spec, data)
    if len(data) == 0:
        return 0.0
    sys = build_system(spec, params, auto_jitter=True)
    grid, groups = _grouped_observations(data)
    mean, cov = initial_moments(sys, grid[0], forcing)
    phis, qs, drifts = discretize(sys, grid, forcing)
    ll = 0.0
    for k, (idx, y, v) in enumerate(groups):
        if k > 0:
            phi = phis[k - 1]
            mean = phi @ mean + drifts[k - 1]
            cov = phi @ cov @ phi.T + qs[k - 1]
            cov = (cov + cov.T) / 2.0
        ll += _update(mean, cov, idx, y, v)
    if not np.isfinite(ll):
        raise NonFiniteResult("non-finite log-likelihood")
    return float(ll)


def log_likelihood_or_neginf(spec, params, data, forcing=None) -> float:
    """Likelihood with numerical failures mapped to -inf (sampler rejection)."""
    try:
        return log_likelihood(spec, params, data, forcing)
    except NonFiniteResult:
        return -np.inf


def _forward_pass(sys, grid, groups, group_at, forcing):
    """Filter along ``grid``, returning predicted/filtered moments per point."""
    p = sys.n_states
    K = grid.size
    m_pred = np.empty((K, p))
    P_pred = np.empty((K, p, p))
    m_filt = np.empty((K, p))
    P_filt = np.empty((K, p, p))
    mean, cov = initial_moments(sys, grid[0], forcing)
    phis, qs, drifts = discretize(sys, grid, forcing)
    ll = 0.0
    for k in range(K):
        if k > 0:
            phi = phis[k - 1]
            mean = phi @ mean + drifts[k - 1]
            cov = phi @ cov @ phi.T + qs[k - 1]
            cov = (cov + cov.T) / 2.0
        m_pred[k], P_pred[k] = mean, cov
        g = group_at.get(k)
        if g is not None:
            mean = mean.copy()
            cov = cov.copy()
            ll += _update(mean, cov, *groups[g])
        m_filt[k], P_filt[k] = mean, cov
    return m_pred, P_pred, m_filt, P_filt, phis, ll


def _gain(P_filt_k, phi, P_pred_next):
    C = P_filt_k @ phi.T
    try:
        return np.linalg.solve(P_pred_next, C.T).T
    except np.linalg.LinAlgError:
        return C @ np.linalg.pinv(P_pred_next, hermitian=True)


def _smoother_pass(m_pred, P_pred, m_filt, P_filt, phis):
    K = m_pred.shape[0]
    means = np.empty_like(m_filt)
    covs = np.empty_like(P_filt)
    means[-1], covs[-1] = m_filt[-1], P_filt[-1]
    for k in range(K - 2, -1, -1):
        G = _gain(P_filt[k], phis[k], P_pred[k + 1])
        means[k] = m_filt[k] + G @ (means[k + 1] - m_pred[k + 1])
        cov = P_filt[k] + G @ (covs[k + 1] - P_pred[k + 1]) @ G.T
        covs[k] = (cov + cov.T) / 2.0
    return means, covs


def _smoothing_grid(data: Dataset, query_times) -> tuple[np.ndarray, dict[int, int]]:
    qt = np.unique(np.asarray(query_times, dtype=float))
    if len(data) == 0:
        return qt, {}
    obs_times, _ = _grouped_observations(data)
    grid = np.unique(np.concatenate([obs_times, qt]))
    pos = np.searchsorted(grid, obs_times)
    return grid, {int(k): g for g, k in enumerate(pos)}


def smooth(
    spec: ModelSpec,
    params: ParamVector,
    data: Dataset,
    forcing: ForcingSeries | None = None,
    query_times=(),
) -> StatePosterior:
    """Two-pass (full-information) posterior of all states at query times."""
    qt = np.unique(np.asarray(query_times, dtype=float))
    if qt.size == 0:
        raise ValueError("query_times must be nonempty")
    _check_sites(spec, data)
    sys = build_system(spec, params, auto_jitter=True)
    grid, group_at = _smoothing_grid(data, qt)
    if len(data) == 0:
        base, cov = stationary_moments(sys)
        means = np.tile(base, (qt.size, 1))
        covs = np.tile(cov, (qt.size, 1, 1))
        if forcing is not None and sys.m_forcing.any():
            for k, t in enumerate(qt):
                means[k] = base + forcing_drift(sys, forcing.start, t, forcing)
    else:
        _, groups = _grouped_observations(data)
        m_pred, P_pred, m_filt, P_filt, phis, _ = _forward_pass(
            sys, grid, groups, group_at, forcing
        )
        means_all, covs_all = _smoother_pass(m_pred, P_pred, m_filt, P_filt, phis)
        sel = np.searchsorted(grid, qt)
        means, covs = means_all[sel], covs_all[sel]
    sd = np.sqrt(np.maximum(np.diagonal(covs, axis1=1, axis2=2), 0.0))
    z = 1.959963984540054
    return StatePosterior(
        spec=spec,
        times=qt,
        means=means,
        covs=covs,
        lower=means - z * sd,
        upper=means + z * sd,
    )


def _psd_draw_factor(C: np.ndarray) -> np.ndarray:
    w, U = np.linalg.eigh((C + C.T) / 2.0)
    return U * np.sqrt(np.clip(w, 0.0, None))


def sample_conditional_path(
    spec: ModelSpec,
    params: ParamVector,
    data: Dataset,
    query_times,
    forcing: ForcingSeries | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One state trajectory drawn from the smoothing posterior
    (forward filter, backward sampling). Returns (times, states)."""
    rng = rng or np.random.default_rng()
    qt = np.unique(np.asarray(query_times, dtype=float))
    _check_sites(spec, data)
    sys = build_system(spec, params, auto_jitter=True)
    grid, group_at = _smoothing_grid(data, qt)
    groups = _grouped_observations(data)[1] if len(data) else []
    if len(data) == 0:
        mean, cov = initial_moments(sys, grid[0], forcing)
        phis, qs, drifts = discretize(sys, grid, forcing)
        x = mean + _psd_draw_factor(cov) @ rng.standard_normal(sys.n_states)
        states = [x]
        for k in range(1, grid.size):
            x = phis[k - 1] @ x + drifts[k - 1]
            x = x + _psd_draw_factor(qs[k - 1]) @ rng.standard_normal(sys.n_states)
            states.append(x)
        states = np.asarray(states)
    else:
        m_pred, P_pred, m_filt, P_filt, phis, _ = _forward_pass(
            sys, grid, groups, group_at, forcing
        )
        K = grid.size
        states = np.empty((K, sys.n_states))
        states[-1] = m_filt[-1] + _psd_draw_factor(P_filt[-1]) @ rng.standard_normal(
            sys.n_states
        )
        for k in range(K - 2, -1, -1):
            G = _gain(P_filt[k], phis[k], P_pred[k + 1])
            mean = m_filt[k] + G @ (states[k + 1] - m_pred[k + 1])
            cov = P_filt[k] - G @ P_pred[k + 1] @ G.T
            states[k] = mean + _psd_draw_factor(cov) @ rng.standard_normal(sys.n_states)
    sel = np.searchsorted(grid, qt)
    return qt, states[sel]


def _mixture_quantile(mus: np.ndarray, sds: np.ndarray, q: float) -> np.ndarray:
    """Componentwise q-quantile of an equally weighted Gaussian mixture,
    located by bisection on the mixture CDF."""
    sds = np.maximum(sds, 1e-12)
    lo = (mus - 8.0 * sds).min(axis=0)
    hi = (mus + 8.0 * sds).max(axis=0)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = ndtr((mid - mus) / sds).mean(axis=0) < q
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def posterior_process_draws(
    spec: ModelSpec,
    draws,
    data: Dataset,
    query_times,
    forcing: ForcingSeries | None = None,
    max_draws: int = 200,
    include_realizations: bool = False,
    seed: int = 0,
) -> StatePosterior:
    """Smoothing posterior mixed over parameter draws.

    ``draws`` is an MCMC chain (anything with ``param_draws()``) or an
    iterable of ParamVector. Mixture means and covariances combine
    within-draw covariance and between-draw mean spread; the 95% band is
    computed from the Gaussian-mixture CDF, not a normal approximation.
    """
    if hasattr(draws, "param_draws"):
        draws = draws.param_draws()
    draws = list(draws)
    if not draws:
        raise ValueError("need at least one parameter draw")
    if len(draws) > max_draws:
        sel = np.unique(np.linspace(0, len(draws) - 1, max_draws).round().astype(int))
        draws = [draws[i] for i in sel]
    qt = np.unique(np.asarray(query_times, dtype=float))
    means, covs, paths = [], [], []
    seeds = np.random.SeedSequence(seed).spawn(len(draws))
    for r, theta in enumerate(draws):
        post = smooth(spec, theta, data, forcing, qt)
        means.append(post.means)
        covs.append(post.covs)
        if include_realizations:
            rng = np.random.default_rng(seeds[r])
            _, path = sample_conditional_path(spec, theta, data, qt, forcing, rng)
            paths.append(path)
    means = np.asarray(means)  # (R, K, p)
    covs = np.asarray(covs)
    mix_mean = means.mean(axis=0)
    centered = means - mix_mean
    mix_cov = covs.mean(axis=0) + np.einsum("rka,rkb->kab", centered, centered) / len(
        draws
    )
    sds = np.sqrt(np.maximum(np.diagonal(covs, axis1=2, axis2=3), 0.0))
    lower = _mixture_quantile(means, sds, 0.025)
    upper = _mixture_quantile(means, sds, 0.975)
    return StatePosterior(
        spec=spec,
        times=qt,
        means=mix_mean,
        covs=mix_cov,
        lower=lower,
        upper=upper,
        realizations=np.asarray(paths) if paths else None,
    )
