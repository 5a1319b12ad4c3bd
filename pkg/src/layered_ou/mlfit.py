"""Multi-start maximum likelihood on the unconstrained scale.

The likelihood surface of these models is routinely multimodal, so the
fit runs a derivative-free local search (Nelder-Mead) from many starting
points drawn from the prior or from posterior samples and keeps the best
local optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dataio import Dataset
from .errors import AllStartsFailed, DimensionMismatch, NonFiniteResult
from .forcing import ForcingSeries
from .kalman import log_likelihood
from .model import ModelSpec
from .params import ParamTransform, ParamVector
from .priors import PriorSpec, UnconstrainedPrior


@dataclass(frozen=True)
class MLConfig:
    n_starts: int = 50
    start_source: str = "prior"  # "prior" or "chain"
    max_iter: int = 600
    xatol: float = 1e-6
    fatol: float = 1e-10
    restrict_pulls: bool = False


@dataclass(frozen=True)
class StartSummary:
    index: int
    log_lik: float
    n_iter: int
    converged: bool


@dataclass(frozen=True)
class MLResult:
    spec: ModelSpec
    params: ParamVector
    unconstrained: np.ndarray
    names: list[str]
    log_lik: float
    k: int
    n_obs: int
    aic: float
    bic: float
    converged: bool
    starts: list[StartSummary] = field(repr=False, default_factory=list)


def _aic_bic(log_lik: float, k: int, n_obs: int) -> tuple[float, float]:
    aic = 2.0 * k - 2.0 * log_lik
    bic = k * math.log(n_obs) - 2.0 * log_lik if n_obs > 0 else math.inf
    return aic, bic


def information_criteria(ml: MLResult, n_obs: int) -> tuple[float, float]:
    """AIC = 2k - 2 logL and BIC = k log(N) - 2 logL for a fitted model."""
    return _aic_bic(ml.log_lik, ml.k, n_obs)


def neg_log_likelihood_fn(
    spec: ModelSpec,
    data: Dataset,
    forcing: ForcingSeries | None,
    transform: ParamTransform,
):
    """Objective over the unconstrained vector; failures map to +inf."""

    def objective(u: np.ndarray) -> float:
        try:
            params = transform.from_unconstrained(u)
            return -log_likelihood(spec, params, data, forcing)
        except (NonFiniteResult, OverflowError, DimensionMismatch):
            return np.inf

    return objective


def ml_fit(
    spec: ModelSpec,
    data: Dataset,
    forcing: ForcingSeries | None = None,
    prior: PriorSpec | None = None,
    config: MLConfig | None = None,
    seed: int = 0,
    fix: dict | None = None,
    start_points: np.ndarray | None = None,
) -> MLResult:
    """Best local optimum over all starts; raises AllStartsFailed if every
    start lands on a non-finite likelihood.

    ``start_points`` (e.g. posterior draws) overrides prior-drawn starts
    when ``config.start_source == "chain"``.
    """
    config = config or MLConfig()
    transform = ParamTransform(spec, fix)
    objective = neg_log_likelihood_fn(spec, data, forcing, transform)
    d = transform.n_free

    if d == 0:
        value = -objective(np.empty(0))
        if not np.isfinite(value):
            raise AllStartsFailed("likelihood non-finite at the fixed parameters")
        aic, bic = _aic_bic(value, 0, len(data))
        return MLResult(
            spec=spec,
            params=transform.from_unconstrained(np.empty(0)),
            unconstrained=np.empty(0),
            names=[],
            log_lik=value,
            k=0,
            n_obs=len(data),
            aic=aic,
            bic=bic,
            converged=True,
            starts=[],
        )

    if config.start_source == "chain":
        if start_points is None or len(start_points) == 0:
            raise ValueError("start_source='chain' requires start_points")
        rows = np.unique(
            np.linspace(0, len(start_points) - 1, config.n_starts).round().astype(int)
        )
        starts = np.asarray(start_points)[rows]
    else:
        rng = np.random.default_rng(seed)
        upri = UnconstrainedPrior(transform, prior, config.restrict_pulls)
        starts = upri.sample(rng, config.n_starts)

    best_u = None
    best_f = np.inf
    summaries = []
    best_converged = False
    for i, u0 in enumerate(starts):
        with np.errstate(invalid="ignore"):  # inf-inf inside NM when all
            res = minimize(                  # evaluations are rejected
                objective,
                u0,
                method="Nelder-Mead",
                options={
                    "maxiter": config.max_iter,
                    "xatol": config.xatol,
                    "fatol": config.fatol,
                },
            )
        summaries.append(
            StartSummary(
                index=i,
                log_lik=-float(res.fun),
                n_iter=int(res.nit),
                converged=bool(res.success),
            )
        )
        if res.fun < best_f:
            best_f = float(res.fun)
            best_u = np.asarray(res.x)
            best_converged = bool(res.success)

    if not np.isfinite(best_f):
        raise AllStartsFailed(f"all {len(starts)} starts gave non-finite likelihood")

    log_lik = -best_f
    aic, bic = _aic_bic(log_lik, d, len(data))
    return MLResult(
        spec=spec,
        params=transform.from_unconstrained(best_u),
        unconstrained=best_u,
        names=transform.names,
        log_lik=log_lik,
        k=d,
        n_obs=len(data),
        aic=aic,
        bic=bic,
        converged=best_converged,
        starts=summaries,
    )
