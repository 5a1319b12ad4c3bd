"""Independent normal priors on the unconstrained parameter scale.

Each parameter type gets one normal distribution, parametrized by its
implied 95% interval on a natural scale: characteristic time 1/alpha in My
for pulls, sigma itself for diffusions, exp(mu0) in micrometers for the
level, beta directly, and rho through its atanh transform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from .params import ParamTransform, ParamVector
from .model import ModelSpec

Z95 = float(ndtri(0.975))

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PriorSpec:
    """95% intervals on the natural scale per parameter type.

    Defaults: characteristic times 1 ky to 1 Gy, diffusions 0.02 to 3.5,
    level (original measurement scale) 0.001 to 1000, regression -1 to 1,
    correlation -0.18 to 0.98.
    """

    dt_my: tuple[float, float] = (0.001, 1000.0)
    sigma: tuple[float, float] = (0.02, 3.5)
    center: tuple[float, float] = (0.001, 1000.0)
    beta: tuple[float, float] = (-1.0, 1.0)
    rho: tuple[float, float] = (-0.18, 0.98)

    def unconstrained_interval(self, ptype: str) -> tuple[float, float]:
        if ptype == "pull":
            lo, hi = self.dt_my
            return -math.log(hi), -math.log(lo)
        if ptype == "sigma":
            lo, hi = self.sigma
            return math.log(lo), math.log(hi)
        if ptype == "mu0":
            lo, hi = self.center
            return math.log(lo), math.log(hi)
        if ptype == "beta":
            return self.beta
        if ptype == "rho":
            lo, hi = self.rho
            return math.atanh(lo), math.atanh(hi)
        raise KeyError(f"unknown parameter type {ptype!r}")

    def mean_sd(self, ptype: str) -> tuple[float, float]:
        lo, hi = self.unconstrained_interval(ptype)
        return (lo + hi) / 2.0, (hi - lo) / (2.0 * Z95)

    def natural_interval(self, ptype: str) -> tuple[float, float]:
        """The configured 95% interval on the reporting scale."""
        return {
            "pull": self.dt_my,
            "sigma": self.sigma,
            "mu0": self.center,
            "beta": self.beta,
            "rho": self.rho,
        }[ptype]

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "PriorSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown prior fields: {sorted(unknown)}")
        kwargs = {k: (float(v[0]), float(v[1])) for k, v in data.items()}
        return cls(**kwargs)


class UnconstrainedPrior:
    """Vectorized prior over the free coordinates of a ParamTransform.

    With ``restrict_pulls`` and a global pull per layer, the joint pull
    prior is truncated to descending order from top to bottom (ascending
    pulls from the bottom layer up) with each pull below conditionally
    renormalized, which keeps the top-layer pull's marginal identical to
    the unrestricted (one-layer) prior.
    """

    def __init__(
        self,
        transform: ParamTransform,
        prior: PriorSpec | None = None,
        restrict_pulls: bool = False,
    ):
        self.transform = transform
        self.prior = prior or PriorSpec()
        stats = [self.prior.mean_sd(c.ptype) for c in transform.coords]
        self.mean = np.array([m for m, _ in stats])
        self.sd = np.array([s for _, s in stats])
        pulls = [
            i for i, c in enumerate(transform.coords)
            if c.ptype == "pull" and c.site is None
        ]
        regional_pulls = any(
            c.ptype == "pull" and c.site is not None for c in transform.coords
        )
        self.restricted = bool(restrict_pulls) and not regional_pulls and len(pulls) >= 2
        self.pull_idx = pulls

    @property
    def n_free(self) -> int:
        return self.mean.size

    def log_density(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        z = (u - self.mean) / self.sd
        base = float(-0.5 * (z * z).sum() - np.log(self.sd).sum() - u.size * _LOG_SQRT_2PI)
        if not self.restricted:
            return base
        pulls = u[self.pull_idx]
        if not (np.diff(pulls) < 0).all():
            return -np.inf
        m, s = self.prior.mean_sd("pull")
        return base - float(log_ndtr((pulls[:-1] - m) / s).sum())

    def log_density_rows(self, draws: np.ndarray) -> np.ndarray:
        """Vectorized log density over rows of an (n, d) array."""
        draws = np.atleast_2d(np.asarray(draws, dtype=float))
        z = (draws - self.mean) / self.sd
        base = (
            -0.5 * (z * z).sum(axis=1)
            - np.log(self.sd).sum()
            - draws.shape[1] * _LOG_SQRT_2PI
        )
        if not self.restricted:
            return base
        pulls = draws[:, self.pull_idx]
        ordered = (np.diff(pulls, axis=1) < 0).all(axis=1)
        m, s = self.prior.mean_sd("pull")
        correction = log_ndtr((pulls[:, :-1] - m) / s).sum(axis=1)
        return np.where(ordered, base - correction, -np.inf)

    def sample(self, rng: np.random.Generator, n: int = 1) -> np.ndarray:
        draws = self.mean + self.sd * rng.standard_normal((n, self.n_free))
        if self.restricted:
            m, s = self.prior.mean_sd("pull")
            prev = draws[:, self.pull_idx[0]]
            for idx in self.pull_idx[1:]:
                cap = ndtr((prev - m) / s)
                unif = rng.uniform(size=n)
                draws[:, idx] = m + s * ndtri(unif * cap)
                prev = draws[:, idx]
        return draws


def log_prior(
    spec: ModelSpec,
    params: ParamVector,
    prior: PriorSpec | None = None,
    restrict_pulls: bool = False,
    fix: dict | None = None,
) -> float:
    """Log prior density of a parameter set on the unconstrained scale."""
    transform = ParamTransform(spec, fix)
    u = transform.to_unconstrained(params)
    return UnconstrainedPrior(transform, prior, restrict_pulls).log_density(u)
