"""Closed-form stationary autocovariances for one- and two-layer chains.

These serve as independent oracles for the general eigendecomposition
machinery in :mod:`layered_ou.system`.
"""

from __future__ import annotations

import math

from .errors import DegenerateEigensystem
from .system import EIGEN_GAP_TOL


def ou_autocovariance(alpha: float, sigma: float, lag: float) -> float:
    """sigma^2 / (2 alpha) * exp(-alpha * lag) for a stationary OU process."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if lag < 0:
        raise ValueError("lag must be >= 0")
    return sigma**2 / (2.0 * alpha) * math.exp(-alpha * lag)


def two_layer_autocovariance(
    a1: float, a2: float, s1: float, s2: float, lag: float
) -> float:
    """Top-layer stationary autocovariance of a two-layer tracking chain.

    cov(X1(0), X1(t)) = s1^2/(2 a1) e^{-a1 t}
                      + s2^2 a1^2/(a1^2 - a2^2) (e^{-a2 t}/(2 a2) - e^{-a1 t}/(2 a1))

    valid for distinct positive pulls.
    """
    if a1 <= 0 or a2 <= 0:
        raise ValueError("pulls must be positive")
    if lag < 0:
        raise ValueError("lag must be >= 0")
    if abs(a1 - a2) <= EIGEN_GAP_TOL * max(a1, a2):
        raise DegenerateEigensystem(f"pulls {a1} and {a2} too close")
    direct = s1**2 / (2.0 * a1) * math.exp(-a1 * lag)
    tracked = (
        s2**2
        * a1**2
        / (a1**2 - a2**2)
        * (math.exp(-a2 * lag) / (2.0 * a2) - math.exp(-a1 * lag) / (2.0 * a1))
    )
    return direct + tracked
