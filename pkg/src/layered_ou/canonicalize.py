"""Observationally equivalent reordering of pull parameters.

A chain with one pull per layer can be reparametrized so the pulls ascend
from bottom to top without changing the law of the observed top layer: the
top-layer stationary autocovariance is a linear combination of
exp(-pull * lag) terms whose coefficient matrix is linear in the layer
variances, so matching coefficients under the sorted pulls is a small
linear solve.
"""

from __future__ import annotations

import numpy as np

from .errors import NotApplicable
from .model import ModelSpec
from .params import ParamVector, validate_params
from .system import _site_eigframe

_TOL = 1e-9


def _top_autocov_basis(pulls: np.ndarray) -> np.ndarray:
    """B[k, i] = coefficient of exp(-pulls[k] * lag) in the top-layer
    stationary autocovariance when layer i has unit variance rate."""
    L = pulls.size
    R, _ = _site_eigframe(pulls)
    V = np.linalg.inv(R)
    lam = -pulls
    denom = lam[:, None] + lam[None, :]
    B = np.empty((L, L))
    for i in range(L):
        v = V[:, i]
        pinf = R @ (np.outer(v, v) * (-1.0 / denom)) @ R.T
        B[:, i] = (pinf @ V.T)[0, :] * R[0, :]
    return B


def canonicalize_pulls(spec: ModelSpec, params: ParamVector) -> ParamVector:
    """Return parameters with pulls sorted ascending from the bottom layer up.

    Only defined for specs with one pull and one diffusion per layer, no
    exogenous forcing and no random-walk bottom; anything else raises
    NotApplicable (already ordered inputs are returned unchanged first).
    """
    validate_params(spec, params)
    if spec.n_layers == 1:
        return params
    pulls = np.array([a[0] for a in params.alpha], dtype=float)
    if any(len(a) > 1 for a in params.alpha):
        raise NotApplicable("regional pulls cannot be reordered consistently")
    if (np.diff(pulls) < 0).all():
        return params
    if spec.forcing_layer is not None:
        raise NotApplicable("forcing breaks the reshuffling equivalence")
    if spec.random_walk_bottom:
        raise NotApplicable("random-walk bottom pins the bottom pull")
    if any(len(s) > 1 for s in params.sigma):
        raise NotApplicable("regional diffusions cannot be reordered")

    order = np.argsort(-pulls, kind="stable")
    target = pulls[order]
    B = _top_autocov_basis(pulls)
    B_target = _top_autocov_basis(target)

    svec = np.array([s[0] ** 2 for s in params.sigma])
    coeff = B @ svec
    s_new = np.linalg.solve(B_target, coeff[order])
    scale = max(float(svec.max()), 1.0)
    if (s_new < -_TOL * scale).any():
        raise NotApplicable("no nonnegative variance assignment for sorted pulls")
    s_new = np.clip(s_new, 0.0, None)

    rho_old = np.zeros(spec.n_layers)
    has_corr = False
    for layer in range(1, spec.n_layers + 1):
        kind = spec.correlation(layer)
        if kind == "perfect":
            rho_old[layer - 1] = 1.0
            has_corr = True
        elif kind == "intermediate":
            rho_old[layer - 1] = params.rho_for(layer)
            has_corr = True

    rho_new: list[tuple[int, float]] = []
    if has_corr:
        x = rho_old * svec
        x_new = np.linalg.solve(B_target, (B @ x)[order])
        for layer in range(1, spec.n_layers + 1):
            kind = spec.correlation(layer)
            value = x_new[layer - 1]
            variance = s_new[layer - 1]
            if kind == "none":
                if abs(value) > 1e-6 * scale:
                    raise NotApplicable(
                        "sorted pulls require correlation on an uncorrelated layer"
                    )
                continue
            if variance <= 0:
                raise NotApplicable("correlated layer lost its variance")
            rho = value / variance
            if kind == "perfect":
                if abs(rho - 1.0) > 1e-6:
                    raise NotApplicable("perfect correlation not preserved")
            else:
                if not -1.0 < rho < 1.0:
                    raise NotApplicable(f"reordered correlation {rho} outside (-1, 1)")
                rho_new.append((layer, float(rho)))

    sigma_new = []
    for layer in range(1, spec.n_layers + 1):
        if spec.is_deterministic(layer):
            if s_new[layer - 1] > 1e-8 * scale:
                raise NotApplicable("sorted pulls move variance onto a deterministic layer")
            sigma_new.append((0.0,))
        else:
            sigma_new.append((float(np.sqrt(s_new[layer - 1])),))

    out = ParamVector(
        alpha=tuple((float(a),) for a in target),
        sigma=tuple(sigma_new),
        mu0=params.mu0,
        beta=params.beta,
        rho=tuple(rho_new),
    )
    validate_params(spec, out)
    return out
