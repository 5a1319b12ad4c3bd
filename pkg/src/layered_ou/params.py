"""Numeric model parameters and their unconstrained reparametrization.

The unconstrained map is log for pulls and diffusions, identity for the
level and the regression coefficient, and atanh (odd-symmetric) for
inter-site correlations. Fixed quantities (sigma of deterministic layers,
the random-walk pull, user-pinned values) are excluded from the vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError
from .model import RANDOM_WALK_PULL, ModelSpec

PULL_JITTER = 1e-6  # relative nudge applied to near-equal pulls


@dataclass(frozen=True)
class ParamVector:
    """Parameter values for one :class:`ModelSpec`.

    ``alpha`` and ``sigma`` hold one tuple per layer (length 1, or
    ``n_sites`` for the regional layer); ``mu0`` is length 1 or
    ``n_sites``; ``rho`` holds (layer, value) pairs for layers with
    intermediate correlation. Units: pulls 1/My, diffusions per sqrt(My),
    level and beta on the (log) measurement scale.
    """

    alpha: tuple[tuple[float, ...], ...]
    sigma: tuple[tuple[float, ...], ...]
    mu0: tuple[float, ...]
    beta: float | None = None
    rho: tuple[tuple[int, float], ...] = ()

    def rho_for(self, layer: int) -> float:
        for lay, value in self.rho:
            if lay == layer:
                return value
        raise KeyError(f"no correlation parameter for layer {layer}")

    def replace_pulls(self, alpha: Sequence[Sequence[float]]) -> "ParamVector":
        return ParamVector(
            alpha=tuple(tuple(float(a) for a in layer) for layer in alpha),
            sigma=self.sigma,
            mu0=self.mu0,
            beta=self.beta,
            rho=self.rho,
        )


def _as_layer_tuple(values, n_layers, what) -> tuple[tuple[float, ...], ...]:
    if len(values) != n_layers:
        raise DimensionMismatch(f"{what} needs one entry per layer")
    out = []
    for v in values:
        if np.isscalar(v):
            out.append((float(v),))
        else:
            out.append(tuple(float(x) for x in v))
    return tuple(out)


def make_params(
    spec: ModelSpec,
    alpha: Sequence,
    sigma: Sequence,
    mu0,
    beta: float | None = None,
    rho: Mapping[int, float] | None = None,
) -> ParamVector:
    """Build and validate a ParamVector; scalars are accepted per layer."""
    mu = (float(mu0),) if np.isscalar(mu0) else tuple(float(x) for x in mu0)
    params = ParamVector(
        alpha=_as_layer_tuple(alpha, spec.n_layers, "alpha"),
        sigma=_as_layer_tuple(sigma, spec.n_layers, "sigma"),
        mu0=mu,
        beta=None if beta is None else float(beta),
        rho=tuple(sorted((int(k), float(v)) for k, v in (rho or {}).items())),
    )
    validate_params(spec, params)
    return params


def _expected_len(spec: ModelSpec, kind: str, layer: int) -> int:
    return spec.n_sites if spec.is_regional(kind, layer) else 1


def validate_params(spec: ModelSpec, params: ParamVector) -> None:
    """Raise DimensionMismatch if ``params`` does not fit ``spec``."""
    if len(params.alpha) != spec.n_layers or len(params.sigma) != spec.n_layers:
        raise DimensionMismatch("alpha/sigma must have one entry per layer")
    for layer in range(1, spec.n_layers + 1):
        a = params.alpha[layer - 1]
        if len(a) != _expected_len(spec, "pull", layer):
            raise DimensionMismatch(f"alpha layer {layer} has wrong length")
        if spec.pull_is_fixed(layer):
            if any(x != RANDOM_WALK_PULL for x in a):
                raise DimensionMismatch(
                    f"random-walk bottom pull must be exactly {RANDOM_WALK_PULL}"
                )
        elif any(x <= 0 for x in a):
            raise DimensionMismatch(f"alpha layer {layer} must be positive")
        s = params.sigma[layer - 1]
        if len(s) != _expected_len(spec, "diffusion", layer):
            raise DimensionMismatch(f"sigma layer {layer} has wrong length")
        if spec.is_deterministic(layer):
            if any(x != 0.0 for x in s):
                raise DimensionMismatch(f"sigma layer {layer} must be exactly 0")
        elif any(x < 0 for x in s):
            raise DimensionMismatch(f"sigma layer {layer} must be >= 0")
    if len(params.mu0) != _expected_len(spec, "level", spec.n_layers):
        raise DimensionMismatch("mu0 has wrong length")
    if (params.beta is not None) != (spec.forcing_layer is not None):
        raise DimensionMismatch("beta must be present iff the spec has forcing")
    want_rho = tuple(
        layer for layer in range(1, spec.n_layers + 1)
        if spec.correlation(layer) == "intermediate"
    )
    have_rho = tuple(lay for lay, _ in params.rho)
    if have_rho != want_rho:
        raise DimensionMismatch(
            f"rho entries {have_rho} do not match intermediate-correlation layers {want_rho}"
        )
    for _, value in params.rho:
        if not -1.0 < value < 1.0:
            raise DimensionMismatch("rho must lie in (-1, 1)")


@dataclass(frozen=True)
class Coordinate:
    name: str
    ptype: str  # pull | sigma | mu0 | beta | rho
    layer: int | None
    site: int | None


def _coordinates(spec: ModelSpec) -> list[Coordinate]:
    coords = []

    def add(ptype, layer, regional):
        if regional:
            for j in range(spec.n_sites):
                coords.append(Coordinate(f"{ptype}_{layer}_{j}", ptype, layer, j))
        else:
            name = f"{ptype}_{layer}" if layer is not None else ptype
            coords.append(Coordinate(name, ptype, layer, None))

    for layer in range(1, spec.n_layers + 1):
        if not spec.pull_is_fixed(layer):
            add("pull", layer, spec.is_regional("pull", layer))
    for layer in range(1, spec.n_layers + 1):
        if not spec.is_deterministic(layer):
            add("sigma", layer, spec.is_regional("diffusion", layer))
    if spec.regional_kind == "level":
        for j in range(spec.n_sites):
            coords.append(Coordinate(f"mu0_{j}", "mu0", None, j))
    else:
        coords.append(Coordinate("mu0", "mu0", None, None))
    if spec.forcing_layer is not None:
        coords.append(Coordinate("beta", "beta", spec.forcing_layer, None))
    for layer in range(1, spec.n_layers + 1):
        if spec.correlation(layer) == "intermediate":
            coords.append(Coordinate(f"rho_{layer}", "rho", layer, None))
    return coords


def _forward(ptype: str, x: float) -> float:
    if ptype in ("pull", "sigma"):
        if x <= 0:
            raise DomainError(f"{ptype} must be > 0 to map to the real line, got {x}")
        return math.log(x)
    if ptype == "rho":
        if not -1.0 < x < 1.0:
            raise DomainError(f"rho must lie in (-1, 1), got {x}")
        return math.atanh(x)
    return x


def _inverse(ptype: str, u: float) -> float:
    if ptype in ("pull", "sigma"):
        return math.exp(u)
    if ptype == "rho":
        return math.tanh(u)
    return u


class ParamTransform:
    """Bijection between free parameters of a spec and a real vector.

    ``fix`` pins named coordinates at given natural-scale values, removing
    them from the vector (used e.g. to hold everything but mu0 fixed in
    conjugate tests).
    """

    def __init__(self, spec: ModelSpec, fix: Mapping[str, float] | None = None):
        self.spec = spec
        self.fix = dict(fix or {})
        all_coords = _coordinates(spec)
        known = {c.name for c in all_coords}
        unknown = set(self.fix) - known
        if unknown:
            raise DimensionMismatch(f"cannot fix unknown coordinates: {sorted(unknown)}")
        self.coords = [c for c in all_coords if c.name not in self.fix]

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.coords]

    @property
    def ptypes(self) -> list[str]:
        return [c.ptype for c in self.coords]

    @property
    def n_free(self) -> int:
        return len(self.coords)

    def _value_from_params(self, coord: Coordinate, params: ParamVector) -> float:
        if coord.ptype == "pull":
            vals = params.alpha[coord.layer - 1]
        elif coord.ptype == "sigma":
            vals = params.sigma[coord.layer - 1]
        elif coord.ptype == "mu0":
            vals = params.mu0
        elif coord.ptype == "beta":
            return params.beta
        else:
            return params.rho_for(coord.layer)
        return vals[coord.site] if coord.site is not None else vals[0]

    def to_unconstrained(self, params: ParamVector) -> np.ndarray:
        validate_params(self.spec, params)
        return np.array(
            [_forward(c.ptype, self._value_from_params(c, params)) for c in self.coords]
        )

    def from_unconstrained(self, vec: Iterable[float]) -> ParamVector:
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (len(self.coords),):
            raise DimensionMismatch(
                f"expected vector of length {len(self.coords)}, got shape {vec.shape}"
            )
        values = dict(self.fix)
        for coord, u in zip(self.coords, vec):
            values[coord.name] = _inverse(coord.ptype, float(u))
        return self._assemble(values)

    def _assemble(self, values: Mapping[str, float]) -> ParamVector:
        spec = self.spec

        def collect(ptype, layer, regional, fixed_value=None):
            if fixed_value is not None:
                return (fixed_value,)
            if regional:
                return tuple(values[f"{ptype}_{layer}_{j}"] for j in range(spec.n_sites))
            return (values[f"{ptype}_{layer}"],)

        alpha = tuple(
            collect(
                "pull", layer, spec.is_regional("pull", layer),
                RANDOM_WALK_PULL if spec.pull_is_fixed(layer) else None,
            )
            for layer in range(1, spec.n_layers + 1)
        )
        sigma = tuple(
            collect(
                "sigma", layer, spec.is_regional("diffusion", layer),
                0.0 if spec.is_deterministic(layer) else None,
            )
            for layer in range(1, spec.n_layers + 1)
        )
        if spec.regional_kind == "level":
            mu0 = tuple(values[f"mu0_{j}"] for j in range(spec.n_sites))
        else:
            mu0 = (values["mu0"],)
        beta = values["beta"] if spec.forcing_layer is not None else None
        rho = tuple(
            (layer, values[f"rho_{layer}"])
            for layer in range(1, spec.n_layers + 1)
            if spec.correlation(layer) == "intermediate"
        )
        params = ParamVector(alpha=alpha, sigma=sigma, mu0=mu0, beta=beta, rho=rho)
        validate_params(spec, params)
        return params

    def natural_values(self, vec: Iterable[float]) -> dict[str, float]:
        """Free coordinates on the natural scale, keyed by name."""
        return {
            c.name: _inverse(c.ptype, float(u)) for c, u in zip(self.coords, np.asarray(vec))
        }

    def natural_of(self, params: ParamVector) -> dict[str, float]:
        """Natural-scale values of the free coordinates of a ParamVector."""
        return {c.name: float(self._value_from_params(c, params)) for c in self.coords}


def to_unconstrained(spec: ModelSpec, params: ParamVector) -> np.ndarray:
    return ParamTransform(spec).to_unconstrained(params)


def from_unconstrained(spec: ModelSpec, vec: Iterable[float]) -> ParamVector:
    return ParamTransform(spec).from_unconstrained(vec)


def site_chain_pulls(spec: ModelSpec, params: ParamVector, site: int) -> np.ndarray:
    """Pulls along one site's layer chain, top to bottom."""
    out = np.empty(spec.n_layers)
    for layer in range(1, spec.n_layers + 1):
        vals = params.alpha[layer - 1]
        out[layer - 1] = vals[site] if len(vals) > 1 else vals[0]
    return out


def jitter_pulls(spec: ModelSpec, params: ParamVector, gap_tol: float = 1e-8) -> ParamVector:
    """Nudge near-equal pulls apart so the pull matrix becomes diagonalizable.

    Within every site's layer chain, clusters of pulls with relative gap
    below ``gap_tol`` are spread additively by multiples of
    ``PULL_JITTER * alpha``. Deterministic and order-preserving.
    """
    alpha = [list(layer) for layer in params.alpha]
    for site in range(spec.n_sites):
        chain = [
            (layer, vals[site] if len(vals) > 1 else vals[0])
            for layer, vals in enumerate(params.alpha, start=1)
        ]
        order = sorted(range(len(chain)), key=lambda i: chain[i][1])
        cluster = [order[0]]
        clusters = []
        for i in order[1:]:
            prev = chain[cluster[-1]][1]
            cur = chain[i][1]
            if cur - prev <= gap_tol * max(abs(cur), abs(prev)):
                cluster.append(i)
            else:
                clusters.append(cluster)
                cluster = [i]
        clusters.append(cluster)
        for cluster in clusters:
            if len(cluster) == 1:
                continue
            mid = (len(cluster) - 1) / 2.0
            for rank, i in enumerate(cluster):
                layer, value = chain[i]
                if spec.pull_is_fixed(layer):
                    continue
                new = value * (1.0 + PULL_JITTER * (rank - mid) * 2.0)
                row = alpha[layer - 1]
                if len(row) > 1:
                    row[site] = new
                else:
                    row[0] = new
    return params.replace_pulls(alpha)
