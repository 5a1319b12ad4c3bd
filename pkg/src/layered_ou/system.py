"""System matrices and exact Gaussian moments of the layered linear SDE.

The state stacks layers top to bottom, sites within each layer:
``index(layer, site) = (layer - 1) * n_sites + site``. The pull matrix A
couples layer i only to layer i+1 of the same site, so A decomposes into
independent per-site chains and its eigenvalues are exactly the negated
pulls. The eigenvector matrices are built in closed form per site, which
keeps repeated pulls across sites (the common, harmless case) out of the
degeneracy check: only near-equal pulls within one site's chain make A
non-diagonalizable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateEigensystem, NonFiniteResult, NotStationary
from .forcing import ForcingSeries
from .model import ModelSpec
from .params import ParamVector, jitter_pulls, site_chain_pulls, validate_params

EIGEN_GAP_TOL = 1e-8  # relative pull gap below which chains are degenerate


def _phi1(x):
    """(e^x - 1) / x, continuous at 0."""
    x = np.asarray(x, dtype=float)
    safe = np.where(x == 0.0, 1.0, x)
    return np.where(x == 0.0, 1.0, np.expm1(safe) / safe)


def _phi2(x):
    """(e^x - 1 - x) / x^2, continuous at 0 (value 1/2)."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    safe = np.where(small, 1.0, x)
    series = 0.5 + x / 6.0 + x**2 / 24.0 + x**3 / 120.0
    return np.where(small, series, (np.expm1(safe) - safe) / safe**2)


@dataclass(frozen=True)
class SystemMatrices:
    """Realized (A, Sigma, m) for one spec + parameter set, with the
    eigendecomposition A = Vinv @ diag(lam) @ V cached (V holds the left
    eigenvectors as rows; all eigenvalues are real)."""

    spec: ModelSpec
    params: ParamVector
    A: np.ndarray
    Sigma: np.ndarray
    sig_sig: np.ndarray  # Sigma @ Sigma.T
    m_const: np.ndarray
    m_forcing: np.ndarray  # coefficient of T(t) in m(t)
    lam: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    def state_index(self, layer: int, site: int) -> int:
        return (layer - 1) * self.spec.n_sites + site

    def top_indices(self) -> np.ndarray:
        return np.arange(self.spec.n_sites)


def _broadcast(values: tuple[float, ...], n_sites: int) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.size == 1:
        return np.full(n_sites, arr[0])
    return arr


def _site_eigframe(pulls: np.ndarray):
    """Closed-form right/left eigenvectors of one site chain.

    The chain matrix has -pulls on the diagonal and +pull on the next
    layer's column, so its right eigenvector matrix R is unit upper
    triangular with R[i, k] = pulls[i] / (pulls[i] - pulls[k]) * R[i+1, k].
    Returns (R, Rinv); raises DegenerateEigensystem on near-equal pulls.
    """
    L = pulls.size
    for i in range(L):
        for k in range(i + 1, L):
            gap = abs(pulls[i] - pulls[k])
            if gap <= EIGEN_GAP_TOL * max(abs(pulls[i]), abs(pulls[k])):
                raise DegenerateEigensystem(
                    f"pulls {pulls[i]} and {pulls[k]} within relative {EIGEN_GAP_TOL}"
                )
    R = np.eye(L)
    for k in range(L):
        for i in range(k - 1, -1, -1):
            R[i, k] = pulls[i] / (pulls[i] - pulls[k]) * R[i + 1, k]
    Rinv = np.linalg.inv(R)
    return R, Rinv


def _diffusion_matrix(spec: ModelSpec, params: ParamVector) -> np.ndarray:
    """Assemble the p x q diffusion matrix with one column block per layer:
    a diagonal block for uncorrelated noise, a single shared column when the
    layer's noise is perfectly correlated, and a scaled Cholesky factor of
    the equicorrelation matrix for intermediate correlation."""
    S, L = spec.n_sites, spec.n_layers
    p = S * L
    blocks = []
    for layer in range(1, L + 1):
        if spec.is_deterministic(layer):
            continue
        sig = _broadcast(params.sigma[layer - 1], S)
        rows = slice((layer - 1) * S, layer * S)
        kind = spec.correlation(layer)
        if kind == "perfect":
            col = np.zeros((p, 1))
            col[rows, 0] = sig
            blocks.append(col)
        elif kind == "intermediate":
            rho = params.rho_for(layer)
            corr = np.full((S, S), rho)
            np.fill_diagonal(corr, 1.0)
            try:
                chol = np.linalg.cholesky(corr)
            except np.linalg.LinAlgError as exc:
                # equicorrelation is only PSD for rho >= -1/(S-1)
                raise NonFiniteResult(
                    f"correlation {rho} invalid for {S} sites"
                ) from exc
            block = np.zeros((p, S))
            block[rows, :] = sig[:, None] * chol
            blocks.append(block)
        else:
            block = np.zeros((p, S))
            block[rows, :] = np.diag(sig)
            blocks.append(block)
    if not blocks:
        return np.zeros((p, 0))
    return np.concatenate(blocks, axis=1)


def build_system(
    spec: ModelSpec, params: ParamVector, auto_jitter: bool = False
) -> SystemMatrices:
    """Realize (A, Sigma, m) and the eigendecomposition for a parameter set.

    With ``auto_jitter`` near-equal pulls are nudged apart (relative 1e-6)
    instead of raising DegenerateEigensystem, so optimizers and samplers see
    a continuous likelihood surface.
    """
    validate_params(spec, params)
    for attempt in range(4):
        try:
            return _build_system(spec, params)
        except DegenerateEigensystem:
            if not auto_jitter or attempt == 3:
                raise
            params = jitter_pulls(spec, params)
    raise AssertionError("unreachable")


def _build_system(spec: ModelSpec, params: ParamVector) -> SystemMatrices:
    # overflow at extreme parameters surfaces as NonFiniteResult, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        return _build_system_unchecked(spec, params)


def _build_system_unchecked(spec: ModelSpec, params: ParamVector) -> SystemMatrices:
    S, L = spec.n_sites, spec.n_layers
    p = S * L
    A = np.zeros((p, p))
    m_const = np.zeros(p)
    m_forcing = np.zeros(p)
    mu0 = _broadcast(params.mu0, S)

    for layer in range(1, L + 1):
        alpha = _broadcast(params.alpha[layer - 1], S)
        for j in range(S):
            i = (layer - 1) * S + j
            A[i, i] = -alpha[j]
            if layer < L:
                A[i, layer * S + j] = alpha[j]
            else:
                m_const[i] = alpha[j] * mu0[j]
        if spec.forcing_layer == layer:
            for j in range(S):
                m_forcing[(layer - 1) * S + j] = alpha[j] * params.beta

    Sigma = _diffusion_matrix(spec, params)

    lam = np.zeros(p)
    V = np.zeros((p, p))
    Vinv = np.zeros((p, p))
    for j in range(S):
        pulls = site_chain_pulls(spec, params, j)
        R, Rinv = _site_eigframe(pulls)
        idx = np.arange(L) * S + j
        lam[idx] = -pulls
        # right eigenvectors form Vinv, their inverse the left rows of V
        Vinv[np.ix_(idx, idx)] = R
        V[np.ix_(idx, idx)] = Rinv

    if not (
        np.isfinite(A).all()
        and np.isfinite(Sigma).all()
        and np.isfinite(m_const).all()
        and np.isfinite(m_forcing).all()
    ):
        raise NonFiniteResult("non-finite system matrices")

    return SystemMatrices(
        spec=spec,
        params=params,
        A=A,
        Sigma=Sigma,
        sig_sig=Sigma @ Sigma.T,
        m_const=m_const,
        m_forcing=m_forcing,
        lam=lam,
        V=V,
        Vinv=Vinv,
    )


def _check_finite(name, *arrays):
    for arr in arrays:
        if not np.isfinite(arr).all():
            raise NonFiniteResult(f"non-finite values in {name}")


def _symmetrize(C: np.ndarray) -> np.ndarray:
    return (C + C.T) / 2.0


def stationary_moments(sys: SystemMatrices) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the stationary (unforced) distribution."""
    if (sys.lam >= 0).any():
        raise NotStationary("system has a non-negative eigenvalue")
    mean = np.linalg.solve(sys.A, -sys.m_const)
    M = sys.V @ sys.sig_sig @ sys.V.T
    G = -1.0 / (sys.lam[:, None] + sys.lam[None, :])
    cov = _symmetrize(sys.Vinv @ (M * G) @ sys.Vinv.T)
    _check_finite("stationary moments", mean, cov)
    return mean, cov


def stationary_autocovariance(sys: SystemMatrices, lag: float) -> np.ndarray:
    """cov(X(t), X(t + lag)) under stationarity: P_inf @ e^{A' lag}."""
    _, cov = stationary_moments(sys)
    E = np.exp(sys.lam * lag)
    phi = sys.Vinv @ (E[:, None] * sys.V)
    return cov @ phi.T


def forcing_drift(
    sys: SystemMatrices, t0: float, t1: float, forcing: ForcingSeries
) -> np.ndarray:
    """Integral of e^{A (t1-u)} m_forcing T(u) du over [t0, t1], computed
    analytically on each linear segment of the interpolated series."""
    c_eig = sys.V @ sys.m_forcing
    if t1 <= t0 or not c_eig.any():
        return np.zeros(sys.n_states)
    a, b, va, vb = forcing.segments(t0, t1)
    h = (b - a)[:, None]
    lam = sys.lam[None, :]
    decay = np.exp(lam * (t1 - b[:, None]))
    J0 = h * decay * _phi1(lam * h)
    J1 = h * h * decay * _phi2(lam * h)
    slope = ((vb - va) / (b - a))[:, None]
    total = (va[:, None] * J0 + slope * J1).sum(axis=0)
    return sys.Vinv @ (total * c_eig)


def initial_moments(
    sys: SystemMatrices, t: float, forcing: ForcingSeries | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Unconditional law at time t: stationary moments of the unforced
    system, with the forcing-induced mean offset accumulated from the
    start of the forcing series."""
    mean, cov = stationary_moments(sys)
    if forcing is not None and sys.m_forcing.any():
        mean = mean + forcing_drift(sys, forcing.start, t, forcing)
    return mean, cov


def discretize(
    sys: SystemMatrices, times: np.ndarray, forcing: ForcingSeries | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact transition maps over consecutive gaps of a time grid.

    Returns (Phis, Qs, drifts) with X(t_{k+1}) | X(t_k) distributed as
    N(Phis[k] @ x + drifts[k], Qs[k]). Vectorized over all gaps.
    """
    times = np.asarray(times, dtype=float)
    d = np.diff(times)
    if (d < 0).any():
        raise ValueError("times must be sorted")
    lam, V, Vinv = sys.lam, sys.V, sys.Vinv
    E = np.exp(lam[None, :] * d[:, None])  # (K, p)
    Phis = (Vinv[None, :, :] * E[:, None, :]) @ V

    M = V @ sys.sig_sig @ V.T
    Ssum = lam[:, None] + lam[None, :]
    G = d[:, None, None] * _phi1(Ssum[None, :, :] * d[:, None, None])
    Qs = Vinv @ (M[None, :, :] * G) @ Vinv.T
    Qs = (Qs + np.transpose(Qs, (0, 2, 1))) / 2.0

    w = V @ sys.m_const
    drifts = (d[:, None] * _phi1(lam[None, :] * d[:, None]) * w[None, :]) @ Vinv.T
    if forcing is not None and sys.m_forcing.any():
        drifts += _forcing_drifts(sys, times, forcing)
    _check_finite("transition maps", Phis, Qs, drifts)
    return Phis, Qs, drifts


def _forcing_drifts(sys: SystemMatrices, times: np.ndarray, forcing: ForcingSeries):
    """Forcing integrals for every grid gap at once.

    All linear segments of all gaps are flattened into one array batch and
    accumulated back per gap, which keeps the per-evaluation cost flat in
    the number of observations.
    """
    K = times.size - 1
    p = sys.n_states
    ft, fv = forcing.times, forcing.values
    lo = np.searchsorted(ft, times[:-1], side="right")
    hi = np.searchsorted(ft, times[1:], side="left")
    seg_a, seg_b, seg_gap = [], [], []
    for k in range(K):
        if times[k + 1] <= times[k]:
            continue
        knots = np.concatenate(([times[k]], ft[lo[k] : hi[k]], [times[k + 1]]))
        seg_a.append(knots[:-1])
        seg_b.append(knots[1:])
        seg_gap.append(np.full(knots.size - 1, k, dtype=int))
    if not seg_a:
        return np.zeros((K, p))
    a = np.concatenate(seg_a)
    b = np.concatenate(seg_b)
    gap = np.concatenate(seg_gap)
    va = np.interp(a, ft, fv)
    vb = np.interp(b, ft, fv)
    h = (b - a)[:, None]
    lam = sys.lam[None, :]
    decay = np.exp(lam * (times[1:][gap] - b)[:, None])
    J0 = h * decay * _phi1(lam * h)
    J1 = h * h * decay * _phi2(lam * h)
    slope = ((vb - va) / (b - a))[:, None]
    contrib = va[:, None] * J0 + slope * J1
    totals = np.zeros((K, p))
    np.add.at(totals, gap, contrib)
    return (totals * (sys.V @ sys.m_forcing)[None, :]) @ sys.Vinv.T


def transition_moments(
    sys: SystemMatrices,
    mean0: np.ndarray,
    cov0: np.ndarray,
    t0: float,
    t1: float,
    forcing: ForcingSeries | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and covariance of X(t1) given X(t0) ~ N(mean0, cov0)."""
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    mean0 = np.asarray(mean0, dtype=float)
    cov0 = np.asarray(cov0, dtype=float)
    if t1 == t0:
        return mean0.copy(), cov0.copy()
    Phis, Qs, drifts = discretize(sys, np.array([t0, t1]), forcing)
    phi = Phis[0]
    mean = phi @ mean0 + drifts[0]
    cov = _symmetrize(phi @ cov0 @ phi.T + Qs[0])
    _check_finite("transition moments", mean, cov)
    return mean, cov
