"""Matern covariance, Gaussian-process sampling, ML fitting and ordinary Kriging."""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np
import scipy.linalg
import scipy.optimize
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import DimensionMismatch, FitFailed, NotPositiveDefinite
from .numerics import CholeskyFactor, cholesky, spd_solve, x_bessel_k1


@dataclass(frozen=True)
class MaternParams:
    sigma2: float = 1.0
    rho: float = 0.2
    tau2: float = 0.01
    nu: float = 1.0

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not self.rho > 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if not self.tau2 >= 0:
            raise ValueError(f"tau2 must be non-negative, got {self.tau2}")
        if self.nu != 1.0:
            raise ValueError("only smoothness nu = 1 is supported")

    @property
    def kappa(self) -> float:
        return sqrt(8.0) / self.rho


def matern_cov(d, p: MaternParams):
    """Matern covariance with nu = 1: ``sigma2 * (kappa d) K1(kappa d)``."""
    return p.sigma2 * x_bessel_k1(p.kappa * np.asarray(d, dtype=np.float64))


def _as_locs(locs) -> np.ndarray:
    return np.asarray(locs, dtype=np.float64).reshape(-1, 2)


def cross_cov(a, b, p: MaternParams) -> np.ndarray:
    return matern_cov(cdist(_as_locs(a), _as_locs(b)), p)


def cov_matrix(locs, p: MaternParams, include_nugget: bool = False) -> np.ndarray:
    locs = _as_locs(locs)
    if len(locs) == 0:
        raise ValueError("cov_matrix needs at least one location")
    return _symmetric_cov(pdist(locs), len(locs), p, include_nugget)


def _symmetric_cov(condensed, n, p: MaternParams, include_nugget: bool) -> np.ndarray:
    """Covariance matrix from condensed pairwise distances; evaluates each pair once."""
    c = squareform(matern_cov(condensed, p), checks=False)
    np.fill_diagonal(c, p.sigma2 + (p.tau2 if include_nugget else 0.0))
    return c


def sample_gp(locs, p: MaternParams, state: np.random.Generator):
    """Draw ``(signal, observed)`` at ``locs``; observed adds nugget noise."""
    factor = cholesky(cov_matrix(locs, p))
    n = factor.n
    signal = factor.lower @ state.standard_normal(n)
    observed = signal + sqrt(p.tau2) * state.standard_normal(n)
    return signal, observed


def sample_gp_conditional(known_locs, known_signal, new_locs, p: MaternParams,
                          state: np.random.Generator, known_factor: CholeskyFactor | None = None):
    """Draw the noiseless signal at ``new_locs`` given its values at ``known_locs``.

    Together with the known values this is a draw from the joint process at
    the union of both location sets.  Pass ``known_factor`` (the factor of the
    nugget-free covariance at ``known_locs``) to reuse it across calls.
    """
    if known_factor is None:
        known_factor = cholesky(cov_matrix(known_locs, p))
    k_new = cross_cov(new_locs, known_locs, p)
    mean = k_new @ spd_solve(known_factor, known_signal)
    b = scipy.linalg.solve_triangular(known_factor.lower, k_new.T, lower=True, check_finite=False)
    cond = cov_matrix(new_locs, p) - b.T @ b
    cond = 0.5 * (cond + cond.T)
    factor = cholesky(cond)
    return mean + factor.lower @ state.standard_normal(factor.n)


# --------------------------------------------------------------------------
# likelihood and fitting


def _profile_nll(log_params, y, condensed):
    """Negative log-likelihood with the constant mean profiled out by GLS."""
    sigma2, rho, tau2 = np.exp(log_params)
    if not (1e-8 < sigma2 < 1e6 and 1e-4 < rho < 1e2 and 1e-10 < tau2 < 1e6):
        return np.inf
    c = _symmetric_cov(condensed, len(y), MaternParams(sigma2=sigma2, rho=rho, tau2=tau2), True)
    try:
        factor = cholesky(c)
    except NotPositiveDefinite:
        return np.inf
    ones = np.ones(len(y))
    ci_one = spd_solve(factor, ones)
    mean = ci_one @ y / (ci_one @ ones)
    r = y - mean
    alpha = spd_solve(factor, r)
    logdet = 2.0 * np.sum(np.log(np.diag(factor.lower)))
    return 0.5 * (r @ alpha + logdet + len(y) * np.log(2 * np.pi))


def _variogram_range(y, lags) -> float:
    """Lag at which the binned empirical semivariogram first reaches 95% of the sample variance."""
    var = np.var(y)
    iu = np.triu_indices(len(y), k=1)
    gamma = 0.5 * (y[iu[0]] - y[iu[1]]) ** 2
    edges = np.linspace(0.0, lags.max() / 2, 11)
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (lags > lo) & (lags <= hi)
        if sel.sum() >= 5 and gamma[sel].mean() >= 0.95 * var:
            return 0.5 * (lo + hi)
    return lags.max() / 2


def fit_matern_ml(locs, observed, maxiter: int = 500) -> MaternParams:
    """Maximum-likelihood (sigma2, rho, tau2) with nu = 1.

    Nelder-Mead on log-parameters from three starts whose ranges are a half,
    one and two times the empirical variogram range.  Raises ``FitFailed`` if
    no start converges.
    """
    locs = _as_locs(locs)
    y = np.asarray(observed, dtype=np.float64)
    if len(y) < 5:
        raise ValueError(f"fit_matern_ml needs at least 5 observations, got {len(y)}")
    if len(y) != len(locs):
        raise DimensionMismatch("locations and observations differ in length")
    var = np.var(y)
    if not var > 1e-12:
        raise FitFailed("observations are constant")
    condensed = pdist(locs)
    r0 = _variogram_range(y, condensed)
    best = None
    for scale in (0.5, 1.0, 2.0):
        # the practical range of this Matern is about rho
        x0 = np.log([var, scale * r0, 0.1 * var])
        res = scipy.optimize.minimize(
            _profile_nll, x0, args=(y, condensed), method="Nelder-Mead",
            options={"maxiter": maxiter, "xatol": 1e-3, "fatol": 1e-5},
        )
        if res.success and np.isfinite(res.fun) and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise FitFailed("no Nelder-Mead start converged")
    sigma2, rho, tau2 = np.exp(best.x)
    return MaternParams(sigma2=float(sigma2), rho=float(rho), tau2=float(tau2))


# --------------------------------------------------------------------------
# ordinary Kriging


@dataclass(frozen=True)
class KrigingModel:
    locs: np.ndarray
    observed: np.ndarray
    params: MaternParams
    factor: CholeskyFactor
    ci_one: np.ndarray
    mean: float
    alpha: np.ndarray

    @property
    def n(self) -> int:
        return len(self.observed)


def fit_kriging(locs, observed, params: MaternParams) -> KrigingModel:
    locs = _as_locs(locs)
    y = np.asarray(observed, dtype=np.float64)
    if len(y) < 1:
        raise ValueError("Kriging needs at least one observation")
    if len(y) != len(locs):
        raise DimensionMismatch("locations and observations differ in length")
    factor = cholesky(cov_matrix(locs, params, include_nugget=True))
    ones = np.ones(len(y))
    ci_one = spd_solve(factor, ones)
    mean = float(ci_one @ y / (ci_one @ ones))
    alpha = spd_solve(factor, y - mean)
    return KrigingModel(locs, y, params, factor, ci_one, mean, alpha)


def kriging_weights(model: KrigingModel, targets) -> np.ndarray:
    """Ordinary-Kriging weights, one column per target; each column sums to 1."""
    c0 = cross_cov(model.locs, targets, model.params)
    ci_c0 = spd_solve(model.factor, c0)
    denom = model.ci_one.sum()
    lagrange = (1.0 - ci_c0.sum(axis=0)) / denom
    return ci_c0 + np.outer(model.ci_one, lagrange)


def krige_predict(model: KrigingModel, targets) -> np.ndarray:
    """Predict the noiseless signal at ``targets``."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.ndim != 2 or targets.shape[1] != 2:
        raise DimensionMismatch(f"targets must have shape (m, 2), got {targets.shape}")
    c0 = cross_cov(targets, model.locs, model.params)
    return model.mean + c0 @ model.alpha
