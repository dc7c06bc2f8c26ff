"""Sigma-point rules and moment matching for Gaussian expectations.

Every Gaussian integral in this package is evaluated with one of three
deterministic collocation rules:

* unscented: 2n+1 points at the mean and along Cholesky columns of
  (n + lambda) * Sigma,
* cubature: 2n points, mu +/- sqrt(n) * (Cholesky column), equal weights,
* gauss_hermite: the tensor product of 1-D probabilists' Gauss-Hermite
  nodes (order m integrates 1-D polynomials up to degree 2m-1 exactly).

The matrix square root is always the lower Cholesky factor, columns taken
left to right, so point sets are deterministic across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import NotSPDError, symmetrize

__all__ = [
    "TransformParams",
    "SigmaPointSet",
    "unscented_points",
    "cubature_points",
    "gauss_hermite_points",
    "build_points",
    "moment_match",
    "expect",
    "cross_covariance",
]

# Refuse tensor-product Gauss-Hermite grids beyond this many points.
GH_POINT_CAP = 100_000


@dataclass(frozen=True)
class TransformParams:
    """Rule selection and spread parameters for sigma-point construction.

    Defaults are alpha=0, beta=1, lambda=0 (Julier's points); note these
    give the center point zero mean-weight and covariance weight 2.  All
    of them are overridable per scenario.
    """

    rule: str = "unscented"
    alpha: float = 0.0
    beta: float = 1.0
    lam: float = 0.0
    gh_order: int = 5

    def __post_init__(self) -> None:
        if self.rule not in ("unscented", "cubature", "gauss_hermite"):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.gh_order < 1:
            raise ValueError("gh_order must be >= 1")


@dataclass(frozen=True)
class SigmaPointSet:
    """Collocation points (rows) with mean and covariance weights."""

    points: np.ndarray
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        wm = np.asarray(self.mean_weights, dtype=float)
        wc = np.asarray(self.cov_weights, dtype=float)
        if not (len(pts) == wm.size == wc.size):
            raise ValueError("point and weight counts disagree")
        if abs(wm.sum() - 1.0) > 1e-12:
            raise ValueError(f"mean weights sum to {wm.sum()!r}, expected 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mean_weights", wm)
        object.__setattr__(self, "cov_weights", wc)

    def __len__(self) -> int:
        return len(self.points)


def _chol_of(sigma_mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma_mat)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"{what} is not positive definite") from exc


def unscented_points(mu: np.ndarray, sigma_mat: np.ndarray,
                     params: TransformParams = TransformParams()) -> SigmaPointSet:
    """Unscented point set for N(mu, sigma_mat).

    chi_0 = mu, chi_i = mu +/- column i of chol((n + lambda) Sigma);
    w_m0 = lambda/(n+lambda), w_c0 = w_m0 + (1 - alpha^2 + beta),
    w_mi = w_ci = 1 / (2 (n + lambda)) for i >= 1.
    """
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = mu.size
    if n + params.lam <= 0:
        raise ValueError(f"n + lambda must be positive, got {n + params.lam}")
    scaled = _chol_of((n + params.lam) * np.asarray(sigma_mat, dtype=float),
                      "scaled covariance")
    pts = np.empty((2 * n + 1, n))
    pts[0] = mu
    pts[1:n + 1] = mu + scaled.T
    pts[n + 1:] = mu - scaled.T
    wi = 1.0 / (2.0 * (n + params.lam))
    wm = np.full(2 * n + 1, wi)
    wm[0] = params.lam / (n + params.lam)
    wc = wm.copy()
    wc[0] = wm[0] + (1.0 - params.alpha ** 2 + params.beta)
    return SigmaPointSet(pts, wm, wc)


def cubature_points(mu: np.ndarray, sigma_mat: np.ndarray) -> SigmaPointSet:
    """Spherical-radial cubature points: mu +/- sqrt(n) L_i, weights 1/(2n)."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = mu.size
    loc = _chol_of(np.asarray(sigma_mat, dtype=float), "covariance")
    pts = np.empty((2 * n, n))
    pts[:n] = mu + np.sqrt(n) * loc.T
    pts[n:] = mu - np.sqrt(n) * loc.T
    w = np.full(2 * n, 1.0 / (2 * n))
    return SigmaPointSet(pts, w, w.copy())


def gauss_hermite_points(mu: np.ndarray, sigma_mat: np.ndarray,
                         order: int) -> SigmaPointSet:
    """Tensor-product probabilists' Gauss-Hermite rule mapped by mu + L z."""
    if order < 1:
        raise ValueError("order must be >= 1")
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    n = mu.size
    count = order ** n
    if count > GH_POINT_CAP:
        raise ValueError(
            f"gauss_hermite grid has {count} points (order {order}, dim {n}); "
            f"cap is {GH_POINT_CAP}"
        )
    nodes, weights = np.polynomial.hermite_e.hermegauss(order)
    weights = weights / weights.sum()
    loc = _chol_of(np.asarray(sigma_mat, dtype=float), "covariance")
    grids = np.meshgrid(*([nodes] * n), indexing="ij")
    z = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([weights] * n), indexing="ij")
    w = np.ones(count)
    for g in wgrids:
        w = w * g.ravel()
    pts = mu + z @ loc.T
    return SigmaPointSet(pts, w, w.copy())


def build_points(mu: np.ndarray, sigma_mat: np.ndarray,
                 params: TransformParams) -> SigmaPointSet:
    """Dispatch on the configured rule."""
    if params.rule == "unscented":
        return unscented_points(mu, sigma_mat, params)
    if params.rule == "cubature":
        return cubature_points(mu, sigma_mat)
    return gauss_hermite_points(mu, sigma_mat, params.gh_order)


def expect(point_set: SigmaPointSet, fn) -> np.ndarray | float:
    """Mean-weighted expectation of fn over the point set.

    fn may return scalars, vectors, or matrices; NaN/Inf in the result is
    reported rather than silently absorbed.
    """
    total = None
    for w, x in zip(point_set.mean_weights, point_set.points):
        v = np.asarray(fn(x), dtype=float)
        total = w * v if total is None else total + w * v
    if not np.all(np.isfinite(total)):
        raise ValueError("expectation is not finite (fn returned NaN/Inf)")
    return float(total) if np.ndim(total) == 0 else total


def moment_match(point_set: SigmaPointSet, fn) -> tuple[np.ndarray, np.ndarray]:
    """Propagated mean and covariance of fn under the point set.

    mean = sum_i w_m^i f(chi_i);
    cov  = sum_i w_c^i [f(chi_i) - mean][f(chi_i) - mean]^T, symmetrized.
    """
    vals = np.array([np.atleast_1d(np.asarray(fn(x), dtype=float))
                     for x in point_set.points])
    if not np.all(np.isfinite(vals)):
        raise ValueError("moment matching saw NaN/Inf from fn")
    mean = point_set.mean_weights @ vals
    dev = vals - mean
    cov = (dev * point_set.cov_weights[:, None]).T @ dev
    return mean, symmetrize(cov)


def cross_covariance(point_set: SigmaPointSet, fn) -> np.ndarray:
    """Covariance between the points and fn(points).

    sum_i w_c^i [chi_i - mu][f(chi_i) - ybar]^T with mu, ybar the
    mean-weighted averages.  This is the gain numerator of sigma-point
    filters.
    """
    vals = np.array([np.atleast_1d(np.asarray(fn(x), dtype=float))
                     for x in point_set.points])
    if not np.all(np.isfinite(vals)):
        raise ValueError("cross covariance saw NaN/Inf from fn")
    mu = point_set.mean_weights @ point_set.points
    ybar = point_set.mean_weights @ vals
    dx = point_set.points - mu
    dy = vals - ybar
    return (dx * point_set.cov_weights[:, None]).T @ dy
