"""Closed-form KF plus EKF and UKF predict/update baselines.

All updates re-symmetrize the posterior covariance; a Joseph-form option
exists for stress cases.  Measurement residuals go through the model's
residual wrap, so bearing-like innovations stay in (-pi, pi].
"""

from __future__ import annotations

import numpy as np

from .gaussian import GaussianBelief, symmetrize
from .model import StateSpaceModel
from .sigma import TransformParams, build_points, cross_covariance, moment_match

__all__ = [
    "kf_update",
    "ekf_predict",
    "ekf_update",
    "ukf_predict",
    "ukf_update",
]


def _gain_update(prior: GaussianBelief, c: np.ndarray, r: np.ndarray,
                 innovation: np.ndarray, joseph: bool) -> GaussianBelief:
    s = symmetrize(c @ prior.cov @ c.T + r)
    try:
        gain = np.linalg.solve(s, c @ prior.cov).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    mean = prior.mean + gain @ innovation
    n = prior.dim
    if joseph:
        ikc = np.eye(n) - gain @ c
        cov = ikc @ prior.cov @ ikc.T + gain @ r @ gain.T
    else:
        cov = (np.eye(n) - gain @ c) @ prior.cov
    return GaussianBelief(mean, symmetrize(cov))


def kf_update(prior: GaussianBelief, c: np.ndarray, r: np.ndarray,
              y: np.ndarray, joseph: bool = False) -> GaussianBelief:
    """Kalman measurement update for y = C x + noise, noise ~ N(0, R)."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    innovation = np.atleast_1d(np.asarray(y, dtype=float)) - c @ prior.mean
    return _gain_update(prior, c, r, innovation, joseph)


def ekf_predict(posterior: GaussianBelief, model: StateSpaceModel) -> GaussianBelief:
    """Jacobian-linearized prediction: (f(m), F P F^T + Q)."""
    jac = model.jacobian_f(posterior.mean)
    mean = model.f(posterior.mean)
    cov = symmetrize(jac @ posterior.cov @ jac.T + model.process_cov)
    return GaussianBelief(mean, cov)


def ekf_update(prior: GaussianBelief, model: StateSpaceModel, y: np.ndarray,
               joseph: bool = False) -> GaussianBelief:
    """KF update with C = G(m_prior) and wrapped innovation y - g(m_prior)."""
    c = model.jacobian_g(prior.mean)
    innovation = model.residual(y, prior.mean)
    return _gain_update(prior, c, model.meas_cov, innovation, joseph)


def ukf_predict(posterior: GaussianBelief, model: StateSpaceModel,
                params: TransformParams = TransformParams()) -> GaussianBelief:
    """Sigma-point prediction: moment matching of f, plus Q."""
    pts = build_points(posterior.mean, posterior.cov, params)
    mean, cov = moment_match(pts, model.f)
    return GaussianBelief(mean, symmetrize(cov + model.process_cov))


def ukf_update(prior: GaussianBelief, model: StateSpaceModel, y: np.ndarray,
               params: TransformParams = TransformParams()) -> GaussianBelief:
    """Sigma-point update with points drawn from the prior.

    ybar, S come from moment matching of g plus R; the gain is the
    cross covariance times S^{-1}; the innovation is wrapped.
    """
    pts = build_points(prior.mean, prior.cov, params)
    ybar, s0 = moment_match(pts, model.g)
    s = symmetrize(s0 + model.meas_cov)
    pxy = cross_covariance(pts, model.g)
    try:
        gain = np.linalg.solve(s, pxy.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("singular innovation covariance") from exc
    innovation = np.atleast_1d(np.asarray(y, dtype=float)) - ybar
    if model.residual_wrap is not None:
        innovation = np.asarray(model.residual_wrap(innovation), dtype=float)
    mean = prior.mean + gain @ innovation
    cov = symmetrize(prior.cov - gain @ s @ gain.T)
    return GaussianBelief(mean, cov)
