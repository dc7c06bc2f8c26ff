"""The natural-gradient Gaussian measurement update (NANO) and its prediction.

Prediction is forward-KL projection onto the Gaussian family, i.e. moment
matching of the transition through a sigma-point rule, plus the process
covariance.

The update minimizes

    J(m, P) = E_{N(m,P)}[loss(x, y)] + KL(N(m,P) || prior)

by natural-gradient iteration in the (mean, inverse-covariance)
parameterization.  One iteration reads

    P_new^{-1} = P_prior^{-1} + E_{N(iter)}[hess loss]
    m_new      = m_iter - eta * P_new (E_{N(iter)}[grad loss]
                                       + P_prior^{-1} (m_iter - m_prior))

with all expectations evaluated by sigma points on the current iterate.
The step size eta damps only the mean; the information matrix is
reassembled each iteration.  For a linear-Gaussian measurement this
reaches the Kalman posterior in a single iteration from any
initialization.

A derivative-free variant replaces gradient/Hessian expectations with
loss-weighted moments through Stein-type identities:

    E[grad loss] = P^{-1} E[e loss]
    E[hess loss] = P^{-1} E[e e^T loss] P^{-1} - P^{-1} E[loss]

with e = x - m_iter, so only loss values are required.

Positive definiteness of the updated covariance is kept either by the
Gauss-Newton curvature (PSD by construction, assembled directly into the
information matrix) or by stepping a Cholesky factor of the information
matrix and reconstructing Lambda Lambda^T + eps I.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .gaussian import GaussianBelief, NotSPDError, kl_divergence, symmetrize
from .model import StateSpaceModel
from .sigma import TransformParams, build_points, expect, moment_match

__all__ = [
    "NanoConfig",
    "UpdateTrace",
    "nano_predict",
    "nano_update_iteration",
    "nano_update_iteration_df",
    "nano_update",
    "cholesky_factor_step",
]


@dataclass(frozen=True)
class NanoConfig:
    """Iteration controls for the measurement update.

    gamma is the stopping threshold on the combined step size
    ||d mean||_2 + ||d cov||_F; eta in (0, 1] scales the mean step;
    pd_strategy selects how the information matrix is assembled
    (``gauss_newton``: direct sum with the loss curvature, PD whenever
    that curvature is PSD; ``cholesky_factor``: factor stepping with an
    eps * I floor); derivative_mode picks the gradient-based or the
    loss-value-only iteration.
    """

    max_iters: int = 10
    gamma: float = 1e-4
    eta: float = 1.0
    pd_strategy: str = "gauss_newton"
    derivative_mode: str = "derivative"
    quad: TransformParams = field(default_factory=TransformParams)
    epsilon: float = 1e-9

    def __post_init__(self) -> None:
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must be in (0, 1]")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.pd_strategy not in ("gauss_newton", "cholesky_factor"):
            raise ValueError(f"unknown pd_strategy {self.pd_strategy!r}")
        if self.derivative_mode not in ("derivative", "derivative_free"):
            raise ValueError(f"unknown derivative_mode {self.derivative_mode!r}")


@dataclass
class UpdateTrace:
    """Diagnostics of one measurement update."""

    iterations_run: int = 0
    converged: bool = False
    objective_values: list = field(default_factory=list)
    final_step_norm: float = float("nan")


def nano_predict(posterior: GaussianBelief, model: StateSpaceModel,
                 quad: TransformParams = TransformParams()) -> GaussianBelief:
    """Moment-matched prediction through the transition, plus process noise.

    Exact for affine transitions; the sigma-point rule carries the
    nonlinear case.
    """
    pts = build_points(posterior.mean, posterior.cov, quad)
    mean, cov = moment_match(pts, model.f)
    cov = symmetrize(cov + model.process_cov)
    try:
        return GaussianBelief(mean, cov)
    except NotSPDError as exc:
        raise NotSPDError("predicted covariance is not SPD "
                          "(model misconfiguration?)") from exc


def cholesky_factor_step(lam: np.ndarray, v_xx: np.ndarray,
                         prior_info: np.ndarray) -> np.ndarray:
    """First-order factor step for the information-matrix iteration.

    Lambda' = Lambda + 0.5 (V_xx + prior_info) Lambda^{-T}; reconstructing
    Lambda' Lambda'^T + eps I keeps the information matrix PD regardless
    of the sign of V_xx.
    """
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    n = lam.shape[0]
    if np.any(np.diag(lam) == 0.0):
        raise np.linalg.LinAlgError("singular lower-triangular factor")
    lam_inv_t = solve_triangular(lam, np.eye(n), lower=True).T
    return lam + 0.5 * (np.atleast_2d(v_xx) + np.atleast_2d(prior_info)) @ lam_inv_t


def _info_and_cov(info: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Invert an information matrix through its Cholesky factor."""
    info = symmetrize(info)
    try:
        lam = np.linalg.cholesky(info)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"{what} information matrix is not PD") from exc
    inv = solve_triangular(lam, np.eye(info.shape[0]), lower=True)
    return info, symmetrize(inv.T @ inv)


def _assemble_info(iterate: GaussianBelief, prior_info: np.ndarray,
                   hess_bar: np.ndarray, cfg: NanoConfig) -> np.ndarray:
    if cfg.pd_strategy == "gauss_newton":
        return prior_info + hess_bar
    lam = np.linalg.cholesky(symmetrize(iterate.precision()))
    lam_next = cholesky_factor_step(lam, hess_bar, prior_info)
    return lam_next @ lam_next.T + cfg.epsilon * np.eye(lam.shape[0])


def nano_update_iteration(iterate: GaussianBelief, prior: GaussianBelief,
                          loss, y: np.ndarray,
                          cfg: NanoConfig = NanoConfig()) -> GaussianBelief:
    """One natural-gradient step using loss gradients and curvature."""
    pts = build_points(iterate.mean, iterate.cov, cfg.quad)
    grad_bar = expect(pts, lambda x: loss.gradient(x, y))
    hess_bar = expect(pts, lambda x: loss.hessian(x, y))
    prior_info = prior.precision()
    info = _assemble_info(iterate, prior_info, hess_bar, cfg)
    _, cov_new = _info_and_cov(info, "updated")
    pull = prior_info @ (iterate.mean - prior.mean)
    mean_new = iterate.mean - cfg.eta * cov_new @ (grad_bar + pull)
    return GaussianBelief(mean_new, cov_new)


def nano_update_iteration_df(iterate: GaussianBelief, prior: GaussianBelief,
                             loss, y: np.ndarray,
                             cfg: NanoConfig = NanoConfig()) -> GaussianBelief:
    """One natural-gradient step from loss values only (Stein identities)."""
    pts = build_points(iterate.mean, iterate.cov, cfg.quad)
    vals = np.array([loss.value(x, y) for x in pts.points])
    if not np.all(np.isfinite(vals)):
        raise ValueError("derivative-free update saw non-finite loss values")
    dev = pts.points - iterate.mean
    w = pts.mean_weights
    e_loss = float(w @ vals)
    e_dev_loss = (w * vals) @ dev
    e_outer_loss = (dev * (w * vals)[:, None]).T @ dev

    prec = iterate.precision()
    prior_info = prior.precision()
    hess_bar = prec @ e_outer_loss @ prec - prec * e_loss
    if cfg.pd_strategy == "gauss_newton":
        info = prior_info + hess_bar
    else:
        lam = np.linalg.cholesky(symmetrize(prec))
        lam_next = cholesky_factor_step(lam, hess_bar, prior_info)
        info = lam_next @ lam_next.T + cfg.epsilon * np.eye(lam.shape[0])
    try:
        _, cov_new = _info_and_cov(info, "derivative-free updated")
    except NotSPDError:
        raise NotSPDError(
            "derivative-free information matrix is not PD; "
            "consider derivative mode or the cholesky_factor strategy"
        ) from None
    grad_bar = prec @ e_dev_loss
    pull = prior_info @ (iterate.mean - prior.mean)
    mean_new = iterate.mean - cfg.eta * cov_new @ (grad_bar + pull)
    return GaussianBelief(mean_new, cov_new)


def nano_update(prior: GaussianBelief, loss, y: np.ndarray,
                cfg: NanoConfig = NanoConfig()) -> tuple[GaussianBelief, UpdateTrace]:
    """Iterate the configured update from the prior until the step stalls.

    Starts at (m_prior, P_prior); stops when ||d mean|| + ||d cov||_F
    drops below gamma or max_iters is reached.  Non-convergence is not an
    error: the last iterate is returned with trace.converged = False.
    """
    from .gaussian import update_objective  # deferred to keep import cycle-free

    step = (nano_update_iteration if cfg.derivative_mode == "derivative"
            else nano_update_iteration_df)
    iterate = prior
    trace = UpdateTrace()
    for _ in range(cfg.max_iters):
        new = step(iterate, prior, loss, y, cfg)
        change = float(np.linalg.norm(new.mean - iterate.mean)
                       + np.linalg.norm(new.cov - iterate.cov, ord="fro"))
        trace.iterations_run += 1
        trace.final_step_norm = change
        trace.objective_values.append(update_objective(new, prior, loss, y, cfg.quad))
        iterate = new
        if change < cfg.gamma:
            trace.converged = True
            break
    return iterate, trace
