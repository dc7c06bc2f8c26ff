"""Gaussian beliefs and the information geometry used by the natural-gradient update.

A belief is a mean/covariance pair.  Covariances are symmetric positive
definite (SPD); the canonical SPD test everywhere in this package is an
attempted Cholesky factorization, which is also what downstream algebra
(sampling, log-densities, information matrices) needs anyway.

Besides densities and KL divergence, this module carries the geometric
objects behind the natural-gradient measurement update:

* the variational update objective ``J`` (expected measurement loss plus
  KL to the predicted prior),
* the inverse Fisher information blocks of a Gaussian parameterized by
  (mean, vectorized inverse covariance),
* the 1-D Gaussian in natural (exponential-family) coordinates, whose
  log-partition Hessian equals the Fisher matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

__all__ = [
    "NotSPDError",
    "GaussianBelief",
    "NaturalParams",
    "log_density",
    "kl_divergence",
    "update_objective",
    "inverse_fisher_blocks",
    "log_partition",
    "log_partition_gradient",
    "fisher_natural_1d",
    "natural_params_from_moments",
    "sample",
    "symmetrize",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


class NotSPDError(np.linalg.LinAlgError):
    """A matrix required to be symmetric positive definite is not."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Round off asymmetry drift: (A + A^T) / 2."""
    return 0.5 * (a + a.T)


def _cholesky(cov: np.ndarray, what: str = "covariance") -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"{what} is not positive definite") from exc


@dataclass(frozen=True)
class GaussianBelief:
    """Mean vector plus SPD covariance; the carrier object of every filter here.

    Validation happens at construction: dimensions must agree, the
    covariance must be symmetric to 1e-12 (relative) and must admit a
    Cholesky factorization.  Instances are immutable values and safe to
    share between threads; the factor is cached for reuse.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(
                f"dimension mismatch: mean {mean.shape}, cov {cov.shape}"
            )
        scale = np.abs(cov).max()
        if scale > 0 and np.abs(cov - cov.T).max() > 1e-12 * max(scale, 1.0):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "chol", _cholesky(cov))

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_det_cov(self) -> float:
        """log det(cov), from the Cholesky factor (no raw determinant)."""
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def precision(self) -> np.ndarray:
        """Inverse covariance, via the cached factor; symmetrized."""
        n = self.dim
        linv = solve_triangular(self.chol, np.eye(n), lower=True)
        return symmetrize(linv.T @ linv)

    def solve_cov(self, b: np.ndarray) -> np.ndarray:
        """cov^{-1} b by forward/back substitution."""
        z = solve_triangular(self.chol, b, lower=True)
        return solve_triangular(self.chol.T, z, lower=False)


def log_density(belief: GaussianBelief, x: np.ndarray) -> float:
    """Gaussian log-density at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.shape != belief.mean.shape:
        raise ValueError(f"x has shape {x.shape}, expected {belief.mean.shape}")
    d = x - belief.mean
    z = solve_triangular(belief.chol, d, lower=True)
    return float(-0.5 * (z @ z) - 0.5 * belief.log_det_cov() - 0.5 * belief.dim * _LOG_2PI)


def kl_divergence(q: GaussianBelief, p: GaussianBelief) -> float:
    """Closed-form KL divergence D(q || p) between Gaussians.

    0.5 * [ (mq-mp)^T Pp^{-1} (mq-mp) + tr(Pp^{-1} Pq)
            - log det Pq / det Pp - n ]
    """
    if q.dim != p.dim:
        raise ValueError(f"dimension mismatch: {q.dim} vs {p.dim}")
    d = q.mean - p.mean
    # Both terms via p's factor: whitened mean gap and whitened covariance.
    zd = solve_triangular(p.chol, d, lower=True)
    zc = solve_triangular(p.chol, q.chol, lower=True)
    maha = float(zd @ zd)
    trace = float(np.sum(zc * zc))
    logdet = q.log_det_cov() - p.log_det_cov()
    return 0.5 * (maha + trace - logdet - q.dim)


def update_objective(candidate: GaussianBelief, prior: GaussianBelief,
                     loss, y: np.ndarray, quad) -> float:
    """Variational objective of the measurement update.

    J(m, P) = E_{N(m,P)}[loss(x, y)] + KL(N(m,P) || prior), with the
    expectation evaluated by the supplied sigma-point rule.  Minimizing J
    over the Gaussian family is what the natural-gradient update does; the
    KL term keeps the update proximal to the prediction.
    """
    from . import sigma  # local import: sigma has no dependency on this module

    pts = sigma.build_points(candidate.mean, candidate.cov, quad)
    expected_loss = sigma.expect(pts, lambda x: loss.value(x, y))
    j = float(expected_loss) + kl_divergence(candidate, prior)
    if not np.isfinite(j):
        raise ValueError("update objective is not finite (loss returned NaN/Inf?)")
    return j


def inverse_fisher_blocks(belief: GaussianBelief) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal blocks of the inverse Fisher information.

    For a Gaussian parameterized by v = (mean, vec(P^{-1})), the Fisher
    metric is block diagonal and its inverse is

        F^{-1} = diag( P,  2 (P^{-1} kron P^{-1}) ).

    These blocks precondition the Euclidean gradient of the update
    objective into the natural gradient.
    """
    p = belief.cov
    pinv = belief.precision()
    return p.copy(), 2.0 * np.kron(pinv, pinv)


# --- 1-D Gaussian as an exponential family ---------------------------------
#
# p(x; theta) = exp(theta_1 x + theta_2 x^2 - psi(theta)) with theta_2 < 0,
# i.e. theta = (mu / s, -1/(2 s)) for N(mu, s).  Sufficient statistics are
# F(x) = (x, x^2).


@dataclass(frozen=True)
class NaturalParams:
    """Natural parameters of a 1-D Gaussian; requires theta[1] < 0."""

    theta: np.ndarray
    dim: int = 1

    def __post_init__(self) -> None:
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (2,):
            raise ValueError("1-D Gaussian natural parameters must have length 2")
        if not theta[1] < 0:
            raise ValueError("theta[1] must be negative for a normalizable density")
        object.__setattr__(self, "theta", theta)

    def to_moments(self) -> tuple[float, float]:
        """(mean, variance) of the corresponding Gaussian."""
        t1, t2 = self.theta
        s = -1.0 / (2.0 * t2)
        return t1 * s, s


def natural_params_from_moments(mu: float, var: float) -> NaturalParams:
    if var <= 0:
        raise ValueError("variance must be positive")
    return NaturalParams(np.array([mu / var, -0.5 / var]))


def log_partition(params: NaturalParams) -> float:
    """Log-partition psi(theta) normalizing the exponential-family density."""
    t1, t2 = params.theta
    return float(-t1 * t1 / (4.0 * t2) - 0.5 * np.log(-2.0 * t2) + 0.5 * _LOG_2PI)


def log_partition_gradient(params: NaturalParams) -> np.ndarray:
    """Expectation parameters (E[x], E[x^2]) = grad psi(theta)."""
    mu, s = params.to_moments()
    return np.array([mu, mu * mu + s])


def fisher_natural_1d(params: NaturalParams) -> np.ndarray:
    """Fisher matrix of the 1-D Gaussian in natural coordinates.

    Equals the covariance of the sufficient statistics (x, x^2), and also
    the Hessian of the log-partition function.
    """
    mu, s = params.to_moments()
    return np.array([
        [s, 2.0 * mu * s],
        [2.0 * mu * s, 4.0 * mu * mu * s + 2.0 * s * s],
    ])


def sample(belief: GaussianBelief, rng: np.random.Generator,
           size: int | None = None) -> np.ndarray:
    """Draw from the belief: mean + L z with L the lower Cholesky factor.

    Deterministic under a seeded generator.  ``size`` draws are returned
    row-wise when given.
    """
    if size is None:
        z = rng.standard_normal(belief.dim)
        return belief.mean + belief.chol @ z
    z = rng.standard_normal((size, belief.dim))
    return belief.mean + z @ belief.chol.T
