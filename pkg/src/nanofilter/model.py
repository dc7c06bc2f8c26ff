"""State-space models, the quadratic measurement loss, and noise samplers.

A model bundles the transition map f, the measurement map g, their noise
covariances Q and R, optional analytic Jacobians (finite differences are
the fallback), and an optional residual wrap applied to measurement
residuals (bearing angles wrap to (-pi, pi], for instance) so that the
loss, its derivatives, and every filter treat residuals consistently.

The measurement loss is the negative log-likelihood of a Gaussian
measurement, up to an x-independent constant:

    loss(x, y) = 0.5 * r^T R^{-1} r,   r = wrap(y - g(x)).

Its Hessian comes in two modes: ``exact`` keeps the residual-weighted
curvature of g, ``gauss_newton`` keeps only G^T R^{-1} G, which is
positive semidefinite at every point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "StateSpaceModel",
    "MeasurementLoss",
    "measurement_loss",
    "NoiseComponent",
    "NoiseSpec",
    "gaussian_noise",
    "laplace_noise",
    "beta_noise",
    "mixture",
    "sample_noise",
    "build_linear_model",
    "fd_jacobian",
    "fd_hessian",
]


def fd_jacobian(fn, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian with step scaled per coordinate."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((f0.size, x.size))
    for j in range(x.size):
        h = step * (1.0 + abs(x[j]))
        e = np.zeros_like(x)
        e[j] = h
        jac[:, j] = (np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2.0 * h)
    return jac


def fd_hessian(fn, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    n = x.size
    hess = np.empty((n, n))
    hs = step * (1.0 + np.abs(x))
    f0 = float(fn(x))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = hs[i]
        hess[i, i] = (float(fn(x + ei)) - 2.0 * f0 + float(fn(x - ei))) / hs[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = hs[j]
            hess[i, j] = hess[j, i] = (
                float(fn(x + ei + ej)) - float(fn(x + ei - ej))
                - float(fn(x - ei + ej)) + float(fn(x - ei - ej))
            ) / (4.0 * hs[i] * hs[j])
    return hess


def _spd_check(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be SPD") from exc
    return mat


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time model x' = f(x) + xi, y = g(x) + zeta.

    ``jac_f`` / ``jac_g`` are optional analytic Jacobians; when absent the
    ``jacobian_f`` / ``jacobian_g`` accessors fall back to central
    differences.  ``residual_wrap`` post-processes raw measurement
    residuals componentwise (angle wrapping); identity when None.
    Models are immutable after construction and evaluation is pure.
    """

    state_dim: int
    meas_dim: int
    transition: object
    measurement: object
    process_cov: np.ndarray
    meas_cov: np.ndarray
    jac_f: object = None
    jac_g: object = None
    residual_wrap: object = None

    def __post_init__(self) -> None:
        q = _spd_check(self.process_cov, "process_cov")
        r = _spd_check(self.meas_cov, "meas_cov")
        if q.shape != (self.state_dim, self.state_dim):
            raise ValueError("process_cov shape does not match state_dim")
        if r.shape != (self.meas_dim, self.meas_dim):
            raise ValueError("meas_cov shape does not match meas_dim")
        object.__setattr__(self, "process_cov", q)
        object.__setattr__(self, "meas_cov", r)

    def f(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.transition(x), dtype=float))

    def g(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.measurement(x), dtype=float))

    def jacobian_f(self, x: np.ndarray) -> np.ndarray:
        if self.jac_f is not None:
            return np.atleast_2d(np.asarray(self.jac_f(x), dtype=float))
        return fd_jacobian(self.f, x)

    def jacobian_g(self, x: np.ndarray) -> np.ndarray:
        if self.jac_g is not None:
            return np.atleast_2d(np.asarray(self.jac_g(x), dtype=float))
        return fd_jacobian(self.g, x)

    def residual(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Wrapped measurement residual y - g(x)."""
        r = np.asarray(y, dtype=float) - self.g(x)
        if self.residual_wrap is not None:
            r = np.asarray(self.residual_wrap(r), dtype=float)
        return r

    def with_transition(self, transition, jac_f=None) -> "StateSpaceModel":
        """Copy with a new transition (per-step control binding)."""
        return replace(self, transition=transition, jac_f=jac_f)


@dataclass(frozen=True)
class MeasurementLoss:
    """Quadratic measurement loss with gradient and curvature accessors.

    ``hessian_mode`` picks the default curvature: ``gauss_newton`` is PSD
    everywhere and is the standard choice inside the iterative update;
    ``exact`` adds the residual-weighted second derivatives of g
    (finite-differenced from the Jacobian unless the model is linear).
    """

    model: StateSpaceModel
    hessian_mode: str = "gauss_newton"
    _rinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.hessian_mode not in ("exact", "gauss_newton"):
            raise ValueError(f"unknown hessian_mode {self.hessian_mode!r}")
        object.__setattr__(self, "_rinv", np.linalg.inv(self.model.meas_cov))

    def value(self, x: np.ndarray, y: np.ndarray) -> float:
        r = self.model.residual(y, x)
        v = 0.5 * float(r @ self._rinv @ r)
        if not np.isfinite(v):
            raise ValueError("loss value is not finite")
        return v

    def gradient(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        r = self.model.residual(y, x)
        jac = self.model.jacobian_g(x)
        return -(jac.T @ (self._rinv @ r))

    def hessian(self, x: np.ndarray, y: np.ndarray,
                mode: str | None = None) -> np.ndarray:
        mode = self.hessian_mode if mode is None else mode
        jac = self.model.jacobian_g(x)
        gn = jac.T @ self._rinv @ jac
        if mode == "gauss_newton":
            return gn
        if mode != "exact":
            raise ValueError(f"unknown hessian_mode {mode!r}")
        # Residual-weighted curvature: sum_k [R^{-1} r]_k * hess(g_k)(x),
        # with hess(g_k) taken as the derivative of the Jacobian row.
        r = self.model.residual(y, x)
        w = self._rinv @ r
        x = np.asarray(x, dtype=float)
        n = x.size
        curv = np.zeros((n, n))
        for j in range(n):
            h = 1e-5 * (1.0 + abs(x[j]))
            e = np.zeros(n)
            e[j] = h
            dj = (self.model.jacobian_g(x + e) - self.model.jacobian_g(x - e)) / (2.0 * h)
            curv[:, j] = dj.T @ w
        curv = 0.5 * (curv + curv.T)
        return gn - curv


def measurement_loss(model: StateSpaceModel,
                     hessian_mode: str = "gauss_newton") -> MeasurementLoss:
    return MeasurementLoss(model, hessian_mode)


def loss_value(model: StateSpaceModel, x: np.ndarray, y: np.ndarray) -> float:
    return measurement_loss(model).value(x, y)


def loss_gradient(model: StateSpaceModel, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return measurement_loss(model).gradient(x, y)


def loss_hessian(model: StateSpaceModel, x: np.ndarray, y: np.ndarray,
                 mode: str = "gauss_newton") -> np.ndarray:
    return measurement_loss(model).hessian(x, y, mode)


def build_linear_model(a: np.ndarray, c: np.ndarray, q: np.ndarray,
                       r: np.ndarray) -> StateSpaceModel:
    """Linear-Gaussian model f(x) = A x, g(x) = C x with constant Jacobians."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.atleast_2d(np.asarray(c, dtype=float))
    n, m = a.shape[0], c.shape[0]
    if a.shape != (n, n) or c.shape[1] != n:
        raise ValueError("A must be n x n and C must be m x n")
    return StateSpaceModel(
        state_dim=n,
        meas_dim=m,
        transition=lambda x: a @ x,
        measurement=lambda x: c @ x,
        process_cov=q,
        meas_cov=r,
        jac_f=lambda x: a,
        jac_g=lambda x: c,
    )


# --- noise specifications ---------------------------------------------------


@dataclass(frozen=True)
class NoiseComponent:
    """One mixture branch.

    kind ``gaussian``: ``cov`` is a covariance matrix (or scalar * I).
    kind ``laplace``: by default ``cov`` is read as a diagonal covariance,
        so the per-component scale is sqrt(cov_ii / 2); with
        ``laplace_param='scale'`` the scalar parameter is passed straight
        through as the Laplace scale b.
    kind ``beta``: additive i.i.d. beta(a, b) draws per component,
        un-centered unless ``centered`` (support [0, 1]; the induced bias
        is deliberate in contamination benchmarks).
    """

    kind: str
    cov: np.ndarray | float | None = None
    a: float = 1.0
    b: float = 1.0
    centered: bool = False
    laplace_param: str = "cov"

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian", "laplace", "beta"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind in ("gaussian", "laplace") and self.cov is None:
            raise ValueError(f"{self.kind} component needs a covariance/scale")
        if self.kind == "beta" and (self.a <= 0 or self.b <= 0):
            raise ValueError("beta shape parameters must be positive")
        if self.laplace_param not in ("cov", "scale"):
            raise ValueError("laplace_param must be 'cov' or 'scale'")

    def draw(self, dim: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "gaussian":
            cov = self._cov_matrix(dim)
            return np.linalg.cholesky(cov) @ rng.standard_normal(dim)
        if self.kind == "laplace":
            if self.laplace_param == "scale":
                scale = np.full(dim, float(self.cov))
            else:
                scale = np.sqrt(np.diag(self._cov_matrix(dim)) / 2.0)
            return rng.laplace(0.0, scale)
        draw = rng.beta(self.a, self.b, size=dim)
        if self.centered:
            draw = draw - self.a / (self.a + self.b)
        return draw

    def _cov_matrix(self, dim: int) -> np.ndarray:
        if np.ndim(self.cov) == 0:
            return float(self.cov) * np.eye(dim)
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if cov.shape != (dim, dim):
            raise ValueError(f"component covariance shape {cov.shape} != ({dim},{dim})")
        return cov


@dataclass(frozen=True)
class NoiseSpec:
    """Mixture of noise components; weights must sum to 1.

    One branch is chosen per draw (the whole vector is contaminated or
    not), then the branch's components are sampled i.i.d.
    """

    components: tuple

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise ValueError("noise spec needs at least one component")
        weights = np.array([w for w, _ in comps], dtype=float)
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"mixture weights must be >= 0 and sum to 1, got {weights}")
        object.__setattr__(self, "components", comps)


def gaussian_noise(cov) -> NoiseSpec:
    return NoiseSpec(((1.0, NoiseComponent("gaussian", cov=cov)),))


def laplace_noise(cov, param: str = "cov") -> NoiseSpec:
    return NoiseSpec(((1.0, NoiseComponent("laplace", cov=cov, laplace_param=param)),))


def beta_noise(a: float, b: float, centered: bool = False) -> NoiseSpec:
    return NoiseSpec(((1.0, NoiseComponent("beta", a=a, b=b, centered=centered)),))


def mixture(*weighted: tuple) -> NoiseSpec:
    """mixture((w1, comp1), (w2, comp2), ...)."""
    return NoiseSpec(tuple(weighted))


def sample_noise(spec: NoiseSpec, dim: int, rng: np.random.Generator) -> np.ndarray:
    """One draw from the mixture; the branch is selected once per draw."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    u = rng.random()
    acc = 0.0
    comp = spec.components[-1][1]
    for w, c in spec.components:
        acc += w
        if u < acc:
            comp = c
            break
    return comp.draw(dim, rng)
