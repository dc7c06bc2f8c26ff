"""SO(3) / product-manifold arithmetic and the error-state update.

States live on products of SO(3) blocks and Euclidean blocks.  Increments
use the retraction pair

    x boxplus d   (rotation blocks: R Exp(d); Euclidean blocks: +)
    x1 boxminus x2 (rotation blocks: Log(R2^T R1); Euclidean blocks: -)

with the right-multiplication convention throughout.  Estimation runs on
the Euclidean error state delta = x boxminus nominal: the nominal state
propagates noise-free, the tangent-space Gaussian carries uncertainty,
the measurement update runs the natural-gradient iteration on that
Gaussian through losses evaluated at nominal boxplus delta, and the
refined error is finally composed back into the nominal and reset to
zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianBelief, symmetrize
from .model import fd_jacobian
from .nano import NanoConfig, UpdateTrace, nano_update

__all__ = [
    "Rotation",
    "ManifoldState",
    "ErrorBelief",
    "TangentLoss",
    "so3_exp",
    "so3_log",
    "skew",
    "boxplus",
    "boxminus",
    "error_state_predict",
    "error_state_nano_update",
    "compose_and_reset",
]

_SMALL_ANGLE = 1e-8
_ORTHO_TOL = 1e-10


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]_x."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_exp(r: np.ndarray) -> "Rotation":
    """Rodrigues exponential; series fallback below the small-angle switch."""
    r = np.asarray(r, dtype=float)
    angle = float(np.linalg.norm(r))
    k = skew(r)
    if angle < _SMALL_ANGLE:
        # sin(a)/a ~ 1 - a^2/6, (1-cos a)/a^2 ~ 1/2 - a^2/24
        mat = np.eye(3) + (1.0 - angle**2 / 6.0) * k \
            + (0.5 - angle**2 / 24.0) * (k @ k)
    else:
        mat = np.eye(3) + (np.sin(angle) / angle) * k \
            + ((1.0 - np.cos(angle)) / angle**2) * (k @ k)
    return Rotation(mat)


def so3_log(rotation: "Rotation") -> np.ndarray:
    """Inverse of so3_exp; unique for angles below pi (guarded near pi)."""
    mat = rotation.matrix
    cos_angle = np.clip((np.trace(mat) - 1.0) / 2.0, -1.0, 1.0)
    angle = float(np.arccos(cos_angle))
    if angle > np.pi - 1e-6:
        raise ValueError(f"rotation angle {angle:.6f} too close to pi; axis ambiguous")
    axis_vee = np.array([mat[2, 1] - mat[1, 2],
                         mat[0, 2] - mat[2, 0],
                         mat[1, 0] - mat[0, 1]])
    if angle < _SMALL_ANGLE:
        return 0.5 * (1.0 + angle**2 / 6.0) * axis_vee
    return (angle / (2.0 * np.sin(angle))) * axis_vee


@dataclass(frozen=True)
class Rotation:
    """3x3 rotation matrix; re-orthonormalized (polar projection) on drift."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (3, 3):
            raise ValueError("rotation matrix must be 3x3")
        err = np.abs(mat.T @ mat - np.eye(3)).max()
        if err > _ORTHO_TOL:
            u, _, vt = np.linalg.svd(mat)
            mat = u @ vt
        if np.linalg.det(mat) < 0:
            raise ValueError("matrix has negative determinant; not a rotation")
        object.__setattr__(self, "matrix", mat)

    def compose(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.matrix @ v


@dataclass(frozen=True)
class ManifoldState:
    """Ordered blocks, each a Rotation or a Euclidean vector.

    The block layout is fixed at construction; the tangent dimension is 3
    per rotation block plus the length of each vector block.
    """

    blocks: tuple

    def __post_init__(self) -> None:
        norm = []
        for b in self.blocks:
            if isinstance(b, Rotation):
                norm.append(b)
            else:
                norm.append(np.atleast_1d(np.asarray(b, dtype=float)))
        object.__setattr__(self, "blocks", tuple(norm))

    @property
    def tangent_dim(self) -> int:
        return sum(3 if isinstance(b, Rotation) else b.size for b in self.blocks)

    def is_euclidean(self) -> bool:
        return all(not isinstance(b, Rotation) for b in self.blocks)


def boxplus(x: ManifoldState, d: np.ndarray) -> ManifoldState:
    """Retract a tangent increment: rotations via Exp, vectors via +."""
    d = np.asarray(d, dtype=float)
    if d.size != x.tangent_dim:
        raise ValueError(f"tangent dim {d.size} != layout dim {x.tangent_dim}")
    out = []
    k = 0
    for b in x.blocks:
        if isinstance(b, Rotation):
            out.append(b.compose(so3_exp(d[k:k + 3])))
            k += 3
        else:
            out.append(b + d[k:k + b.size])
            k += b.size
    return ManifoldState(tuple(out))


def boxminus(x1: ManifoldState, x2: ManifoldState) -> np.ndarray:
    """Local difference: rotations via Log(R2^T R1), vectors via -."""
    if len(x1.blocks) != len(x2.blocks):
        raise ValueError("states have different block layouts")
    parts = []
    for b1, b2 in zip(x1.blocks, x2.blocks):
        if isinstance(b1, Rotation) != isinstance(b2, Rotation):
            raise ValueError("states have different block layouts")
        if isinstance(b1, Rotation):
            parts.append(so3_log(b2.inverse().compose(b1)))
        else:
            if b1.size != b2.size:
                raise ValueError("vector block sizes differ")
            parts.append(b1 - b2)
    return np.concatenate(parts)


@dataclass(frozen=True)
class ErrorBelief:
    """Nominal manifold point plus a Gaussian over its tangent space."""

    nominal: ManifoldState
    delta: GaussianBelief

    def __post_init__(self) -> None:
        if self.delta.dim != self.nominal.tangent_dim:
            raise ValueError("tangent Gaussian dimension does not match layout")


def error_state_predict(belief: ErrorBelief, f_mat: np.ndarray, b_mat: np.ndarray,
                        q: np.ndarray, nominal_step) -> ErrorBelief:
    """Advance the nominal noise-free; propagate the error covariance linearly.

    delta_mean stays zero (the error was reset after the last update);
    P <- F P F^T + B Q B^T.
    """
    if np.linalg.norm(belief.delta.mean) > 1e-12:
        raise ValueError("error mean must be zero at prediction (reset first)")
    f_mat = np.atleast_2d(np.asarray(f_mat, dtype=float))
    b_mat = np.atleast_2d(np.asarray(b_mat, dtype=float))
    nominal = nominal_step(belief.nominal)
    cov = symmetrize(f_mat @ belief.delta.cov @ f_mat.T
                     + b_mat @ np.atleast_2d(q) @ b_mat.T)
    return ErrorBelief(nominal, GaussianBelief(np.zeros(belief.delta.dim), cov))


class TangentLoss:
    """Measurement loss pulled back to the tangent space at a nominal point.

    value/gradient/hessian take the tangent coordinate delta and evaluate
    a manifold loss at nominal boxplus delta.  A manifold loss provides
    ``value(state, y)``; it may also provide tangent-space
    ``gradient(state, y)`` and ``hessian(state, y, mode)`` (exact chain
    rule on purely Euclidean layouts), or ``residual(state, y)`` with an
    ``rinv`` weight so the gradient and Gauss-Newton curvature come from a
    finite-differenced residual Jacobian.  Failing all that, derivatives
    are finite-differenced from the scalar value.
    """

    def __init__(self, manifold_loss, nominal: ManifoldState,
                 hessian_mode: str = "gauss_newton"):
        self._loss = manifold_loss
        self._nominal = nominal
        self.hessian_mode = hessian_mode

    def _residual_jacobian(self, d: np.ndarray, y: np.ndarray) -> np.ndarray:
        return fd_jacobian(
            lambda dd: self._loss.residual(boxplus(self._nominal, dd), y), d)

    def value(self, d: np.ndarray, y: np.ndarray) -> float:
        return self._loss.value(boxplus(self._nominal, d), y)

    def gradient(self, d: np.ndarray, y: np.ndarray) -> np.ndarray:
        if hasattr(self._loss, "gradient"):
            return self._loss.gradient(boxplus(self._nominal, d), y)
        if hasattr(self._loss, "residual"):
            res = self._loss.residual(boxplus(self._nominal, d), y)
            return self._residual_jacobian(d, y).T @ (self._loss.rinv @ res)
        return fd_jacobian(lambda dd: self.value(dd, y), d)[0]

    def hessian(self, d: np.ndarray, y: np.ndarray,
                mode: str | None = None) -> np.ndarray:
        mode = self.hessian_mode if mode is None else mode
        if hasattr(self._loss, "hessian"):
            return self._loss.hessian(boxplus(self._nominal, d), y, mode)
        if mode == "gauss_newton" and hasattr(self._loss, "residual"):
            jac = self._residual_jacobian(d, y)
            return jac.T @ self._loss.rinv @ jac
        from .model import fd_hessian
        return fd_hessian(lambda dd: self.value(dd, y), d)


def error_state_nano_update(belief: ErrorBelief, manifold_loss, y: np.ndarray,
                            cfg: NanoConfig = NanoConfig()) -> tuple[ErrorBelief, UpdateTrace]:
    """Natural-gradient update on the tangent Gaussian.

    Runs the ordinary iteration with every loss evaluation routed through
    nominal boxplus delta; on purely Euclidean layouts this is the plain
    update in shifted coordinates.
    """
    inner = manifold_loss._loss if isinstance(manifold_loss, TangentLoss) else manifold_loss
    mode = getattr(manifold_loss, "hessian_mode", "gauss_newton")
    tangent = TangentLoss(inner, belief.nominal, mode)
    posterior, trace = nano_update(belief.delta, tangent, y, cfg)
    return ErrorBelief(belief.nominal, posterior), trace


def compose_and_reset(belief: ErrorBelief) -> ErrorBelief:
    """Fold the error mean into the nominal and zero it; covariance unchanged."""
    nominal = boxplus(belief.nominal, belief.delta.mean)
    delta = GaussianBelief(np.zeros(belief.delta.dim), belief.delta.cov)
    return ErrorBelief(nominal, delta)
