"""Shared machinery for benchmark scenarios.

A scenario simulates ground truth and measurements once per trial (all
filters consume the same realization, so comparisons are paired) and
knows how to run each supported filter over that data.  Vector-state
scenarios share the predict/update loop below; SLAM and the manifold
scenario have their own loops.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..baselines import ekf_predict, ekf_update, kf_update, ukf_predict, ukf_update
from ..gaussian import GaussianBelief, NotSPDError
from ..model import StateSpaceModel, measurement_loss
from ..nano import NanoConfig, nano_predict, nano_update
from ..sigma import TransformParams

VECTOR_FILTERS = ("kf", "ekf", "ukf", "nano", "nano-df")


def split_rngs(seed: int, n: int = 3) -> list[np.random.Generator]:
    """Independent generators for initial state, process, and measurement noise."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2.0 * np.pi)


@dataclass
class FilterRun:
    """Per-trial output of one filter."""

    estimates: np.ndarray
    step_times_ms: np.ndarray
    diverged: bool = False

    @property
    def median_step_ms(self) -> float:
        return float(np.median(self.step_times_ms)) if len(self.step_times_ms) else 0.0


@dataclass
class VectorTrialData:
    """Truth and measurements of one vector-state trial."""

    truths: np.ndarray
    measurements: np.ndarray
    models: list  # StateSpaceModel per step (control-bound)
    init_belief: GaussianBelief


def run_vector_filter(filter_id: str, data: VectorTrialData,
                      nano_cfg: NanoConfig, quad: TransformParams,
                      record_time: bool = True) -> FilterRun:
    """Generic predict/update loop for vector-state scenarios.

    Divergence (non-finite estimate or an SPD failure) freezes the last
    valid belief for the remaining steps and flags the run.
    """
    if filter_id == "nano-df":
        nano_cfg = NanoConfig(
            max_iters=nano_cfg.max_iters, gamma=nano_cfg.gamma, eta=nano_cfg.eta,
            pd_strategy=nano_cfg.pd_strategy, derivative_mode="derivative_free",
            quad=nano_cfg.quad, epsilon=nano_cfg.epsilon)

    belief = data.init_belief
    horizon = len(data.truths)
    estimates = np.empty((horizon, belief.dim))
    times = np.zeros(horizon)
    diverged = False
    for t in range(horizon):
        model = data.models[t]
        y = data.measurements[t]
        if not diverged:
            tic = time.perf_counter() if record_time else 0.0
            try:
                belief = _filter_step(filter_id, belief, model, y, nano_cfg, quad)
                if not np.all(np.isfinite(belief.mean)):
                    raise FloatingPointError("non-finite estimate")
            except (NotSPDError, np.linalg.LinAlgError, FloatingPointError, ValueError):
                diverged = True
            if record_time:
                times[t] = (time.perf_counter() - tic) * 1e3
        estimates[t] = belief.mean
    return FilterRun(estimates, times, diverged)


def _filter_step(filter_id: str, belief: GaussianBelief, model: StateSpaceModel,
                 y: np.ndarray, nano_cfg: NanoConfig,
                 quad: TransformParams) -> GaussianBelief:
    if filter_id == "kf":
        a = model.jacobian_f(belief.mean)
        c = model.jacobian_g(belief.mean)
        prior = GaussianBelief(a @ belief.mean,
                               a @ belief.cov @ a.T + model.process_cov)
        return kf_update(prior, c, model.meas_cov, y)
    if filter_id == "ekf":
        return ekf_update(ekf_predict(belief, model), model, y)
    if filter_id == "ukf":
        return ukf_update(ukf_predict(belief, model, quad), model, y, quad)
    if filter_id in ("nano", "nano-df"):
        prior = nano_predict(belief, model, nano_cfg.quad)
        loss = measurement_loss(model)
        posterior, _ = nano_update(prior, loss, y, nano_cfg)
        return posterior
    raise ValueError(f"unknown filter {filter_id!r}")
