"""Minibatch gradient ascent on the TAP log-likelihood.

Gradients are "data minus model".  Data terms use the visible rows and the
clamped hidden moments, model terms average over the free-running TAP
solutions::

    dW_l    = <a_{l-1} a_l^T + W_l * (c_{l-1} c_l^T)>_clamped - <same>_free
    dtheta0 = <d ln P_0(x)>_data - <d ln Z_0(B, A)>_free
    dtheta_l = <d ln Z_l(B, A)>_clamped - <d ln Z_l(B, A)>_free

With one hidden layer the clamped moments are the exact conditionals, so
``dW = <x f(x @ W)^T> - <a_v a_h^T + W * (c_v c_h^T)>``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError
from .likelihood import landscape_report, tap_log_likelihood
from .model import DbmModel, save_model
from .tap import TapSettings, run_clamped_tap_batch, run_tap_batch
from .units import Family, grad_log_prior, grad_log_z, in_support
from . import data_io

log = logging.getLogger(__name__)

RHO_CLIP = 1e-6


@dataclass
class TrainConfig:
    gamma: float = 0.005
    epsilon: float = 0.001
    eta: float = 0.5
    batch_size: int = 100
    n_solutions: int = 100
    epochs: int = 5
    seed: int = 0
    tap: TapSettings = field(default_factory=TapSettings)
    monitor_size: int = 1000
    monitor: bool = True
    gamma_final: float | None = None
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if not self.gamma >= 0:
            raise InputError("gamma must be non-negative")
        if not 0 <= self.eta < 1:
            raise InputError("eta must lie in [0, 1)")
        if self.batch_size < 1 or self.n_solutions < 1:
            raise InputError("batch size and number of solutions must be at least 1")
        if self.epsilon < 0:
            raise InputError("epsilon must be non-negative")

    def learning_rate(self, epoch):
        """Constant, or linear decay to ``gamma_final`` over the epochs."""
        if self.gamma_final is None or self.epochs <= 1:
            return self.gamma
        frac = (epoch - 1) / (self.epochs - 1)
        return self.gamma + frac * (self.gamma_final - self.gamma)


@dataclass
class GradientSet:
    weights: list
    layers: list

    @property
    def dW(self):
        return self.weights[0]

    @property
    def d_vis_params(self):
        return self.layers[0]

    @property
    def d_hid_params(self):
        return self.layers[1]


def _stack(solutions, attr, l):
    return np.stack([getattr(s.state, attr)[l] for s in solutions])


def _moment_terms(model, a, c):
    """Per-weight ``<a_{l-1} a_l^T + W * c_{l-1} c_l^T>`` over the rows of a, c."""
    n = a[0].shape[0]
    return [(a[l].T @ a[l + 1] + W * (c[l].T @ c[l + 1])) / n for l, W in enumerate(model.weights)]


def _mean_grads(grads):
    return {k: np.mean(v, axis=0) for k, v in grads.items()}


def compute_gradients(model: DbmModel, batch, solutions, clamped=None) -> GradientSet:
    """Likelihood gradients from a minibatch and free TAP solutions.

    Non-converged entries of ``solutions`` are ignored.  ``clamped`` may pass
    precomputed clamped solutions for ``batch``.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] == 0:
        raise InputError("empty batch")
    free = [s for s in solutions if s.converged]
    if not free:
        raise InputError("no converged TAP solutions")
    if clamped is None:
        clamped = run_clamped_tap_batch(model, batch)
    L = len(model.layers)
    ca = [_stack(clamped, "a", l) for l in range(L)]
    cc = [_stack(clamped, "c", l) for l in range(L)]
    fa = [_stack(free, "a", l) for l in range(L)]
    fc = [_stack(free, "c", l) for l in range(L)]
    data_w = _moment_terms(model, ca, cc)
    model_w = _moment_terms(model, fa, fc)
    d_weights = [d - m for d, m in zip(data_w, model_w)]

    d_layers = []
    for l, params in enumerate(model.layers):
        if l == 0:
            data = _mean_grads(grad_log_prior(params, batch))
        else:
            data = _mean_grads(grad_log_z(params, _stack(clamped, "B", l), _stack(clamped, "A", l)))
        mod = _mean_grads(grad_log_z(params, _stack(free, "B", l), _stack(free, "A", l)))
        d_layers.append({k: data[k] - mod[k] for k in params.free_names})
    return GradientSet(d_weights, d_layers)


class Trainer:
    """Holds the mutable training state: parameters and momentum buffers."""

    def __init__(self, model: DbmModel, config: TrainConfig):
        self.model = model
        self.config = config
        self.velocity = [np.zeros_like(W) for W in model.weights]
        self.skipped_batches = 0

    def apply(self, grads: GradientSet, gamma):
        cfg = self.config
        for l, W in enumerate(self.model.weights):
            v = gamma * grads.weights[l] - gamma * cfg.epsilon * W + cfg.eta * self.velocity[l]
            self.velocity[l] = v
            self.model.weights[l] = W + v
        for l, params in enumerate(self.model.layers):
            new = {}
            for name, g in grads.layers[l].items():
                value = getattr(params, name) + gamma * g
                if name == "rho":
                    value = np.clip(value, RHO_CLIP, 1 - RHO_CLIP)
                new[name] = value
            self.model.layers[l] = params.with_values(**new)

    def step(self, batch, gamma):
        """One minibatch update.  Returns False when the batch was skipped."""
        K = self.config.n_solutions
        inits = batch[np.arange(K) % batch.shape[0]]
        runs = run_tap_batch(self.model, inits, settings=self.config.tap)
        free = [s for s in runs if s.converged]
        if not free:
            self.skipped_batches += 1
            log.warning("skipping minibatch: none of %d TAP runs converged", K)
            return False
        clamped = run_clamped_tap_batch(self.model, batch, self.config.tap)
        self.apply(compute_gradients(self.model, batch, free, clamped), gamma)
        return True


def monitor_rows(data, size, seed):
    """Fixed monitoring subset chosen once before training."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2**31 - 1]))
    n = min(size, data.shape[0])
    return data[np.sort(rng.choice(data.shape[0], size=n, replace=False))]


def epoch_metrics(model, monitor, settings):
    """Normalized TAP log-likelihood, mean free energy and distinct-solution count."""
    report = landscape_report(model, monitor, settings)
    if report.n_unique == 0:
        ll = float("nan")
    else:
        ll = float(np.mean(tap_log_likelihood(model, monitor, report.solutions, settings, normalize=True)))
    return {"nll_per_unit": -ll, "ll_per_unit": ll, "mean_fe": report.mean_free_energy, "n_unique": report.n_unique}


def format_record(record):
    return " ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in record.items())


def _check_data(model, data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[1] != model.n_visible:
        raise InputError(f"training data must have {model.n_visible} columns")
    vis = model.layers[0]
    if not np.all(in_support(vis, data, relaxed=vis.family is Family.BINARY)):
        raise InputError("training data lie outside the support of the visible prior")
    return data


def train_epochs(model: DbmModel, data, config: TrainConfig | None = None, callbacks=(), trainer=None):
    """Train in place for ``config.epochs`` passes over ``data``.

    Returns ``(model, log)`` where ``log`` holds one record per epoch, with
    epoch 0 describing the model before any update (when monitoring).
    """
    config = config or TrainConfig()
    data = _check_data(model, data)
    trainer = trainer or Trainer(model, config)
    monitor = monitor_rows(data, config.monitor_size, config.seed) if config.monitor else None
    records = []

    def record(epoch, started, n_batches):
        rec = {"epoch": epoch}
        if monitor is not None:
            rec.update(epoch_metrics(model, monitor, config.tap))
        rec.update(batches=n_batches, skipped=trainer.skipped_batches, wall_time=time.perf_counter() - started)
        records.append(rec)
        log.info(format_record(rec))
        if config.log_path:
            with open(config.log_path, "a") as fh:
                fh.write(format_record(rec) + "\n")
        for cb in callbacks:
            cb(epoch, model, rec)

    if monitor is not None:
        record(0, time.perf_counter(), 0)
    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        gamma = config.learning_rate(epoch)
        n = 0
        for batch in data_io.minibatches(data, config.batch_size, config.seed, epoch):
            trainer.step(batch, gamma)
            n += 1
        model.metadata["epoch"] = model.metadata.get("epoch", 0) + 1
        record(epoch, started, n)
        if config.checkpoint_every and config.checkpoint_path and epoch % config.checkpoint_every == 0:
            try:
                save_model(model, Path(config.checkpoint_path))
            except OSError as exc:
                log.error("checkpoint failed: %s", exc)
    return model, records
