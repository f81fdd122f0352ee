"""Deep Boltzmann machines trained with mean-field (TAP) inference only.

Inference, free energies and gradients are the layered routines of
:mod:`tapgrbm.tap` and :mod:`tapgrbm.training`; a one-hidden-layer model goes
through exactly the same code as an RBM.  This module adds greedy layerwise
pretraining and the joint training loop.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .errors import InputError
from .model import DbmModel, GrbmModel, init_model
from .tap import TapSettings, run_clamped_tap_batch, run_tap
from .training import GradientSet, TrainConfig, compute_gradients, train_epochs
from .units import Family, UnitParams, conditional_mean

DEFAULT_PRETRAIN_EPOCHS = 50
DEFAULT_PRETRAIN_GAMMA = 0.001


def dbm_tap_run(dbm: DbmModel, init, settings: TapSettings | None = None):
    """Free TAP run over all layers from a visible initialization."""
    return run_tap(dbm, init, settings=settings)


def dbm_clamped_run(dbm: DbmModel, X, settings: TapSettings | None = None):
    return run_clamped_tap_batch(dbm, X, settings)


def dbm_gradients(dbm: DbmModel, batch, clamped, free) -> GradientSet:
    """Data terms from the clamped solutions, model terms from the free ones."""
    if len(clamped) != np.atleast_2d(batch).shape[0]:
        raise InputError("need one clamped solution per batch row")
    return compute_gradients(dbm, batch, free, clamped)


def propagate(rbm: GrbmModel, X, mode="mean", rng=None):
    """Hidden representation of ``X``: conditional means or Bernoulli samples."""
    means = conditional_mean(rbm.hid_params, X @ rbm.W)
    if mode == "mean":
        return means
    if mode == "sample":
        if rbm.hid_params.family is not Family.BINARY:
            raise InputError("sampled propagation needs binary hidden units")
        rng = rng if rng is not None else np.random.default_rng()
        return (rng.random(means.shape) < means).astype(float)
    raise InputError(f"unknown propagation mode {mode!r}")


def pretrain_greedy(
    sizes,
    data,
    config: TrainConfig | None = None,
    vis_family="binary",
    hid_family="binary",
    propagation="mean",
    sigma=1e-3,
    callbacks=(),
):
    """Train a stack of RBMs bottom-up and assemble them into one model.

    Layer ``l`` keeps the hidden priors of the ``l``-th RBM; the visible priors
    of every RBM above the first are only used during its own training.
    Returns ``(model, logs)``; a single hidden layer yields a plain RBM.
    """
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise InputError("need at least one hidden layer")
    config = config or TrainConfig(epochs=DEFAULT_PRETRAIN_EPOCHS, gamma=DEFAULT_PRETRAIN_GAMMA)
    data = np.asarray(data, dtype=float)
    rbms, logs = [], []
    X = data
    fam = vis_family
    for l in range(1, len(sizes)):
        rbm = init_model((sizes[l - 1], sizes[l]), fam, hid_family, X, sigma=sigma, seed=config.seed + l - 1)
        _, history = train_epochs(rbm, X, replace(config, seed=config.seed + l - 1), callbacks)
        rbms.append(rbm)
        logs.append(history)
        if l + 1 < len(sizes):
            rng = np.random.default_rng(np.random.SeedSequence([config.seed, l]))
            X = propagate(rbm, X, propagation, rng)
            fam = hid_family
    if len(rbms) == 1:
        return rbms[0], logs
    layers = [rbms[0].vis_params] + [r.hid_params for r in rbms]
    model = DbmModel(layers, [r.W.copy() for r in rbms], {"seed": config.seed, "epoch": 0, "pretrained": True})
    return model, logs


def train_dbm_joint(dbm: DbmModel, data, config: TrainConfig | None = None, momentum=False, callbacks=()):
    """Joint training of all layers; momentum is off unless requested."""
    config = config or TrainConfig()
    if not momentum:
        config = replace(config, eta=0.0)
    return train_epochs(dbm, data, config, callbacks)


def init_dbm(sizes, data=None, vis_family="binary", hid_family="binary", sigma=1e-3, seed=0):
    """Untrained deep model with Gaussian weights and data-matched visible priors."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2:
        raise InputError("need at least one hidden layer")
    rbm = init_model(sizes[:2], vis_family, hid_family, data, sigma=sigma, seed=seed)
    if len(sizes) == 2:
        return rbm
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    layers = [rbm.vis_params, rbm.hid_params] + [UnitParams.neutral(hid_family, n) for n in sizes[2:]]
    weights = [rbm.W] + [rng.normal(0.0, sigma, (sizes[l], sizes[l + 1])) for l in range(1, len(sizes) - 1)]
    return DbmModel(layers, weights, {"seed": seed, "epoch": 0})
