"""Denoising binary signals observed through a binary symmetric channel.

With flip probability ``p`` an observation ``y`` moves the prior log-odds of
each site by ``-D``, where ``D = ln(p / (1 - p)) * (2y - 1)``; for ``p < 1/2``
this pulls every site towards its observed value.  Three estimators are provided:
the pointwise posterior mean under a factorized prior, nearest exemplar, and
TAP inference in an RBM whose visible fields carry the channel evidence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InputError
from .model import GrbmModel
from .tap import TapSettings, run_tap_batch
from .units import Family


@dataclass
class DenoiseResult:
    means: np.ndarray
    estimate: np.ndarray
    method: str
    mcc: float | None = None


def _check_p(p):
    if not 0 <= p <= 0.5:
        raise InputError("flip probability must lie in [0, 0.5]")


def _check_binary(x, name):
    x = np.asarray(x, dtype=float)
    if not np.all((x == 0) | (x == 1)):
        raise InputError(f"{name} must be binary")
    return x


def round_half_up(means):
    return (np.asarray(means) >= 0.5).astype(float)


def channel_field(y, p):
    """Log-odds shift implied by observing ``y``; only valid for ``0 < p < 1/2``."""
    return np.log(p / (1 - p)) * (2 * np.asarray(y, dtype=float) - 1)


def corrupt_bsc(x, p, seed=None, rng=None):
    x = _check_binary(x, "x")
    _check_p(p)
    rng = rng if rng is not None else np.random.default_rng(seed)
    flips = rng.random(x.shape) < p
    return np.where(flips, 1 - x, x)


def ope_denoise(y, m, p) -> DenoiseResult:
    """Pointwise posterior mean ``sigm(logit m - D)`` per site.

    ``p = 0`` returns the observation, ``p = 1/2`` the prior magnetizations.
    """
    y = _check_binary(y, "y")
    _check_p(p)
    m = np.broadcast_to(np.asarray(m, dtype=float), y.shape)
    if np.any((m <= 0) | (m >= 1)):
        raise InputError("prior magnetizations must lie strictly inside (0, 1)")
    if p == 0:
        means = y.copy()
    elif p == 0.5:
        means = m.copy()
    else:
        means = special.expit(special.logit(m) - channel_field(y, p))
    return DenoiseResult(means, round_half_up(means), "ope")


def knn_denoise(y, exemplars, k=1) -> DenoiseResult:
    """Nearest exemplar in Hamming distance; lowest index wins ties."""
    y = _check_binary(y, "y")
    single = y.ndim == 1
    y = np.atleast_2d(y)
    E = np.asarray(exemplars, dtype=float)
    if E.ndim != 2 or E.shape[0] == 0:
        raise InputError("need a non-empty exemplar matrix")
    if E.shape[1] != y.shape[1]:
        raise InputError("exemplars and observations differ in length")
    if k != 1:
        raise InputError("only k = 1 is supported")
    # Hamming distance for 0/1 data via two matrix products
    dist = y @ (1 - E).T + (1 - y) @ E.T
    nearest = E[np.argmin(dist, axis=1)]
    if single:
        nearest = nearest[0]
    return DenoiseResult(nearest.copy(), nearest.copy(), "knn")


def tap_denoise(model: GrbmModel, y, p, settings: TapSettings | None = None) -> DenoiseResult:
    """TAP posterior means with visible fields shifted by the channel evidence.

    Accepts one row or a matrix of rows.  Inference starts from the pointwise
    estimate with zero variances.
    """
    if model.layers[0].family is not Family.BINARY:
        raise InputError("channel denoising needs binary visible units")
    _check_p(p)
    Y = _check_binary(y, "y")
    single = Y.ndim == 1
    Y = np.atleast_2d(Y)
    vis = model.layers[0]
    m = special.expit(vis.U)
    if p == 0:
        out = Y.copy()
    else:
        start = ope_denoise(Y, m, p).means
        if p == 0.5:
            shifted = [model]
        else:
            shifted = [_shift_visible(model, row, p) for row in Y]
        settings = settings or TapSettings()
        if len(shifted) == 1:
            sols = run_tap_batch(shifted[0], start, settings=settings)
            out = np.stack([s.a_v for s in sols])
        else:
            out = np.empty_like(Y)
            for i, mdl in enumerate(shifted):
                out[i] = run_tap_batch(mdl, start[i], settings=settings)[0].a_v
    if single:
        out = out[0]
    return DenoiseResult(out, round_half_up(out), "tap")


def _shift_visible(model, y, p):
    vis = model.layers[0]
    shifted = model.copy()
    shifted.layers[0] = vis.with_values(U=vis.U - channel_field(y, p))
    return shifted


def mcc(estimate, truth) -> float:
    """Matthews correlation coefficient; zero when any marginal count is zero."""
    est = np.asarray(estimate).astype(bool).ravel()
    tru = np.asarray(truth).astype(bool).ravel()
    if est.shape != tru.shape:
        raise InputError("estimate and truth differ in length")
    tp = float(np.sum(est & tru))
    tn = float(np.sum(~est & ~tru))
    fp = float(np.sum(est & ~tru))
    fn = float(np.sum(~est & tru))
    den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if den == 0:
        return 0.0
    return (tp * tn - fp * fn) / np.sqrt(den)
