"""Adaptive TAP inference for binary-binary RBMs.

The joint system over all ``N = N_v + N_h`` units is written with a symmetric
coupling matrix ``J = [[0, W], [W.T, 0]]`` and biases ``H = (U_v, U_h)``.  Two
approximations of the same distribution exchange Gaussian messages
``exp(B x - A x^2 / 2)``:

* a factorized one holding the binary priors,
* a Gaussian one holding the couplings, whose covariance
  ``C2 = (diag(A2) - J)^{-1}`` needs a dense inverse every iteration.

At a fixed point both agree on the means and variances of every unit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import InputError, NumericalError
from .model import GrbmModel
from .tap import TapSettings, run_tap, tap_step
from .units import Family

MAX_RETRIES = 8


@dataclass(frozen=True)
class AdaTapSettings:
    max_iters: int = 500
    tolerance: float = 1e-12
    damping: float = 0.5

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")
        if not 0 <= self.damping < 1:
            raise InputError("damping must lie in [0, 1)")


@dataclass
class AdaTapState:
    A1: np.ndarray
    B1: np.ndarray
    A2: np.ndarray
    B2: np.ndarray
    a1: np.ndarray
    c1: np.ndarray
    a2: np.ndarray
    C2: np.ndarray


@dataclass
class AdaTapResult:
    a: np.ndarray
    c: np.ndarray
    state: AdaTapState
    iterations: int
    converged: bool
    residual: float
    seconds_per_iteration: float

    def split(self, n_visible):
        """``(a_v, c_v, a_h, c_h)`` blocks."""
        return self.a[:n_visible], self.c[:n_visible], self.a[n_visible:], self.c[n_visible:]


def build_joint(model: GrbmModel):
    """Block coupling matrix and bias vector over visible then hidden units."""
    if any(p.family is not Family.BINARY for p in model.layers) or model.depth != 1:
        raise InputError("adaptive TAP is implemented for binary-binary RBMs only")
    n_v, n_h = model.W.shape
    J = np.zeros((n_v + n_h, n_v + n_h))
    J[:n_v, n_v:] = model.W
    J[n_v:, :n_v] = model.W.T
    H = np.concatenate([model.layers[0].U, model.layers[1].U])
    return J, H


def _invert(A2, J):
    C2 = np.linalg.inv(np.diag(A2) - J)
    d = np.diag(C2)
    if not (np.all(np.isfinite(C2)) and np.all(d > 0)):
        raise np.linalg.LinAlgError("non-positive variance")
    return C2


def adatap_run(J, H, settings: AdaTapSettings | None = None, A1=None, B1=None) -> AdaTapResult:
    """Iterate prior and interaction updates from ``A1 = B1 = 0`` (by default).

    If ``diag(A2) - J`` has no valid inverse, ``A2`` is pulled back towards
    its previous value up to ``MAX_RETRIES`` times before giving up.
    """
    settings = settings or AdaTapSettings()
    J = np.asarray(J, dtype=float)
    H = np.asarray(H, dtype=float)
    n = H.size
    if J.shape != (n, n):
        raise InputError("J must be square and match H")
    if not np.array_equal(J, J.T):
        raise InputError("J must be symmetric")
    A1 = np.zeros(n) if A1 is None else np.array(A1, dtype=float)
    B1 = np.zeros(n) if B1 is None else np.array(B1, dtype=float)
    d = settings.damping
    prev_A2 = None
    a1_old = None
    residual = np.inf
    converged = False
    state = None
    started = time.perf_counter()
    it = 0
    for it in range(1, settings.max_iters + 1):
        # prior side: binary moments of the tilted prior, then extrinsic message
        a1 = special.expit(B1 - 0.5 * A1)
        c1 = a1 * special.expit(-(B1 - 0.5 * A1))
        A2 = 1.0 / c1 - A1
        B2 = a1 / c1 - B1
        for attempt in range(MAX_RETRIES + 1):
            try:
                C2 = _invert(A2, J)
                break
            except np.linalg.LinAlgError:
                if prev_A2 is None or attempt == MAX_RETRIES:
                    raise NumericalError("coupling covariance is singular", iteration=it) from None
                A2 = 0.5 * (A2 + prev_A2)
        prev_A2 = A2
        # interaction side: Gaussian moments, then extrinsic message back
        a2 = C2 @ (B2 + H)
        diag = np.diag(C2)
        A1_new = 1.0 / diag - A2
        B1_new = a2 / diag - B2
        A1 = (1 - d) * A1_new + d * A1
        B1 = (1 - d) * B1_new + d * B1
        state = AdaTapState(A1, B1, A2, B2, a1, c1, a2, C2)
        if a1_old is not None:
            residual = max(np.mean((a1 - a1_old) ** 2), np.mean((a1 - a2) ** 2))
            if residual <= settings.tolerance:
                converged = True
                break
        a1_old = a1
    per_iter = (time.perf_counter() - started) / max(it, 1)
    if state is None:
        raise InputError("max_iters must be at least 1")
    return AdaTapResult(state.a1, state.c1, state, it, converged, float(residual), per_iter)


def time_per_iteration(fn, repeats=5):
    """Median wall time of ``fn()`` over several calls."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def compare_with_tap(model: GrbmModel, tap_settings: TapSettings | None = None, ada_settings=None, repeats=5):
    """Moment agreement and per-iteration cost of both inference schemes.

    TAP starts from the visible prior means so both runs target the same
    weak-coupling fixed point.
    """
    J, H = build_joint(model)
    tap_settings = tap_settings or TapSettings(tolerance=1e-14, max_iters=5000)
    ada = adatap_run(J, H, ada_settings)
    start = special.expit(model.layers[0].U)
    tap = run_tap(model, start, settings=tap_settings)
    a_tap = np.concatenate([tap.a_v, tap.a_h])
    c_tap = np.concatenate([tap.c_v, tap.c_h])

    one_ada = AdaTapSettings(max_iters=1)
    tap_time = time_per_iteration(lambda: tap_step(model, tap.state), repeats)
    ada_time = time_per_iteration(lambda: adatap_run(J, H, one_ada), repeats)
    return {
        "max_diff_a": float(np.max(np.abs(ada.a - a_tap))),
        "max_diff_c": float(np.max(np.abs(ada.c - c_tap))),
        "tap_converged": tap.converged,
        "adatap_converged": ada.converged,
        "tap_iterations": tap.iterations,
        "adatap_iterations": ada.iterations,
        "tap_seconds_per_iteration": tap_time,
        "adatap_seconds_per_iteration": ada_time,
        "j_symmetric": bool(np.array_equal(J, J.T)),
    }
