"""Mean-field (TAP) fixed-point iteration and the associated free energy.

Works for any layered model: layer ``l`` receives cavity fields from its
neighbours ``l - 1`` and ``l + 1``::

    A_l = -(c_{l-1} @ W_{l-1}**2) - (c_{l+1} @ (W_l**2).T)
    B_l = A_l * a_l + a_{l-1} @ W_{l-1} + a_{l+1} @ W_l.T

and its moments are the tilted moments of its prior at ``(B_l, A_l)``.  One
sweep updates the odd layers first and then the even ones, which for an RBM
means hidden side first, then visible side.

Arrays may be 1-D (one chain) or 2-D ``(K, n)`` (``K`` chains run together).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .model import DbmModel
from .units import Family, UnitParams, tilted_moments

DEFAULT_TOLERANCE = 1e-8
DEDUP_TOLERANCE = 1e-4


@dataclass(frozen=True)
class TapSettings:
    max_iters: int = 1000
    tolerance: float = DEFAULT_TOLERANCE
    damping: float = 0.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError("tolerance must be positive")
        if not 0 <= self.damping < 1:
            raise InputError("damping must lie in [0, 1)")
        if self.max_iters < 0:
            raise InputError("max_iters must be non-negative")


@dataclass
class TapState:
    """Per-layer moments and cavity fields; layer 0 is visible."""

    a: list
    c: list
    B: list
    A: list

    def copy(self):
        return TapState(*[[x.copy() for x in getattr(self, n)] for n in ("a", "c", "B", "A")])

    def row(self, k):
        """Single-chain view of chain ``k`` of a batched state (copied)."""
        return TapState(*[[x[k].copy() for x in getattr(self, n)] for n in ("a", "c", "B", "A")])

    def magnetizations(self):
        return np.concatenate([np.atleast_1d(x) for x in self.a], axis=-1)


@dataclass
class TapSolution:
    state: TapState
    free_energy: float
    iterations: int
    converged: bool
    residual: float
    info: dict = field(default_factory=dict)

    @property
    def a_v(self):
        return self.state.a[0]

    @property
    def c_v(self):
        return self.state.c[0]

    @property
    def a_h(self):
        return self.state.a[1]

    @property
    def c_h(self):
        return self.state.c[1]


# ---------------------------------------------------------------------------
# sweep machinery
# ---------------------------------------------------------------------------


def sweep_order(n_layers, skip_visible=False):
    """Odd layers then even layers."""
    order = list(range(1, n_layers, 2)) + list(range(0, n_layers, 2))
    return [l for l in order if not (skip_visible and l == 0)]


def cavity_fields(model: DbmModel, a, c, l):
    """``(B_l, A_l)`` from the current moments of the neighbours of layer ``l``."""
    W = model.weights
    A = np.zeros_like(a[l])
    lin = np.zeros_like(a[l])
    if l > 0:
        A -= c[l - 1] @ (W[l - 1] ** 2)
        lin += a[l - 1] @ W[l - 1]
    if l < len(W):
        A -= c[l + 1] @ (W[l] ** 2).T
        lin += a[l + 1] @ W[l].T
    return A * a[l] + lin, A


def _layer_moments(params: UnitParams, B, A, layer):
    try:
        return tilted_moments(params, B, A)
    except NumericalError as exc:
        raise NumericalError(str(exc.args[0]), layer=layer, **exc.context) from exc


def _sweep(model, a, c, B, A, order, damping):
    """One in-place sweep.  Returns the summed squared change of ``a`` per chain."""
    sq = np.zeros(a[0].shape[:-1])
    for l in order:
        B_l, A_l = cavity_fields(model, a, c, l)
        m = _layer_moments(model.layers[l], B_l, A_l, l)
        if damping:
            new_a = (1 - damping) * m.a + damping * a[l]
            new_c = (1 - damping) * m.c + damping * c[l]
        else:
            new_a, new_c = m.a, m.c
        sq += np.sum((new_a - a[l]) ** 2, axis=-1)
        a[l], c[l], B[l], A[l] = new_a, new_c, B_l, A_l
    return sq


def _run(model, a, c, settings, order):
    """Iterate batched chains, freezing each once converged."""
    K = a[0].shape[0]
    n_sites = sum(model.layers[l].size for l in order)
    B = [np.zeros_like(x) for x in a]
    A = [np.zeros_like(x) for x in a]
    iters = np.zeros(K, dtype=int)
    residual = np.full(K, np.inf)
    active = np.arange(K)
    for _ in range(settings.max_iters):
        if active.size == 0:
            break
        sub = [[x[active] for x in arrs] for arrs in (a, c, B, A)]
        sq = _sweep(model, *sub, order, settings.damping)
        for arrs, new in zip((a, c, B, A), sub):
            for l in range(len(arrs)):
                arrs[l][active] = new[l]
        iters[active] += 1
        residual[active] = sq / n_sites
        active = active[residual[active] > settings.tolerance]
    converged = residual <= settings.tolerance
    return TapState(a, c, B, A), iters, converged, residual


def _as_batch(x, n, name):
    x = np.array(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n:
        raise InputError(f"{name} must have {n} columns, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{name} must be finite")
    return x


def initial_state(model: DbmModel, init_a, init_c=None):
    """Batched moments: visible from the given rows, hidden layers at zero."""
    a0 = _as_batch(init_a, model.n_visible, "init_a")
    c0 = np.zeros_like(a0) if init_c is None else _as_batch(init_c, model.n_visible, "init_c")
    if c0.shape != a0.shape:
        raise InputError("init_c must match init_a")
    if np.any(c0 < 0):
        raise InputError("initial variances must be non-negative")
    K = a0.shape[0]
    a = [a0] + [np.zeros((K, n)) for n in model.sizes[1:]]
    c = [c0] + [np.zeros((K, n)) for n in model.sizes[1:]]
    return a, c


def _solutions(model, state, iters, converged, residual, clamped=None):
    if clamped is None:
        F = free_energy(model, state)
    else:
        F = clamped_free_energy(model, clamped, state)
    return [
        TapSolution(state.row(k), float(F[k]), int(iters[k]), bool(converged[k]), float(residual[k]))
        for k in range(len(iters))
    ]


# ---------------------------------------------------------------------------
# public inference API
# ---------------------------------------------------------------------------


def tap_step(model: DbmModel, state: TapState, damping=0.0) -> TapState:
    """One sweep of the fixed-point iteration on a single chain or batch."""
    if not 0 <= damping < 1:
        raise InputError("damping must lie in [0, 1)")
    new = state.copy()
    squeeze = new.a[0].ndim == 1
    if squeeze:
        new = TapState(*[[x[None, :] for x in getattr(new, n)] for n in ("a", "c", "B", "A")])
    _sweep(model, new.a, new.c, new.B, new.A, sweep_order(len(model.layers)), damping)
    return new.row(0) if squeeze else new


def run_tap_batch(model: DbmModel, init_a, init_c=None, settings: TapSettings | None = None):
    """Run one free (unclamped) chain per row of ``init_a``."""
    settings = settings or TapSettings()
    a, c = initial_state(model, init_a, init_c)
    state, iters, conv, resid = _run(model, a, c, settings, sweep_order(len(model.layers)))
    return _solutions(model, state, iters, conv, resid)


def run_tap(model: DbmModel, init_a, init_c=None, settings: TapSettings | None = None) -> TapSolution:
    init_a = np.asarray(init_a, dtype=float)
    if init_a.ndim != 1:
        raise InputError("run_tap takes one initialization vector; use run_tap_batch for several")
    return run_tap_batch(model, init_a, init_c, settings)[0]


def run_clamped_tap_batch(model: DbmModel, X, settings: TapSettings | None = None):
    """Inference over hidden layers with the visible layer pinned to each row of ``X``.

    With a single hidden layer the conditional moments are exact and are
    returned without iterating.
    """
    settings = settings or TapSettings()
    X = _as_batch(X, model.n_visible, "X")
    a, c = initial_state(model, X)
    K = X.shape[0]
    if model.depth == 1:
        field_1 = X @ model.weights[0]
        zeros = np.zeros_like(field_1)
        m = _layer_moments(model.layers[1], field_1, zeros, 1)
        state = TapState([X, m.a], [c[0], m.c], [np.zeros_like(X), field_1], [np.zeros_like(X), zeros])
        return _solutions(model, state, np.ones(K, int), np.ones(K, bool), np.zeros(K), clamped=X)
    # with zero visible variance the pinned layer only adds the field x @ W to layer 1
    state, iters, conv, resid = _run(model, a, c, settings, sweep_order(len(model.layers), True))
    return _solutions(model, state, iters, conv, resid, clamped=X)


def run_clamped_tap(model: DbmModel, x, settings: TapSettings | None = None) -> TapSolution:
    return run_clamped_tap_batch(model, np.asarray(x, dtype=float)[None, :], settings)[0]


def random_inits(params: UnitParams, K, rng):
    """Uniform draws over the support of the visible prior (bits for binary)."""
    if params.family is Family.BINARY:
        return rng.integers(0, 2, size=(K, params.size)).astype(float)
    return rng.uniform(params.alpha, params.omega, size=(K, params.size))


# ---------------------------------------------------------------------------
# free energies
# ---------------------------------------------------------------------------


def _site_terms(params, a, c, B, A, layer, external=None):
    log_z = _layer_moments(params, B, A, layer).log_z
    lin = B if external is None else B - external
    return np.sum(log_z - lin * a + 0.5 * A * (a * a + c), axis=-1)


def _coupling_terms(W, a0, c0, a1, c1):
    return np.sum((a0 @ W) * a1, axis=-1) + 0.5 * np.sum((c0 @ (W * W)) * c1, axis=-1)


def free_energy(model: DbmModel, state: TapState):
    """TAP free energy ``F``; ``-F`` estimates ``ln Z`` of the model.

    Uses the cavity fields stored in ``state``.  ``F`` is zero for a model
    with no couplings evaluated at its prior moments.
    """
    total = 0.0
    for l, p in enumerate(model.layers):
        total = total + _site_terms(p, state.a[l], state.c[l], state.B[l], state.A[l], l)
    for l, W in enumerate(model.weights):
        total = total + _coupling_terms(W, state.a[l], state.c[l], state.a[l + 1], state.c[l + 1])
    return -total


free_energy_rbm = free_energy


def free_energy_from_moments(model: DbmModel, a, c):
    """``F`` with the cavity fields recomputed from the moments themselves.

    As a function of ``(a, c)`` alone this is stationary at every fixed point,
    which is what finite-difference probes should differentiate.
    """
    a, c = list(a), list(c)
    B, A = [], []
    for l in range(len(model.layers)):
        B_l, A_l = cavity_fields(model, a, c, l)
        B.append(B_l)
        A.append(A_l)
    return free_energy(model, TapState(a, c, B, A))


def clamped_free_energy(model: DbmModel, X, state: TapState):
    """Free energy of the hidden layers given visible rows ``X``.

    Excludes the visible prior term.  With one hidden layer it equals
    ``-sum_j ln Z_j(x @ W, 0)`` exactly.
    """
    X = np.asarray(X, dtype=float)
    field_1 = X @ model.weights[0]
    total = 0.0
    for l in range(1, len(model.layers)):
        ext = field_1 if l == 1 else None
        total = total + _site_terms(model.layers[l], state.a[l], state.c[l], state.B[l], state.A[l], l, ext)
    for l in range(1, len(model.weights)):
        total = total + _coupling_terms(model.weights[l], state.a[l], state.c[l], state.a[l + 1], state.c[l + 1])
    return -total


# ---------------------------------------------------------------------------
# solution bookkeeping
# ---------------------------------------------------------------------------


def dedup_solutions(solutions, tol=DEDUP_TOLERANCE):
    """Greedy clustering on the max-norm of concatenated magnetizations.

    A solution is dropped if it lies within ``tol`` of an earlier survivor;
    survivors keep their input order.
    """
    kept, reps = [], []
    for sol in solutions:
        m = sol.state.magnetizations()
        if any(np.max(np.abs(m - r)) < tol for r in reps):
            continue
        kept.append(sol)
        reps.append(m)
    return kept


def export_solutions(solutions, target) -> None:
    """Whitespace-separated table, one row per solution.

    Columns: index, free energy, residual, iterations, converged flag, then
    the magnetizations and variances of every layer in order.
    """
    if not solutions:
        raise InputError("no solutions to export")
    sizes = [np.size(x) for x in solutions[0].state.a]
    names = ["index", "free_energy", "residual", "iterations", "converged"]
    for prefix in ("a", "c"):
        names += [f"{prefix}{l}_{i}" for l, n in enumerate(sizes) for i in range(n)]
    rows = [
        np.concatenate(
            [[k, s.free_energy, s.residual, s.iterations, float(s.converged)], *s.state.a, *s.state.c]
        )
        for k, s in enumerate(solutions)
    ]
    buf = io.StringIO()
    np.savetxt(buf, np.array(rows), fmt="%.17g", header=" ".join(names), comments="# ")
    if isinstance(target, (str, Path)):
        Path(target).write_text(buf.getvalue())
    else:
        target.write(buf.getvalue())
