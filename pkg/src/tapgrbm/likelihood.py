"""TAP log-likelihood and statistics of the TAP solution landscape.

The log-likelihood of a visible row ``x`` is approximated as::

    ln P(x) ~ sum_i ln P_i(x_i) - F_clamped(x) + mean_k F_k

where ``F_k`` are free energies of distinct free-running TAP solutions (so
``-mean F`` estimates ``ln Z``) and ``F_clamped`` is the hidden free energy
with the visible layer pinned to ``x``.  With one hidden layer
``-F_clamped(x) = sum_j ln Z_j(x @ W, 0)`` exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .model import DbmModel
from .tap import (
    DEDUP_TOLERANCE,
    TapSettings,
    dedup_solutions,
    run_clamped_tap_batch,
    run_tap_batch,
)
from .units import in_support, log_prior


def mean_free_energy(solutions) -> float:
    if not solutions:
        raise InputError("need at least one TAP solution")
    return float(np.mean([s.free_energy for s in solutions]))


def tap_log_likelihood(model: DbmModel, X, solutions, settings: TapSettings | None = None, normalize=False):
    """Approximate ``ln P(x)`` per row of ``X`` (a float for a single row).

    ``solutions`` should already be deduplicated: the average counts every
    entry.  Rows outside the support of the visible prior score ``nan``.
    ``normalize`` divides by the total number of units.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    log_z_estimate = -mean_free_energy(solutions)
    vis = model.layers[0]
    ok = np.all(in_support(vis, X), axis=1)
    out = np.full(X.shape[0], np.nan)
    if np.any(ok):
        rows = X[ok]
        clamped = run_clamped_tap_batch(model, rows, settings)
        neg_clamped = -np.array([s.free_energy for s in clamped])
        out[ok] = np.sum(log_prior(vis, rows), axis=1) + neg_clamped - log_z_estimate
    if normalize:
        out = out / sum(model.sizes)
    return float(out[0]) if single else out


@dataclass
class LandscapeReport:
    n_initializations: int
    n_converged: int
    n_unique: int
    free_energies: list
    mean_free_energy: float
    histogram_counts: list
    histogram_edges: list
    solutions: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "solutions"}
        d["n_nonconverged"] = self.n_initializations - self.n_converged
        return d

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def landscape_report(
    model: DbmModel,
    initializations,
    settings: TapSettings | None = None,
    dedup_tol=DEDUP_TOLERANCE,
    init_c=None,
) -> LandscapeReport:
    """Run TAP from every row, keep the distinct converged fixed points.

    The Helmholtz free-energy estimate is the unweighted mean over the
    distinct solutions.  Free-energy histogram bins follow the
    Freedman-Diaconis rule.
    """
    inits = np.atleast_2d(np.asarray(initializations, dtype=float))
    settings = settings or TapSettings()
    runs = run_tap_batch(model, inits, init_c, settings)
    converged = [s for s in runs if s.converged]
    unique = dedup_solutions(converged, dedup_tol)
    fe = [s.free_energy for s in unique]
    if fe:
        counts, edges = np.histogram(fe, bins="fd")
        mean = float(np.mean(fe))
    else:
        counts, edges, mean = np.array([]), np.array([]), float("nan")
    return LandscapeReport(
        n_initializations=len(runs),
        n_converged=len(converged),
        n_unique=len(unique),
        free_energies=fe,
        mean_free_energy=mean,
        histogram_counts=counts.tolist(),
        histogram_edges=edges.tolist(),
        solutions=unique,
    )
