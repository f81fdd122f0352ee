import json

import numpy as np
import pytest

from tapgrbm.errors import InputError
from tapgrbm.likelihood import landscape_report, mean_free_energy, tap_log_likelihood
from tapgrbm.model import GrbmModel, init_model
from tapgrbm.tap import TapSettings, random_inits, run_tap_batch
from tapgrbm.units import UnitParams, log_prior

from . import oracles


def test_uncoupled_model_gives_the_factorized_log_likelihood():
    rng = np.random.default_rng(0)
    vis = UnitParams.tgb(rng.uniform(0.2, 0.8, 5), rng.normal(size=5), rng.uniform(0, 2, 5), -1.0, 1.0)
    m = GrbmModel(np.zeros((5, 3)), vis, UnitParams.binary(rng.normal(size=3)))
    X = rng.uniform(-1, 1, (4, 5))
    X[:, 0] = 0.0
    sols = run_tap_batch(m, X)
    ll = tap_log_likelihood(m, X, sols)
    np.testing.assert_allclose(ll, log_prior(vis, X).sum(axis=1), rtol=1e-13)


def test_weakly_coupled_binary_model_is_close_to_enumeration():
    rng = np.random.default_rng(4)
    W = rng.uniform(-0.05, 0.05, (2, 2))
    U_v, U_h = rng.normal(size=2), rng.normal(size=2)
    m = GrbmModel(W, UnitParams.binary(U_v), UnitParams.binary(U_h))
    ex = oracles.binary_rbm_exact(W, U_v, U_h)
    sols = run_tap_batch(m, [[0.5, 0.5]], settings=TapSettings(tolerance=1e-20))
    ll = tap_log_likelihood(m, ex["states_v"], sols)
    assert np.max(np.abs(ll - ex["log_p_v"])) < 0.05
    # second-order accuracy makes the error much smaller than the bound in practice
    assert np.max(np.abs(ll - ex["log_p_v"])) < 1e-4


def test_outside_support_scores_nan_and_normalization():
    m = init_model((3, 2), seed=0)
    sols = run_tap_batch(m, np.eye(3))
    X = np.array([[0.0, 1.0, 1.0], [0.0, 2.0, 1.0]])
    ll = tap_log_likelihood(m, X, sols)
    assert np.isfinite(ll[0]) and np.isnan(ll[1])
    norm = tap_log_likelihood(m, X, sols, normalize=True)
    assert norm[0] == pytest.approx(ll[0] / 5)
    assert isinstance(tap_log_likelihood(m, X[0], sols), float)


def test_mean_free_energy_needs_solutions():
    with pytest.raises(InputError):
        mean_free_energy([])


def test_fresh_model_landscape_has_one_solution():
    rng = np.random.default_rng(0)
    X = (rng.random((200, 30)) < 0.3).astype(float)
    m = init_model((30, 10), data_sample=X, seed=0)
    rep = landscape_report(m, X[:50])
    assert rep.n_initializations == 50 and rep.n_converged == 50 and rep.n_unique == 1
    assert rep.mean_free_energy == rep.free_energies[0]
    assert sum(rep.histogram_counts) == 1
    d = json.loads(rep.to_json())
    assert d["n_nonconverged"] == 0 and "solutions" not in d


def test_landscape_counts_are_monotone_in_dedup_tolerance():
    rng = np.random.default_rng(1)
    m = GrbmModel(rng.normal(0, 1.5, (12, 6)), UnitParams.binary(np.zeros(12)), UnitParams.binary(np.zeros(6)))
    inits = random_inits(m.vis_params, 80, rng)
    counts = [landscape_report(m, inits, dedup_tol=t).n_unique for t in (1e-6, 1e-4, 1e-2, 1.0, 2.0)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))
    assert counts[-1] == 1
    rep = landscape_report(m, inits)
    assert rep.n_unique <= rep.n_converged <= rep.n_initializations
    assert sum(rep.histogram_counts) == rep.n_unique


def test_no_converged_runs_reports_nan():
    m = init_model((4, 2), seed=0)
    rep = landscape_report(m, np.eye(4), settings=TapSettings(max_iters=1, tolerance=1e-300))
    assert rep.n_converged == 0 and rep.n_unique == 0
    assert np.isnan(rep.mean_free_energy)
