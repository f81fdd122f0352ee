import numpy as np
import pytest

from tapgrbm.dbm import (
    DEFAULT_PRETRAIN_EPOCHS,
    dbm_clamped_run,
    dbm_gradients,
    init_dbm,
    pretrain_greedy,
    propagate,
    train_dbm_joint,
)
from tapgrbm.errors import InputError
from tapgrbm.likelihood import tap_log_likelihood
from tapgrbm.model import DbmModel, GrbmModel, init_model, model_equal
from tapgrbm.tap import TapSettings, run_tap_batch
from tapgrbm.training import TrainConfig, train_epochs
from tapgrbm.units import UnitParams

TIGHT = TapSettings(max_iters=5000, tolerance=1e-28)


def toy(n=120, nv=12, seed=0):
    rng = np.random.default_rng(seed)
    protos = rng.integers(0, 2, (3, nv))
    X = protos[rng.integers(0, 3, n)].astype(float)
    return np.where(rng.random(X.shape) < 0.05, 1 - X, X)


def _strip(log):
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in log]


def test_single_hidden_layer_pipeline_is_the_rbm_pipeline():
    X = toy()
    cfg = TrainConfig(epochs=2, batch_size=30, n_solutions=10, monitor_size=40, seed=4)
    dbm, dlogs = pretrain_greedy((12, 5), X, cfg)
    rbm = init_model((12, 5), data_sample=X, seed=4)
    _, rlog = train_epochs(rbm, X, cfg)
    assert isinstance(dbm, GrbmModel) and model_equal(dbm, rbm)
    assert _strip(dlogs[0]) == _strip(rlog)
    # joint training with momentum on a one-layer model is plain training too
    a, b = init_dbm((12, 5), X, seed=4), init_model((12, 5), data_sample=X, seed=4)
    _, la = train_dbm_joint(a.as_dbm(), X, cfg, momentum=True)
    _, lb = train_epochs(b, X, cfg)
    assert _strip(la) == _strip(lb)


def _deep(seed=0):
    rng = np.random.default_rng(seed)
    layers = [UnitParams.binary(rng.normal(0, 1, n)) for n in (4, 3, 2)]
    return DbmModel(layers, [rng.normal(0, 0.3, (4, 3)), rng.normal(0, 0.3, (3, 2))])


def test_deep_gradients_match_finite_differences():
    model = _deep()
    rng = np.random.default_rng(1)
    X = rng.integers(0, 2, (5, 4)).astype(float)
    inits = rng.integers(0, 2, (3, 4)).astype(float)

    def objective(m):
        sols = run_tap_batch(m, inits, settings=TIGHT)
        return float(np.mean(tap_log_likelihood(m, X, sols, TIGHT)))

    clamped = dbm_clamped_run(model, X, TIGHT)
    grads = dbm_gradients(model, X, clamped, run_tap_batch(model, inits, settings=TIGHT))
    h = 1e-6
    for l in range(2):
        for idx in [(0, 0), (1, 1), (2, 0)]:
            plus, minus = model.copy(), model.copy()
            plus.weights[l][idx] += h
            minus.weights[l][idx] -= h
            fd = (objective(plus) - objective(minus)) / (2 * h)
            assert abs(fd - grads.weights[l][idx]) <= 1e-4 * abs(fd) + 1e-7
    for l in range(3):
        plus, minus = model.copy(), model.copy()
        U = model.layers[l].U
        plus.layers[l] = model.layers[l].with_values(U=U + np.eye(U.size)[0] * h)
        minus.layers[l] = model.layers[l].with_values(U=U - np.eye(U.size)[0] * h)
        fd = (objective(plus) - objective(minus)) / (2 * h)
        assert abs(fd - grads.layers[l]["U"][0]) <= 1e-4 * abs(fd) + 1e-7


def test_gradient_needs_one_clamped_solution_per_row():
    model = _deep()
    X = np.ones((3, 4))
    with pytest.raises(InputError):
        dbm_gradients(model, X, dbm_clamped_run(model, X[:2]), run_tap_batch(model, X))


def test_propagation_modes():
    rbm = init_model((6, 4), seed=0, sigma=1.0)
    X = toy(20, 6)
    means = propagate(rbm, X)
    assert means.shape == (20, 4) and np.all((means > 0) & (means < 1))
    s1 = propagate(rbm, X, "sample", np.random.default_rng(0))
    s2 = propagate(rbm, X, "sample", np.random.default_rng(0))
    assert np.array_equal(s1, s2) and set(np.unique(s1)) <= {0.0, 1.0}
    with pytest.raises(InputError):
        propagate(rbm, X, "other")


def test_pretraining_stacks_layers_and_joint_training_runs():
    X = toy(200, 12)
    cfg = TrainConfig(gamma=0.01, epochs=3, batch_size=50, n_solutions=20, monitor_size=100, seed=1)
    dbm, logs = pretrain_greedy((12, 6, 3), X, cfg)
    assert dbm.sizes == [12, 6, 3] and len(logs) == 2
    assert dbm.metadata["pretrained"]
    again, _ = pretrain_greedy((12, 6, 3), X, cfg)
    assert model_equal(dbm, again)
    _, history = train_dbm_joint(dbm, X, TrainConfig(gamma=0.01, epochs=2, batch_size=50, n_solutions=20))
    assert len(history) == 3 and all(np.isfinite(r["ll_per_unit"]) for r in history)


def test_defaults_and_validation():
    assert DEFAULT_PRETRAIN_EPOCHS == 50
    with pytest.raises(InputError):
        pretrain_greedy((5,), np.zeros((2, 5)))
    with pytest.raises(InputError):
        init_dbm((5,))
    deep = init_dbm((5, 4, 3), toy(10, 5), seed=2)
    assert deep.sizes == [5, 4, 3] and not isinstance(deep, GrbmModel)
