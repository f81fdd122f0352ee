import numpy as np
import pytest

from tapgrbm.errors import InputError
from tapgrbm.likelihood import tap_log_likelihood
from tapgrbm.model import GrbmModel, init_model, model_equal
from tapgrbm.tap import TapSettings, run_tap_batch
from tapgrbm.training import TrainConfig, Trainer, compute_gradients, train_epochs
from tapgrbm.units import UnitParams

TIGHT = TapSettings(max_iters=5000, tolerance=1e-28)


def objective(model, X, inits):
    sols = run_tap_batch(model, inits, settings=TIGHT)
    assert all(s.converged for s in sols)
    return float(np.mean(tap_log_likelihood(model, X, sols)))


def small_model(vis_family, seed=0):
    rng = np.random.default_rng(seed)
    if vis_family == "binary":
        vis = UnitParams.binary(rng.normal(0, 1, 3))
    elif vis_family == "tgauss":
        vis = UnitParams.trunc_gauss(rng.normal(0, 1, 3), rng.uniform(-1, 2, 3))
    else:
        vis = UnitParams.tgb(rng.uniform(0.2, 0.8, 3), rng.normal(0, 1, 3), rng.uniform(-1, 2, 3), -1.0, 1.0)
    hid = UnitParams.binary(rng.normal(0, 1, 2))
    return GrbmModel(rng.normal(0, 0.3, (3, 2)), vis, hid)


def sample_rows(model, rng, n):
    vis = model.vis_params
    if vis.family.value == "binary":
        return rng.integers(0, 2, (n, 3)).astype(float)
    X = rng.uniform(vis.alpha, vis.omega, (n, 3))
    if vis.family.value == "tgb":
        X[rng.random((n, 3)) < 0.3] = 0.0
    return X


@pytest.mark.parametrize("vis_family", ["binary", "tgauss", "tgb"])
def test_gradients_match_finite_differences_of_objective(vis_family):
    model = small_model(vis_family)
    rng = np.random.default_rng(1)
    X = sample_rows(model, rng, 6)
    inits = sample_rows(model, rng, 4)
    sols = run_tap_batch(model, inits, settings=TIGHT)
    grads = compute_gradients(model, X, sols)
    h = 1e-6

    def probe(modify):
        m_plus, m_minus = model.copy(), model.copy()
        modify(m_plus, h)
        modify(m_minus, -h)
        return (objective(m_plus, X, inits) - objective(m_minus, X, inits)) / (2 * h)

    for i in range(3):
        for j in range(2):

            def bump_w(m, d, i=i, j=j):
                W = m.W.copy()
                W[i, j] += d
                m.W = W

            fd = probe(bump_w)
            assert abs(fd - grads.dW[i, j]) <= 1e-3 * abs(fd) + 1e-8
    for layer_idx, layer_grads in enumerate(grads.layers):
        for name, g in layer_grads.items():
            for i in range(g.size):

                def bump_p(m, d, name=name, i=i, layer_idx=layer_idx):
                    p = m.layers[layer_idx]
                    v = getattr(p, name).copy()
                    v[i] += d
                    m.layers[layer_idx] = p.with_values(**{name: v})

                fd = probe(bump_p)
                assert abs(fd - g[i]) <= 1e-3 * abs(fd) + 1e-8, (layer_idx, name, i)


def test_model_term_at_zero_coupling_is_outer_product_of_prior_means():
    vis = UnitParams.binary([0.3, -1.0])
    hid = UnitParams.binary([0.5])
    model = GrbmModel(np.zeros((2, 1)), vis, hid)
    sols = run_tap_batch(model, [[0.0, 1.0]])
    X = np.array([[1.0, 0.0]])
    g = compute_gradients(model, X, sols)
    sig = lambda u: 1 / (1 + np.exp(-np.asarray(u)))  # noqa: E731
    model_term = np.outer(sig([0.3, -1.0]), sig([0.5]))
    data_term = np.outer(X[0], sig([0.5]))
    np.testing.assert_allclose(g.dW, data_term - model_term, rtol=1e-14, atol=1e-16)


def test_errors_for_empty_batch_and_no_converged_solutions():
    model = small_model("binary")
    sols = run_tap_batch(model, np.zeros((1, 3)))
    with pytest.raises(InputError):
        compute_gradients(model, np.zeros((0, 3)), sols)
    sols[0].converged = False
    with pytest.raises(InputError):
        compute_gradients(model, np.zeros((1, 3)), sols)


def _toy_data(seed=0, n=60, nv=6):
    rng = np.random.default_rng(seed)
    protos = rng.integers(0, 2, (2, nv))
    X = protos[rng.integers(0, 2, n)].astype(float)
    flips = rng.random(X.shape) < 0.05
    return np.where(flips, 1 - X, X)


def test_zero_learning_rate_leaves_model_unchanged():
    X = _toy_data()
    model = init_model((6, 3), data_sample=X, seed=1)
    before = model.copy()
    train_epochs(model, X, TrainConfig(gamma=0.0, epochs=2, batch_size=20, n_solutions=10, monitor=False))
    assert model_equal(model, before)


def test_training_is_deterministic():
    X = _toy_data()
    cfg = TrainConfig(epochs=2, batch_size=20, n_solutions=10, monitor_size=30, seed=3)
    runs = []
    for _ in range(2):
        model = init_model((6, 3), data_sample=X, seed=3)
        _, log = train_epochs(model, X, cfg)
        runs.append((model, [{k: v for k, v in r.items() if k != "wall_time"} for r in log]))
    assert model_equal(runs[0][0], runs[1][0])
    assert runs[0][1] == runs[1][1]


def test_weight_decay_shrinks_weights_without_signal():
    # with W far from any data signal and no momentum, pure decay dominates
    model = init_model((4, 2), seed=0, sigma=0.5)
    trainer = Trainer(model, TrainConfig(gamma=0.1, epsilon=1.0, eta=0.0))
    from tapgrbm.training import GradientSet

    zero = GradientSet([np.zeros((4, 2))], [{"U": np.zeros(4)}, {"U": np.zeros(2)}])
    norms = []
    for _ in range(5):
        trainer.apply(zero, 0.1)
        norms.append(np.linalg.norm(model.W))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_training_improves_likelihood_on_toy_data():
    X = _toy_data(n=200, nv=8)
    model = init_model((8, 4), data_sample=X, seed=0, sigma=0.01)
    cfg = TrainConfig(gamma=0.05, epochs=20, batch_size=20, n_solutions=20, monitor_size=200)
    _, log = train_epochs(model, X, cfg)
    assert log[-1]["ll_per_unit"] > log[0]["ll_per_unit"] + 0.01


def test_rejects_data_outside_support():
    model = init_model((3, 2))
    with pytest.raises(InputError):
        train_epochs(model, np.full((4, 3), 2.0), TrainConfig(epochs=1, monitor=False))


def test_learning_rate_schedule():
    cfg = TrainConfig(gamma=1e-2, gamma_final=1e-5, epochs=4)
    assert cfg.learning_rate(1) == 1e-2
    assert cfg.learning_rate(4) == pytest.approx(1e-5)
    assert TrainConfig(gamma=0.3).learning_rate(7) == 0.3
