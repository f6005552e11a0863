import numpy as np
import pytest

from conftest import fd_grad, rel_err
from owapto import learn, solvers as S, tasks
from owapto.owa import fair_gini_weights, owa_value


def small_model(seed=0):
    # 4 -> trunk [6, 3, 2] -> two heads of (2 -> 2 -> 3): under 200 parameters
    return learn.Predictor.init(4, (2, 3), hidden=[6, 3, 2], seed=seed)


def test_zero_model_outputs_zero():
    model = small_model()
    model.params = model.zero_like()
    assert not np.any(learn.predict(model, np.ones(4)))


def test_identity_linear_layer():
    model = learn.Predictor.linear(np.eye(5))
    z = np.array([0.3, -1.0, 2.0, 0.0, 4.5])
    np.testing.assert_array_equal(learn.predict(model, z), z)


def test_predict_shapes_and_mismatch():
    model = small_model()
    assert learn.predict(model, np.ones(4)).shape == (2, 3)
    assert learn.predict(model, np.ones((7, 4))).shape == (7, 2, 3)
    with pytest.raises(ValueError):
        learn.predict(model, np.ones(5))


def test_default_widths_halve():
    model = learn.Predictor.init(8, (3, 10))
    trunk = [model.params[2 * i].shape[1] for i in range(model.n_trunk)]
    assert trunk == [16, 8, 4]
    assert model.m == 3


def test_parameter_gradients_match_fd():
    model = small_model(seed=3)
    assert model.n_params <= 200
    r = np.random.default_rng(0)
    Z = r.normal(size=(5, 4))
    T = r.normal(size=(5, 2, 3))
    out, cache = model.forward(Z)
    grads = model.backward(cache, 2 * (out - T))
    flat = np.concatenate([p.ravel() for p in model.params])

    def loss(theta):
        k = 0
        for p in model.params:
            p[...] = theta[k:k + p.size].reshape(p.shape)
            k += p.size
        return float(np.sum((model.forward(Z)[0] - T) ** 2))

    num = fd_grad(loss, flat, h=1e-6)
    loss(flat)
    ana = np.concatenate([g.ravel() for g in grads])
    assert rel_err(ana, num) < 1e-4


def test_two_stage_loss_and_grad():
    C = np.arange(6.0).reshape(2, 3)
    assert learn.loss_two_stage(C, C) == 0.0
    E = np.zeros_like(C)
    E[1, 2] = 1.0
    assert learn.loss_two_stage(C + E, C) == 1.0
    X = C + np.random.default_rng(0).normal(size=C.shape)
    num = fd_grad(lambda v: learn.loss_two_stage(v.reshape(2, 3), C), X.ravel())
    np.testing.assert_allclose(learn.loss_two_stage_grad(X, C).ravel(), num, atol=1e-6)


def test_dq_gradient_matches_fd(rng):
    w = fair_gini_weights(3)
    C = rng.uniform(0, 1, (3, 5))
    x = rng.dirichlet(np.ones(5))
    num = fd_grad(lambda v: learn.loss_owa_dq(w, C, v), x)
    np.testing.assert_allclose(learn.loss_owa_dq_grad(w, C, x), num, atol=1e-6)


def test_regret_zero_at_truth_and_nonnegative(rng):
    w = fair_gini_weights(2)
    for _ in range(10):
        C = rng.uniform(0, 1, (2, 4))
        star, x_star = S.owa_enumeration_oracle(w, C, 0.02)
        rep = S.solve_owa_reference(w, C)
        assert rep.objective >= star - 1e-6
        assert learn.regret(w, C, rep.solution, rep.objective) == pytest.approx(0.0, abs=1e-12)
        x = rng.dirichlet(np.ones(4))
        assert learn.regret(w, C, x, rep.objective) >= -1e-6


def test_train_config_validation():
    with pytest.raises(ValueError):
        learn.TrainConfig(lr=0)
    with pytest.raises(ValueError):
        learn.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        learn.TrainConfig(mse_weight=1.5)
    cfg = learn.default_train_config("portfolio", "two_stage", epochs=3)
    assert cfg.lr == 5e-3 and cfg.mse_weight == 1.0 and cfg.epochs == 3


def linear_dataset(N=200, d=4, seed=0):
    r = np.random.default_rng(seed)
    Z = r.normal(size=(N, d))
    B = r.normal(size=(d, 2, 3))
    Y = np.einsum("nd,dmk->nmk", Z, B)
    splits = {"train": np.arange(150), "val": np.arange(150, 175), "test": np.arange(175, N)}
    return tasks.TaskDataset("portfolio", Z, Y, fair_gini_weights(2), splits, {})


def val_mse(model, ds):
    idx = ds.splits["val"]
    return float(np.mean((learn.predict(model, ds.Z[idx]) - ds.Y[idx]) ** 2))


def test_two_stage_realizable_mse_trends_down():
    ds = linear_dataset()

    def fit(epochs):
        # one linear head per criterion, no trunk
        model = learn.Predictor([np.zeros((4, 3)), np.zeros(3), np.zeros((4, 3)), np.zeros(3)], 0, 2, 1)
        cfg = learn.TrainConfig(lr=0.05, epochs=epochs, batch_size=16, mse_weight=1.0, keep_best=False)
        return val_mse(learn.train(model, ds, "two_stage", cfg)[0], ds)

    start, mid, end = fit(0), fit(5), fit(60)
    assert start > mid > end
    assert end < 1e-3 * start


@pytest.fixture(scope="module")
def tiny_portfolio():
    return tasks.gen_portfolio(tasks.PortfolioTaskConfig(n=5, m=2, N=60, seed=1, feature_dim=6))


@pytest.mark.parametrize("method", ["two_stage", "uws", "owa_moreau", "owa_qp"])
def test_training_is_reproducible(tiny_portfolio, method):
    runs = []
    for _ in range(2):
        model = learn.Predictor.init(6, (2, 5), seed=4)
        cfg = learn.default_train_config("portfolio", method, epochs=2, batch_size=16, seed=4)
        model, hist = learn.train(model, tiny_portfolio, method, cfg)
        runs.append((np.concatenate([p.ravel() for p in model.params]), hist))
    np.testing.assert_array_equal(runs[0][0], runs[1][0])
    assert repr(runs[0][1]) == repr(runs[1][1])
    assert len(runs[0][1]) == 3


def test_regret_nonnegative_on_every_test_sample(tiny_portfolio):
    model = learn.Predictor.init(6, (2, 5), seed=0)
    cfg = learn.default_train_config("portfolio", "owa_moreau", epochs=1, batch_size=16)
    model, _ = learn.train(model, tiny_portfolio, "owa_moreau", cfg)
    reg = learn.evaluate_regret(model, tiny_portfolio, tiny_portfolio.splits["test"], "owa_moreau", cfg)
    assert np.all(reg >= -1e-6)


def test_sample_gradients_match_fd(tiny_portfolio):
    ds = tiny_portfolio
    i = int(ds.splits["train"][0])
    pred = ds.Y[i] + 0.05 * np.random.default_rng(2).normal(size=ds.Y[i].shape)
    cfg = learn.default_train_config("portfolio", "uws", mse_weight=0.0, uws_epsilon=0.5)
    d, _ = learn.sample_grad(ds, i, pred, "uws", cfg)

    def f(v):
        return learn.sample_grad(ds, i, v.reshape(pred.shape), "uws", cfg)[1]

    np.testing.assert_allclose(d.ravel(), fd_grad(f, pred.ravel(), 1e-7), atol=1e-5)


def test_unknown_method_rejected(tiny_portfolio):
    model = learn.Predictor.init(6, (2, 5))
    with pytest.raises(ValueError, match="unknown method"):
        learn.train(model, tiny_portfolio, "magic", learn.TrainConfig())
    with pytest.raises(ValueError, match="not defined"):
        learn.train(model, tiny_portfolio, "spo_rank", learn.TrainConfig())


def test_nan_aborts(tiny_portfolio):
    model = learn.Predictor.init(6, (2, 5))
    model.params[0][0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        learn.train(model, tiny_portfolio, "two_stage", learn.TrainConfig(epochs=1, mse_weight=1.0))


def test_checkpoint_roundtrip(tmp_path):
    model = learn.Predictor.init(5, (3, 4), seed=9)
    path = tmp_path / "m.ckpt"
    learn.save_checkpoint(model, str(path))
    back = learn.load_checkpoint(str(path))
    for a, b in zip(model.params, back.params):
        np.testing.assert_array_equal(a, b)
    z = np.random.default_rng(0).normal(size=(3, 5))
    np.testing.assert_array_equal(learn.predict(model, z), learn.predict(back, z))
    bad = tmp_path / "bad.ckpt"
    bad.write_text('{"format": "other"}\n')
    with pytest.raises(ValueError):
        learn.load_checkpoint(str(bad))


def test_adam_minimizes_quadratic():
    x = [np.array([3.0, -2.0])]
    opt = learn.Adam(x, lr=0.1)
    for _ in range(500):
        opt.step(x, [2 * x[0]])
    assert np.max(np.abs(x[0])) < 1e-2


def test_random_feature_map_deterministic():
    fmap = learn.RandomFeatureMap.create(6, 4, noise=0.0, seed=3)
    T = np.random.default_rng(0).normal(size=(5, 6))
    a = fmap(T, np.random.default_rng(1))
    b = learn.RandomFeatureMap.create(6, 4, noise=0.0, seed=3)(T, np.random.default_rng(2))
    np.testing.assert_array_equal(a, b)
    assert a.shape == (5, 4)


def test_grid_and_rank_sample_grads_shapes():
    ds = tasks.gen_grid_task(tasks.GridTaskConfig(rows=3, cols=3, n_train=4, n_val=2, n_test=2, seed=0))
    i = int(ds.splits["train"][0])
    cfg = learn.default_train_config("grid", "surrogate_lp")
    d, loss = learn.sample_grad(ds, i, ds.Y[i] * 1.1, "surrogate_lp", cfg)
    assert d.shape == ds.Y[i].shape and np.isfinite(loss)
    rk = tasks.gen_rank_task(tasks.RankTaskConfig(n_items=5, n_train=3, n_val=1, n_test=1, seed=0))
    j = int(rk.splits["train"][0])
    cfg = learn.default_train_config("rank", "spo_rank")
    d, _ = learn.sample_grad(rk, j, rk.Y[j], "spo_rank", cfg)
    assert np.max(np.abs(d)) < 1e-4
