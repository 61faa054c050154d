import numpy as np
import pytest

from csiquant.autograd import Tensor
from csiquant.network import Autoencoder, ModelConfig
from csiquant.training import (Adam, TrainConfig, clip_gradients, evaluate_mse,
                               mse_loss, train_model)


def small_model(seed=0, **kw):
    cfg = ModelConfig(nc_crop=8, nt=4, M=12, B=4, encoder_resnets=1,
                      decoder_resnets=1, **kw)
    return Autoencoder(cfg, rng=seed)


def test_mse_identical_batches_is_zero():
    x = Tensor(np.random.default_rng(0).uniform(size=(3, 2, 2, 2)))
    assert mse_loss(x, Tensor(x.data.copy())).item() == 0.0


def test_mse_single_entry_half_error():
    pred = np.zeros((1, 2, 2, 2))
    target = pred.copy()
    target[0, 0, 0, 0] = 0.5
    assert mse_loss(Tensor(pred), Tensor(target)).item() == pytest.approx(0.25)


def test_mse_batch_mean():
    pred = np.zeros((2, 2, 2, 2))
    target = pred.copy()
    target[1, 0, 1, 0] = 0.5
    assert mse_loss(Tensor(pred), Tensor(target)).item() == pytest.approx(0.125)


def test_mse_gradient():
    pred = Tensor(np.array([[0.5, 0.0]]), requires_grad=True)
    target = Tensor(np.array([[0.0, 1.0]]))
    mse_loss(pred, target).backward()
    np.testing.assert_allclose(pred.grad, [[1.0, -2.0]], atol=1e-15)


def test_clip_values():
    g = [np.array([0.1, -0.01, 0.05]), None, np.array([[-0.2]])]
    clip_gradients(g, 0.05)
    np.testing.assert_array_equal(g[0], [0.05, -0.01, 0.05])
    np.testing.assert_array_equal(g[2], [[-0.05]])
    assert all(np.all(np.abs(a) <= 0.05) for a in (g[0], g[2]))


def test_adam_first_step_magnitude():
    w = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    w.grad = np.array([0.5, -1e-3, 40.0])
    opt = Adam([("w", w)])
    before = w.data.copy()
    opt.step(lr=0.001)
    np.testing.assert_allclose(np.abs(w.data - before), 0.001, rtol=1e-4)


def test_adam_zero_gradient_keeps_parameters():
    w = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    opt = Adam([("w", w)])
    for _ in range(3):
        w.grad = np.zeros(2)
        opt.step(lr=0.1)
    np.testing.assert_array_equal(w.data, [1.0, 2.0])


def test_adam_constant_gradient_descends_monotonically():
    w = Tensor(np.array([0.7]), requires_grad=True)
    opt = Adam([("w", w)])
    values = [w.data[0]]
    for _ in range(5):
        w.grad = np.array([1.0])
        opt.step(lr=0.001)
        values.append(w.data[0])
    assert all(b < a for a, b in zip(values, values[1:]))


def test_adam_state_round_trip_continues_identically():
    rng = np.random.default_rng(1)
    data = rng.uniform(0.2, 0.8, size=(8, 8, 4, 2))

    model_a = small_model(seed=2)
    opt_a = Adam(model_a.params())
    cfg_head = TrainConfig(batch_size=4, steps=3, seed=3, M=12, B=4)
    train_model(model_a, data, cfg_head, optimizer=opt_a)

    model_b = small_model(seed=2)
    opt_b = Adam(model_b.params())
    train_model(model_b, data, cfg_head, optimizer=opt_b)
    opt_c = Adam(model_b.params())
    opt_c.load_state(opt_b.t, {n: (opt_b.m[n], opt_b.v[n]) for n, _ in opt_b.params})

    cfg_tail = TrainConfig(batch_size=4, steps=2, seed=4, M=12, B=4)
    trace_a = train_model(model_a, data, cfg_tail, optimizer=opt_a)
    trace_b = train_model(model_b, data, cfg_tail, optimizer=opt_c)
    assert trace_a == trace_b
    for (_, pa), (_, pb) in zip(model_a.params(), model_b.params()):
        np.testing.assert_array_equal(pa.data, pb.data)


def test_adam_load_state_validates():
    w = Tensor(np.zeros(3), requires_grad=True)
    opt = Adam([("w", w)])
    with pytest.raises(ValueError):
        opt.load_state(1, {"bogus": (np.zeros(3), np.zeros(3))})
    with pytest.raises(ValueError):
        opt.load_state(1, {"w": (np.zeros(2), np.zeros(2))})


def test_training_is_seed_deterministic():
    data = np.random.default_rng(5).uniform(0.2, 0.8, size=(12, 8, 4, 2))
    traces = []
    for _ in range(2):
        model = small_model(seed=6)
        cfg = TrainConfig(batch_size=4, steps=6, seed=7, M=12, B=4)
        traces.append(train_model(model, data, cfg))
    assert traces[0] == traces[1]


def test_training_trace_changes_with_seed():
    data = np.random.default_rng(8).uniform(0.2, 0.8, size=(12, 8, 4, 2))
    outs = []
    for seed in (0, 1):
        model = small_model(seed=9)
        cfg = TrainConfig(batch_size=4, steps=4, seed=seed, M=12, B=4)
        outs.append(train_model(model, data, cfg))
    assert outs[0] != outs[1]


def test_training_loss_decreases_overall():
    data = np.random.default_rng(10).uniform(0.2, 0.8, size=(16, 8, 4, 2))
    model = small_model(seed=11)
    cfg = TrainConfig(batch_size=8, steps=60, seed=12, M=12, B=4)
    trace = train_model(model, data, cfg)
    first = np.mean([l for _, l in trace[:5]])
    last = np.mean([l for _, l in trace[-5:]])
    assert last < first


def test_non_finite_loss_aborts():
    # squared error of ~1e160 targets overflows float64 inside the loss
    data = np.full((4, 8, 4, 2), 1e160)
    model = small_model(seed=14)
    cfg = TrainConfig(batch_size=4, steps=1, seed=15, M=12, B=4)
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        train_model(model, data, cfg)


def test_batch_size_larger_than_dataset_rejected():
    data = np.zeros((2, 8, 4, 2)) + 0.5
    model = small_model(seed=16)
    cfg = TrainConfig(batch_size=4, steps=1, seed=17, M=12, B=4)
    with pytest.raises(ValueError):
        train_model(model, data, cfg)


def test_checkpoint_hook_fires_on_interval():
    data = np.random.default_rng(18).uniform(0.2, 0.8, size=(8, 8, 4, 2))
    model = small_model(seed=19)
    cfg = TrainConfig(batch_size=4, steps=7, seed=20, M=12, B=4, checkpoint_interval=3)
    seen = []
    train_model(model, data, cfg, on_checkpoint=seen.append)
    assert seen == [3, 6]


def test_evaluate_mse_matches_manual():
    data = np.random.default_rng(21).uniform(0.2, 0.8, size=(5, 8, 4, 2))
    model = small_model(seed=22)
    rec = model.infer(data)
    manual = float(np.sum((rec - data) ** 2) / data.shape[0])
    assert evaluate_mse(model, data, batch_size=2) == pytest.approx(manual, rel=1e-12)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(batch_size=1)
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(clip_value=0.0)
    with pytest.raises(ValueError):
        TrainConfig(block_style="mystery")
