import numpy as np
import pytest

from gimrl.neuralnet import (
    Block,
    NetworkSpec,
    NonFiniteLossError,
    QNetwork,
    RAdam,
    backward_and_step,
    load_checkpoint,
    save_checkpoint,
)


def small_spec(input_bn=True):
    return NetworkSpec(
        input_dim=4,
        output_dim=3,
        blocks=(Block(5, True, 0.01), Block(4, False, 0.2)),
        input_batchnorm=input_bn,
    )


def test_shapes_and_init_values():
    net = QNetwork.initialize(NetworkSpec(4, 5, (Block(8, True, 0.01),)), np.random.default_rng(0))
    assert net.params["fc0.W"].shape == (8, 4)
    assert net.params["out.W"].shape == (5, 8)
    assert not net.params["fc0.b"].any() and not net.params["out.b"].any()
    assert (net.params["bn0.gamma"] == 1).all() and (net.params["bn0.beta"] == 0).all()
    assert (net.buffers["bn0.running_mean"] == 0).all() and (net.buffers["bn0.running_var"] == 1).all()


def test_zero_width_rejected():
    with pytest.raises(ValueError):
        NetworkSpec(4, 5, (Block(0),))
    with pytest.raises(ValueError):
        NetworkSpec(4, 5, (Block(3, True, 1.5),))


def test_he_variance():
    for seed in range(5):
        net = QNetwork.initialize(NetworkSpec(512, 5, (Block(512, True, 0.01),)), np.random.default_rng(seed))
        var = net.params["fc0.W"].var()
        target = 2.0 / ((1 + 0.01**2) * 512)
        assert abs(var / target - 1) < 0.1


def test_same_seed_same_parameters():
    a = QNetwork.initialize(small_spec(), np.random.default_rng(9))
    b = QNetwork.initialize(small_spec(), np.random.default_rng(9))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_eval_zero_input_gives_zero_first_block():
    net = QNetwork.initialize(NetworkSpec(3, 2, (Block(4, True, 0.01),)), np.random.default_rng(0)).eval()
    out = net.forward(np.zeros(3))
    assert out.shape == (2,)
    assert np.array_equal(out, net.params["out.b"])


def test_forward_matches_hand_computation():
    spec = NetworkSpec(2, 3, (Block(3, False, 0.1),))
    net = QNetwork.initialize(spec, np.random.default_rng(0)).eval()
    W1 = np.array([[1.0, -2.0], [0.5, 0.5], [-1.0, 0.0]])
    b1 = np.array([0.1, -1.0, 0.0])
    W2 = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [-1.0, 1.0, 1.0]])
    b2 = np.array([0.0, 0.5, -0.5])
    net.params.update({"fc0.W": W1, "fc0.b": b1, "out.W": W2, "out.b": b2})
    x = np.array([2.0, 1.0])
    # pre = [0.1, 0.5, -2.0] -> leaky = [0.1, 0.5, -0.2]
    h = [0.1, 0.5, -0.2]
    expected = [h[0] + 2 * h[2], h[1] + 0.5, -h[0] + h[1] + h[2] - 0.5]
    assert net.forward(x) == pytest.approx(expected, abs=1e-15)


def test_train_batch_of_one_rejected():
    net = QNetwork.initialize(small_spec(), np.random.default_rng(0)).train()
    with pytest.raises(ValueError, match="batch"):
        net.forward(np.zeros((1, 4)))
    assert net.predict(np.zeros(4)).shape == (3,)
    assert net.training


def _loss(net, x, t, a):
    q = net.forward(x)
    return float(np.mean((q[np.arange(len(a)), a] - t) ** 2))


@pytest.mark.parametrize("input_bn", [True, False])
def test_gradients_match_finite_differences(input_bn):
    rng = np.random.default_rng(1)
    net = QNetwork.initialize(small_spec(input_bn), rng).train()
    for k in net.params:
        net.params[k] = net.params[k] + rng.normal(0, 0.3, net.params[k].shape)
    x = rng.normal(size=(7, 4))
    t = rng.normal(size=7)
    a = rng.integers(0, 3, size=7)
    _, grads = net.loss_and_grads(x, t, a)
    h = 1e-6
    worst = 0.0
    for name, p in net.params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = _loss(net, x, t, a)
            p[idx] = old - h
            down = _loss(net, x, t, a)
            p[idx] = old
            num = (up - down) / (2 * h)
            ana = grads[name][idx]
            # parameters cancelled by a following batch norm have zero gradient;
            # their difference quotient is pure rounding noise
            if max(abs(num), abs(ana)) < 1e-8:
                continue
            worst = max(worst, abs(num - ana) / max(abs(num), abs(ana)))
    assert worst < 1e-4


def test_only_chosen_action_gets_gradient():
    net = QNetwork.initialize(small_spec(False), np.random.default_rng(2)).train()
    x = np.random.default_rng(3).normal(size=(6, 4))
    _, grads = net.loss_and_grads(x, np.zeros(6), np.zeros(6, dtype=int))
    assert not grads["out.W"][1:].any() and not grads["out.b"][1:].any()


def test_matching_targets_give_zero_loss_and_no_update():
    net = QNetwork.initialize(small_spec(), np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(8, 4))
    a = np.arange(8) % 3
    net.train()
    q = net.forward(x)
    before = {k: v.copy() for k, v in net.params.items()}
    loss = backward_and_step(net, RAdam(), x, q[np.arange(8), a], a)
    assert loss < 1e-28
    assert all(np.allclose(before[k], net.params[k], atol=1e-12) for k in before)


def test_non_finite_loss_names_rows():
    net = QNetwork.initialize(small_spec(), np.random.default_rng(2))
    t = np.zeros(4)
    t[2] = np.nan
    with pytest.raises(NonFiniteLossError) as err:
        backward_and_step(net, RAdam(), np.ones((4, 4)), t, np.zeros(4, dtype=int))
    assert err.value.rows == [2]


def test_radam_rho_schedule():
    opt = RAdam()
    assert opt.rho_inf == pytest.approx(1999.0)
    assert opt.rho(1) == pytest.approx(1.0, abs=1e-6)
    rectified = [t for t in range(1, 20) if opt.rho(t) > 4]
    # rho_5 = 4.996 already exceeds 4
    assert rectified[0] == 5


def test_radam_early_steps_descend_monotonically():
    opt = RAdam(lr=1e-3)
    params = {"x": np.array([3.0])}
    losses = []
    for _ in range(5):
        losses.append(float(params["x"][0] ** 2))
        opt.step(params, {"x": 2 * params["x"]})
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_radam_solves_convex_quadratic():
    a = np.array([1.0, 3.0, 0.5, 2.0])
    params = {"x": np.array([1.0, -1.0, 0.5, 1.0])}
    opt = RAdam(lr=1e-3)
    for step in range(5000):
        x = params["x"]
        if float(np.sum(a * x * x)) < 1e-6:
            break
        opt.step(params, {"x": 2 * a * x})
    assert float(np.sum(a * params["x"] ** 2)) < 1e-6


def test_clone_and_copy_into():
    rng = np.random.default_rng(0)
    net = QNetwork.initialize(small_spec(), rng)
    clone = net.clone()
    x = rng.normal(size=(5, 4))
    ref = clone.predict(x)
    net.params["fc0.W"] += 1.0
    assert np.array_equal(clone.predict(x), ref)
    opt = RAdam()
    for _ in range(3):
        backward_and_step(net, opt, x, np.ones(5), np.zeros(5, dtype=int))
    net.copy_into(clone)
    assert all(np.array_equal(net.params[k], clone.params[k]) for k in net.params)
    assert all(np.array_equal(net.buffers[k], clone.buffers[k]) for k in net.buffers)
    assert np.array_equal(net.predict(x), clone.predict(x))
    other = QNetwork.initialize(NetworkSpec(4, 2, (Block(5),)), rng)
    with pytest.raises(ValueError):
        net.copy_into(other)


def test_bn_eval_converges_to_train():
    rng = np.random.default_rng(0)
    net = QNetwork.initialize(NetworkSpec(3, 2, (Block(6, True, 0.01),)), rng).train()
    mean, scale = np.array([1.0, -2.0, 0.5]), np.array([1.0, 0.5, 2.0])
    for _ in range(200):
        net.forward(mean + scale * rng.normal(size=(65_536, 3)))
    x = mean + scale * rng.normal(size=(50_000, 3))
    train_out = net.forward(x)
    eval_out = net.predict(x)
    assert np.max(np.abs(train_out - eval_out)) < 1e-2


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    net = QNetwork.initialize(small_spec(), rng)
    opt = RAdam()
    x = rng.normal(size=(6, 4))
    for _ in range(3):
        backward_and_step(net, opt, x, np.ones(6), np.arange(6) % 3)
    save_checkpoint(tmp_path / "c.npz", net, opt, extra={"k_total": 3})
    net2, opt2, extra = load_checkpoint(tmp_path / "c.npz")
    assert extra == {"k_total": 3}
    assert net2.spec == net.spec
    for k in net.params:
        assert np.array_equal(net.params[k], net2.params[k])
    for k in net.buffers:
        assert np.array_equal(net.buffers[k], net2.buffers[k])
    assert opt2.t == 3 and all(np.array_equal(opt.m[k], opt2.m[k]) for k in opt.m)
    # continued training agrees bit for bit
    backward_and_step(net, opt, x, np.zeros(6), np.arange(6) % 3)
    backward_and_step(net2, opt2, x, np.zeros(6), np.arange(6) % 3)
    assert all(np.array_equal(net.params[k], net2.params[k]) for k in net.params)


def test_training_is_deterministic():
    def trajectory():
        rng = np.random.default_rng(4)
        net = QNetwork.initialize(small_spec(), rng)
        opt = RAdam()
        for _ in range(10):
            x = rng.normal(size=(8, 4))
            backward_and_step(net, opt, x, rng.normal(size=8), rng.integers(0, 3, 8))
        return net.params

    a, b = trajectory(), trajectory()
    assert all(np.array_equal(a[k], b[k]) for k in a)
