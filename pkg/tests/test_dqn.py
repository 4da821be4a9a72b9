import numpy as np
import pytest

from aosi.config import DqnConfig
from aosi.dqn import (Adam, Batch, DqnAgent, QNetwork, ReplayBuffer, act, epsilon, greedy_probability,
                      load_checkpoint, save_checkpoint, td_loss, train_step)


def random_batch(rng, n_in, n_out, size=8):
    return Batch(rng.normal(size=(size, n_in)), rng.integers(0, n_out, size),
                 rng.normal(size=size), rng.normal(size=(size, n_in)))


def numeric_grad(batch, net, target, discount, h=1e-5):
    grad = np.zeros_like(net.flat)
    for i in range(net.flat.size):
        old = net.flat[i]
        net.flat[i] = old + h
        up, _ = td_loss(batch, net, target, discount)
        net.flat[i] = old - h
        down, _ = td_loss(batch, net, target, discount)
        net.flat[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def test_zero_weights_give_zero_output():
    net = QNetwork((3, 4, 2))
    net.flat[:] = 0
    assert np.array_equal(net.forward(np.ones(3)), np.zeros(2))


def test_identity_net():
    net = QNetwork((1, 1), params=[np.array([[1.0]]), np.array([0.0])])
    assert net.forward(np.array([-2.5]))[0] == -2.5


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        QNetwork((3, 4, 2)).forward(np.ones(4))


def test_glorot_bounds():
    net = QNetwork((9, 64, 256, 64, 28), np.random.default_rng(0))
    for i, (a, b) in enumerate(zip(net.widths[:-1], net.widths[1:])):
        assert np.abs(net.params[2 * i]).max() <= np.sqrt(6 / (a + b))
        assert not net.params[2 * i + 1].any()


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    for _ in range(10):
        widths = [int(w) for w in rng.integers(2, 6, size=4)]
        net = QNetwork(widths, rng)
        net.flat[:] += rng.normal(scale=0.1, size=net.flat.size)   # nonzero biases
        target = QNetwork(widths, rng)
        batch = random_batch(rng, widths[0], widths[-1])
        _, analytic = td_loss(batch, net, target, 0.9)
        numeric = numeric_grad(batch, net, target, 0.9)
        err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(analytic), np.linalg.norm(numeric))
        assert err < 1e-4


def test_td_loss_worked_example():
    # One-input nets with constant outputs: Q(s, .) = (1, 0), Q_hat(s', .) = (2, -1).
    net = QNetwork((1, 2), params=[np.zeros((1, 2)), np.array([1.0, 0.0])])
    target = QNetwork((1, 2), params=[np.zeros((1, 2)), np.array([2.0, -1.0])])
    batch = Batch(np.zeros((1, 1)), np.array([0]), np.array([-0.5]), np.zeros((1, 1)))
    loss, _ = td_loss(batch, net, target, 0.9)
    assert loss == pytest.approx(0.09, rel=1e-12)
    loss0, _ = td_loss(batch, net, target, 0.0)
    assert loss0 == pytest.approx((-0.5 - 1.0) ** 2)


def test_td_loss_fixed_point():
    net = QNetwork((1, 2), params=[np.zeros((1, 2)), np.array([1.0, 1.0])])
    batch = Batch(np.zeros((4, 1)), np.array([0, 1, 0, 1]), np.full(4, 0.1), np.zeros((4, 1)))
    loss, grad = td_loss(batch, net, net.copy(), 0.9)
    assert loss == 0.0
    assert not grad.any()


def test_epsilon_schedule():
    assert epsilon(0, 0.2, 0.99, 500) == pytest.approx(0.2)
    assert epsilon(499, 0.2, 0.99, 500) == pytest.approx(0.99)
    assert epsilon(50, 0.2, 0.99, 101) == pytest.approx(0.595)
    assert greedy_probability(DqnConfig(episodes=101), 50) == pytest.approx(0.595)


def test_act_greedy_and_uniform():
    rng = np.random.default_rng(0)
    net = QNetwork((2, 5, 4), rng)
    s = np.array([0.3, -0.2])
    best = int(np.argmax(net.forward(s)))
    assert all(act(net, s, 1.0, rng) == best for _ in range(100))
    counts = np.bincount([act(net, s, 0.0, rng) for _ in range(100_000)], minlength=4)
    assert np.all(np.abs(counts / 100_000 - 0.25) < 0.02)
    a = [act(net, s, 0.5, np.random.default_rng(3)) for _ in range(3)]
    assert a == [act(net, s, 0.5, np.random.default_rng(3)) for _ in range(3)]


def test_act_mask():
    rng = np.random.default_rng(0)
    net = QNetwork((2, 5, 4), rng)
    mask = np.array([True, False, False, True])
    assert {act(net, np.zeros(2), 0.5, rng, mask) for _ in range(200)} <= {0, 3}


def small_cfg(**kw):
    base = dict(hidden_layers=(8, 8, 8), buffer_capacity=50, minibatch=4, warmup_transitions=10)
    base.update(kw)
    return DqnConfig(**base)


def make_agent(cfg, n_in=3, n_out=2, seed=0):
    return DqnAgent.create(n_in, n_out, cfg, np.random.default_rng(seed),
                           np.random.default_rng(seed + 1), np.random.default_rng(seed + 2))


def test_warmup_is_noop():
    agent = make_agent(small_cfg())
    before = agent.net.flat.copy()
    rng = np.random.default_rng(5)
    for _ in range(9):
        result = agent.learn(rng.normal(size=3), 0, 0.0, rng.normal(size=3))
        assert result.status == "warming up"
    assert np.array_equal(agent.net.flat, before)
    assert agent.learn(rng.normal(size=3), 0, 0.0, rng.normal(size=3)).status == "trained"


def test_target_sync_after_100_steps():
    agent = make_agent(small_cfg(warmup_transitions=4))
    rng = np.random.default_rng(6)
    initial_target = agent.target.flat.copy()
    synced = []
    while agent.train_steps < 100:
        r = agent.learn(rng.normal(size=3), int(rng.integers(2)), float(rng.normal()), rng.normal(size=3))
        synced.append(r.synced)
        if agent.train_steps < 100:
            assert np.array_equal(agent.target.flat, initial_target)
    assert synced[-1] and sum(synced) == 1
    assert agent.target.flat.tobytes() == agent.net.flat.tobytes()


def test_loss_decreases_on_fixed_batch():
    rng = np.random.default_rng(2)
    net = QNetwork((4, 16, 16, 3), rng)
    target = net.copy()
    batch = random_batch(rng, 4, 3, size=32)
    opt = Adam(net.flat.size, lr=0.001)
    losses = []
    for _ in range(50):
        loss, grad = td_loss(batch, net, target, 0.0)
        opt.step(net.flat, grad)
        losses.append(loss)
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_adam_matches_textbook_update():
    rng = np.random.default_rng(3)
    p = rng.normal(size=5)
    ref, m, v = p.copy(), np.zeros(5), np.zeros(5)
    opt = Adam(5, lr=0.01)
    for t in range(1, 6):
        g = rng.normal(size=5)
        opt.step(p, g)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert np.allclose(p, ref, rtol=1e-12, atol=1e-14)


def test_replay_fifo():
    buf = ReplayBuffer(3, 1)
    for i in range(5):
        buf.push([float(i)], i, float(i), [float(i)])
    assert len(buf) == 3
    assert buf.ordered().actions.tolist() == [2, 3, 4]
    sample = buf.sample(100, np.random.default_rng(0))
    assert set(sample.actions.tolist()) <= {2, 3, 4}
    with pytest.raises(ValueError):
        buf.push([1.0, 2.0], 0, 0.0, [1.0])


def test_train_step_counter():
    cfg = small_cfg(warmup_transitions=0)
    rng = np.random.default_rng(1)
    net = QNetwork((3, 8, 2), rng)
    target = net.copy()
    buf = ReplayBuffer(10, 3)
    steps, r = train_step(buf, net, target, Adam(net.flat.size), 0, cfg, rng)
    assert (steps, r.status) == (0, "warming up")
    for _ in range(4):
        buf.push(rng.normal(size=3), 1, 1.0, rng.normal(size=3))
    steps, r = train_step(buf, net, target, Adam(net.flat.size), 0, cfg, rng)
    assert (steps, r.status) == (1, "trained")


@pytest.mark.parametrize("precision", ["float64", "float32"])
def test_checkpoint_roundtrip(tmp_path, precision):
    agent = make_agent(small_cfg(warmup_transitions=4, precision=precision))
    rng = np.random.default_rng(9)
    for _ in range(30):
        agent.learn(rng.normal(size=3), int(rng.integers(2)), float(rng.normal()), rng.normal(size=3))
    path = tmp_path / "ck.npz"
    agent.save(path)
    net, target, opt, steps = load_checkpoint(path)
    assert net.flat.tobytes() == agent.net.flat.tobytes()
    assert target.flat.tobytes() == agent.target.flat.tobytes()
    assert opt.m.tobytes() == agent.opt.m.tobytes() and opt.v.tobytes() == agent.opt.v.tobytes()
    assert (opt.t, steps) == (agent.opt.t, agent.train_steps)
    save_checkpoint(tmp_path / "again.npz", net, target, opt, steps)
    other = make_agent(small_cfg(precision=precision), seed=50)
    other.load(tmp_path / "again.npz")
    assert other.net.flat.tobytes() == agent.net.flat.tobytes()


def test_load_rejects_other_widths(tmp_path):
    agent = make_agent(small_cfg())
    agent.save(tmp_path / "ck.npz")
    with pytest.raises(ValueError):
        make_agent(small_cfg(), n_in=4).load(tmp_path / "ck.npz")
