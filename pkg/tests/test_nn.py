import numpy as np
import pytest

from springverb import ShapeError, Tensor
from springverb.gradcheck import check_gradients
from springverb.nn import (
    BatchNorm1d, CausalConv1d, FiLM, GRU, LSTM, PReLU, gated_activation, gru_forward,
    lstm_forward, max_pool1d, prelu,
)


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def set_film(film: FiLM, gamma: float, beta: float) -> None:
    c = film.channels
    film.generator_out.weight.assign(np.zeros(film.generator_out.weight.shape))
    film.generator_out.bias.assign(np.concatenate([np.full(c, gamma), np.full(c, beta)]))


def test_causal_conv_tap_positions(float64, rng):
    conv = CausalConv1d(1, 1, 3, rng, dilation=4, bias=False)
    x = np.zeros((1, 1, 20))
    x[0, 0, 5] = 1.0
    y = conv(Tensor(x)).numpy().reshape(-1)
    assert y.shape == (20,)
    assert np.flatnonzero(y).tolist() == [5, 9, 13]
    assert conv.receptive_field == 9


def test_zero_weights_leave_the_bias(float64, rng):
    conv = CausalConv1d(2, 3, 3, rng, dilation=2)
    conv.weight.assign(np.zeros(conv.weight.shape))
    y = conv(Tensor(rng.normal(size=(2, 2, 16)))).numpy()
    np.testing.assert_array_equal(y, np.broadcast_to(conv.bias.numpy()[None, :, None], y.shape))


def test_film_identity_and_constant(float64, rng):
    film = FiLM(2, 4, rng)
    x = Tensor(rng.normal(size=(3, 4, 10)))
    cond = Tensor(rng.uniform(-1, 1, (3, 2)))
    set_film(film, 1.0, 0.0)
    np.testing.assert_array_equal(film(x, cond).numpy(), x.numpy())
    set_film(film, 0.0, 0.75)
    np.testing.assert_array_equal(film(x, cond).numpy(), np.full((3, 4, 10), 0.75))


def test_film_depends_on_cond(float64, rng):
    film = FiLM(2, 4, rng)
    x = Tensor(np.broadcast_to(rng.normal(size=(1, 4, 10)), (2, 4, 10)))
    y = film(x, Tensor([[0.0, 1.0], [1.0, 0.0]])).numpy()
    assert not np.allclose(y[0], y[1])
    with pytest.raises(ShapeError, match="cond"):
        film(x, Tensor(np.zeros((2, 3))))


def test_prelu_values():
    x = Tensor([-2.0, 3.0])
    np.testing.assert_array_equal(prelu(x, Tensor([0.25])).numpy(), [-0.5, 3.0])
    np.testing.assert_array_equal(prelu(x, Tensor([1.0])).numpy(), [-2.0, 3.0])
    np.testing.assert_array_equal(prelu(x, Tensor([0.0])).numpy(), [0.0, 3.0])
    assert np.all(PReLU(5).weight.numpy() == 0.25)


def test_gated_activation_values(float64, rng):
    x1 = rng.normal(size=(1, 3, 8))
    closed = gated_activation(Tensor(np.concatenate([x1, np.full_like(x1, -50.0)], axis=1)))
    np.testing.assert_allclose(closed.numpy(), 0.0, atol=1e-20)
    opened = gated_activation(Tensor(np.concatenate([x1, np.full_like(x1, 50.0)], axis=1)))
    np.testing.assert_allclose(opened.numpy(), np.tanh(x1))
    silent = gated_activation(Tensor(np.concatenate([np.zeros_like(x1), x1], axis=1)))
    assert np.all(silent.numpy() == 0)
    with pytest.raises(ShapeError, match="even"):
        gated_activation(Tensor(np.zeros((1, 3, 4))))


def test_max_pool_values():
    x = Tensor(np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 1, 4))
    np.testing.assert_array_equal(max_pool1d(x, 1).numpy(), x.numpy())
    assert max_pool1d(x, 2).numpy().reshape(-1).tolist() == [1.0, 3.0, 3.0, 5.0]
    assert max_pool1d(x, 2, 2).numpy().reshape(-1).tolist() == [1.0, 3.0]


def test_lstm_with_zero_weights_stays_silent(float64, rng):
    lstm = LSTM(3, 5, rng)
    for p in (lstm.weight_ih, lstm.weight_hh, lstm.bias):
        p.assign(np.zeros(p.shape))
    bias = np.zeros(20)
    bias[5:10] = 1.0
    lstm.bias.assign(bias)
    y, h, c = lstm(Tensor(rng.normal(size=(2, 3, 12))))
    assert y.shape == (2, 5, 12)
    assert np.all(y.numpy() == 0) and np.all(h.numpy() == 0) and np.all(c.numpy() == 0)


def test_lstm_matches_per_step_reference(float64, rng):
    lstm = LSTM(3, 4, rng)
    x = rng.normal(size=(2, 3, 9))
    h0, c0 = rng.normal(size=(2, 4)), rng.normal(size=(2, 4))
    y, hT, cT = lstm(Tensor(x), Tensor(h0), Tensor(c0))

    W, U, b = lstm.weight_ih.numpy(), lstm.weight_hh.numpy(), lstm.bias.numpy()
    h, c = h0, c0
    for t in range(9):
        a = x[:, :, t] @ W.T + h @ U.T + b
        i, f, g, o = sigmoid(a[:, :4]), sigmoid(a[:, 4:8]), np.tanh(a[:, 8:12]), sigmoid(a[:, 12:])
        c = f * c + i * g
        h = o * np.tanh(c)
        np.testing.assert_allclose(y.numpy()[:, :, t], h, atol=1e-12)
    np.testing.assert_allclose(hT.numpy(), h, atol=1e-12)
    np.testing.assert_allclose(cT.numpy(), c, atol=1e-12)


def test_lstm_forget_bias_starts_at_one(rng):
    assert np.all(LSTM(2, 6, rng).bias.numpy()[6:12] == 1.0)


def test_gru_matches_per_step_reference(float64, rng):
    gru = GRU(3, 4, rng)
    x = rng.normal(size=(2, 3, 9))
    h0 = rng.normal(size=(2, 4))
    y, hT = gru(Tensor(x), Tensor(h0))

    W, U, b = gru.weight_ih.numpy(), gru.weight_hh.numpy(), gru.bias.numpy()
    h = h0
    for t in range(9):
        wx, uh = x[:, :, t] @ W.T + b, h @ U.T
        z = sigmoid(wx[:, :4] + uh[:, :4])
        r = sigmoid(wx[:, 4:8] + uh[:, 4:8])
        n = np.tanh(wx[:, 8:] + r * uh[:, 8:])
        h = (1 - z) * n + z * h
        np.testing.assert_allclose(y.numpy()[:, :, t], h, atol=1e-12)
    np.testing.assert_allclose(hT.numpy(), h, atol=1e-12)


def test_gru_update_gate_short_circuit(float64, rng):
    gru = GRU(2, 3, rng)
    bias = gru.bias.numpy()
    bias[:3] = 50.0
    gru.bias.assign(bias)
    h0 = rng.normal(size=(1, 3))
    y, _ = gru(Tensor(rng.normal(size=(1, 2, 10))), Tensor(h0))
    np.testing.assert_allclose(y.numpy(), np.repeat(h0[:, :, None], 10, axis=2), atol=1e-15)


def test_gru_zero_weights_zero_state(float64, rng):
    gru = GRU(2, 3, rng)
    for p in (gru.weight_ih, gru.weight_hh, gru.bias):
        p.assign(np.zeros(p.shape))
    y, _ = gru(Tensor(rng.normal(size=(2, 2, 6))))
    assert np.all(y.numpy() == 0)


def test_recurrent_shape_errors(rng):
    lstm = LSTM(3, 4, rng)
    with pytest.raises(ShapeError):
        lstm(Tensor(np.zeros((1, 2, 5))))
    with pytest.raises(ShapeError, match="initial state"):
        lstm(Tensor(np.zeros((1, 3, 5))), Tensor(np.zeros((2, 4))))


def test_bptt_gradients(float64, rng):
    x = Tensor(rng.normal(size=(2, 3, 7)), requires_grad=True)
    h0 = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    c0 = Tensor(rng.normal(size=(2, 4)), requires_grad=True)
    lstm, gru = LSTM(3, 4, rng), GRU(3, 4, rng)
    wy = Tensor(rng.normal(size=(2, 4, 7)))
    wh, wc = Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(2, 4)))

    def lstm_loss():
        y, h, c = lstm_forward(x, lstm.weight_ih, lstm.weight_hh, lstm.bias, h0, c0)
        return (y * wy).sum() + (h * wh).sum() + (c * wc).sum()

    def gru_loss():
        y, h = gru_forward(x, gru.weight_ih, gru.weight_hh, gru.bias, h0)
        return (y * wy).sum() + (h * wc).sum()

    for loss, params in ((lstm_loss, lstm), (gru_loss, gru)):
        leaves = dict(params.named_parameters(), x=x, h0=h0)
        if loss is lstm_loss:
            leaves["c0"] = c0
        rows = check_gradients(loss, leaves, rng, samples=8)
        assert all(r.passed for r in rows), [(r.group, r.rel_error) for r in rows]


def test_layer_gradients(float64, rng):
    conv = CausalConv1d(2, 4, 3, rng, dilation=2)
    film, act = FiLM(2, 4, rng), PReLU(4)
    x = Tensor(rng.normal(size=(2, 2, 16)), requires_grad=True)
    cond = Tensor(rng.uniform(-1, 1, (2, 2)), requires_grad=True)
    weights = Tensor(rng.normal(size=(2, 2, 8)))

    def loss():
        y = act(film(conv(x), cond))
        return (max_pool1d(gated_activation(y), 3, 2) * weights).sum()

    leaves = dict(conv.named_parameters(prefix="conv."), x=x, cond=cond)
    leaves.update(film.named_parameters(prefix="film."))
    leaves.update(act.named_parameters(prefix="act."))
    rows = check_gradients(loss, leaves, rng, samples=6)
    assert all(r.passed for r in rows), [(r.group, r.rel_error) for r in rows]


def test_batch_norm_statistics(float64, rng):
    norm = BatchNorm1d(3)
    x = Tensor(rng.normal(2.0, 3.0, size=(4, 3, 50)))
    y = norm(x).numpy()
    np.testing.assert_allclose(y.mean(axis=(0, 2)), 0.0, atol=1e-10)
    np.testing.assert_allclose(y.var(axis=(0, 2)), 1.0, atol=1e-4)
    assert np.all(norm.running_mean != 0)

    norm.eval()
    mean, var = norm.running_mean.copy(), norm.running_var.copy()
    expected = (x.numpy() - mean[None, :, None]) / np.sqrt(var[None, :, None] + 1e-5)
    np.testing.assert_allclose(norm(x).numpy(), expected)
    np.testing.assert_array_equal(norm.running_mean, mean)


def test_module_state_round_trip(float64, rng):
    film = FiLM(2, 3, rng, use_batchnorm=True)
    names = [n for n, _ in film.named_parameters()]
    assert names == ["generator_in.weight", "generator_in.bias",
                     "generator_out.weight", "generator_out.bias"]
    state = film.state_dict()
    assert "norm.running_var" in state
    other = FiLM(2, 3, np.random.default_rng(99), use_batchnorm=True)
    other.load_state_dict(state)
    for name, value in other.state_dict().items():
        np.testing.assert_array_equal(value, state[name])
    with pytest.raises(KeyError):
        other.load_state_dict({"generator_in.weight": state["generator_in.weight"]})
