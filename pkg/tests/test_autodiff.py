import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hvis.autodiff import (
    Adam, AdamState, Tensor, adam_step, backward, clip_weights_, conv1d_causal, functional as Fn,
    gradcheck, gru_cell, matmul, no_grad,
)
from hvis.errors import ContractError, DimensionError, ParameterError, TrainingError


def leaf(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


# -- matmul ------------------------------------------------------------------
def test_matmul_example():
    out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[5.0], [6.0]]))
    np.testing.assert_array_equal(out.data, [[17.0], [39.0]])


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
    with pytest.raises(DimensionError):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


@pytest.mark.parametrize("sa,sb", [((3, 4), (4, 2)), ((2, 3, 4), (4, 5)), ((4, 3), (2, 3, 5)),
                                   ((2, 3, 4), (2, 4, 2)), ((1, 3, 4), (5, 4, 2))])
def test_matmul_gradients(rng, sa, sb):
    a, b = leaf(rng.uniform(-1, 1, sa)), leaf(rng.uniform(-1, 1, sb))
    w = rng.uniform(-1, 1, np.matmul(a.data, b.data).shape)
    errs = gradcheck(lambda: Fn.sum(Fn.mul(matmul(a, b), Tensor(w))), [a, b])
    assert max(errs) < 1e-6


# -- backward ----------------------------------------------------------------
def test_backward_sum_gives_ones(rng):
    x = leaf(rng.normal(size=(3, 4)))
    Fn.sum(x).backward()
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_backward_square_sum(rng):
    x = leaf(rng.normal(size=5))
    Fn.sum(Fn.mul(x, x)).backward()
    np.testing.assert_allclose(x.grad, 2 * x.data, rtol=0, atol=1e-15)


def test_backward_rejects_non_scalar(rng):
    x = leaf(rng.normal(size=3))
    with pytest.raises(ContractError):
        backward(Fn.mul(x, 2.0))


def test_shared_subexpression_accumulates():
    x = leaf([3.0])
    y = Fn.mul(x, x)
    Fn.sum(Fn.add(y, y)).backward()
    np.testing.assert_allclose(x.grad, [12.0])


def test_no_grad_builds_no_graph(rng):
    x = leaf(rng.normal(size=3))
    with no_grad():
        y = Fn.tanh(x)
    assert not y.requires_grad


# -- elementwise and shape ops ----------------------------------------------
UNARY = [Fn.tanh, Fn.sigmoid, Fn.relu, Fn.leaky_relu, Fn.neg, Fn.square, Fn.identity]


@pytest.mark.parametrize("op", UNARY, ids=lambda f: f.__name__)
def test_unary_gradients(rng, op):
    x = leaf(rng.uniform(-1, 1, (3, 4)))
    # keep relu kinks away from the finite-difference stencil
    x.data[np.abs(x.data) < 1e-3] = 0.5
    w = Tensor(rng.uniform(-1, 1, (3, 4)))
    assert max(gradcheck(lambda: Fn.sum(Fn.mul(op(x), w)), [x])) < 1e-6


@pytest.mark.parametrize("op", [Fn.add, Fn.sub, Fn.mul, Fn.div], ids=lambda f: f.__name__)
def test_binary_broadcast_gradients(rng, op):
    a = leaf(rng.uniform(0.5, 1.5, (2, 3, 4)))
    b = leaf(rng.uniform(0.5, 1.5, (3, 1)))
    w = Tensor(rng.uniform(-1, 1, (2, 3, 4)))
    assert max(gradcheck(lambda: Fn.sum(Fn.mul(op(a, b), w)), [a, b])) < 1e-6


def test_reductions_and_shapes(rng):
    x = leaf(rng.uniform(-1, 1, (2, 3, 4)))
    w = Tensor(rng.uniform(-1, 1, (4, 3)))
    fns = [
        lambda: Fn.sum(Fn.mul(Fn.mean(x, axis=0), Fn.transpose(w))),
        lambda: Fn.sum(Fn.square(Fn.sum(x, axis=(0, 2), keepdims=True))),
        lambda: Fn.sum(Fn.mul(Fn.reshape(x, (6, 4)), Tensor(np.arange(24.0).reshape(6, 4)))),
        lambda: Fn.sum(Fn.square(Fn.transpose(x, (2, 0, 1))[1:3])),
        lambda: Fn.sum(Fn.square(x[:, [0, 2, 0], 1])),
        lambda: Fn.sum(Fn.square(Fn.concat([x, Fn.tanh(x)], axis=1))),
        lambda: Fn.sum(Fn.square(Fn.stack([x, Fn.mul(x, 3.0)], axis=-1))),
    ]
    for fn in fns:
        assert max(gradcheck(fn, [x])) < 1e-6


def test_getitem_advanced_index_accumulates():
    x = leaf([1.0, 2.0, 3.0])
    Fn.sum(x[[0, 0, 2]]).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 0.0, 1.0])


# -- dropout -----------------------------------------------------------------
def test_dropout_eval_is_identity(rng):
    x = Tensor(rng.normal(size=(4, 5)))
    assert Fn.dropout(x, 0.3, training=False) is x


def test_dropout_mean_preserved(rng):
    x = Tensor(np.full(1, 2.5))
    draws = np.array([Fn.dropout(x, 0.1, True, rng).data[0] for _ in range(20000)])
    assert abs(draws.mean() - 2.5) / 2.5 < 0.01


def test_dropout_rate_validation():
    with pytest.raises(ParameterError):
        Fn.dropout(Tensor([1.0]), 1.0, True, np.random.default_rng(0))


# -- causal convolution ------------------------------------------------------
def direct_causal_conv(x, kernel, dilation):
    """Loop oracle on [C_in, T] with explicit zero left padding."""
    c_out, c_in, k = kernel.shape
    T = x.shape[1]
    out = np.zeros((c_out, T))
    for o in range(c_out):
        for t in range(T):
            acc = 0.0
            for i in range(c_in):
                for j in range(k):
                    src = t - (k - 1 - j) * dilation
                    if src >= 0:
                        acc += kernel[o, i, j] * x[i, src]
            out[o, t] = acc
    return out


def test_conv_example():
    out = conv1d_causal(Tensor([[1.0, 2.0, 3.0, 4.0]]), Tensor(np.ones((1, 1, 2))), dilation=2)
    np.testing.assert_array_equal(out.data, [[1.0, 2.0, 4.0, 6.0]])


def test_conv_identity_kernel(rng):
    x = rng.normal(size=(3, 7))
    kernel = np.eye(3)[:, :, None]
    np.testing.assert_array_equal(conv1d_causal(Tensor(x), Tensor(kernel)).data, x)


@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_conv_matches_loop_oracle(rng, dilation):
    x = rng.normal(size=(2, 3, 9))
    kernel = rng.normal(size=(4, 3, 3))
    out = conv1d_causal(Tensor(x), Tensor(kernel), dilation).data
    for b in range(2):
        np.testing.assert_allclose(out[b], direct_causal_conv(x[b], kernel, dilation), atol=1e-12)


def test_conv_channels_last_agrees(rng):
    x = rng.normal(size=(2, 3, 9))
    kernel = rng.normal(size=(4, 3, 3))
    bias = rng.normal(size=4)
    a = conv1d_causal(Tensor(x), Tensor(kernel), 2, Tensor(bias)).data
    b = conv1d_causal(Tensor(x.transpose(0, 2, 1)), Tensor(kernel), 2, Tensor(bias), channels_last=True).data
    np.testing.assert_allclose(a, b.transpose(0, 2, 1), atol=1e-12)


def test_conv_rejects_bad_dilation():
    with pytest.raises(ParameterError):
        conv1d_causal(Tensor(np.ones((1, 4))), Tensor(np.ones((1, 1, 2))), dilation=0)


@settings(max_examples=25, deadline=None)
@given(t=st.integers(0, 8), dilation=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_conv_causality(t, dilation, seed):
    r = np.random.default_rng(seed)
    x = r.normal(size=(2, 9))
    kernel = Tensor(r.normal(size=(3, 2, 3)))
    base = conv1d_causal(Tensor(x), kernel, dilation).data
    x2 = x.copy()
    x2[:, t] += r.normal(size=2) + 1.0
    moved = conv1d_causal(Tensor(x2), kernel, dilation).data
    np.testing.assert_array_equal(base[:, :t], moved[:, :t])


def test_conv_gradients(rng):
    x = leaf(rng.uniform(-1, 1, (2, 3, 6)))
    kernel = leaf(rng.uniform(-1, 1, (2, 3, 3)))
    bias = leaf(rng.uniform(-1, 1, 2))
    w = Tensor(rng.uniform(-1, 1, (2, 2, 6)))
    errs = gradcheck(lambda: Fn.sum(Fn.mul(conv1d_causal(x, kernel, 2, bias), w)), [x, kernel, bias])
    assert max(errs) < 1e-6


# -- GRU -----------------------------------------------------------------------
def scalar_gru(x, h, p):
    """Gate-by-gate oracle with explicit loops; gates ordered reset, update, candidate."""
    H = h.size
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    out = np.zeros(H)
    for j in range(H):
        gx = [p["b_x"][g * H + j] + sum(x[i] * p["w_x"][i, g * H + j] for i in range(x.size)) for g in range(3)]
        gh = [p["b_h"][g * H + j] + sum(h[i] * p["w_h"][i, g * H + j] for i in range(H)) for g in range(3)]
        r = sig(gx[0] + gh[0])
        z = sig(gx[1] + gh[1])
        n = np.tanh(gx[2] + r * gh[2])
        out[j] = (1 - z) * h[j] + z * n
    return out


def gru_case(rng, n_in=3, H=4):
    p = {"w_x": rng.uniform(-1, 1, (n_in, 3 * H)), "w_h": rng.uniform(-1, 1, (H, 3 * H)),
         "b_x": rng.uniform(-1, 1, 3 * H), "b_h": rng.uniform(-1, 1, 3 * H)}
    return rng.uniform(-1, 1, n_in), rng.uniform(-1, 1, H), p


def test_gru_matches_scalar_oracle(rng):
    x, h, p = gru_case(rng)
    out = gru_cell(Tensor(x), Tensor(h), {k: Tensor(v) for k, v in p.items()}).data
    np.testing.assert_allclose(out, scalar_gru(x, h, p), rtol=0, atol=1e-12)


@pytest.mark.parametrize("bias,expect", [(50.0, "candidate"), (-50.0, "previous")])
def test_gru_update_gate_limits(rng, bias, expect):
    x, h, p = gru_case(rng)
    H = h.size
    p["b_x"][H:2 * H] = bias
    out = gru_cell(Tensor(x), Tensor(h), {k: Tensor(v) for k, v in p.items()}).data
    if expect == "previous":
        np.testing.assert_allclose(out, h, atol=1e-12)
    else:
        r = 1 / (1 + np.exp(-(x @ p["w_x"][:, :H] + p["b_x"][:H] + h @ p["w_h"][:, :H] + p["b_h"][:H])))
        n = np.tanh(x @ p["w_x"][:, 2 * H:] + p["b_x"][2 * H:] + r * (h @ p["w_h"][:, 2 * H:] + p["b_h"][2 * H:]))
        np.testing.assert_allclose(out, n, atol=1e-12)


def test_gru_shape_mismatch(rng):
    x, h, p = gru_case(rng)
    with pytest.raises(DimensionError):
        gru_cell(Tensor(np.ones(5)), Tensor(h), {k: Tensor(v) for k, v in p.items()})


def test_gru_gradients(rng):
    x, h, p = gru_case(rng)
    xs, hs = leaf(np.stack([x, -x])), leaf(np.stack([h, h[::-1]]))
    ps = {k: leaf(v) for k, v in p.items()}
    w = Tensor(rng.uniform(-1, 1, (2, h.size)))
    errs = gradcheck(lambda: Fn.sum(Fn.mul(gru_cell(xs, hs, ps), w)), [xs, hs, *ps.values()])
    assert max(errs) < 1e-6


# -- Adam ----------------------------------------------------------------------
def test_adam_first_step_moves_by_lr():
    p = leaf([0.0])
    adam_step({"p": p}, {"p": np.array([1.0])}, AdamState(learning_rate=0.001))
    assert p.data[0] == pytest.approx(-0.001, rel=1e-6)


def test_adam_zero_grad_keeps_params():
    p = leaf([0.3, -0.2])
    state = AdamState()
    adam_step({"p": p}, {"p": np.zeros(2)}, state)
    np.testing.assert_array_equal(p.data, [0.3, -0.2])
    assert state.step == 1


def test_adam_descends_quadratic():
    p = leaf([1.0, -2.0])
    opt = Adam({"p": p}.items(), lr=0.1)
    losses = []
    for _ in range(3):
        loss = Fn.sum(Fn.square(p))
        losses.append(loss.item())
        opt.zero_grad()
        loss.backward()
        opt.step()
    assert losses[2] < losses[1] < losses[0]


def test_adam_nan_names_parameter():
    p = leaf([0.0])
    with pytest.raises(TrainingError) as info:
        adam_step({"weight": p}, {"weight": np.array([np.nan])}, AdamState())
    assert info.value.parameter == "weight"


def test_clip_weights(rng):
    ps = [leaf(rng.normal(size=(3, 3))), leaf(rng.normal(size=4))]
    clip_weights_(ps, 0.01)
    assert all(np.max(np.abs(p.data)) <= 0.01 for p in ps)


def test_forward_backward_is_deterministic():
    def run():
        r = np.random.default_rng(7)
        x = leaf(r.normal(size=(2, 3, 5)))
        k = leaf(r.normal(size=(2, 3, 3)))
        y = Fn.dropout(Fn.tanh(conv1d_causal(x, k, 2)), 0.1, True, r)
        loss = Fn.sum(Fn.square(y))
        loss.backward()
        return loss.item(), x.grad.copy(), k.grad.copy()
    a, b = run(), run()
    assert a[0] == b[0]
    np.testing.assert_array_equal(a[1], b[1])
    np.testing.assert_array_equal(a[2], b[2])
