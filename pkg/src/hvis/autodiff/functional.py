"""Differentiable operations on :class:`Tensor`."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor, check_shapes, make_result, unbroadcast


# -- elementwise -----------------------------------------------------------
def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_shapes("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_shapes("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_shapes("mul", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        return (unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
                unbroadcast(g * ad, bd.shape) if b.requires_grad else None)

    return make_result(ad * bd, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    check_shapes("div", a.shape, b.shape)
    ad, bd = a.data, b.data

    def bw(g):
        return (unbroadcast(g / bd, ad.shape) if a.requires_grad else None,
                unbroadcast(-g * ad / (bd * bd), bd.shape) if b.requires_grad else None)

    return make_result(ad / bd, (a, b), bw)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return make_result(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return make_result(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    # tanh form is overflow-free
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return make_result(y, (a,), lambda g: (g * y * (1.0 - y),))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return make_result(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(a.data > 0, 1.0, slope)
    return make_result(a.data * scale, (a,), lambda g: (g * scale,))


def identity(a: Tensor) -> Tensor:
    return a


def dropout(a: Tensor, rate: float, training: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-rate) so eval mode is the identity."""
    if not 0.0 <= rate < 1.0:
        raise ParameterError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return a
    if rng is None:
        raise ParameterError("dropout in training mode needs a random generator")
    mask = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return make_result(a.data * mask, (a,), lambda g: (g * mask,))


# -- reductions / shape ----------------------------------------------------
def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return make_result(np.sum(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    shape = a.shape
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([shape[ax] for ax in axes]))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)

    return make_result(np.mean(a.data, axis=axis, keepdims=keepdims), (a,), bw)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {old} as {tuple(shape)}") from None
    return make_result(out, (a,), lambda g: (g.reshape(old),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return make_result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def _is_basic(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(i is None or i is Ellipsis or isinstance(i, (slice, int, np.integer)) for i in items)


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape
    basic = _is_basic(index)

    def bw(g):
        full = np.zeros(shape)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return make_result(a.data[index], (a,), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in tensors]} along axis {axis}: {exc}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return make_result(out, tensors, bw)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"stack: {[t.shape for t in tensors]}: {exc}") from None

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return make_result(out, tensors, bw)


# -- linear algebra --------------------------------------------------------
def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting; both operands need ndim >= 2."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} do not align")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise DimensionError(f"matmul: batch shapes {a.shape} and {b.shape} do not broadcast") from None
    ad, bd = a.data, b.data

    def bw(g):
        ga = gb = None
        if a.requires_grad:
            if ad.ndim == 2 and g.ndim > 2:
                # sum over batch of g_b @ b_b^T as one GEMM
                gm = np.moveaxis(g, -2, 0).reshape(g.shape[-2], -1)
                bb = np.broadcast_to(bd, g.shape[:-2] + bd.shape[-2:])
                ga = gm @ np.moveaxis(bb, -2, 0).reshape(bd.shape[-2], -1).T
            else:
                ga = unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape)
        if b.requires_grad:
            if bd.ndim == 2 and g.ndim > 2:
                k = ad.shape[-1]
                a2 = np.broadcast_to(ad, g.shape[:-2] + ad.shape[-2:]).reshape(-1, k)
                gb = a2.T @ g.reshape(-1, g.shape[-1])
            else:
                gb = unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape)
        return ga, gb

    return make_result(out, (a, b), bw)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    y = matmul(x, weight)
    return y if bias is None else add(y, bias)


def conv1d_causal(x: Tensor, kernel: Tensor, dilation: int = 1, bias: Tensor | None = None,
                  channels_last: bool = False) -> Tensor:
    """Left-zero-padded dilated 1-D convolution.

    ``x`` is [channels, time] or [batch, channels, time] (``[..., time,
    channels]`` with ``channels_last``); ``kernel`` is [out, in, k]. Tap ``j``
    reads the input ``(k-1-j)*dilation`` steps in the past, so the last tap
    sits on the current step and no output depends on a later input.
    """
    if not isinstance(dilation, (int, np.integer)) or dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation}")
    if kernel.ndim != 3 or kernel.shape[2] < 1:
        raise DimensionError(f"conv1d_causal: kernel must be [out, in, k], got {kernel.shape}")
    squeeze = x.ndim == 2
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 3:
        raise DimensionError(f"conv1d_causal: input must be 2-D or 3-D, got {x.shape}")
    if not channels_last:
        xd = xd.transpose(0, 2, 1)
    B, T, C = xd.shape
    O, C_k, k = kernel.shape
    if C != C_k:
        raise DimensionError(f"conv1d_causal: input {x.shape} has {C} channels, kernel {kernel.shape} wants {C_k}")
    if T < 1:
        raise DimensionError("conv1d_causal: empty time axis")
    pad = (k - 1) * dilation
    xp = np.concatenate([np.zeros((B, pad, C)), xd], axis=1) if pad else xd
    # column block j holds x[t - (k-1-j)*dilation]
    cols = np.concatenate([xp[:, j * dilation: j * dilation + T, :] for j in range(k)], axis=2)
    cols = cols.reshape(B * T, k * C)
    wmat = kernel.data.transpose(2, 1, 0).reshape(k * C, O)
    out = (cols @ wmat).reshape(B, T, O)
    if bias is not None:
        out = out + bias.data
    if not channels_last:
        out = out.transpose(0, 2, 1)
    if squeeze:
        out = out[0]

    def bw(g):
        g3 = g[None] if squeeze else g
        if not channels_last:
            g3 = g3.transpose(0, 2, 1)
        g2 = g3.reshape(B * T, O)
        gx = gw = gbias = None
        if kernel.requires_grad:
            gw = (cols.T @ g2).reshape(k, C, O).transpose(2, 1, 0)
        if x.requires_grad:
            gcols = (g2 @ wmat.T).reshape(B, T, k * C)
            gxp = np.zeros((B, T + pad, C))
            for j in range(k):
                gxp[:, j * dilation: j * dilation + T, :] += gcols[:, :, j * C:(j + 1) * C]
            gx = gxp[:, pad:, :]
            if not channels_last:
                gx = gx.transpose(0, 2, 1)
            if squeeze:
                gx = gx[0]
        if bias is not None and bias.requires_grad:
            gbias = g2.sum(axis=0)
        return (gx, gw, gbias) if bias is not None else (gx, gw)

    parents = (x, kernel, bias) if bias is not None else (x, kernel)
    return make_result(out, parents, bw)


def gru_cell(x: Tensor, h: Tensor, params: dict) -> Tensor:
    """One gated-recurrent step.

    ``params`` holds ``w_x`` [in, 3H], ``w_h`` [H, 3H], ``b_x`` [3H] and
    ``b_h`` [3H] with gate blocks ordered (reset, update, candidate)::

        r = sigmoid(x W_xr + b_xr + h W_hr + b_hr)
        z = sigmoid(x W_xz + b_xz + h W_hz + b_hz)
        n = tanh(x W_xn + b_xn + r * (h W_hn + b_hn))
        h' = (1 - z) * h + z * n

    so a saturated update gate (z = 1) returns the candidate state.
    """
    w_x, w_h, b_x, b_h = params["w_x"], params["w_h"], params["b_x"], params["b_h"]
    H = h.shape[-1]
    if (w_h.shape != (H, 3 * H) or w_x.ndim != 2 or w_x.shape != (x.shape[-1], 3 * H)
            or b_x.shape != (3 * H,) or b_h.shape != (3 * H,)):
        raise DimensionError(
            f"gru_cell: x {x.shape}, h {h.shape} incompatible with w_x {w_x.shape}, w_h {w_h.shape}")
    if x.shape[:-1] != h.shape[:-1]:
        raise DimensionError(f"gru_cell: batch shapes of x {x.shape} and h {h.shape} differ")
    xd = x.data.reshape(-1, x.shape[-1])
    hd = h.data.reshape(-1, H)
    gx = xd @ w_x.data + b_x.data
    gh = hd @ w_h.data + b_h.data
    r = 0.5 * (1.0 + np.tanh(0.5 * (gx[:, :H] + gh[:, :H])))
    z = 0.5 * (1.0 + np.tanh(0.5 * (gx[:, H:2 * H] + gh[:, H:2 * H])))
    ghn = gh[:, 2 * H:]
    n = np.tanh(gx[:, 2 * H:] + r * ghn)
    out = hd + z * (n - hd)

    def bw(g):
        g = g.reshape(-1, H)
        dz = g * (n - hd)
        dn = g * z
        dan = dn * (1.0 - n * n)
        dar = dan * ghn * r * (1.0 - r)
        daz = dz * z * (1.0 - z)
        dgx = np.concatenate([dar, daz, dan], axis=1)
        dgh = np.concatenate([dar, daz, dan * r], axis=1)
        dx = (dgx @ w_x.data.T).reshape(x.shape) if x.requires_grad else None
        dh = None
        if h.requires_grad:
            dh = (g * (1.0 - z) + dgh @ w_h.data.T).reshape(h.shape)
        return (dx, dh,
                xd.T @ dgx if w_x.requires_grad else None,
                hd.T @ dgh if w_h.requires_grad else None,
                dgx.sum(axis=0) if b_x.requires_grad else None,
                dgh.sum(axis=0) if b_h.requires_grad else None)

    return make_result(out.reshape(h.shape), (x, h, w_x, w_h, b_x, b_h), bw)


# -- losses ----------------------------------------------------------------
def mse_per_point(pred: Tensor, target, axis: int = -1) -> Tensor:
    """Mean of squared Euclidean distances; ``axis`` holds the coordinates."""
    diff = sub(pred, as_tensor(target))
    return mean(sum(square(diff), axis=axis))
