"""Differentiable operators.

Every op computes its forward value with numpy and registers a
vector-Jacobian product on the active graph.  Layout is channel-first
(N, C, H, W) for the spatial operators.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import LabelOutOfRange, ShapeError
from .core import Tensor, as_tensor, record


def _operand(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None and like.dtype.kind == "f" else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = _operand(a, b if isinstance(b, Tensor) else None)
    b = _operand(b, a)
    _broadcast_shape("add", a, b)
    return record(
        "add", (a, b), a.data + b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a = _operand(a, b if isinstance(b, Tensor) else None)
    b = _operand(b, a)
    _broadcast_shape("sub", a, b)
    return record(
        "sub", (a, b), a.data - b.data,
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a = _operand(a, b if isinstance(b, Tensor) else None)
    b = _operand(b, a)
    _broadcast_shape("mul", a, b)
    return record(
        "mul", (a, b), a.data * b.data,
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a, b) -> Tensor:
    a = _operand(a, b if isinstance(b, Tensor) else None)
    b = _operand(b, a)
    _broadcast_shape("div", a, b)
    out = a.data / b.data
    return record(
        "div", (a, b), out,
        lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)),
    )


def mul_scalar(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    c = x.dtype.type(c) if x.dtype.kind == "f" else c
    return record("mul_scalar", (x,), x.data * c, lambda g: (g * c,))


def add_scalar(x: Tensor, c: float) -> Tensor:
    x = as_tensor(x)
    c = x.dtype.type(c) if x.dtype.kind == "f" else c
    return record("add_scalar", (x,), x.data + c, lambda g: (g,))


def pow_scalar(x: Tensor, exponent: float) -> Tensor:
    x = as_tensor(x)
    e = x.dtype.type(exponent)
    out = x.data ** e
    # d/dx x^e; written as e*x^(e-1) so x=0 with e>=1 stays finite
    return record("pow_scalar", (x,), out, lambda g: (g * e * x.data ** (e - 1),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return record("exp", (x,), out, lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return record("log", (x,), np.log(x.data), lambda g: (g / x.data,))


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return record("abs", (x,), np.abs(x.data), lambda g: (g * np.sign(x.data),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record("relu", (x,), np.where(mask, x.data, x.dtype.type(0)), lambda g: (g * mask,))


# ---------------------------------------------------------------- reductions


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return record("sum", (x,), np.asarray(out), vjp)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul_scalar(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


# ---------------------------------------------------------------- channel ops


def softmax_channel(x: Tensor) -> Tensor:
    if x.ndim < 2:
        raise ShapeError(f"softmax_channel: need a channel axis, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    return record(
        "softmax_channel", (x,), s,
        lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),),
    )


def concat_channel(xs: Sequence[Tensor]) -> Tensor:
    xs = tuple(xs)
    if not xs:
        raise ShapeError("concat_channel: nothing to concatenate")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or t.shape[:1] + t.shape[2:] != ref[:1] + ref[2:]:
            raise ShapeError(f"concat_channel: non-channel dims differ, {ref} vs {t.shape}")
    splits = np.cumsum([t.shape[1] for t in xs])[:-1]
    return record(
        "concat_channel", xs, np.concatenate([t.data for t in xs], axis=1),
        lambda g: tuple(np.split(g, splits, axis=1)),
    )


def gather_log_prob(probs: Tensor, labels, eps: float = 1e-12) -> Tensor:
    """log of the probability assigned to the true class at every location.

    ``probs`` is (N, C, ...), ``labels`` is (N, ...) integer.  Probabilities
    are floored at ``eps`` before the log; the floor has zero gradient.
    """
    lab = np.asarray(labels.data if isinstance(labels, Tensor) else labels)
    if lab.dtype.kind not in "iu":
        if not np.all(lab == np.round(lab)):
            raise LabelOutOfRange("gather_log_prob: labels must be integers")
        lab = lab.astype(np.int64)
    if probs.ndim < 2 or lab.shape != probs.shape[:1] + probs.shape[2:]:
        raise ShapeError(f"gather_log_prob: probs {probs.shape} vs labels {lab.shape}")
    nb_class = probs.shape[1]
    if lab.size and (lab.min() < 0 or lab.max() >= nb_class):
        raise LabelOutOfRange(f"labels must lie in [0, {nb_class}), got [{lab.min()}, {lab.max()}]")
    idx = np.expand_dims(lab, 1)
    p = np.take_along_axis(probs.data, idx, axis=1)[:, 0]
    floor = probs.dtype.type(eps)
    clipped = np.maximum(p, floor)

    def vjp(g):
        gp = np.zeros_like(probs.data)
        np.put_along_axis(gp, idx, np.expand_dims(g / clipped * (p > floor), 1), axis=1)
        return (gp,)

    return record("gather_log_prob", (probs,), np.log(clipped), vjp)


# ---------------------------------------------------------------- spatial


def _check_nchw(op: str, x: Tensor) -> None:
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected (N, C, H, W) input, got shape {x.shape}")


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    _check_nchw("conv2d", x)
    if weight.ndim != 4 or weight.shape[1] != x.shape[1]:
        raise ShapeError(
            f"conv2d: input has C_in={x.shape[1]} but kernel {weight.shape} expects {weight.shape[1] if weight.ndim == 4 else '?'}"
        )
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (w + 2 * padding - kw) // stride + 1
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{w}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    out = np.tensordot(win, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                contrib = np.tensordot(g, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
                gxp[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += contrib
        gx = gxp[:, :, padding:padding + h, padding:padding + w] if padding else gxp
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return record("conv2d", inputs, np.ascontiguousarray(out), vjp)


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Weight layout is (C_in, C_out, kh, kw)."""
    _check_nchw("conv_transpose2d", x)
    if weight.ndim != 4 or weight.shape[0] != x.shape[1]:
        raise ShapeError(f"conv_transpose2d: input has C_in={x.shape[1]} but kernel is {weight.shape}")
    n, c, h, w = x.shape
    _, o, kh, kw = weight.shape
    hf, wf = (h - 1) * stride + kh, (w - 1) * stride + kw
    full = np.zeros((n, o, hf, wf), dtype=np.result_type(x.dtype, weight.dtype))
    for i in range(kh):
        for j in range(kw):
            contrib = np.tensordot(x.data, weight.data[:, :, i, j], axes=([1], [0])).transpose(0, 3, 1, 2)
            full[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (w - 1) + 1:stride] += contrib
    out = full[:, :, padding:hf - padding, padding:wf - padding]
    if out.shape[2] <= 0 or out.shape[3] <= 0:
        raise ShapeError(f"conv_transpose2d: padding {padding} leaves an empty output")
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def vjp(g):
        gfull = np.zeros_like(full)
        gfull[:, :, padding:hf - padding, padding:wf - padding] = g
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                gs = gfull[:, :, i:i + stride * (h - 1) + 1:stride, j:j + stride * (w - 1) + 1:stride]
                gx += np.tensordot(gs, weight.data[:, :, i, j], axes=([1], [1])).transpose(0, 3, 1, 2)
                gw[:, :, i, j] = np.tensordot(x.data, gs, axes=([0, 2, 3], [0, 2, 3]))
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return record("conv_transpose2d", inputs, np.ascontiguousarray(out), vjp)


def maxpool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling; ties send the gradient to the first maximum."""
    _check_nchw("maxpool2d", x)
    n, c, h, w = x.shape
    ho, wo = h // kernel, w // kernel
    if ho == 0 or wo == 0:
        raise ShapeError(f"maxpool2d: input {h}x{w} smaller than kernel {kernel}")
    xr = (
        x.data[:, :, :ho * kernel, :wo * kernel]
        .reshape(n, c, ho, kernel, wo, kernel)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, ho, wo, kernel * kernel)
    )
    idx = np.argmax(xr, axis=-1)[..., None]
    out = np.take_along_axis(xr, idx, axis=-1)[..., 0]

    def vjp(g):
        gw = np.zeros_like(xr)
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        gw = gw.reshape(n, c, ho, wo, kernel, kernel).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * kernel, wo * kernel)
        gx = np.zeros_like(x.data)
        gx[:, :, :ho * kernel, :wo * kernel] = gw
        return (gx,)

    return record("maxpool2d", (x,), np.ascontiguousarray(out), vjp)


# ---------------------------------------------------------------- dispatch

_FORWARD = {
    "conv2d": lambda inputs, **kw: conv2d(*inputs, **kw),
    "conv_transpose2d": lambda inputs, **kw: conv_transpose2d(*inputs, **kw),
    "maxpool2d": lambda inputs, **kw: maxpool2d(inputs[0], **kw),
    "relu": lambda inputs, **kw: relu(inputs[0]),
    "softmax_channel": lambda inputs, **kw: softmax_channel(inputs[0]),
    "concat_channel": lambda inputs, **kw: concat_channel(inputs),
    "add": lambda inputs, **kw: add(*inputs),
    "mul_scalar": lambda inputs, **kw: mul_scalar(inputs[0], **kw),
    "gather_log_prob": lambda inputs, **kw: gather_log_prob(*inputs, **kw),
}

OP_KINDS = tuple(_FORWARD)


def forward_op(kind: str, inputs: Sequence, **params) -> Tensor:
    """Apply a named operator, e.g. ``forward_op("conv2d", [x, w, b], padding=1)``."""
    try:
        fn = _FORWARD[kind]
    except KeyError:
        raise ValueError(f"unknown op kind '{kind}'; expected one of {', '.join(OP_KINDS)}") from None
    return fn([_operand(t) if not isinstance(t, Tensor) and kind != "gather_log_prob" else t for t in inputs], **params)
