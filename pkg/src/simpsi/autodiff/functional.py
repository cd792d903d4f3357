"""Layer-level primitives with hand-written backward rules."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, as_tensor, index, make_result, matmul, mul, reshape, transpose, unbroadcast


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis of ``x``."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"linear: input features {x.shape[-1]} != weight in-features {weight.shape[1]} "
                         f"(input {x.shape}, weight {weight.shape})")
    w = weight.data
    lead = x.shape[:-1]
    # flatten leading axes so a single matrix product covers the whole batch
    x2 = x.data.reshape(-1, x.shape[-1])
    out2 = x2 @ w.T
    if bias is not None:
        out2 += bias.data
    out = out2.reshape(lead + (w.shape[0],))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ w).reshape(x.shape) if x.requires_grad else None
        gw = gb = None
        if weight.requires_grad:
            gw = g2.T @ x2
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=0)
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, parents, backward, "linear")


def positionwise_linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Separate linear map at every position: ``x`` [N, C, S], ``weight`` [S, C, M] -> [N, S, M]."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1:] != (weight.shape[1], weight.shape[0]):
        raise ShapeError(f"positionwise_linear: input {x.shape} does not fit weight {weight.shape}")
    w = weight.data
    xs = np.ascontiguousarray(x.data.transpose(2, 0, 1))  # [S, N, C]
    out_s = xs @ w  # [S, N, M]
    if bias is not None:
        out_s += bias.data[:, None, :]
    out = np.ascontiguousarray(out_s.transpose(1, 0, 2))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gs = np.ascontiguousarray(g.transpose(1, 0, 2))  # [S, N, M]
        gx = (gs @ w.transpose(0, 2, 1)).transpose(1, 2, 0) if x.requires_grad else None
        gw = xs.transpose(0, 2, 1) @ gs if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, (gs.sum(axis=1) if bias.requires_grad else None)

    return make_result(out, parents, backward, "positionwise_linear")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """1-D cross-correlation. ``x``: [N, C, L], ``weight``: [O, C, K].

    All kernel taps are applied in one matrix product over a time-major copy
    of the input; tap ``j``'s contribution is then added with a shift of ``j``.
    """
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv1d: incompatible input {x.shape} and weight {weight.shape}")
    n, c, length = x.shape
    o, _, k = weight.shape
    padded = length + 2 * padding
    if padded < k:
        raise ShapeError(f"conv1d: kernel {k} longer than padded input {padded} (input {x.shape})")
    l_out = (padded - k) // stride + 1
    span = stride * (l_out - 1) + 1
    xt = np.zeros((n, padded, c), dtype=x.dtype)
    xt[:, padding : padding + length] = x.data.transpose(0, 2, 1)
    w = weight.data
    taps = (xt.reshape(n * padded, c) @ w.transpose(1, 2, 0).reshape(c, k * o)).reshape(n, padded, k, o)
    out_t = taps[:, 0:span:stride, 0].copy()
    for j in range(1, k):
        out_t += taps[:, j : j + span : stride, j]
    if bias is not None:
        out_t += bias.data
    out = np.ascontiguousarray(out_t.transpose(0, 2, 1))
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g_t = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * l_out, o)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = np.empty_like(w)
            for j in range(k):
                gw[:, :, j] = g_t.T @ xt[:, j : j + span : stride].reshape(n * l_out, c)
        if bias is not None and bias.requires_grad:
            gb = g_t.sum(axis=0)
        if x.requires_grad:
            d_taps = (g_t @ w.transpose(0, 2, 1).reshape(o, k * c)).reshape(n, l_out, k, c)
            dxt = np.zeros((n, padded, c), dtype=g.dtype)
            for j in range(k):
                dxt[:, j : j + span : stride] += d_taps[:, :, j]
            gx = np.ascontiguousarray(dxt[:, padding : padding + length].transpose(0, 2, 1))
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_result(out, parents, backward, "conv1d")


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalisation over channel axis 1 of [N, C] or [N, C, L] input.

    In training mode the batch statistics normalise the input and the running
    buffers are updated in place (unbiased variance, as is conventional).
    """
    if x.ndim not in (2, 3) or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batchnorm1d: input {x.shape} does not match {gamma.shape[0]} channels")
    axes = (0,) if x.ndim == 2 else (0, 2)
    bshape = (1, -1) if x.ndim == 2 else (1, -1, 1)
    if training:
        m = x.data.size // x.shape[1]
        if m < 2:
            raise ShapeError(f"batchnorm1d: need more than one value per channel in training, got {x.shape}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (m / (m - 1))
    else:
        mu, var = running_mean, running_var
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape).astype(x.dtype)) * inv_std.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def backward(g):
        gg = gb = gx = None
        if gamma.requires_grad:
            gg = (g * xhat).sum(axis=axes)
        if beta.requires_grad:
            gb = g.sum(axis=axes)
        if x.requires_grad:
            dxhat = g * gamma.data.reshape(bshape)
            if training:
                mean_d = dxhat.mean(axis=axes, keepdims=True)
                mean_dx = (dxhat * xhat).mean(axis=axes, keepdims=True)
                gx = (dxhat - mean_d - xhat * mean_dx) * inv_std.reshape(bshape)
            else:
                gx = dxhat * inv_std.reshape(bshape)
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), backward, "batchnorm1d")


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if x.shape[-1] != gamma.shape[0]:
        raise ShapeError(f"layernorm: last axis {x.shape[-1]} != normalized size {gamma.shape[0]}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = xhat * gamma.data + beta.data

    def backward(g):
        gg = gb = gx = None
        if gamma.requires_grad:
            gg = unbroadcast(g * xhat, gamma.shape)
        if beta.requires_grad:
            gb = unbroadcast(g, beta.shape)
        if x.requires_grad:
            dxhat = g * gamma.data
            gx = (dxhat - dxhat.mean(axis=-1, keepdims=True)
                  - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)) * inv_std
        return gx, gg, gb

    return make_result(out, (x, gamma, beta), backward, "layernorm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    s = x.data - x.data.max(axis=axis, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return make_result(s, (x,), backward, "softmax")


def log_softmax_np(z: np.ndarray, axis: int = -1) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits: Tensor, labels, group_axis: int | None = None) -> Tensor:
    """Mean cross-entropy of integer ``labels`` under ``softmax(logits)``.

    ``logits`` has shape ``[..., M]`` and ``labels`` the leading shape. With
    ``group_axis=0`` the mean is taken separately for each leading index,
    returning a vector (used to score several mixed views in one pass).
    """
    labels = np.asarray(labels)
    n_classes = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ShapeError(f"softmax_cross_entropy: labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"softmax_cross_entropy: labels must lie in [0, {n_classes})")
    logp = log_softmax_np(logits.data)
    picked = np.take_along_axis(logp, labels[..., None].astype(np.int64), axis=-1)[..., 0]
    if group_axis is None:
        count = labels.size
        out = -picked.mean()
    else:
        if group_axis != 0:
            raise ValueError("group_axis must be 0 or None")
        count = labels[0].size
        out = -picked.reshape(labels.shape[0], -1).mean(axis=1)

    def backward(g):
        probs = np.exp(logp)
        onehot = np.zeros_like(probs)
        np.put_along_axis(onehot, labels[..., None].astype(np.int64), 1.0, axis=-1)
        scale = g if group_axis is None else g.reshape((-1,) + (1,) * (logits.ndim - 1))
        return ((probs - onehot) * (scale / count),)

    return make_result(np.asarray(out, dtype=logits.dtype), (logits,), backward, "softmax_cross_entropy")


def multi_head_self_attention(
    x: Tensor,
    w_qkv: Tensor,
    b_qkv: Tensor,
    w_out: Tensor,
    b_out: Tensor,
    heads: int,
) -> Tensor:
    """Scaled dot-product self-attention with queries, keys and values from ``x``.

    ``x``: [N, T, D]; ``w_qkv``: [3D, D] stacks the query, key and value
    projections; ``w_out``: [D, D].
    """
    if x.ndim != 3:
        raise ShapeError(f"multi_head_self_attention: expected [N, T, D] input, got {x.shape}")
    n, t, d = x.shape
    if d % heads:
        raise ShapeError(f"multi_head_self_attention: model dim {d} not divisible by {heads} heads")
    hd = d // heads
    qkv = linear(x, w_qkv, b_qkv)  # [N, T, 3D]
    qkv = transpose(reshape(qkv, (n, t, 3, heads, hd)), (2, 0, 3, 1, 4))  # [3, N, H, T, hd]
    q, k, v = index(qkv, 0), index(qkv, 1), index(qkv, 2)
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(hd))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)  # [N, H, T, hd]
    ctx = reshape(transpose(ctx, (0, 2, 1, 3)), (n, t, d))
    return linear(ctx, w_out, b_out)


def gather_logits(logits: Tensor, target) -> Tensor:
    """Sum of ``logits[..., target[...]]`` -- a scalar for input-gradient passes."""
    target = np.asarray(target)
    n_classes = logits.shape[-1]
    target = np.broadcast_to(target, logits.shape[:-1])
    if target.size and (target.min() < 0 or target.max() >= n_classes):
        raise IndexError(f"target logit index out of range [0, {n_classes})")
    onehot = np.zeros(logits.shape, dtype=logits.dtype)
    np.put_along_axis(onehot, target[..., None].astype(np.int64), 1.0, axis=-1)
    out = (logits.data * onehot).sum()

    def backward(g):
        return (g * onehot,)

    return make_result(np.asarray(out, dtype=logits.dtype), (as_tensor(logits),), backward, "gather_logits")
